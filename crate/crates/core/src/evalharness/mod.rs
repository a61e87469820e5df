//! Real-versus-synthetic classifier experiments: scenarios, ratio sweeps,
//! accuracy and ROC-AUC.

mod classifier;
mod metrics;
mod protocol;
mod report;

pub use classifier::{train_classifier, Classifier, ClassifierConfig};
pub use metrics::{accuracy, roc_auc, roc_curve, trapezoid_area, Confusion};
pub use protocol::{
    mean_sd, run_one, run_ratio_sweep, run_scenarios, run_specs, synthesize_pool, EvalConfig, EvalData, EvalReport,
    Fingerprints, RatioSpec, RunRecord, Samples, DESK_SCALE,
};
pub use report::{header_line, roc_csv, to_csv, to_json, to_table, write_reports, CSV_HEADER};
