use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::protocol::{EvalReport, DESK_SCALE};
use crate::error::{Error, Result};
use crate::lesiondata::ensure_dir;

pub const CSV_HEADER: &str = "scenario,real_count,x,seed,accuracy,auc";

#[derive(Serialize)]
struct Bundle<'a> {
    title: &'a str,
    desk_scale: String,
    reports: &'a [EvalReport],
}

pub fn header_line() -> String {
    format!("desk scale: counts ÷{DESK_SCALE} of the clinical setup")
}

pub fn to_json(title: &str, reports: &[EvalReport]) -> String {
    let bundle = Bundle {
        title,
        desk_scale: header_line(),
        reports,
    };
    serde_json::to_string_pretty(&bundle).expect("report serializes")
}

/// One row per run. `x` is empty for synthetic-only runs.
pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("# {}\n{CSV_HEADER}\n", header_line());
    for r in reports {
        let x = if r.ratio.pure_synthetic { String::new() } else { r.ratio.x.to_string() };
        for run in &r.runs {
            writeln!(out, "{},{},{x},{},{},{}", r.scenario, r.ratio.real_count, run.seed, run.accuracy, run.auc)
                .expect("string write");
        }
    }
    out
}

/// Plain-text table of mean ± sd per scenario.
pub fn to_table(title: &str, reports: &[EvalReport]) -> String {
    let mut out = format!("{title}\n{}\n\n", header_line());
    writeln!(
        out,
        "{:<10} {:>6} {:>10} {:>10}  {:<17} {:<17} per-seed accuracy",
        "scenario", "real", "real/cls", "synth/cls", "accuracy", "roc-auc"
    )
    .expect("string write");
    for r in reports {
        let per_seed: Vec<String> = r.runs.iter().map(|run| format!("{:.4}", run.accuracy)).collect();
        writeln!(
            out,
            "{:<10} {:>6} {:>10} {:>10}  {:.4} ± {:.4}   {:.4} ± {:.4}   {}",
            r.scenario,
            if r.ratio.pure_synthetic { 0 } else { r.ratio.real_count },
            r.ratio.real_per_class(),
            r.ratio.synthetic_per_class(),
            r.accuracy_mean,
            r.accuracy_sd,
            r.auc_mean,
            r.auc_sd,
            per_seed.join(" ")
        )
        .expect("string write");
    }
    out
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (f, t) in points {
        writeln!(out, "{f},{t}").expect("string write");
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<name>.json`, `<name>.csv`, `<name>.txt` and one ROC CSV per run
/// under `roc/`. Returns the paths written.
pub fn write_reports(dir: &Path, name: &str, title: &str, reports: &[EvalReport]) -> Result<Vec<PathBuf>> {
    let mut paths = vec![
        write(dir.join(format!("{name}.json")), &to_json(title, reports))?,
        write(dir.join(format!("{name}.csv")), &to_csv(reports))?,
        write(dir.join(format!("{name}.txt")), &to_table(title, reports))?,
    ];
    let roc_dir = dir.join("roc");
    if !roc_dir.is_dir() {
        ensure_dir(&roc_dir)?;
    }
    for r in reports {
        let tag: String = r
            .scenario
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
            .collect();
        for run in &r.runs {
            let file = format!("{name}_{tag}_r{}_seed{}.csv", r.ratio.real_count, run.seed);
            paths.push(write(roc_dir.join(file), &roc_csv(&run.roc))?);
        }
    }
    Ok(paths)
}
