//! Trains a generator on the desk dataset (or loads one), then runs both
//! evaluation scenarios and the real-to-synthetic ratio sweep.
//!
//!     cargo run --release --example ratio_sweep -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use rectiflow::evalharness::{run_ratio_sweep, run_scenarios, to_table, write_reports, EvalConfig};
use rectiflow::lesiondata::{build_dataset, DatasetConfig, Manifest, MANIFEST_FILE};
use rectiflow::trainer::{train_base, Checkpoint, TrainConfig};

fn main() -> rectiflow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rectiflow-sweep"));
    std::fs::create_dir_all(&out).map_err(|e| rectiflow::Error::Config(e.to_string()))?;

    let data_dir = out.join("data");
    let manifest = match Manifest::load(&data_dir.join(MANIFEST_FILE)) {
        Ok(m) => m,
        Err(_) => build_dataset(&DatasetConfig::default(), &data_dir)?,
    };
    let ckpt_path = out.join("base.ckpt");
    let checkpoint = match Checkpoint::load(&ckpt_path) {
        Ok(c) => c,
        Err(_) => {
            let (c, _) = train_base(&manifest, &TrainConfig::default())?;
            c.save(&ckpt_path)?;
            c
        }
    };

    let config = EvalConfig::default();
    let start = Instant::now();
    let (i, ii) = run_scenarios(&manifest, &checkpoint, &config)?;
    let scenarios = [i, ii];
    write_reports(&out, "scenarios", "Scenario accuracy", &scenarios)?;
    println!("{}", to_table("Scenario accuracy", &scenarios));

    let sweep = run_ratio_sweep(&manifest, &checkpoint, &config)?;
    write_reports(&out, "sweep", "Real-to-synthetic ratio sweep", &sweep)?;
    println!("{}", to_table("Real-to-synthetic ratio sweep", &sweep));
    println!("evaluation took {:.1?}; reports in {}", start.elapsed(), out.display());
    Ok(())
}
