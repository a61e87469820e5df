//! Builds the standard desk dataset and trains a base velocity model on it.
//!
//!     cargo run --release --example train_base -- [out_dir] [seed]

use std::path::PathBuf;
use std::time::Instant;

use rectiflow::lesiondata::{build_dataset, DatasetConfig};
use rectiflow::trainer::{train_base, TrainConfig};

fn main() -> rectiflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rectiflow-train"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    std::fs::create_dir_all(&out).map_err(|e| rectiflow::Error::Config(e.to_string()))?;
    let manifest = build_dataset(&DatasetConfig::default(), &out.join("data"))?;
    let config = TrainConfig { seed, ..TrainConfig::default() };

    let start = Instant::now();
    let (checkpoint, curve) = train_base(&manifest, &config)?;
    println!("trained {} epochs in {:.1?}", curve.losses.len(), start.elapsed());
    for (i, loss) in curve.losses.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", i + 1);
    }
    let ratio = curve.last().unwrap() / curve.first().unwrap();
    println!("final/first = {ratio:.3}");

    checkpoint.save(&out.join("base.ckpt"))?;
    curve.write_csv(&out.join("loss.csv"))?;
    println!("wrote {}", out.join("base.ckpt").display());
    Ok(())
}
