//! Samples images from a checkpoint with each integrator and reports the
//! latent norm along the trajectory. Without a checkpoint argument a small
//! model is trained first.
//!
//!     cargo run --release --example sample -- [checkpoint] [out_dir]

use std::path::PathBuf;

use rectiflow::lesiondata::{build_dataset, DatasetConfig};
use rectiflow::sampler::{generate, Integrator, SampleSpec};
use rectiflow::trainer::{train_base, Checkpoint, TrainConfig};

fn main() -> rectiflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().map(PathBuf::from);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rectiflow-sample"));
    std::fs::create_dir_all(&out).map_err(|e| rectiflow::Error::Config(e.to_string()))?;

    let checkpoint = match ckpt {
        Some(path) => Checkpoint::load(&path)?,
        None => {
            let data = DatasetConfig {
                n_per_class: 150,
                ..DatasetConfig::default()
            };
            let manifest = build_dataset(&data, &out.join("data"))?;
            let config = TrainConfig {
                epochs: 10,
                hidden: Some(256),
                ..TrainConfig::default()
            };
            train_base(&manifest, &config)?.0
        }
    };

    for integrator in Integrator::ALL {
        let dir = out.join(integrator.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| rectiflow::Error::Config(e.to_string()))?;
        let spec = SampleSpec {
            integrator,
            count: 4,
            ..SampleSpec::default()
        };
        let samples = generate(&checkpoint, &spec, Some(&dir), true)?;
        let norms = &samples[0].z_norms;
        println!(
            "{:>8}: {} images in {}, |z| {:.2} -> {:.2} over {} steps",
            integrator.as_str(),
            samples.len(),
            dir.display(),
            norms[0],
            norms[norms.len() - 1],
            spec.steps
        );
    }
    Ok(())
}
