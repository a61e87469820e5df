//! Trains a base model on benign lesions only, then fits LoRA adapters on
//! malignant lesions with the base weights frozen.
//!
//!     cargo run --release --example lora_finetune -- [out_dir]

use std::path::PathBuf;

use rectiflow::flowmodel::{LoraConfig, ParamGroup};
use rectiflow::lesiondata::{build_dataset, DatasetConfig, Label, Split};
use rectiflow::trainer::{evaluate_loss, finetune_lora_on, train_base_on, TrainConfig, TrainingSet};

fn main() -> rectiflow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rectiflow-lora"));
    std::fs::create_dir_all(&out).map_err(|e| rectiflow::Error::Config(e.to_string()))?;
    let manifest = build_dataset(&DatasetConfig::default(), &out.join("data"))?;
    let load = |split, label| TrainingSet::load(&manifest, split, 16, Some(label));
    let (benign, malignant) = (load(Split::Train, Label::Benign)?, load(Split::Train, Label::Malignant)?);
    let held_out = load(Split::Test, Label::Malignant)?;

    let base_config = TrainConfig {
        epochs: 15,
        label: Some(Label::Benign),
        ..TrainConfig::default()
    };
    let (base, _) = train_base_on(&benign, &base_config)?;
    println!("base parameters    {}", base.net.parameter_count(ParamGroup::Base));

    let tune_config = TrainConfig {
        epochs: 15,
        label: Some(Label::Malignant),
        freeze_base: true,
        lora: Some(LoraConfig::default()),
        ..TrainConfig::default()
    };
    let (tuned, _) = finetune_lora_on(&base, &malignant, &tune_config)?;
    println!("adapter parameters {}", tuned.net.parameter_count(ParamGroup::Adapter));
    println!("base block unchanged: {}", tuned.base_block() == base.base_block());

    let before = evaluate_loss(&base.net, &held_out, 1)?;
    let after = evaluate_loss(&tuned.net, &held_out, 1)?;
    println!("held-out malignant loss: base {before:.3}, adapted {after:.3}");

    tuned.save(&out.join("lora.ckpt"))?;
    println!("wrote {}", out.join("lora.ckpt").display());
    Ok(())
}
