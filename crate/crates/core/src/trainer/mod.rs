//! Base training, LoRA fine-tuning with a frozen base, and checkpoints.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{Architecture, Checkpoint, LayerShape, TrainingMetadata, FORMAT_VERSION, MAGIC, SUPPORTED_VERSIONS};
pub use optim::{cosine_rate, Adam, Schedule};
pub use train::{
    evaluate_loss, finetune_lora, finetune_lora_on, lora_parameter_count, train_base, train_base_on, LossCurve,
    TrainConfig, TrainingSet,
};
