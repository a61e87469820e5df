//! Procedural lesion images, ABC captions, and dataset manifests.

mod caption;
mod dataset;
mod image;
mod params;
mod render;

pub use caption::{
    caption, encode_caption, generation_prompt, render_caption, CaptionRecord, ConditionVector,
    CONDITION_DIM,
};
pub use dataset::{build_dataset, ensure_dir, DatasetConfig, Manifest, ManifestRecord, Split, MANIFEST_FILE};
pub use image::Image;
pub use params::{sample_params, Label, LesionParams, Level};
pub use render::{render_lesion, LesionShape, ValueNoise, LESION_BROWN, SKIN_TONE, SUPPORTED_RESOLUTIONS};
