//! Rectified-flow image generation at desk scale: procedural lesion data,
//! a conditional velocity field with LoRA adapters, fixed-step ODE sampling,
//! and a classifier harness for synthetic-data augmentation experiments.

pub mod cli;
pub mod error;
pub mod evalharness;
pub mod flowmodel;
pub mod lesiondata;
pub mod numerics;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
