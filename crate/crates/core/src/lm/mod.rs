//! A small decoder-only transformer language model trained from scratch.

mod checkpoint;
mod config;
mod model;
mod optim;
mod real;
mod sample;

pub use checkpoint::{Checkpoint, RngState, FORMAT_VERSION, MAGIC};
pub use config::{Layout, ModelConfig, Preset, TensorInfo, DEFAULT_CONTEXT};
pub use model::{BatchGrad, Model};
pub use optim::{train_step, AdamConfig, AdamState, StepStats};
pub use real::Real;
pub use sample::{softmax_with_temperature, SamplerConfig, DEFAULT_TEMPERATURE};
