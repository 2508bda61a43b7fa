//! IO, file formats, and the command-line pipeline around `mpcnn-core`:
//! image loading (PGM, grayscale PNG), architecture config files, model
//! serialization, dataset manifests, CSV reports, and the implementations of
//! the `train`, `segment`, `detect`, `eval`, `bench` and `synth` commands.

pub mod arch_config;
pub mod commands;
pub mod error;
pub mod image_io;
pub mod manifest;
pub mod model_io;
pub mod pgm;
pub mod report;
pub mod tensor_dump;

pub use error::{AppError, Result};

/// Scalar precision selector. Correctness paths are double-only; `single`
/// exists so the benchmark can compare both modes at `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Double,
    Single,
}
