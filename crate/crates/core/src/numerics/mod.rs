//! Dense `f64` tensors, a recording autograd tape, the adaptive-moment
//! optimizer, and the classifier pieces the probes and the transformer share.

mod gradcheck;
mod loss;
mod mlp;
mod optim;
mod tape;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use gradcheck::{grad_check, Coordinates, GradCheckReport};
pub use loss::{
    batch_cross_entropy, weighted_cross_entropy, weighted_cross_entropy_var, ClassWeights,
    NUM_CLASSES,
};
pub use mlp::{stack_rows, MlpClassifier};
pub use optim::{adam_step, clip_grad_norm, AdamState};
pub use tape::{AttnSegment, Gradients, Tape, Var};
pub use tensor::{log_softmax, softmax, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// Glorot-uniform `fan_in × fan_out` matrix.
pub fn xavier_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("xavier shape")
}

/// Uniform matrix with the given standard deviation.
pub fn uniform_with_std<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let bound = std * 3f64.sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("uniform shape")
}
