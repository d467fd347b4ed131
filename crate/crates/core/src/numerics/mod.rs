//! Dense linear algebra, reverse-mode differentiation, losses and Adam.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod matrix;
mod tape;

pub use adam::{AdamConfig, AdamState, LrSchedule};
pub use checkpoint::{Checkpoint, ParamBlock, Precision};
pub use matrix::Matrix;
pub use tape::{sigmoid, Gradients, Graph, Var};

use crate::error::{Error, Result};

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// with respect to the logits (`softmax − onehot`).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::Contract(format!("{} classes, need at least 2", logits.len())));
    }
    if label >= logits.len() {
        return Err(Error::Index(format!("label {label} for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    let loss = log_z - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}
