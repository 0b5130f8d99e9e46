//! Transformer activity classifier with hand-derived gradients.

pub mod adam;
mod config;
pub mod network;
pub mod ops;
pub mod params;
mod train;

use alloc::format;
use alloc::vec::Vec;

pub use adam::{adam_step, AdamState};
pub use config::{ModelConfig, TrainConfig};
pub use ops::{argmax, cross_entropy, softmax};
pub use params::{ModelWeights, ParamLayout, Span};
pub use train::{evaluate, predict, train, EpochStats, TrainedModel};

use crate::{Error, Matrix, Result, Rng};

/// Class probabilities for a batch of `L × d_in` windows, one row each.
///
/// With `train_mode` the dropout layers draw masks from `rng`.
pub fn forward(weights: &ModelWeights, batch: &[Matrix], train_mode: bool, mut rng: Option<&mut Rng>) -> Result<Matrix> {
    let cfg = &weights.config;
    let dropout = cfg.attn_dropout > 0.0 || cfg.mlp_dropout > 0.0;
    if train_mode && dropout && rng.is_none() {
        return Err(Error::Config("train-mode forward with dropout needs a generator".into()));
    }
    let mut out = Matrix::zeros(batch.len(), cfg.n_classes);
    for (i, x) in batch.iter().enumerate() {
        let r = if train_mode { rng.as_deref_mut() } else { None };
        let trace = network::forward_example(weights, x, r)?;
        out.row_mut(i).copy_from_slice(&trace.probs);
    }
    Ok(out)
}

/// Mean cross-entropy of a batch and its exact gradient with respect to
/// every weight. Dropout is applied only when `rng` is given.
pub fn backward(
    weights: &ModelWeights,
    batch: &[Matrix],
    labels: &[usize],
    mut rng: Option<&mut Rng>,
) -> Result<(f64, ModelWeights)> {
    if batch.len() != labels.len() || batch.is_empty() {
        return Err(Error::Dimension(format!("{} windows for {} labels", batch.len(), labels.len())));
    }
    let n = weights.config.n_classes;
    let mut grads = ModelWeights::zeros(&weights.config);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, &label) in batch.iter().zip(labels) {
        if label >= n {
            return Err(Error::LabelRange { label, n_classes: n });
        }
        let trace = network::forward_example(weights, x, rng.as_deref_mut())?;
        loss -= libm::log(trace.probs[label].max(ops::PROB_FLOOR));
        network::backward_example(weights, &trace, label, scale, &mut grads);
    }
    grads.check_finite("gradient of")?;
    Ok((loss * scale, grads))
}

/// Probabilities of a single window in eval mode.
pub fn probabilities(weights: &ModelWeights, x: &Matrix) -> Result<Vec<f64>> {
    Ok(network::forward_example(weights, x, None)?.probs)
}
