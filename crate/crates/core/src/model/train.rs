use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{backward_example, forward_example};
use super::ops::{argmax, PROB_FLOOR};
use super::{ModelConfig, ModelWeights, TrainConfig};
use crate::features::{FeatureSpec, FeatureWindow, Normalizer};
use crate::{rng_from_seed, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running mean over the epoch's mini-batches (dropout active).
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Weights, the input normalizer fitted on the training windows, and the
/// per-epoch history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub weights: ModelWeights,
    pub normalizer: Normalizer,
    pub history: Vec<EpochStats>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
}

impl TrainedModel {
    /// Label and probabilities of an unnormalized feature matrix.
    pub fn predict(&self, features: &Matrix) -> Result<(usize, Vec<f64>)> {
        predict(&self.weights, &self.normalizer, features)
    }
}

/// Eval-mode prediction; ties go to the lowest class index.
pub fn predict(weights: &ModelWeights, normalizer: &Normalizer, features: &Matrix) -> Result<(usize, Vec<f64>)> {
    let x = normalizer.apply_matrix(features)?;
    let probs = forward_example(weights, &x, None)?.probs;
    Ok((argmax(&probs), probs))
}

/// Mean loss and accuracy over already-normalized windows, eval mode.
pub fn evaluate(weights: &ModelWeights, windows: &[FeatureWindow]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for w in windows {
        let probs = forward_example(weights, &w.values, None)?.probs;
        loss -= libm::log(probs[w.label].max(PROB_FLOOR));
        if argmax(&probs) == w.label {
            correct += 1;
        }
    }
    let n = windows.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam with seeded shuffling and early stopping on validation
/// loss (training loss when `val` is empty). Returns the best weights seen.
pub fn train(
    train: &[FeatureWindow],
    val: &[FeatureWindow],
    feature_spec: &FeatureSpec,
    channels: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let d = feature_spec.dim(channels);
    if model_cfg.d_in != d {
        return Err(Error::Dimension(format!(
            "model d_in {} but features have width {d}",
            model_cfg.d_in
        )));
    }
    let n_classes = model_cfg.n_classes;
    let mut seen = alloc::vec![false; n_classes];
    for w in train.iter().chain(val) {
        if w.label >= n_classes {
            return Err(Error::LabelRange {
                label: w.label,
                n_classes,
            });
        }
        if w.values.cols() != d {
            return Err(Error::Dimension(format!("window width {} vs {d}", w.values.cols())));
        }
    }
    for w in train {
        seen[w.label] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingClass(missing));
    }

    let normalizer = if feature_spec.normalize {
        Normalizer::fit(train)?
    } else {
        Normalizer::identity(d)
    };
    let train_n = train.iter().map(|w| normalizer.apply(w)).collect::<Result<Vec<_>>>()?;
    let val_n = val.iter().map(|w| normalizer.apply(w)).collect::<Result<Vec<_>>>()?;
    let channel_cols: Vec<Vec<usize>> = (0..channels)
        .map(|c| feature_spec.channel_features(channels, c))
        .collect();

    let mut rng = rng_from_seed(train_cfg.seed);
    let mut weights = ModelWeights::init(model_cfg, &mut rng)?;
    let mut adam = AdamState::new(weights.data.len());
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..train_n.len()).collect();

    let mut best = (f64::INFINITY, weights.clone(), 0usize);
    let mut since_best = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=train_cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(train_cfg.batch_size) {
            let mut grads = ModelWeights::zeros(model_cfg);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_n[i];
                let dropped;
                let x = if train_cfg.input_channel_dropout > 0.0
                    && rng.random::<f64>() < train_cfg.input_channel_dropout
                {
                    let c = rng.random_range(0..channels);
                    let mut v = ex.values.clone();
                    for r in 0..v.rows() {
                        let row = v.row_mut(r);
                        for &col in &channel_cols[c] {
                            row[col] = 0.0;
                        }
                    }
                    dropped = v;
                    &dropped
                } else {
                    &ex.values
                };
                let trace = forward_example(&weights, x, Some(&mut rng))?;
                loss_sum -= libm::log(trace.probs[ex.label].max(PROB_FLOOR));
                if argmax(&trace.probs) == ex.label {
                    correct += 1;
                }
                backward_example(&weights, &trace, ex.label, scale, &mut grads);
            }
            grads.check_finite("gradient of")?;
            step += 1;
            adam_step(&mut weights.data, &grads.data, &mut adam, train_cfg, step);
        }
        weights.check_finite("weights")?;

        let n = train_n.len() as f64;
        let (train_loss, train_accuracy) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_accuracy) = if val_n.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&weights, &val_n)?;
            (Some(l), Some(a))
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });

        let monitor = val_loss.unwrap_or(train_loss);
        if monitor < best.0 {
            best = (monitor, weights.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > train_cfg.patience {
                break;
            }
        }
    }

    let (_, weights, best_epoch) = best;
    Ok(TrainedModel {
        weights,
        normalizer,
        history,
        best_epoch,
    })
}
