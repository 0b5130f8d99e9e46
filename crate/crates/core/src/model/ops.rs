use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Probability floor inside the logarithm of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    x.iter_mut().for_each(|v| *v /= sum);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Mean over rows of `−ln max(probs[b, label_b], 1e-12)`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let n = probs.cols();
    let mut total = 0.0;
    for (row, &label) in probs.iter_rows().zip(labels) {
        if label >= n {
            return Err(Error::LabelRange { label, n_classes: n });
        }
        total -= libm::log(row[label].max(PROB_FLOOR));
    }
    Ok(total / labels.len() as f64)
}
