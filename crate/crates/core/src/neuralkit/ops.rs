//! Elementwise activations, softmax and binary cross-entropy.

use ndarray::{Array2, ArrayView2, Axis, Zip};

/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(out: &Array2<f64>, grad: &mut Array2<f64>) {
    Zip::from(grad).and(out).for_each(|g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Row-major copy of `a` unless it already is.
pub(crate) fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = standard(logits.to_owned());
    for mut row in out.rows_mut() {
        let p = softmax(row.as_slice().expect("standard layout"));
        row.iter_mut().zip(p).for_each(|(d, v)| *d = v);
    }
    out
}

/// Gradient of a row-wise softmax with respect to its logits.
pub fn softmax_rows_backward(probs: &Array2<f64>, grad_probs: &Array2<f64>) -> Array2<f64> {
    let dot = (probs * grad_probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    probs * &(grad_probs - &dot)
}

/// Mean binary cross-entropy over all elements.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    sum / pred.len() as f64
}

/// Derivative of [`bce_loss`] with respect to each prediction.
pub fn bce_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            if p < BCE_EPS || p > 1.0 - BCE_EPS {
                0.0
            } else {
                (p - t) / (p * (1.0 - p)) / n
            }
        })
        .collect()
}
