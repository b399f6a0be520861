use ndarray::Array2;

use super::Tensor2;
use crate::error::{Error, Result};
use crate::Scalar;

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `-log softmax(logits)[target]` and its gradient
/// `softmax(logits) - onehot(target)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    if target >= logits.len() {
        return Err(Error::OutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + total.ln();
    let loss = log_z - logits[target];
    let mut grad: Vec<T> = logits.iter().map(|&l| (l - log_z).exp()).collect();
    grad[target] -= T::one();
    Ok((loss, grad))
}

/// Row-wise cross entropy over a `batch × classes` matrix.
///
/// Row `b` contributes `scales[b] * loss_b`; the returned gradient is scaled
/// the same way. Targets are assumed in range.
pub fn softmax_cross_entropy_rows<T: Scalar>(
    logits: &Tensor2<T>,
    targets: &[usize],
    scales: &[T],
) -> (T, Tensor2<T>) {
    debug_assert_eq!(logits.nrows(), targets.len());
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = T::zero();
    for (b, (row, mut g)) in logits.rows().into_iter().zip(grad.rows_mut()).enumerate() {
        let scale = scales[b];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&l| (l - max).exp()).sum();
        let log_z = max + sum.ln();
        total += scale * (log_z - row[targets[b]]);
        if scale != T::zero() {
            for (gk, &l) in g.iter_mut().zip(row.iter()) {
                *gk = scale * (l - log_z).exp();
            }
            g[targets[b]] -= scale;
        }
    }
    (total, grad)
}
