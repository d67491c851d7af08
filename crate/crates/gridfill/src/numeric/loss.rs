//! Weighted mean-squared-error loss.
//!
//! loss = sum(w * (pred - target)^2) / sum(w), gradient wrt pred
//! 2w(pred - target)/sum(w). Weights are per-cell importance: hole cells
//! get a larger weight than observed cells during training, and raw-invalid
//! cells get zero so they never drive the fit.

use super::{ensure_finite, shape_err, NumericError};
use crate::tensor::Tensor;

pub fn weighted_mse_loss(
    pred: &Tensor,
    target: &Tensor,
    weight: &Tensor,
) -> Result<(f64, Tensor), NumericError> {
    const OP: &str = "weighted_mse_loss";
    ensure_finite(OP, pred)?;
    ensure_finite(OP, target)?;
    ensure_finite(OP, weight)?;
    if pred.shape() != target.shape() || pred.shape() != weight.shape() {
        return Err(shape_err(
            OP,
            format!(
                "pred {:?}, target {:?}, weight {:?} must share a shape",
                pred.shape(),
                target.shape(),
                weight.shape()
            ),
        ));
    }
    if weight.data().iter().any(|&w| w < 0.0) {
        return Err(shape_err(OP, "weights must be non-negative".into()));
    }
    let wsum: f64 = weight.data().iter().sum();
    if wsum == 0.0 {
        return Err(NumericError::ZeroWeightSum);
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let d = pred.data()[i] - target.data()[i];
        let w = weight.data()[i];
        loss += w * d * d;
        grad[i] = 2.0 * w * d / wsum;
    }
    Ok((
        loss / wsum,
        Tensor::from_vec(pred.shape(), grad).map_err(|_| NumericError::NonFinite { op: OP })?,
    ))
}
