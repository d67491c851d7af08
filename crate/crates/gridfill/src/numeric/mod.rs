//! Dense-tensor layer ops with hand-written gradients.
//!
//! The fixed layer set the models need: plain and partial 2D convolution,
//! 1D convolution, max pooling, nearest upsampling, dense, the relu /
//! leaky-relu / sigmoid activations, and a weighted MSE loss. Every
//! backward op is validated against central finite differences by the
//! `gradcheck` harness. All math is 64-bit; there are no autodiff graphs.

pub mod activations;
pub mod conv;
pub mod dense;
pub mod gemm;
pub mod gradcheck;
pub mod loss;
pub mod pconv;
pub mod pool;

pub use activations::{
    leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward,
};
pub use conv::{conv1d_backward, conv1d_forward, conv2d_backward, conv2d_forward, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use gradcheck::{check_registry, grad_check, op_names, sample_case, GradCheckReport, OpCase};
pub use loss::weighted_mse_loss;
pub use pconv::{partial_conv2d_backward, partial_conv2d_forward};
pub use pool::{
    maxpool2d_backward, maxpool2d_forward, upsample_nearest1d_backward, upsample_nearest1d_forward,
    upsample_nearest2d_backward, upsample_nearest2d_forward,
};

use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch: {msg}")]
    Shape { op: &'static str, msg: String },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("{op}: mask must be binary (0.0 or 1.0)")]
    NonBinaryMask { op: &'static str },
    #[error("weighted_mse_loss: weights must not sum to zero")]
    ZeroWeightSum,
}

pub(crate) fn shape_err(op: &'static str, msg: String) -> NumericError {
    NumericError::Shape { op, msg }
}

pub(crate) fn ensure_finite(op: &'static str, t: &Tensor) -> Result<(), NumericError> {
    t.check_finite().map_err(|_| NumericError::NonFinite { op })
}

/// Convolution layer parameters: weights, bias, stride, padding.
///
/// Weights are (out, in, kH, kW) for 2D layers and (out, in, k) for 1D
/// ones. Output length along an axis is floor((in + 2*pad - k)/stride) + 1
/// and the ops reject geometries where that is not at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvKernel {
    /// Bundles parameters, checking rank and bias length.
    pub fn new(
        weights: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<ConvKernel, NumericError> {
        let rank = weights.shape().len();
        if rank != 3 && rank != 4 {
            return Err(shape_err(
                "ConvKernel",
                format!("weights must be rank 3 (1D) or 4 (2D), got {:?}", weights.shape()),
            ));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(shape_err(
                "ConvKernel",
                format!(
                    "bias shape {:?} does not match {} output channels",
                    bias.shape(),
                    weights.shape()[0]
                ),
            ));
        }
        if stride == 0 {
            return Err(shape_err("ConvKernel", "stride must be positive".into()));
        }
        Ok(ConvKernel {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
}
