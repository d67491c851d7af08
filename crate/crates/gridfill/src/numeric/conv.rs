//! Plain 1D and 2D convolution (cross-correlation) with exact gradients.
//!
//! Forward lowers to a single matrix product over gathered windows;
//! backward reuses the same window matrix for the weight gradient and
//! scatters the window-space gradient back for the input gradient. The 1D
//! ops are the 2D ops on a height-1 grid with no vertical padding.

use super::gemm::{col2im2d, im2col2d, mm_nn, mm_nt, mm_tn, Axis};
use super::{ensure_finite, shape_err, ConvKernel, NumericError};
use crate::tensor::Tensor;

pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub(crate) struct Geometry {
    pub channels_in: usize,
    pub channels_out: usize,
    pub ha: Axis,
    pub wa: Axis,
    pub h_out: usize,
    pub w_out: usize,
}

/// Validates input-vs-kernel shapes for a 2D call and solves the output size.
pub(crate) fn geometry_2d(
    op: &'static str,
    input: &Tensor,
    kernel: &ConvKernel,
) -> Result<Geometry, NumericError> {
    let ishape = input.shape();
    let kshape = kernel.weights.shape();
    if ishape.len() != 3 || kshape.len() != 4 {
        return Err(shape_err(
            op,
            format!("expected input (C,H,W) and weights (O,C,kH,kW), got {ishape:?} and {kshape:?}"),
        ));
    }
    if ishape[0] != kshape[1] {
        return Err(shape_err(
            op,
            format!("input {ishape:?} has {} channels, kernel {kshape:?} expects {}", ishape[0], kshape[1]),
        ));
    }
    let ha = Axis {
        size: ishape[1],
        kernel: kshape[2],
        stride: kernel.stride,
        pad: kernel.padding,
    };
    let wa = Axis {
        size: ishape[2],
        kernel: kshape[3],
        stride: kernel.stride,
        pad: kernel.padding,
    };
    match (ha.out_len(), wa.out_len()) {
        (Some(h_out), Some(w_out)) => Ok(Geometry {
            channels_in: ishape[0],
            channels_out: kshape[0],
            ha,
            wa,
            h_out,
            w_out,
        }),
        _ => Err(shape_err(
            op,
            format!("no output window: input {ishape:?}, weights {kshape:?}, stride {}, pad {}", kernel.stride, kernel.padding),
        )),
    }
}

pub fn conv2d_forward(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor, NumericError> {
    const OP: &str = "conv2d_forward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, &kernel.weights)?;
    ensure_finite(OP, &kernel.bias)?;
    let g = geometry_2d(OP, input, kernel)?;
    forward_with(input, kernel, &g)
}

pub fn conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    upstream: &Tensor,
) -> Result<ConvGrads, NumericError> {
    const OP: &str = "conv2d_backward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, upstream)?;
    let g = geometry_2d(OP, input, kernel)?;
    if upstream.shape() != [g.channels_out, g.h_out, g.w_out] {
        return Err(shape_err(
            OP,
            format!(
                "upstream {:?} does not match output ({}, {}, {})",
                upstream.shape(),
                g.channels_out,
                g.h_out,
                g.w_out
            ),
        ));
    }
    backward_with(input, kernel, upstream, &g)
}

fn lift_1d(op: &'static str, input: &Tensor, kernel: &ConvKernel) -> Result<(Tensor, ConvKernel), NumericError> {
    let ishape = input.shape();
    let kshape = kernel.weights.shape();
    if ishape.len() != 2 || kshape.len() != 3 {
        return Err(shape_err(
            op,
            format!("expected input (C,L) and weights (O,C,k), got {ishape:?} and {kshape:?}"),
        ));
    }
    let input2 = input.reshape(&[ishape[0], 1, ishape[1]]).expect("rank lift");
    let weights2 = kernel
        .weights
        .reshape(&[kshape[0], kshape[1], 1, kshape[2]])
        .expect("rank lift");
    Ok((
        input2,
        ConvKernel {
            weights: weights2,
            bias: kernel.bias.clone(),
            stride: kernel.stride,
            padding: kernel.padding,
        },
    ))
}

pub fn conv1d_forward(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor, NumericError> {
    const OP: &str = "conv1d_forward";
    let (input2, kernel2) = lift_1d(OP, input, kernel)?;
    // A height-1 grid must not be padded vertically, so pad only the width
    // axis by running the 2D core with a custom geometry.
    ensure_finite(OP, &input2)?;
    ensure_finite(OP, &kernel2.weights)?;
    ensure_finite(OP, &kernel2.bias)?;
    let g = geometry_1d(OP, &input2, &kernel2)?;
    forward_with(&input2, &kernel2, &g).map(|t| {
        t.reshape(&[g.channels_out, g.w_out]).expect("rank drop")
    })
}

pub fn conv1d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    upstream: &Tensor,
) -> Result<ConvGrads, NumericError> {
    const OP: &str = "conv1d_backward";
    let (input2, kernel2) = lift_1d(OP, input, kernel)?;
    ensure_finite(OP, &input2)?;
    ensure_finite(OP, upstream)?;
    let g = geometry_1d(OP, &input2, &kernel2)?;
    if upstream.shape() != [g.channels_out, g.w_out] {
        return Err(shape_err(
            OP,
            format!("upstream {:?} does not match output ({}, {})", upstream.shape(), g.channels_out, g.w_out),
        ));
    }
    let up2 = upstream.reshape(&[g.channels_out, 1, g.w_out]).expect("rank lift");
    let grads = backward_with(&input2, &kernel2, &up2, &g)?;
    let kshape = kernel.weights.shape();
    Ok(ConvGrads {
        input: grads.input.reshape(input.shape()).expect("rank drop"),
        weights: grads.weights.reshape(kshape).expect("rank drop"),
        bias: grads.bias,
    })
}

fn geometry_1d(op: &'static str, input2: &Tensor, kernel2: &ConvKernel) -> Result<Geometry, NumericError> {
    let ishape = input2.shape();
    let kshape = kernel2.weights.shape();
    if ishape[0] != kshape[1] {
        return Err(shape_err(
            op,
            format!("input has {} channels, kernel expects {}", ishape[0], kshape[1]),
        ));
    }
    let ha = Axis { size: 1, kernel: 1, stride: 1, pad: 0 };
    let wa = Axis {
        size: ishape[2],
        kernel: kshape[3],
        stride: kernel2.stride,
        pad: kernel2.padding,
    };
    match wa.out_len() {
        Some(w_out) => Ok(Geometry {
            channels_in: ishape[0],
            channels_out: kshape[0],
            ha,
            wa,
            h_out: 1,
            w_out,
        }),
        None => Err(shape_err(
            op,
            format!("no output window: length {}, kernel {}, stride {}, pad {}", ishape[2], kshape[3], kernel2.stride, kernel2.padding),
        )),
    }
}

fn forward_with(input: &Tensor, kernel: &ConvKernel, g: &Geometry) -> Result<Tensor, NumericError> {
    let cols = im2col2d(input.data(), g.channels_in, g.ha, g.wa);
    let k_rows = g.channels_in * g.ha.kernel * g.wa.kernel;
    let n_cols = g.h_out * g.w_out;
    let mut out = vec![0.0; g.channels_out * n_cols];
    mm_nn(g.channels_out, k_rows, n_cols, kernel.weights.data(), &cols, &mut out);
    for c in 0..g.channels_out {
        let b = kernel.bias.data()[c];
        for v in &mut out[c * n_cols..(c + 1) * n_cols] {
            *v += b;
        }
    }
    Ok(Tensor::from_vec(&[g.channels_out, g.h_out, g.w_out], out).expect("finite"))
}

fn backward_with(
    input: &Tensor,
    kernel: &ConvKernel,
    upstream: &Tensor,
    g: &Geometry,
) -> Result<ConvGrads, NumericError> {
    let k_rows = g.channels_in * g.ha.kernel * g.wa.kernel;
    let n_cols = g.h_out * g.w_out;
    let cols = im2col2d(input.data(), g.channels_in, g.ha, g.wa);
    let mut grad_b = vec![0.0; g.channels_out];
    for c in 0..g.channels_out {
        grad_b[c] = upstream.data()[c * n_cols..(c + 1) * n_cols].iter().sum();
    }
    let mut grad_w = vec![0.0; g.channels_out * k_rows];
    mm_nt(g.channels_out, n_cols, k_rows, upstream.data(), &cols, &mut grad_w);
    let mut grad_cols = vec![0.0; k_rows * n_cols];
    mm_tn(k_rows, g.channels_out, n_cols, kernel.weights.data(), upstream.data(), &mut grad_cols);
    let grad_in = col2im2d(&grad_cols, g.channels_in, g.ha, g.wa);
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), grad_in).expect("finite grads"),
        weights: Tensor::from_vec(kernel.weights.shape(), grad_w).expect("finite grads"),
        bias: Tensor::from_vec(&[g.channels_out], grad_b).expect("finite grads"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel2d(weights: Tensor, bias: Tensor, stride: usize, padding: usize) -> ConvKernel {
        ConvKernel::new(weights, bias, stride, padding).unwrap()
    }

    #[test]
    fn all_ones_sums_window() {
        let input = Tensor::filled(&[1, 3, 3], 1.0);
        let k = kernel2d(Tensor::filled(&[1, 1, 2, 2], 1.0), Tensor::zeros(&[1]), 1, 0);
        let out = conv2d_forward(&input, &k).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn identity_kernel_passes_through() {
        let input = Tensor::from_vec(&[1, 2, 3], vec![0.5, -1.0, 2.0, 3.0, -4.0, 0.25]).unwrap();
        let k = kernel2d(Tensor::filled(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]), 1, 0);
        let out = conv2d_forward(&input, &k).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn hand_computed_2x2() {
        // input plane [1 2 3; 4 5 6], kernel [1 0; 0 -1], bias 0.5
        let input = Tensor::from_vec(&[1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = kernel2d(
            Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap(),
            Tensor::from_vec(&[1], vec![0.5]).unwrap(),
            1,
            0,
        );
        let out = conv2d_forward(&input, &k).unwrap();
        // windows: 1-5, 2-6 -> -4+0.5, -4+0.5
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.data(), &[-3.5, -3.5]);
    }

    #[test]
    fn stride_two_with_padding() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = kernel2d(Tensor::filled(&[1, 1, 2, 2], 1.0), Tensor::zeros(&[1]), 2, 1);
        let out = conv2d_forward(&input, &k).unwrap();
        // padded 4x4 grid, stride-2 2x2 windows pick each original cell once
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let input = Tensor::filled(&[2, 4, 4], 0.7);
        let k = kernel2d(Tensor::filled(&[3, 2, 3, 3], 0.1), Tensor::zeros(&[3]), 1, 1);
        let up = Tensor::zeros(&[3, 4, 4]);
        let g = conv2d_backward(&input, &k, &up).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_grad_passes_upstream() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = kernel2d(Tensor::filled(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]), 1, 0);
        let up = Tensor::from_vec(&[1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = conv2d_backward(&input, &k, &up).unwrap();
        assert_eq!(g.input.data(), up.data());
    }

    #[test]
    fn conv1d_all_ones() {
        let input = Tensor::filled(&[1, 4], 1.0);
        let k = ConvKernel::new(Tensor::filled(&[1, 1, 2], 1.0), Tensor::zeros(&[1]), 1, 0).unwrap();
        let out = conv1d_forward(&input, &k).unwrap();
        assert_eq!(out.shape(), &[1, 3]);
        assert_eq!(out.data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn conv1d_identity() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.5]).unwrap();
        let w = Tensor::from_vec(&[2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let k = ConvKernel::new(w, Tensor::zeros(&[2]), 1, 0).unwrap();
        let out = conv1d_forward(&input, &k).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv1d_padding_keeps_length() {
        let input = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = ConvKernel::new(Tensor::filled(&[1, 1, 3], 1.0), Tensor::zeros(&[1]), 1, 1).unwrap();
        let out = conv1d_forward(&input, &k).unwrap();
        assert_eq!(out.shape(), &[1, 4]);
        assert_eq!(out.data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let input = Tensor::zeros(&[3, 4, 4]);
        let k = kernel2d(Tensor::zeros(&[1, 2, 3, 3]), Tensor::zeros(&[1]), 1, 0);
        let err = conv2d_forward(&input, &k).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 4, 4]") && msg.contains("[1, 2, 3, 3]"), "{msg}");
    }

    #[test]
    fn too_small_input_is_an_error() {
        let input = Tensor::zeros(&[1, 2, 2]);
        let k = kernel2d(Tensor::zeros(&[1, 1, 5, 5]), Tensor::zeros(&[1]), 1, 0);
        assert!(conv2d_forward(&input, &k).is_err());
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut input = Tensor::zeros(&[1, 2, 2]);
        input.data_mut()[1] = f64::NAN;
        // bypass from_vec validation via data_mut; forward must catch it
        let k = kernel2d(Tensor::filled(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]), 1, 0);
        assert!(matches!(
            conv2d_forward(&input, &k),
            Err(NumericError::NonFinite { .. })
        ));
    }
}
