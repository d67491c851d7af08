//! Partial 2D convolution: convolution over only the valid cells of a
//! masked input.
//!
//! Per window, output = W·(X⊙M)·(|K|/sum(M)) + b when sum(M) > 0 and 0
//! otherwise, where |K| = kH*kW is the window cell count and sum(M) counts
//! the valid cells the window covers. The updated mask is 1 exactly where
//! some valid cell was visible. Padding counts as invalid (mask 0), so
//! windows overlapping the border renormalize over the cells that exist;
//! plain convolution zero-pads instead, which is why the two ops agree
//! bit-for-bit only on windows that see neither holes nor padding. The
//! mask is data, not a parameter: no gradient flows through it, and
//! grad_input is zero wherever mask = 0.

use super::conv::{geometry_2d, ConvGrads};
use super::gemm::{col2im2d, im2col2d, mm_nn, mm_nt, mm_tn, window_sums};
use super::{ensure_finite, shape_err, ConvKernel, NumericError};
use crate::tensor::Tensor;

fn check_mask(op: &'static str, input: &Tensor, mask: &Tensor) -> Result<(), NumericError> {
    let (is, ms) = (input.shape(), mask.shape());
    if ms.len() != 3 || ms[0] != 1 || ms[1..] != is[1..] {
        return Err(shape_err(
            op,
            format!("mask {ms:?} does not cover input {is:?} with one channel"),
        ));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(NumericError::NonBinaryMask { op });
    }
    Ok(())
}

fn masked_input(input: &Tensor, mask: &Tensor) -> Vec<f64> {
    let plane = input.shape()[1] * input.shape()[2];
    let mut xm = input.data().to_vec();
    for chunk in xm.chunks_exact_mut(plane) {
        for (v, m) in chunk.iter_mut().zip(mask.data()) {
            *v *= m;
        }
    }
    xm
}

pub fn partial_conv2d_forward(
    input: &Tensor,
    mask: &Tensor,
    kernel: &ConvKernel,
) -> Result<(Tensor, Tensor), NumericError> {
    const OP: &str = "partial_conv2d_forward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, &kernel.weights)?;
    ensure_finite(OP, &kernel.bias)?;
    let g = geometry_2d(OP, input, kernel)?;
    check_mask(OP, input, mask)?;

    let xm = masked_input(input, mask);
    let cols = im2col2d(&xm, g.channels_in, g.ha, g.wa);
    let k_rows = g.channels_in * g.ha.kernel * g.wa.kernel;
    let n_cols = g.h_out * g.w_out;
    let mut out = vec![0.0; g.channels_out * n_cols];
    mm_nn(g.channels_out, k_rows, n_cols, kernel.weights.data(), &cols, &mut out);

    let msum = window_sums(mask.data(), g.ha, g.wa);
    let window_cells = (g.ha.kernel * g.wa.kernel) as f64;
    let mut updated = vec![0.0; n_cols];
    for (u, &s) in updated.iter_mut().zip(&msum) {
        if s > 0.0 {
            *u = 1.0;
        }
    }
    for c in 0..g.channels_out {
        let b = kernel.bias.data()[c];
        let row = &mut out[c * n_cols..(c + 1) * n_cols];
        for (v, &s) in row.iter_mut().zip(&msum) {
            if s > 0.0 {
                *v = *v * (window_cells / s) + b;
            } else {
                *v = 0.0;
            }
        }
    }
    Ok((
        Tensor::from_vec(&[g.channels_out, g.h_out, g.w_out], out)
            .map_err(|_| NumericError::NonFinite { op: OP })?,
        Tensor::from_vec(&[1, g.h_out, g.w_out], updated).expect("binary mask"),
    ))
}

pub fn partial_conv2d_backward(
    input: &Tensor,
    mask: &Tensor,
    kernel: &ConvKernel,
    upstream: &Tensor,
) -> Result<ConvGrads, NumericError> {
    const OP: &str = "partial_conv2d_backward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, upstream)?;
    let g = geometry_2d(OP, input, kernel)?;
    check_mask(OP, input, mask)?;
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
    let k_rows = g.channels_in * g.ha.kernel * g.wa.kernel;
    let n_cols = g.h_out * g.w_out;
    let msum = window_sums(mask.data(), g.ha, g.wa);
    let window_cells = (g.ha.kernel * g.wa.kernel) as f64;

    // Upstream scaled by each window's renormalization; zero where the
    // window saw no valid cell (output was pinned to 0 there).
    let mut scaled = vec![0.0; g.channels_out * n_cols];
    let mut grad_b = vec![0.0; g.channels_out];
    for c in 0..g.channels_out {
        let up = &upstream.data()[c * n_cols..(c + 1) * n_cols];
        let dst = &mut scaled[c * n_cols..(c + 1) * n_cols];
        for ((d, &u), &s) in dst.iter_mut().zip(up).zip(&msum) {
            if s > 0.0 {
                *d = u * (window_cells / s);
                grad_b[c] += u;
            }
        }
    }

    let xm = masked_input(input, mask);
    let cols = im2col2d(&xm, g.channels_in, g.ha, g.wa);
    let mut grad_w = vec![0.0; g.channels_out * k_rows];
    mm_nt(g.channels_out, n_cols, k_rows, &scaled, &cols, &mut grad_w);
    let mut grad_cols = vec![0.0; k_rows * n_cols];
    mm_tn(k_rows, g.channels_out, n_cols, kernel.weights.data(), &scaled, &mut grad_cols);
    let mut grad_in = col2im2d(&grad_cols, g.channels_in, g.ha, g.wa);
    let plane = g.ha.size * g.wa.size;
    for chunk in grad_in.chunks_exact_mut(plane) {
        for (v, m) in chunk.iter_mut().zip(mask.data()) {
            *v *= m;
        }
    }

    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), grad_in).expect("finite grads"),
        weights: Tensor::from_vec(kernel.weights.shape(), grad_w).expect("finite grads"),
        bias: Tensor::from_vec(&[g.channels_out], grad_b).expect("finite grads"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::conv::{conv2d_backward, conv2d_forward};

    fn ones_kernel(k: usize) -> ConvKernel {
        ConvKernel::new(Tensor::filled(&[1, 1, k, k], 1.0), Tensor::zeros(&[1]), 1, 0).unwrap()
    }

    #[test]
    fn renormalizes_by_valid_count() {
        // 3x3 window, 5 valid cells each valued 1: raw sum 5, scaled 9/5.
        let input = Tensor::filled(&[1, 3, 3], 1.0);
        let mask = Tensor::from_vec(
            &[1, 3, 3],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let (out, updated) = partial_conv2d_forward(&input, &mask, &ones_kernel(3)).unwrap();
        assert_eq!(out.data(), &[9.0]);
        assert_eq!(updated.data(), &[1.0]);
    }

    #[test]
    fn empty_window_pins_zero() {
        let input = Tensor::filled(&[1, 3, 3], 5.0);
        let mask = Tensor::zeros(&[1, 3, 3]);
        let mut k = ones_kernel(3);
        k.bias = Tensor::from_vec(&[1], vec![2.5]).unwrap();
        let (out, updated) = partial_conv2d_forward(&input, &mask, &k).unwrap();
        // bias is suppressed too: the window saw nothing.
        assert_eq!(out.data(), &[0.0]);
        assert_eq!(updated.data(), &[0.0]);
    }

    #[test]
    fn all_ones_mask_matches_plain_conv_bitwise() {
        let input = Tensor::from_vec(&[2, 4, 5], (0..40).map(|v| (v as f64).sin()).collect()).unwrap();
        let w = Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|v| ((v * 13 % 17) as f64) * 0.1 - 0.8).collect()).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let kernel = ConvKernel::new(w, b, 1, 0).unwrap();
        let mask = Tensor::filled(&[1, 4, 5], 1.0);
        let (out, updated) = partial_conv2d_forward(&input, &mask, &kernel).unwrap();
        let plain = conv2d_forward(&input, &kernel).unwrap();
        assert_eq!(out.data(), plain.data());
        assert!(updated.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn all_ones_mask_matches_plain_conv_grads() {
        let input = Tensor::from_vec(&[1, 4, 4], (0..16).map(|v| (v as f64) * 0.3 - 2.0).collect()).unwrap();
        let kernel = ones_kernel(2);
        let mask = Tensor::filled(&[1, 4, 4], 1.0);
        let up = Tensor::from_vec(&[1, 3, 3], (0..9).map(|v| (v as f64) * 0.5 - 2.0).collect()).unwrap();
        let pg = partial_conv2d_backward(&input, &mask, &kernel, &up).unwrap();
        let cg = conv2d_backward(&input, &kernel, &up).unwrap();
        assert_eq!(pg.input.data(), cg.input.data());
        assert_eq!(pg.weights.data(), cg.weights.data());
        assert_eq!(pg.bias.data(), cg.bias.data());
    }

    #[test]
    fn hole_values_never_leak() {
        let mut a = Tensor::from_vec(&[1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let mask = Tensor::from_vec(
            &[1, 4, 4],
            (0..16).map(|v| if v % 3 == 0 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let kernel = ones_kernel(3);
        let (out_a, um_a) = partial_conv2d_forward(&a, &mask, &kernel).unwrap();
        for (i, m) in mask.data().iter().enumerate() {
            if *m == 0.0 {
                a.data_mut()[i] = -999.0 - i as f64;
            }
        }
        let (out_b, um_b) = partial_conv2d_forward(&a, &mask, &kernel).unwrap();
        assert_eq!(out_a.data(), out_b.data());
        assert_eq!(um_a.data(), um_b.data());
    }

    #[test]
    fn grad_input_zero_at_holes() {
        let input = Tensor::filled(&[2, 5, 5], 1.5);
        let mask = Tensor::from_vec(
            &[1, 5, 5],
            (0..25).map(|v| if v % 2 == 0 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let w = Tensor::filled(&[2, 2, 3, 3], 0.2);
        let kernel = ConvKernel::new(w, Tensor::zeros(&[2]), 2, 1).unwrap();
        let up = Tensor::filled(&[2, 3, 3], 1.0);
        let g = partial_conv2d_backward(&input, &mask, &kernel, &up).unwrap();
        for c in 0..2 {
            for i in 0..25 {
                if mask.data()[i] == 0.0 {
                    assert_eq!(g.input.data()[c * 25 + i], 0.0);
                }
            }
        }
    }

    #[test]
    fn non_binary_mask_is_an_error() {
        let input = Tensor::zeros(&[1, 3, 3]);
        let mask = Tensor::filled(&[1, 3, 3], 0.5);
        assert!(matches!(
            partial_conv2d_forward(&input, &mask, &ones_kernel(3)),
            Err(NumericError::NonBinaryMask { .. })
        ));
    }

    #[test]
    fn padding_windows_renormalize_over_existing_cells() {
        // With an all-ones mask and padding, a border window sees fewer
        // valid cells than |K|; the output is the plain conv scaled by
        // |K|/msum, and interior windows agree exactly.
        let input = Tensor::from_vec(&[1, 4, 4], (1..=16).map(f64::from).collect()).unwrap();
        let mut kernel = ones_kernel(3);
        kernel.padding = 1;
        let mask = Tensor::filled(&[1, 4, 4], 1.0);
        let (out, _) = partial_conv2d_forward(&input, &mask, &kernel).unwrap();
        let plain = conv2d_forward(&input, &kernel).unwrap();
        // corner window: 4 in-bounds cells, scale 9/4
        assert_eq!(out.data()[0], plain.data()[0] * 9.0 / 4.0);
        // interior windows: identical bits
        assert_eq!(out.at3(0, 1, 1), plain.at3(0, 1, 1));
        assert_eq!(out.at3(0, 2, 2), plain.at3(0, 2, 2));
    }
}
