//! 2x2 max pooling and x2 nearest-neighbor upsampling.
//!
//! Pooling caches the flat input index of each window's maximum so the
//! backward pass routes gradient to exactly that cell; ties go to the
//! first maximal element in row-major order. Odd trailing rows/columns
//! are treated as if padded on the right/bottom with negative infinity,
//! so output dims are ceil(dim/2) and padding never wins a window.

use super::{ensure_finite, shape_err, NumericError};
use crate::tensor::Tensor;

pub struct PoolOut {
    pub output: Tensor,
    /// Flat index into the input of each output cell's maximum.
    pub argmax: Vec<usize>,
}

pub fn maxpool2d_forward(input: &Tensor) -> Result<PoolOut, NumericError> {
    const OP: &str = "maxpool2d_forward";
    ensure_finite(OP, input)?;
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(shape_err(OP, format!("expected (C,H,W), got {shape:?}")));
    }
    let (c_n, h, w) = (shape[0], shape[1], shape[2]);
    let (h_out, w_out) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; c_n * h_out * w_out];
    let mut argmax = vec![0usize; c_n * h_out * w_out];
    for c in 0..c_n {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dh in 0..2 {
                    for dw in 0..2 {
                        let (ih, iw) = (oh * 2 + dh, ow * 2 + dw);
                        if ih >= h || iw >= w {
                            continue;
                        }
                        let idx = (c * h + ih) * w + iw;
                        let v = input.data()[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let o = (c * h_out + oh) * w_out + ow;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok(PoolOut {
        output: Tensor::from_vec(&[c_n, h_out, w_out], out).expect("finite"),
        argmax,
    })
}

pub fn maxpool2d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    upstream: &Tensor,
) -> Result<Tensor, NumericError> {
    const OP: &str = "maxpool2d_backward";
    ensure_finite(OP, upstream)?;
    if upstream.len() != argmax.len() {
        return Err(shape_err(
            OP,
            format!("upstream {:?} has {} cells, argmax cache has {}", upstream.shape(), upstream.len(), argmax.len()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    for (&idx, &u) in argmax.iter().zip(upstream.data()) {
        grad.data_mut()[idx] += u;
    }
    Ok(grad)
}

pub fn upsample_nearest2d_forward(input: &Tensor) -> Result<Tensor, NumericError> {
    const OP: &str = "upsample_nearest2d_forward";
    ensure_finite(OP, input)?;
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(shape_err(OP, format!("expected (C,H,W), got {shape:?}")));
    }
    let (c_n, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = vec![0.0; c_n * 4 * h * w];
    for c in 0..c_n {
        for ih in 0..h {
            for iw in 0..w {
                let v = input.data()[(c * h + ih) * w + iw];
                for dh in 0..2 {
                    let row = (c * 2 * h + ih * 2 + dh) * 2 * w + iw * 2;
                    out[row] = v;
                    out[row + 1] = v;
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[c_n, 2 * h, 2 * w], out).expect("finite"))
}

pub fn upsample_nearest2d_backward(upstream: &Tensor) -> Result<Tensor, NumericError> {
    const OP: &str = "upsample_nearest2d_backward";
    ensure_finite(OP, upstream)?;
    let shape = upstream.shape();
    if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
        return Err(shape_err(OP, format!("expected (C,2H,2W), got {shape:?}")));
    }
    let (c_n, h, w) = (shape[0], shape[1] / 2, shape[2] / 2);
    let mut grad = vec![0.0; c_n * h * w];
    for c in 0..c_n {
        for ih in 0..h {
            for iw in 0..w {
                let mut acc = 0.0;
                for dh in 0..2 {
                    let row = (c * 2 * h + ih * 2 + dh) * 2 * w + iw * 2;
                    acc += upstream.data()[row] + upstream.data()[row + 1];
                }
                grad[(c * h + ih) * w + iw] = acc;
            }
        }
    }
    Ok(Tensor::from_vec(&[c_n, h, w], grad).expect("finite"))
}

pub fn upsample_nearest1d_forward(input: &Tensor) -> Result<Tensor, NumericError> {
    const OP: &str = "upsample_nearest1d_forward";
    ensure_finite(OP, input)?;
    let shape = input.shape();
    if shape.len() != 2 {
        return Err(shape_err(OP, format!("expected (C,L), got {shape:?}")));
    }
    let (c_n, l) = (shape[0], shape[1]);
    let mut out = vec![0.0; c_n * 2 * l];
    for c in 0..c_n {
        for i in 0..l {
            let v = input.data()[c * l + i];
            out[c * 2 * l + 2 * i] = v;
            out[c * 2 * l + 2 * i + 1] = v;
        }
    }
    Ok(Tensor::from_vec(&[c_n, 2 * l], out).expect("finite"))
}

pub fn upsample_nearest1d_backward(upstream: &Tensor) -> Result<Tensor, NumericError> {
    const OP: &str = "upsample_nearest1d_backward";
    ensure_finite(OP, upstream)?;
    let shape = upstream.shape();
    if shape.len() != 2 || shape[1] % 2 != 0 {
        return Err(shape_err(OP, format!("expected (C,2L), got {shape:?}")));
    }
    let (c_n, l) = (shape[0], shape[1] / 2);
    let mut grad = vec![0.0; c_n * l];
    for c in 0..c_n {
        for i in 0..l {
            grad[c * l + i] = upstream.data()[c * 2 * l + 2 * i] + upstream.data()[c * 2 * l + 2 * i + 1];
        }
    }
    Ok(Tensor::from_vec(&[c_n, l], grad).expect("finite"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_takes_window_max() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d_forward(&input).unwrap();
        assert_eq!(p.output.shape(), &[1, 1, 1]);
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn ties_go_to_first_in_scan_order() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![7.0, 7.0, 7.0, 7.0]).unwrap();
        let p = maxpool2d_forward(&input).unwrap();
        assert_eq!(p.argmax, vec![0]);
    }

    #[test]
    fn odd_dims_pool_to_ceil() {
        let input = Tensor::from_vec(&[1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let p = maxpool2d_forward(&input).unwrap();
        assert_eq!(p.output.shape(), &[1, 2, 2]);
        assert_eq!(p.output.data(), &[5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let input = Tensor::from_vec(&[1, 2, 4], vec![1.0, 9.0, 2.0, 3.0, 8.0, 0.5, 4.0, 7.0]).unwrap();
        let p = maxpool2d_forward(&input).unwrap();
        let up = Tensor::from_vec(&[1, 1, 2], vec![10.0, 20.0]).unwrap();
        let g = maxpool2d_backward(input.shape(), &p.argmax, &up).unwrap();
        assert_eq!(g.data(), &[0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 20.0]);
    }

    #[test]
    fn upsample_replicates() {
        let input = Tensor::from_vec(&[1, 1, 1], vec![0.7]).unwrap();
        let out = upsample_nearest2d_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[0.7; 4]);
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let out = upsample_nearest2d_forward(&Tensor::filled(&[2, 3, 4], 1.25)).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn upsample2d_backward_sums_blocks() {
        let up = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = upsample_nearest2d_backward(&up).unwrap();
        assert_eq!(g.shape(), &[1, 1, 1]);
        assert_eq!(g.data(), &[10.0]);
    }

    #[test]
    fn upsample1d_roundtrip_shapes() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = upsample_nearest1d_forward(&input).unwrap();
        assert_eq!(out.shape(), &[2, 6]);
        assert_eq!(out.data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0, 6.0, 6.0]);
        let g = upsample_nearest1d_backward(&out).unwrap();
        assert_eq!(g.data(), &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
    }
}
