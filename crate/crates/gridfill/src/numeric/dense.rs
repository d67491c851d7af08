//! Fully-connected layer: y = W x + b.

use super::gemm::{mm_nn, mm_tn};
use super::{ensure_finite, shape_err, NumericError};
use crate::tensor::Tensor;

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(op: &'static str, input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize), NumericError> {
    let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
    if is.len() != 1 || ws.len() != 2 || bs.len() != 1 || ws[1] != is[0] || ws[0] != bs[0] {
        return Err(shape_err(
            op,
            format!("expected input (N), weights (M,N), bias (M); got {is:?}, {ws:?}, {bs:?}"),
        ));
    }
    Ok((ws[0], ws[1]))
}

pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NumericError> {
    const OP: &str = "dense_forward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, weights)?;
    ensure_finite(OP, bias)?;
    let (m, n) = check(OP, input, weights, bias)?;
    let mut out = vec![0.0; m];
    mm_nn(m, n, 1, weights.data(), input.data(), &mut out);
    for (o, b) in out.iter_mut().zip(bias.data()) {
        *o += b;
    }
    Tensor::from_vec(&[m], out).map_err(|_| NumericError::NonFinite { op: OP })
}

pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
) -> Result<DenseGrads, NumericError> {
    const OP: &str = "dense_backward";
    ensure_finite(OP, input)?;
    ensure_finite(OP, upstream)?;
    let (is, ws) = (input.shape(), weights.shape());
    if is.len() != 1 || ws.len() != 2 || ws[1] != is[0] || upstream.shape() != [ws[0]] {
        return Err(shape_err(
            OP,
            format!("expected input (N), weights (M,N), upstream (M); got {is:?}, {ws:?}, {:?}", upstream.shape()),
        ));
    }
    let (m, n) = (ws[0], ws[1]);
    // grad_W = upstream (M x 1) * input^T (1 x N)
    let mut grad_w = vec![0.0; m * n];
    mm_nn(m, 1, n, upstream.data(), input.data(), &mut grad_w);
    // grad_x = W^T (N x M) * upstream (M x 1)
    let mut grad_x = vec![0.0; n];
    mm_tn(n, m, 1, weights.data(), upstream.data(), &mut grad_x);
    Ok(DenseGrads {
        input: Tensor::from_vec(&[n], grad_x).expect("finite grads"),
        weights: Tensor::from_vec(&[m, n], grad_w).expect("finite grads"),
        bias: upstream.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let input = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let out = dense_forward(&input, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn zero_weights_return_bias() {
        let input = Tensor::filled(&[4], 7.0);
        let bias = Tensor::from_vec(&[2], vec![0.25, -1.5]).unwrap();
        let out = dense_forward(&input, &Tensor::zeros(&[2, 4]), &bias).unwrap();
        assert_eq!(out.data(), bias.data());
    }

    #[test]
    fn hand_computed_grads() {
        let input = Tensor::from_vec(&[2], vec![3.0, 5.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = Tensor::from_vec(&[2], vec![1.0, 10.0]).unwrap();
        let g = dense_backward(&input, &w, &up).unwrap();
        assert_eq!(g.weights.data(), &[3.0, 5.0, 30.0, 50.0]);
        assert_eq!(g.input.data(), &[31.0, 42.0]);
        assert_eq!(g.bias.data(), up.data());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let input = Tensor::zeros(&[3]);
        let w = Tensor::zeros(&[2, 4]);
        assert!(dense_forward(&input, &w, &Tensor::zeros(&[2])).is_err());
    }
}
