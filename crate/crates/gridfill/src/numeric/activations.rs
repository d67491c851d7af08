//! Elementwise activations. Backward passes take whichever tensor makes
//! the derivative cheapest: relu variants use the forward input, sigmoid
//! uses the forward output (sigma' = y(1-y)).

use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(input.shape(), data).expect("finite")
}

pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Tensor {
    assert_eq!(input.shape(), upstream.shape());
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > 0.0 { u } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("finite")
}

pub fn leaky_relu_forward(input: &Tensor, alpha: f64) -> Tensor {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { alpha * v })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("finite")
}

pub fn leaky_relu_backward(input: &Tensor, upstream: &Tensor, alpha: f64) -> Tensor {
    assert_eq!(input.shape(), upstream.shape());
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > 0.0 { u } else { alpha * u })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("finite")
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    // Saturated f64 sigmoid reaches exactly 0.0 / 1.0 around |x| > 37;
    // clamp to the nearest interior values so output stays strictly in
    // (0,1) as documented.
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    let data = input
        .data()
        .iter()
        .map(|&v| (1.0 / (1.0 + (-v).exp())).clamp(f64::MIN_POSITIVE, HI))
        .collect();
    Tensor::from_vec(input.shape(), data).expect("finite")
}

/// `output` is the tensor sigmoid_forward returned.
pub fn sigmoid_backward(output: &Tensor, upstream: &Tensor) -> Tensor {
    assert_eq!(output.shape(), upstream.shape());
    let data = output
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&y, &u)| u * y * (1.0 - y))
        .collect();
    Tensor::from_vec(output.shape(), data).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let x = Tensor::zeros(&[1]);
        assert_eq!(sigmoid_forward(&x).data(), &[0.5]);
    }

    #[test]
    fn sigmoid_output_in_open_unit_interval() {
        let x = Tensor::from_vec(&[3], vec![-700.0, 0.0, 700.0]).unwrap();
        let y = sigmoid_forward(&x);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn leaky_slope_below_zero() {
        let x = Tensor::from_vec(&[2], vec![-10.0, 10.0]).unwrap();
        let y = leaky_relu_forward(&x, 0.2);
        assert_eq!(y.data(), &[-2.0, 10.0]);
        let g = leaky_relu_backward(&x, &Tensor::filled(&[2], 1.0), 0.2);
        assert_eq!(g.data(), &[0.2, 1.0]);
    }
}
