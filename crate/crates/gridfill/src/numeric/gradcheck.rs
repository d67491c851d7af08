//! Finite-difference oracle for every backward op.
//!
//! Each registered op supplies random check cases: a list of differentiable
//! input tensors, a scalar evaluation (the op's output contracted against a
//! fixed random projection), and the analytic gradient of that scalar via
//! the op's backward pass. The harness perturbs every input element by
//! +/-h and compares central differences against the analytic gradient.
//! The evaluation side only ever calls forward code, so the check is
//! independent of the gradient code it certifies.
//!
//! Kinked ops sample away from their non-differentiable sets: relu-family
//! inputs are kept at least 1e-3 from zero and pooling inputs are spaced
//! so no two window candidates sit within the probe step of each other.

use super::*;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Probe step for central differences.
pub const CHECK_H: f64 = 1e-5;
/// Acceptance tolerance on the relative error.
pub const CHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// One op at one input point: the differentiable inputs, a scalar forward
/// evaluation, and its analytic gradient.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    eval: Box<dyn Fn(&[Tensor]) -> f64>,
    analytic: Box<dyn Fn(&[Tensor]) -> Vec<Tensor>>,
}

impl OpCase {
    pub fn eval(&self, inputs: &[Tensor]) -> f64 {
        (self.eval)(inputs)
    }

    pub fn analytic(&self, inputs: &[Tensor]) -> Vec<Tensor> {
        (self.analytic)(inputs)
    }
}

/// Ops with checkable gradients, in report order.
pub fn op_names() -> &'static [&'static str] {
    &[
        "conv1d",
        "conv2d",
        "partial_conv2d",
        "maxpool2d",
        "upsample_nearest1d",
        "upsample_nearest2d",
        "dense",
        "relu",
        "leaky_relu",
        "sigmoid",
        "weighted_mse_loss",
    ]
}

/// Compares the case's analytic gradient to central differences with step
/// `CHECK_H`. Relative error per element is |a - n| / max(|a|, |n|, 1e-6).
pub fn grad_check(case: &OpCase, tolerance: f64) -> GradCheckReport {
    grad_check_scaled(case, tolerance, 1.0)
}

fn grad_check_scaled(case: &OpCase, tolerance: f64, grad_scale: f64) -> GradCheckReport {
    let grads = case.analytic(&case.inputs);
    assert_eq!(grads.len(), case.inputs.len());
    let mut max_rel = 0.0f64;
    let mut point = case.inputs.to_vec();
    for (ti, grad) in grads.iter().enumerate() {
        assert_eq!(grad.shape(), case.inputs[ti].shape());
        for j in 0..grad.len() {
            let x = case.inputs[ti].data()[j];
            point[ti].data_mut()[j] = x + CHECK_H;
            let f_plus = case.eval(&point);
            point[ti].data_mut()[j] = x - CHECK_H;
            let f_minus = case.eval(&point);
            point[ti].data_mut()[j] = x;
            let numeric = (f_plus - f_minus) / (2.0 * CHECK_H);
            let analytic = grad.data()[j] * grad_scale;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
    }
    GradCheckReport {
        op: case.name.to_string(),
        max_rel_err: max_rel,
        tolerance,
        pass: max_rel <= tolerance,
    }
}

/// Runs `points` random cases per registered op and reports the worst
/// relative error of each. `corrupt` names an op whose analytic gradients
/// are scaled by 2 before comparison, to demonstrate that the check
/// actually rejects wrong gradients.
pub fn check_registry(
    seed: u64,
    points: usize,
    tolerance: f64,
    corrupt: Option<&str>,
) -> Vec<GradCheckReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    op_names()
        .iter()
        .map(|name| {
            let scale = if corrupt == Some(*name) { 2.0 } else { 1.0 };
            let mut worst = GradCheckReport {
                op: name.to_string(),
                max_rel_err: 0.0,
                tolerance,
                pass: true,
            };
            for _ in 0..points {
                let case = sample_case(name, &mut rng);
                let rep = grad_check_scaled(&case, tolerance, scale);
                if rep.max_rel_err > worst.max_rel_err {
                    worst.max_rel_err = rep.max_rel_err;
                }
            }
            worst.pass = worst.max_rel_err <= tolerance;
            worst
        })
        .collect()
}

fn uniform(rng: &mut ChaCha12Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("finite")
}

/// Uniform away from zero: |x| >= margin, for kinked activations.
fn uniform_off_zero(rng: &mut ChaCha12Rng, shape: &[usize], margin: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(margin..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("finite")
}

/// Values spaced far enough apart that no pooling window ever has two
/// candidates within the probe step.
fn well_separated(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut ranks: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    let data = ranks
        .iter()
        .map(|&r| r as f64 * 0.01 + rng.random_range(0.0..0.004))
        .collect();
    Tensor::from_vec(shape, data).expect("finite")
}

fn projection(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.0, 1.0)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Builds a random check case for the named op.
pub fn sample_case(op: &str, rng: &mut ChaCha12Rng) -> OpCase {
    match op {
        "conv1d" => {
            let (c_in, c_out) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let k = rng.random_range(1..=4);
            let stride = rng.random_range(1..=2);
            let padding = rng.random_range(0..=2);
            let len = rng.random_range(k.max(3)..k + 7);
            let input = uniform(rng, &[c_in, len], -1.0, 1.0);
            let weights = uniform(rng, &[c_out, c_in, k], -1.0, 1.0);
            let bias = uniform(rng, &[c_out], -1.0, 1.0);
            let probe = ConvKernel::new(weights.clone(), bias.clone(), stride, padding).unwrap();
            let out_shape = conv1d_forward(&input, &probe).unwrap().shape().to_vec();
            let c = projection(rng, &out_shape);
            let cc = c.clone();
            OpCase {
                name: "conv1d",
                inputs: vec![input, weights, bias],
                eval: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    dot(&conv1d_forward(&xs[0], &k).unwrap(), &c)
                }),
                analytic: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    let g = conv1d_backward(&xs[0], &k, &cc).unwrap();
                    vec![g.input, g.weights, g.bias]
                }),
            }
        }
        "conv2d" => {
            let (c_in, c_out) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let k = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let padding = rng.random_range(0..=1);
            let h = rng.random_range(k..k + 4);
            let w = rng.random_range(k..k + 4);
            let input = uniform(rng, &[c_in, h, w], -1.0, 1.0);
            let weights = uniform(rng, &[c_out, c_in, k, k], -1.0, 1.0);
            let bias = uniform(rng, &[c_out], -1.0, 1.0);
            let probe = ConvKernel::new(weights.clone(), bias.clone(), stride, padding).unwrap();
            let out_shape = conv2d_forward(&input, &probe).unwrap().shape().to_vec();
            let c = projection(rng, &out_shape);
            let cc = c.clone();
            OpCase {
                name: "conv2d",
                inputs: vec![input, weights, bias],
                eval: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    dot(&conv2d_forward(&xs[0], &k).unwrap(), &c)
                }),
                analytic: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    let g = conv2d_backward(&xs[0], &k, &cc).unwrap();
                    vec![g.input, g.weights, g.bias]
                }),
            }
        }
        "partial_conv2d" => {
            let (c_in, c_out) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let k = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let padding = rng.random_range(0..=1);
            let h = rng.random_range(k..k + 4);
            let w = rng.random_range(k..k + 4);
            let input = uniform(rng, &[c_in, h, w], -1.0, 1.0);
            let mut mask_data: Vec<f64> = (0..h * w)
                .map(|_| if rng.random_bool(0.7) { 1.0 } else { 0.0 })
                .collect();
            if mask_data.iter().all(|&m| m == 0.0) {
                mask_data[0] = 1.0;
            }
            let mask = Tensor::from_vec(&[1, h, w], mask_data).unwrap();
            let weights = uniform(rng, &[c_out, c_in, k, k], -1.0, 1.0);
            let bias = uniform(rng, &[c_out], -1.0, 1.0);
            let probe = ConvKernel::new(weights.clone(), bias.clone(), stride, padding).unwrap();
            let (out, _) = partial_conv2d_forward(&input, &mask, &probe).unwrap();
            let c = projection(rng, out.shape());
            let cc = c.clone();
            let mask2 = mask.clone();
            OpCase {
                name: "partial_conv2d",
                inputs: vec![input, weights, bias],
                eval: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    dot(&partial_conv2d_forward(&xs[0], &mask, &k).unwrap().0, &c)
                }),
                analytic: Box::new(move |xs| {
                    let k = ConvKernel::new(xs[1].clone(), xs[2].clone(), stride, padding).unwrap();
                    let g = partial_conv2d_backward(&xs[0], &mask2, &k, &cc).unwrap();
                    vec![g.input, g.weights, g.bias]
                }),
            }
        }
        "maxpool2d" => {
            let c_n = rng.random_range(1..=2);
            let h = rng.random_range(2..=6);
            let w = rng.random_range(2..=6);
            let input = well_separated(rng, &[c_n, h, w]);
            let out_shape = [c_n, h.div_ceil(2), w.div_ceil(2)];
            let c = projection(rng, &out_shape);
            let cc = c.clone();
            let shape = vec![c_n, h, w];
            OpCase {
                name: "maxpool2d",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&maxpool2d_forward(&xs[0]).unwrap().output, &c)),
                analytic: Box::new(move |xs| {
                    let p = maxpool2d_forward(&xs[0]).unwrap();
                    vec![maxpool2d_backward(&shape, &p.argmax, &cc).unwrap()]
                }),
            }
        }
        "upsample_nearest1d" => {
            let shape = [rng.random_range(1..=3), rng.random_range(1..=6)];
            let input = uniform(rng, &shape, -1.0, 1.0);
            let out_shape = [shape[0], shape[1] * 2];
            let c = projection(rng, &out_shape);
            let cc = c.clone();
            OpCase {
                name: "upsample_nearest1d",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&upsample_nearest1d_forward(&xs[0]).unwrap(), &c)),
                analytic: Box::new(move |_| {
                    vec![upsample_nearest1d_backward(&cc).unwrap()]
                }),
            }
        }
        "upsample_nearest2d" => {
            let shape = [
                rng.random_range(1..=3),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            ];
            let input = uniform(rng, &shape, -1.0, 1.0);
            let out_shape = [shape[0], shape[1] * 2, shape[2] * 2];
            let c = projection(rng, &out_shape);
            let cc = c.clone();
            OpCase {
                name: "upsample_nearest2d",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&upsample_nearest2d_forward(&xs[0]).unwrap(), &c)),
                analytic: Box::new(move |_| {
                    vec![upsample_nearest2d_backward(&cc).unwrap()]
                }),
            }
        }
        "dense" => {
            let (m, n) = (rng.random_range(1..=5), rng.random_range(2..=6));
            let input = uniform(rng, &[n], -1.0, 1.0);
            let weights = uniform(rng, &[m, n], -1.0, 1.0);
            let bias = uniform(rng, &[m], -1.0, 1.0);
            let c = projection(rng, &[m]);
            let cc = c.clone();
            OpCase {
                name: "dense",
                inputs: vec![input, weights, bias],
                eval: Box::new(move |xs| dot(&dense_forward(&xs[0], &xs[1], &xs[2]).unwrap(), &c)),
                analytic: Box::new(move |xs| {
                    let g = dense_backward(&xs[0], &xs[1], &cc).unwrap();
                    vec![g.input, g.weights, g.bias]
                }),
            }
        }
        "relu" => {
            let shape = [rng.random_range(2..=8)];
            let input = uniform_off_zero(rng, &shape, 1e-3);
            let c = projection(rng, &shape);
            let cc = c.clone();
            OpCase {
                name: "relu",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&relu_forward(&xs[0]), &c)),
                analytic: Box::new(move |xs| vec![relu_backward(&xs[0], &cc)]),
            }
        }
        "leaky_relu" => {
            let shape = [rng.random_range(2..=8)];
            let input = uniform_off_zero(rng, &shape, 1e-3);
            let c = projection(rng, &shape);
            let cc = c.clone();
            OpCase {
                name: "leaky_relu",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&leaky_relu_forward(&xs[0], 0.2), &c)),
                analytic: Box::new(move |xs| vec![leaky_relu_backward(&xs[0], &cc, 0.2)]),
            }
        }
        "sigmoid" => {
            let shape = [rng.random_range(2..=8)];
            let input = uniform(rng, &shape, -3.0, 3.0);
            let c = projection(rng, &shape);
            let cc = c.clone();
            OpCase {
                name: "sigmoid",
                inputs: vec![input],
                eval: Box::new(move |xs| dot(&sigmoid_forward(&xs[0]), &c)),
                analytic: Box::new(move |xs| {
                    vec![sigmoid_backward(&sigmoid_forward(&xs[0]), &cc)]
                }),
            }
        }
        "weighted_mse_loss" => {
            let shape = [rng.random_range(2..=8)];
            let pred = uniform(rng, &shape, -1.0, 1.0);
            let target = uniform(rng, &shape, -1.0, 1.0);
            let mut wdata: Vec<f64> = (0..shape[0])
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.1..2.0)
                    }
                })
                .collect();
            if wdata.iter().all(|&w| w == 0.0) {
                wdata[0] = 1.0;
            }
            let weight = Tensor::from_vec(&shape, wdata).unwrap();
            let target2 = target.clone();
            let weight2 = weight.clone();
            OpCase {
                name: "weighted_mse_loss",
                inputs: vec![pred],
                eval: Box::new(move |xs| weighted_mse_loss(&xs[0], &target, &weight).unwrap().0),
                analytic: Box::new(move |xs| {
                    vec![weighted_mse_loss(&xs[0], &target2, &weight2).unwrap().1]
                }),
            }
        }
        other => panic!("unknown op {other}"),
    }
}
