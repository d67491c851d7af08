use super::{TrainConfig, TrainError};
use crate::tensor::Tensor;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> AdamState {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Gradients must be finite and
/// shaped like their parameters.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::OptimizerShape(format!(
            "{} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(TrainError::OptimizerShape(format!(
                "param {i} is {:?} but its gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if g.data().iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFiniteGradient { index: i });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        let g = grads[i].data();
        for j in 0..p.len() {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Scale all gradients down in place so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    fn single(value: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![value]).unwrap()
    }

    // With one fresh moment pair, bias correction makes the first update
    // lr * g / (|g| + eps'), so its magnitude is within eps of lr.
    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        let config = cfg();
        let mut p = single(1.0);
        let mut state = AdamState::new(&[&p]);
        let grads = vec![single(2.5)];
        adam_step(&mut [&mut p], &grads, &mut state, &config).unwrap();
        let moved = 1.0 - p.data()[0];
        assert!((moved - config.learning_rate).abs() < 1e-6, "moved {moved}");
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_but_advances_the_step() {
        let config = cfg();
        let mut p = single(0.75);
        let mut state = AdamState::new(&[&p]);
        let grads = vec![single(0.0)];
        adam_step(&mut [&mut p], &grads, &mut state, &config).unwrap();
        assert_eq!(p.data()[0], 0.75);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let config = cfg();
        let mut p = single(1.0);
        let mut state = AdamState::new(&[&p]);
        let mut bad = single(0.0);
        bad.data_mut()[0] = f64::NAN;
        let err = adam_step(&mut [&mut p], &[bad], &mut state, &config).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { index: 0 }));
        // The failed call must not have touched anything.
        assert_eq!(p.data()[0], 1.0);
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn mismatched_shapes_are_an_error() {
        let config = cfg();
        let mut p = single(1.0);
        let mut state = AdamState::new(&[&p]);
        let grads = vec![Tensor::zeros(&[2])];
        assert!(adam_step(&mut [&mut p], &grads, &mut state, &config).is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let config = cfg();
        let run = || {
            let mut p = Tensor::from_vec(&[3], vec![0.1, -0.4, 2.0]).unwrap();
            let mut state = AdamState::new(&[&p]);
            for k in 0..25 {
                let g = Tensor::from_vec(
                    &[3],
                    vec![(k as f64).sin(), 0.3 * k as f64, -1.0 / (k as f64 + 1.0)],
                )
                .unwrap();
                adam_step(&mut [&mut p], &[g], &mut state, &config).unwrap();
            }
            p.data().to_vec()
        };
        let a = run();
        let b = run();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = vec![single(3.0), single(4.0)];
        let before = clip_grad_norm(&mut grads, 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        let after: f64 = grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum();
        assert!((after.sqrt() - 1.0).abs() < 1e-12);
        // Direction is preserved.
        assert!((grads[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads[1].data()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipping_leaves_small_gradients_alone() {
        let mut grads = vec![single(0.3)];
        clip_grad_norm(&mut grads, 5.0);
        assert_eq!(grads[0].data()[0], 0.3);
    }

    // A single dense layer fit to y = 2x must reach essentially zero
    // loss well within 200 steps at a learning rate suited to the
    // distance from the zero init.
    #[test]
    fn linear_fit_converges() {
        use crate::numeric::{dense_backward, dense_forward};
        let mut config = cfg();
        config.learning_rate = 0.05;
        let xs: Vec<f64> = (0..32).map(|i| -1.0 + 2.0 * i as f64 / 31.0).collect();
        let n = xs.len() as f64;
        let mut w = Tensor::zeros(&[1, 1]);
        let mut b = single(0.0);
        let mut state = AdamState::new(&[&w, &b]);
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            let mut gw = Tensor::zeros(&[1, 1]);
            let mut gb = single(0.0);
            loss = 0.0;
            for &x in &xs {
                let input = single(x);
                let pred = dense_forward(&input, &w, &b).unwrap();
                let d = pred.data()[0] - 2.0 * x;
                loss += d * d / n;
                let upstream = single(2.0 * d / n);
                let g = dense_backward(&input, &w, &upstream).unwrap();
                gw.data_mut()[0] += g.weights.data()[0];
                gb.data_mut()[0] += g.bias.data()[0];
            }
            adam_step(&mut [&mut w, &mut b], &[gw, gb], &mut state, &config).unwrap();
        }
        assert!(loss < 1e-6, "loss {loss} after 200 steps, w {}", w.data()[0]);
    }
}
