//! Property tests for the layer ops: shape algebra, partial-conv hole
//! invariance, reduction to plain convolution, and the finite-difference
//! sweep over every registered backward op.

use gridfill::numeric::{
    check_registry, conv2d_forward, partial_conv2d_forward, ConvKernel,
    gradcheck::{CHECK_H, CHECK_TOL},
};
use gridfill::tensor::Tensor;
use proptest::prelude::*;

fn out_len(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conv2d_shape_follows_formula(
        c_in in 1usize..4,
        c_out in 1usize..4,
        k in 1usize..6,
        stride in 1usize..4,
        pad in 0usize..3,
        h in 1usize..10,
        w in 1usize..10,
    ) {
        let input = Tensor::filled(&[c_in, h, w], 0.5);
        let kernel = ConvKernel::new(
            Tensor::filled(&[c_out, c_in, k, k], 0.1),
            Tensor::zeros(&[c_out]),
            stride,
            pad,
        ).unwrap();
        match (out_len(h, k, stride, pad), out_len(w, k, stride, pad)) {
            (Some(ho), Some(wo)) => {
                let out = conv2d_forward(&input, &kernel).unwrap();
                prop_assert_eq!(out.shape(), &[c_out, ho, wo]);
            }
            _ => prop_assert!(conv2d_forward(&input, &kernel).is_err()),
        }
    }

    #[test]
    fn hole_cells_never_influence_partial_conv(
        seed in 0u64..1000,
        k in 1usize..4,
        stride in 1usize..3,
        pad in 0usize..2,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
        let input: Vec<f64> = (0..2 * h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mask: Vec<f64> = (0..h * w).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect();
        let weights = Tensor::from_vec(&[2, 2, k, k], (0..4 * k * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let kernel = ConvKernel::new(weights, Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap(), stride, pad).unwrap();
        let mask_t = Tensor::from_vec(&[1, h, w], mask.clone()).unwrap();

        let a = Tensor::from_vec(&[2, h, w], input.clone()).unwrap();
        let mut poked = input;
        for c in 0..2 {
            for (i, m) in mask.iter().enumerate() {
                if *m == 0.0 {
                    poked[c * h * w + i] = rng.random_range(-1e6..1e6);
                }
            }
        }
        let b = Tensor::from_vec(&[2, h, w], poked).unwrap();

        let (out_a, um_a) = partial_conv2d_forward(&a, &mask_t, &kernel).unwrap();
        let (out_b, um_b) = partial_conv2d_forward(&b, &mask_t, &kernel).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&out_a), bits(&out_b));
        prop_assert_eq!(bits(&um_a), bits(&um_b));
    }

    #[test]
    fn all_ones_mask_reduces_to_plain_conv(
        seed in 0u64..1000,
        k in 1usize..4,
        stride in 1usize..3,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
        let input = Tensor::from_vec(&[2, h, w], (0..2 * h * w).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let weights = Tensor::from_vec(&[3, 2, k, k], (0..6 * k * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let bias = Tensor::from_vec(&[3], vec![0.1, 0.0, -2.5]).unwrap();
        // padding 0: every window is fully in bounds, so the partial-conv
        // renormalization factor is exactly 1 and the two ops share their
        // arithmetic order bit for bit. (With padding, border windows
        // renormalize over the cells that exist and differ by design.)
        let kernel = ConvKernel::new(weights, bias, stride, 0).unwrap();
        let mask = Tensor::filled(&[1, h, w], 1.0);
        let (out, updated) = partial_conv2d_forward(&input, &mask, &kernel).unwrap();
        let plain = conv2d_forward(&input, &kernel).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&out), bits(&plain));
        prop_assert!(updated.data().iter().all(|&v| v == 1.0));
    }
}

#[test]
fn every_op_passes_100_random_points() {
    assert_eq!(CHECK_H, 1e-5);
    let reports = check_registry(20260816, 100, CHECK_TOL, None);
    for r in &reports {
        assert!(
            r.pass,
            "{}: max rel err {} over tolerance {}",
            r.op, r.max_rel_err, r.tolerance
        );
    }
}
