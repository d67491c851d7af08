//! Partial-convolution U-Net for mask-aware inpainting.
//!
//! Works on any (1, H, W) grid with H and W divisible by 16; the energy
//! image is resampled to 192x192 before entering this net. Encoder: four
//! stride-2 partial convolutions (kernels 7, 5, 5, 3) under relu, each
//! tracking an updated single-channel mask. Decoder: four stages of
//! [nearest-upsample feature and mask x2, concat encoder skip, mask union
//! by max, partial conv 3x3, leaky relu 0.2]; the last stage concats the
//! original input and mask instead of an encoder feature. Head: plain 1x1
//! conv under a sigmoid.

use crate::numeric::{
    conv2d_backward, conv2d_forward, leaky_relu_backward, leaky_relu_forward,
    partial_conv2d_backward, partial_conv2d_forward, relu_backward, relu_forward,
    sigmoid_backward, sigmoid_forward, upsample_nearest2d_backward, upsample_nearest2d_forward,
    ConvKernel,
};
use crate::tensor::Tensor;
use super::{init_kernel_2d, init_kernel_2d_limit, xavier_limit, ModelError};
use rand_chacha::ChaCha12Rng;

const LEAKY_SLOPE: f64 = 0.2;
const ENC_KERNELS: [usize; 4] = [7, 5, 5, 3];
const ENC_PADS: [usize; 4] = [3, 2, 2, 1];

/// Encoder channel widths; the decoder mirrors them back down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PconvWidths {
    pub channels: [usize; 4],
}

impl Default for PconvWidths {
    fn default() -> Self {
        PconvWidths { channels: [32, 64, 128, 256] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PconvNet {
    pub widths: PconvWidths,
    pub enc: Vec<ConvKernel>,
    pub dec: Vec<ConvKernel>,
    pub head: ConvKernel,
}

pub struct PconvCache {
    pub(crate) pres_enc: Vec<Tensor>,
    pub(crate) acts_enc: Vec<Tensor>,
    pub(crate) masks_enc: Vec<Tensor>,
    ups: Vec<Tensor>,
    cats: Vec<Tensor>,
    pub(crate) catms: Vec<Tensor>,
    pres_dec: Vec<Tensor>,
    acts_dec: Vec<Tensor>,
    hpre_out: Tensor,
}

impl PconvNet {
    pub fn init(widths: &PconvWidths, rng: &mut ChaCha12Rng) -> PconvNet {
        let [c0, c1, c2, c3] = widths.channels;
        let ins = [1, c0, c1, c2];
        let outs = [c0, c1, c2, c3];
        let enc = (0..4)
            .map(|i| init_kernel_2d(outs[i], ins[i], ENC_KERNELS[i], 2, ENC_PADS[i], rng))
            .collect();
        let dec = vec![
            init_kernel_2d(c2, c3 + c2, 3, 1, 1, rng),
            init_kernel_2d(c1, c2 + c1, 3, 1, 1, rng),
            init_kernel_2d(c0, c1 + c0, 3, 1, 1, rng),
            init_kernel_2d(c0, c0 + 1, 3, 1, 1, rng),
        ];
        let head = init_kernel_2d_limit(1, c0, 1, 1, 0, xavier_limit(c0, 1), rng);
        PconvNet { widths: widths.clone(), enc, dec, head }
    }

    fn check_input(input: &Tensor, mask: &Tensor) -> Result<(), ModelError> {
        let bad = |msg: String| ModelError::BadInput { arch: "pconv", msg };
        let s = input.shape();
        if s.len() != 3 || s[0] != 1 {
            return Err(bad(format!("expected (1, H, W) input, got {s:?}")));
        }
        if s[1] % 16 != 0 || s[2] % 16 != 0 || s[1] < 16 || s[2] < 16 {
            return Err(bad(format!("H and W must be multiples of 16, got {s:?}")));
        }
        if mask.shape() != s {
            return Err(bad(format!(
                "mask shape {:?} does not match input {s:?}",
                mask.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass on a hole-zeroed grid and its observation mask.
    pub fn forward_train(
        &self,
        input: &Tensor,
        mask: &Tensor,
    ) -> Result<(Tensor, PconvCache), ModelError> {
        Self::check_input(input, mask)?;
        let mut pres_enc = Vec::with_capacity(4);
        let mut acts_enc = Vec::with_capacity(4);
        let mut masks_enc = Vec::with_capacity(4);
        let mut feat = input.clone();
        let mut m = mask.clone();
        for kernel in &self.enc {
            let (pre, m_next) = partial_conv2d_forward(&feat, &m, kernel)?;
            feat = relu_forward(&pre);
            m = m_next;
            pres_enc.push(pre);
            acts_enc.push(feat.clone());
            masks_enc.push(m.clone());
        }

        let mut ups = Vec::with_capacity(4);
        let mut cats = Vec::with_capacity(4);
        let mut catms = Vec::with_capacity(4);
        let mut pres_dec = Vec::with_capacity(4);
        let mut acts_dec = Vec::with_capacity(4);
        for i in 0..4 {
            let up = upsample_nearest2d_forward(&feat)?;
            let upm = upsample_nearest2d_forward(&m)?;
            let (skip_feat, skip_mask): (&Tensor, &Tensor) = if i < 3 {
                (&acts_enc[2 - i], &masks_enc[2 - i])
            } else {
                (input, mask)
            };
            let cat = super::concat_channels(&up, skip_feat);
            let catm = super::mask_union_max(&upm, skip_mask);
            let (pre, m_next) = partial_conv2d_forward(&cat, &catm, &self.dec[i])?;
            feat = leaky_relu_forward(&pre, LEAKY_SLOPE);
            m = m_next;
            ups.push(up);
            cats.push(cat);
            catms.push(catm);
            pres_dec.push(pre);
            acts_dec.push(feat.clone());
        }
        let hpre = conv2d_forward(&feat, &self.head)?;
        let out = sigmoid_forward(&hpre);
        let cache = PconvCache {
            pres_enc,
            acts_enc,
            masks_enc,
            ups,
            cats,
            catms,
            pres_dec,
            acts_dec,
            hpre_out: out.clone(),
        };
        Ok((out, cache))
    }

    /// Gradients for every parameter, in `params()` order. The mask path
    /// carries no gradient.
    pub fn backward(
        &self,
        input: &Tensor,
        mask: &Tensor,
        cache: &PconvCache,
        upstream: &Tensor,
    ) -> Result<Vec<Tensor>, ModelError> {
        let mut g = sigmoid_backward(&cache.hpre_out, upstream);
        let head_g = conv2d_backward(&cache.acts_dec[3], &self.head, &g)?;
        g = head_g.input;

        // Gradients flowing into encoder skips acts_enc[0..3], filled as the
        // decoder stages that consume them are walked in reverse.
        let mut skip_g: Vec<Option<Tensor>> = vec![None, None, None];
        let mut dec_g = Vec::with_capacity(4);
        for i in (0..4).rev() {
            g = leaky_relu_backward(&cache.pres_dec[i], &g, LEAKY_SLOPE);
            let cg = partial_conv2d_backward(&cache.cats[i], &cache.catms[i], &self.dec[i], &g)?;
            let up_channels = cache.ups[i].shape()[0];
            let (g_up, g_skip) = super::split_channels(&cg.input, up_channels);
            if i < 3 {
                skip_g[2 - i] = Some(g_skip);
            }
            g = upsample_nearest2d_backward(&g_up)?;
            dec_g.push((cg.weights, cg.bias));
        }

        let mut enc_g = Vec::with_capacity(4);
        for i in (0..4).rev() {
            let mut total = g;
            if i < 3 {
                if let Some(extra) = &skip_g[i] {
                    super::add_into(&mut total, extra);
                }
            }
            let gpre = relu_backward(&cache.pres_enc[i], &total);
            let (below, below_mask): (&Tensor, &Tensor) = if i == 0 {
                (input, mask)
            } else {
                (&cache.acts_enc[i - 1], &cache.masks_enc[i - 1])
            };
            let cg = partial_conv2d_backward(below, below_mask, &self.enc[i], &gpre)?;
            g = cg.input;
            enc_g.push((cg.weights, cg.bias));
        }

        let mut grads = Vec::with_capacity(18);
        for (w, b) in enc_g.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        for (w, b) in dec_g.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        grads.push(head_g.weights);
        grads.push(head_g.bias);
        Ok(grads)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(18);
        for k in self.enc.iter().chain(&self.dec) {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(18);
        for k in self.enc.iter_mut().chain(&mut self.dec) {
            out.push(&mut k.weights);
            out.push(&mut k.bias);
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(18);
        for i in 0..4 {
            out.push(format!("enc{i}.weights"));
            out.push(format!("enc{i}.bias"));
        }
        for i in 0..4 {
            out.push(format!("dec{i}.weights"));
            out.push(format!("dec{i}.bias"));
        }
        out.push("head.weights".into());
        out.push("head.bias".into());
        out
    }

    /// Parameter shapes in `params()` order, from widths alone.
    pub(crate) fn param_shapes(widths: &PconvWidths) -> Vec<Vec<usize>> {
        let [c0, c1, c2, c3] = widths.channels;
        let ins = [1, c0, c1, c2];
        let outs = [c0, c1, c2, c3];
        let mut shapes = Vec::with_capacity(18);
        for i in 0..4 {
            let k = ENC_KERNELS[i];
            shapes.push(vec![outs[i], ins[i], k, k]);
            shapes.push(vec![outs[i]]);
        }
        for (out_c, in_c) in [(c2, c3 + c2), (c1, c2 + c1), (c0, c1 + c0), (c0, c0 + 1)] {
            shapes.push(vec![out_c, in_c, 3, 3]);
            shapes.push(vec![out_c]);
        }
        shapes.push(vec![1, c0, 1, 1]);
        shapes.push(vec![1]);
        shapes
    }

    /// Assemble a net from 18 tensors already validated against
    /// `param_shapes`.
    pub(crate) fn from_params(widths: &PconvWidths, params: Vec<Tensor>) -> PconvNet {
        let mut it = params.into_iter();
        let mut kernel = |stride: usize, padding: usize| {
            let w = it.next().expect("validated count");
            let b = it.next().expect("validated count");
            ConvKernel::new(w, b, stride, padding).expect("validated shapes")
        };
        let enc = (0..4).map(|i| kernel(2, ENC_PADS[i])).collect();
        let dec = (0..4).map(|_| kernel(1, 1)).collect();
        let head = kernel(1, 0);
        PconvNet { widths: widths.clone(), enc, dec, head }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn tiny() -> PconvNet {
        let widths = PconvWidths { channels: [2, 3, 2, 2] };
        PconvNet::init(&widths, &mut rng_for(7, &["pconv-test"]))
    }

    fn random_case(seed: u64, h: usize, w: usize) -> (Tensor, Tensor) {
        let mut rng = rng_for(seed, &["pconv-test", "case"]);
        let mut input = Tensor::zeros(&[1, h, w]);
        let mut mask = Tensor::zeros(&[1, h, w]);
        for i in 0..h * w {
            let observed = rng.random::<f64>() > 0.3;
            mask.data_mut()[i] = if observed { 1.0 } else { 0.0 };
            input.data_mut()[i] = if observed { rng.random::<f64>() } else { 0.0 };
        }
        (input, mask)
    }

    #[test]
    fn all_ones_mask_stays_all_ones_through_the_net() {
        let net = tiny();
        let input = {
            let mut rng = rng_for(3, &["pconv-test", "ones"]);
            let mut t = Tensor::zeros(&[1, 32, 32]);
            t.data_mut().iter_mut().for_each(|v| *v = rng.random());
            t
        };
        let mask = Tensor::filled(&[1, 32, 32], 1.0);
        let (out, cache) = net.forward_train(&input, &mask).unwrap();
        for m in cache.masks_enc.iter().chain(&cache.catms) {
            assert!(m.data().iter().all(|&v| v == 1.0), "mask decayed from all ones");
        }
        assert!(out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn first_stage_ignores_values_under_holes() {
        let net = tiny();
        let (zeroed, mask) = random_case(11, 32, 32);
        let mut garbage = zeroed.clone();
        for i in 0..garbage.len() {
            if mask.data()[i] == 0.0 {
                garbage.data_mut()[i] = 1e6;
            }
        }
        let (pre_a, m_a) = partial_conv2d_forward(&zeroed, &mask, &net.enc[0]).unwrap();
        let (pre_b, m_b) = partial_conv2d_forward(&garbage, &mask, &net.enc[0]).unwrap();
        assert_eq!(pre_a.data(), pre_b.data());
        assert_eq!(m_a.data(), m_b.data());
    }

    #[test]
    fn rejects_sizes_not_divisible_by_16() {
        let net = tiny();
        let input = Tensor::zeros(&[1, 30, 32]);
        let mask = Tensor::filled(&[1, 30, 32], 1.0);
        assert!(net.forward_train(&input, &mask).is_err());
    }

    #[test]
    fn output_shape_matches_input() {
        let net = tiny();
        let (input, mask) = random_case(5, 48, 32);
        let (out, _) = net.forward_train(&input, &mask).unwrap();
        assert_eq!(out.shape(), &[1, 48, 32]);
    }
}
