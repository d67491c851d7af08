//! 1D convolutional autoencoder over the flattened 8736-hour series.
//!
//! Encoder: 3 x [conv1d k7 stride 2, relu], lengths 8736 -> 4368 -> 2184
//! -> 1092. Bottleneck: dense to `bottleneck` units, relu, dense back.
//! Decoder: 3 x [nearest-upsample x2, conv1d k7 stride 1, relu], then a
//! 1x1 conv to one channel under a sigmoid.

use crate::dataset::YEAR_HOURS;
use crate::numeric::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, relu_backward, relu_forward,
    sigmoid_backward, sigmoid_forward, upsample_nearest1d_backward, upsample_nearest1d_forward,
    ConvKernel,
};
use crate::tensor::Tensor;
use super::{init_kernel_1d, xavier_limit, ModelError};
use rand_chacha::ChaCha12Rng;

/// Channel widths: encoder 1 -> channels[0] -> channels[1] -> channels[2],
/// mirrored by the decoder; dense bottleneck width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ae1dWidths {
    pub channels: [usize; 3],
    pub bottleneck: usize,
}

impl Default for Ae1dWidths {
    fn default() -> Self {
        Ae1dWidths { channels: [16, 8, 8], bottleneck: 128 }
    }
}

/// Series length at the encoder's deepest stage (three stride-2 halvings).
pub const CODE_LEN: usize = YEAR_HOURS / 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Ae1dNet {
    pub widths: Ae1dWidths,
    pub enc: Vec<ConvKernel>,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
    pub dec: Vec<ConvKernel>,
    pub head: ConvKernel,
}

pub struct Ae1dCache {
    pres_enc: Vec<Tensor>,
    acts_enc: Vec<Tensor>,
    bpre: Tensor,
    b1: Tensor,
    ups: Vec<Tensor>,
    pres_dec: Vec<Tensor>,
    acts_dec: Vec<Tensor>,
    hpre_out: Tensor,
}

impl Ae1dNet {
    pub fn init(widths: &Ae1dWidths, rng: &mut ChaCha12Rng) -> Ae1dNet {
        let [c0, c1, c2] = widths.channels;
        let flat = c2 * CODE_LEN;
        let b = widths.bottleneck;
        Ae1dNet {
            widths: widths.clone(),
            enc: vec![
                init_kernel_1d(c0, 1, 7, 2, 3, rng),
                init_kernel_1d(c1, c0, 7, 2, 3, rng),
                init_kernel_1d(c2, c1, 7, 2, 3, rng),
            ],
            fc1_w: super::init_tensor(&[b, flat], (6.0 / flat as f64).sqrt(), rng),
            fc1_b: Tensor::zeros(&[b]),
            fc2_w: super::init_tensor(&[flat, b], (6.0 / b as f64).sqrt(), rng),
            fc2_b: Tensor::zeros(&[flat]),
            dec: vec![
                init_kernel_1d(c1, c2, 7, 1, 3, rng),
                init_kernel_1d(c0, c1, 7, 1, 3, rng),
                init_kernel_1d(c0, c0, 7, 1, 3, rng),
            ],
            head: init_kernel_1d_limit(1, c0, 1, 1, 0, xavier_limit(c0, 1), rng),
        }
    }

    /// Forward pass on a (1, 8736) hole-zeroed series, caching every
    /// intermediate the backward pass needs.
    pub fn forward_train(&self, input: &Tensor) -> Result<(Tensor, Ae1dCache), ModelError> {
        if input.shape() != [1, YEAR_HOURS] {
            return Err(ModelError::BadInput {
                arch: "ae1d",
                msg: format!("expected (1, {YEAR_HOURS}), got {:?}", input.shape()),
            });
        }
        let mut pres_enc = Vec::with_capacity(3);
        let mut acts_enc = Vec::with_capacity(3);
        let mut cur = input.clone();
        for kernel in &self.enc {
            let pre = conv1d_forward(&cur, kernel)?;
            cur = relu_forward(&pre);
            pres_enc.push(pre);
            acts_enc.push(cur.clone());
        }
        let flat = cur.reshape(&[self.widths.channels[2] * CODE_LEN])?;
        let bpre = dense_forward(&flat, &self.fc1_w, &self.fc1_b)?;
        let b1 = relu_forward(&bpre);
        let b2 = dense_forward(&b1, &self.fc2_w, &self.fc2_b)?;
        let mut cur = b2.reshape(&[self.widths.channels[2], CODE_LEN])?;

        let mut ups = Vec::with_capacity(3);
        let mut pres_dec = Vec::with_capacity(3);
        let mut acts_dec = Vec::with_capacity(3);
        for kernel in &self.dec {
            let up = upsample_nearest1d_forward(&cur)?;
            let pre = conv1d_forward(&up, kernel)?;
            cur = relu_forward(&pre);
            ups.push(up);
            pres_dec.push(pre);
            acts_dec.push(cur.clone());
        }
        let hpre = conv1d_forward(&cur, &self.head)?;
        let out = sigmoid_forward(&hpre);
        let cache = Ae1dCache {
            pres_enc,
            acts_enc,
            bpre,
            b1,
            ups,
            pres_dec,
            acts_dec,
            hpre_out: out.clone(),
        };
        Ok((out, cache))
    }

    /// Gradients for every parameter, in `params()` order.
    pub fn backward(
        &self,
        input: &Tensor,
        cache: &Ae1dCache,
        upstream: &Tensor,
    ) -> Result<Vec<Tensor>, ModelError> {
        let mut g = sigmoid_backward(&cache.hpre_out, upstream);
        let head_g = conv1d_backward(&cache.acts_dec[2], &self.head, &g)?;
        g = head_g.input;

        let mut dec_g = Vec::with_capacity(3);
        for i in (0..3).rev() {
            g = relu_backward(&cache.pres_dec[i], &g);
            let cg = conv1d_backward(&cache.ups[i], &self.dec[i], &g)?;
            g = upsample_nearest1d_backward(&cg.input)?;
            dec_g.push((cg.weights, cg.bias));
        }

        let flat_g = g.reshape(&[self.widths.channels[2] * CODE_LEN])?;
        let fc2_g = dense_backward(&cache.b1, &self.fc2_w, &flat_g)?;
        let b_g = relu_backward(&cache.bpre, &fc2_g.input);
        let enc_flat = cache.acts_enc[2].reshape(&[self.widths.channels[2] * CODE_LEN])?;
        let fc1_g = dense_backward(&enc_flat, &self.fc1_w, &b_g)?;
        g = fc1_g.input.reshape(&[self.widths.channels[2], CODE_LEN])?;

        let mut enc_g = Vec::with_capacity(3);
        for i in (0..3).rev() {
            g = relu_backward(&cache.pres_enc[i], &g);
            let below: &Tensor = if i == 0 { input } else { &cache.acts_enc[i - 1] };
            let cg = conv1d_backward(below, &self.enc[i], &g)?;
            g = cg.input;
            enc_g.push((cg.weights, cg.bias));
        }

        let mut grads = Vec::with_capacity(18);
        for (w, b) in enc_g.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        grads.push(fc1_g.weights);
        grads.push(fc1_g.bias);
        grads.push(fc2_g.weights);
        grads.push(fc2_g.bias);
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
        for k in &self.enc {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.push(&self.fc1_w);
        out.push(&self.fc1_b);
        out.push(&self.fc2_w);
        out.push(&self.fc2_b);
        for k in &self.dec {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(18);
        for k in &mut self.enc {
            out.push(&mut k.weights);
            out.push(&mut k.bias);
        }
        out.push(&mut self.fc1_w);
        out.push(&mut self.fc1_b);
        out.push(&mut self.fc2_w);
        out.push(&mut self.fc2_b);
        for k in &mut self.dec {
            out.push(&mut k.weights);
            out.push(&mut k.bias);
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(18);
        for i in 0..3 {
            out.push(format!("enc{i}.weights"));
            out.push(format!("enc{i}.bias"));
        }
        for fc in ["fc1", "fc2"] {
            out.push(format!("{fc}.weights"));
            out.push(format!("{fc}.bias"));
        }
        for i in 0..3 {
            out.push(format!("dec{i}.weights"));
            out.push(format!("dec{i}.bias"));
        }
        out.push("head.weights".into());
        out.push("head.bias".into());
        out
    }

    /// Parameter shapes in `params()` order, from widths alone.
    pub(crate) fn param_shapes(widths: &Ae1dWidths) -> Vec<Vec<usize>> {
        let [c0, c1, c2] = widths.channels;
        let flat = c2 * CODE_LEN;
        let b = widths.bottleneck;
        vec![
            vec![c0, 1, 7], vec![c0],
            vec![c1, c0, 7], vec![c1],
            vec![c2, c1, 7], vec![c2],
            vec![b, flat], vec![b],
            vec![flat, b], vec![flat],
            vec![c1, c2, 7], vec![c1],
            vec![c0, c1, 7], vec![c0],
            vec![c0, c0, 7], vec![c0],
            vec![1, c0, 1], vec![1],
        ]
    }

    /// Assemble a net from 18 tensors already validated against
    /// `param_shapes`.
    pub(crate) fn from_params(widths: &Ae1dWidths, params: Vec<Tensor>) -> Ae1dNet {
        let mut it = params.into_iter();
        let mut kernel = |stride: usize, padding: usize| {
            let w = it.next().expect("validated count");
            let b = it.next().expect("validated count");
            ConvKernel::new(w, b, stride, padding).expect("validated shapes")
        };
        let enc = vec![kernel(2, 3), kernel(2, 3), kernel(2, 3)];
        let fc1_w = it.next().expect("validated count");
        let fc1_b = it.next().expect("validated count");
        let fc2_w = it.next().expect("validated count");
        let fc2_b = it.next().expect("validated count");
        let mut kernel = |stride: usize, padding: usize| {
            let w = it.next().expect("validated count");
            let b = it.next().expect("validated count");
            ConvKernel::new(w, b, stride, padding).expect("validated shapes")
        };
        let dec = vec![kernel(1, 3), kernel(1, 3), kernel(1, 3)];
        let head = kernel(1, 0);
        Ae1dNet { widths: widths.clone(), enc, fc1_w, fc1_b, fc2_w, fc2_b, dec, head }
    }
}

use super::init_kernel_1d_limit;
