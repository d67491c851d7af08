//! 2D convolutional autoencoder over the (168, 52) energy image.
//!
//! Encoder: 2 x [conv2d 3x3 stride 1 pad 1, relu, maxpool 2x2], spatial
//! 168x52 -> 84x26 -> 42x13. Bottleneck: dense to `bottleneck` units,
//! relu, dense back. Decoder: 2 x [nearest-upsample x2, conv2d 3x3, relu],
//! then a 1x1 conv to one channel under a sigmoid.

use crate::dataset::{WEEK_HOURS, YEAR_WEEKS};
use crate::numeric::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu_backward, relu_forward, sigmoid_backward, sigmoid_forward,
    upsample_nearest2d_backward, upsample_nearest2d_forward, ConvKernel,
};
use crate::tensor::Tensor;
use super::{init_kernel_2d, init_kernel_2d_limit, xavier_limit, ModelError};
use rand_chacha::ChaCha12Rng;

/// Channel widths: encoder 1 -> channels[0] -> channels[1], mirrored by
/// the decoder; dense bottleneck width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ae2dWidths {
    pub channels: [usize; 2],
    pub bottleneck: usize,
}

impl Default for Ae2dWidths {
    fn default() -> Self {
        Ae2dWidths { channels: [16, 8], bottleneck: 256 }
    }
}

/// Grid height and width at the encoder's deepest stage (two 2x2 pools).
pub const CODE_H: usize = WEEK_HOURS / 4;
pub const CODE_W: usize = YEAR_WEEKS / 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Ae2dNet {
    pub widths: Ae2dWidths,
    pub enc: Vec<ConvKernel>,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
    pub dec: Vec<ConvKernel>,
    pub head: ConvKernel,
}

pub struct Ae2dCache {
    pres_enc: Vec<Tensor>,
    acts_enc: Vec<Tensor>,
    pools: Vec<Tensor>,
    argmaxes: Vec<Vec<usize>>,
    bpre: Tensor,
    b1: Tensor,
    ups: Vec<Tensor>,
    pres_dec: Vec<Tensor>,
    acts_dec: Vec<Tensor>,
    hpre_out: Tensor,
}

impl Ae2dNet {
    pub fn init(widths: &Ae2dWidths, rng: &mut ChaCha12Rng) -> Ae2dNet {
        let [c0, c1] = widths.channels;
        let flat = c1 * CODE_H * CODE_W;
        let b = widths.bottleneck;
        Ae2dNet {
            widths: widths.clone(),
            enc: vec![
                init_kernel_2d(c0, 1, 3, 1, 1, rng),
                init_kernel_2d(c1, c0, 3, 1, 1, rng),
            ],
            fc1_w: super::init_tensor(&[b, flat], (6.0 / flat as f64).sqrt(), rng),
            fc1_b: Tensor::zeros(&[b]),
            fc2_w: super::init_tensor(&[flat, b], (6.0 / b as f64).sqrt(), rng),
            fc2_b: Tensor::zeros(&[flat]),
            dec: vec![
                init_kernel_2d(c0, c1, 3, 1, 1, rng),
                init_kernel_2d(c0, c0, 3, 1, 1, rng),
            ],
            head: init_kernel_2d_limit(1, c0, 1, 1, 0, xavier_limit(c0, 1), rng),
        }
    }

    /// Forward pass on a (1, 168, 52) hole-zeroed grid.
    pub fn forward_train(&self, input: &Tensor) -> Result<(Tensor, Ae2dCache), ModelError> {
        if input.shape() != [1, WEEK_HOURS, YEAR_WEEKS] {
            return Err(ModelError::BadInput {
                arch: "ae2d",
                msg: format!(
                    "expected (1, {WEEK_HOURS}, {YEAR_WEEKS}), got {:?}",
                    input.shape()
                ),
            });
        }
        let mut pres_enc = Vec::with_capacity(2);
        let mut acts_enc = Vec::with_capacity(2);
        let mut pools = Vec::with_capacity(2);
        let mut argmaxes = Vec::with_capacity(2);
        let mut cur = input.clone();
        for kernel in &self.enc {
            let pre = conv2d_forward(&cur, kernel)?;
            let act = relu_forward(&pre);
            let pooled = maxpool2d_forward(&act)?;
            cur = pooled.output;
            pres_enc.push(pre);
            acts_enc.push(act);
            pools.push(cur.clone());
            argmaxes.push(pooled.argmax);
        }
        let c1 = self.widths.channels[1];
        let flat = cur.reshape(&[c1 * CODE_H * CODE_W])?;
        let bpre = dense_forward(&flat, &self.fc1_w, &self.fc1_b)?;
        let b1 = relu_forward(&bpre);
        let b2 = dense_forward(&b1, &self.fc2_w, &self.fc2_b)?;
        let mut cur = b2.reshape(&[c1, CODE_H, CODE_W])?;

        let mut ups = Vec::with_capacity(2);
        let mut pres_dec = Vec::with_capacity(2);
        let mut acts_dec = Vec::with_capacity(2);
        for kernel in &self.dec {
            let up = upsample_nearest2d_forward(&cur)?;
            let pre = conv2d_forward(&up, kernel)?;
            cur = relu_forward(&pre);
            ups.push(up);
            pres_dec.push(pre);
            acts_dec.push(cur.clone());
        }
        let hpre = conv2d_forward(&cur, &self.head)?;
        let out = sigmoid_forward(&hpre);
        let cache = Ae2dCache {
            pres_enc,
            acts_enc,
            pools,
            argmaxes,
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
        cache: &Ae2dCache,
        upstream: &Tensor,
    ) -> Result<Vec<Tensor>, ModelError> {
        let mut g = sigmoid_backward(&cache.hpre_out, upstream);
        let head_g = conv2d_backward(&cache.acts_dec[1], &self.head, &g)?;
        g = head_g.input;

        let mut dec_g = Vec::with_capacity(2);
        for i in (0..2).rev() {
            g = relu_backward(&cache.pres_dec[i], &g);
            let cg = conv2d_backward(&cache.ups[i], &self.dec[i], &g)?;
            g = upsample_nearest2d_backward(&cg.input)?;
            dec_g.push((cg.weights, cg.bias));
        }

        let c1 = self.widths.channels[1];
        let flat_g = g.reshape(&[c1 * CODE_H * CODE_W])?;
        let fc2_g = dense_backward(&cache.b1, &self.fc2_w, &flat_g)?;
        let b_g = relu_backward(&cache.bpre, &fc2_g.input);
        let pool_flat = cache.pools[1].reshape(&[c1 * CODE_H * CODE_W])?;
        let fc1_g = dense_backward(&pool_flat, &self.fc1_w, &b_g)?;
        g = fc1_g.input.reshape(&[c1, CODE_H, CODE_W])?;

        let mut enc_g = Vec::with_capacity(2);
        for i in (0..2).rev() {
            g = maxpool2d_backward(cache.acts_enc[i].shape(), &cache.argmaxes[i], &g)?;
            g = relu_backward(&cache.pres_enc[i], &g);
            let below: &Tensor = if i == 0 { input } else { &cache.pools[i - 1] };
            let cg = conv2d_backward(below, &self.enc[i], &g)?;
            g = cg.input;
            enc_g.push((cg.weights, cg.bias));
        }

        let mut grads = Vec::with_capacity(14);
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
        let mut out = Vec::with_capacity(14);
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
        let mut out = Vec::with_capacity(14);
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
        let mut out = Vec::with_capacity(14);
        for i in 0..2 {
            out.push(format!("enc{i}.weights"));
            out.push(format!("enc{i}.bias"));
        }
        for fc in ["fc1", "fc2"] {
            out.push(format!("{fc}.weights"));
            out.push(format!("{fc}.bias"));
        }
        for i in 0..2 {
            out.push(format!("dec{i}.weights"));
            out.push(format!("dec{i}.bias"));
        }
        out.push("head.weights".into());
        out.push("head.bias".into());
        out
    }

    /// Parameter shapes in `params()` order, from widths alone.
    pub(crate) fn param_shapes(widths: &Ae2dWidths) -> Vec<Vec<usize>> {
        let [c0, c1] = widths.channels;
        let flat = c1 * CODE_H * CODE_W;
        let b = widths.bottleneck;
        vec![
            vec![c0, 1, 3, 3], vec![c0],
            vec![c1, c0, 3, 3], vec![c1],
            vec![b, flat], vec![b],
            vec![flat, b], vec![flat],
            vec![c0, c1, 3, 3], vec![c0],
            vec![c0, c0, 3, 3], vec![c0],
            vec![1, c0, 1, 1], vec![1],
        ]
    }

    /// Assemble a net from 14 tensors already validated against
    /// `param_shapes`.
    pub(crate) fn from_params(widths: &Ae2dWidths, params: Vec<Tensor>) -> Ae2dNet {
        let mut it = params.into_iter();
        let mut kernel = |stride: usize, padding: usize| {
            let w = it.next().expect("validated count");
            let b = it.next().expect("validated count");
            ConvKernel::new(w, b, stride, padding).expect("validated shapes")
        };
        let enc = vec![kernel(1, 1), kernel(1, 1)];
        let fc1_w = it.next().expect("validated count");
        let fc1_b = it.next().expect("validated count");
        let fc2_w = it.next().expect("validated count");
        let fc2_b = it.next().expect("validated count");
        let mut kernel = |stride: usize, padding: usize| {
            let w = it.next().expect("validated count");
            let b = it.next().expect("validated count");
            ConvKernel::new(w, b, stride, padding).expect("validated shapes")
        };
        let dec = vec![kernel(1, 1), kernel(1, 1)];
        let head = kernel(1, 0);
        Ae2dNet { widths: widths.clone(), enc, fc1_w, fc1_b, fc2_w, fc2_b, dec, head }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn zero_input_gives_finite_unit_range_output() {
        let widths = Ae2dWidths { channels: [2, 2], bottleneck: 4 };
        let net = Ae2dNet::init(&widths, &mut rng_for(1, &["ae2d-test"]));
        let (out, _) = net
            .forward_train(&Tensor::zeros(&[1, WEEK_HOURS, YEAR_WEEKS]))
            .unwrap();
        assert_eq!(out.shape(), &[1, WEEK_HOURS, YEAR_WEEKS]);
        assert!(out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn spatial_dims_shrink_as_planned() {
        assert_eq!(CODE_H, 42);
        assert_eq!(CODE_W, 13);
    }
}
