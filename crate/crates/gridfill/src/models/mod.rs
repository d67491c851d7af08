//! Imputation models over (168, 52) energy images: a weekly-persistence
//! baseline, two convolutional autoencoders, and a partial-convolution
//! U-Net, all behind one bundle type so training and evaluation treat
//! them uniformly.
//!
//! Every model obeys the same composition rule: observed cells pass
//! through to the output bit-identical, holes are filled by the model,
//! and each cell is flagged with where its value came from.

mod ae1d;
mod ae2d;
mod checkpoint;
mod pconv;
mod persistence;

pub use ae1d::{Ae1dCache, Ae1dNet, Ae1dWidths, CODE_LEN};
pub use ae2d::{Ae2dCache, Ae2dNet, Ae2dWidths, CODE_H, CODE_W};
pub use checkpoint::{load_model, parse_model, save_model};
pub use pconv::{PconvCache, PconvNet, PconvWidths};
pub use persistence::persistence_impute;

use crate::dataset::{EnergyImage, WEEK_HOURS, YEAR_HOURS, YEAR_WEEKS};
use crate::masks::MaskGrid;
use crate::numeric::{ConvKernel, NumericError};
use crate::rng::rng_for;
use crate::tensor::{Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::fmt;

/// Side length the energy image is resampled to before the U-Net.
pub const PCONV_SIZE: usize = 192;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{arch}: bad input: {msg}")]
    BadInput { arch: &'static str, msg: String },
    #[error("hour-of-week row {row} has no observed week to persist from")]
    RowAllMissing { row: usize },
    #[error("{arch} bundle has no network weights")]
    NotInitialized { arch: Architecture },
    #[error("{arch} model is untrained; pass allow_untrained to impute anyway")]
    Untrained { arch: Architecture },
    #[error("bundle architecture {bundle} does not match network {net}")]
    ArchMismatch { bundle: Architecture, net: Architecture },
    #[error("forward cache does not belong to this architecture")]
    CacheMismatch,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint {path}: {msg}")]
    Format { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Architecture {
    Persistence,
    Ae1d,
    Ae2d,
    Pconv,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Persistence,
        Architecture::Ae1d,
        Architecture::Ae2d,
        Architecture::Pconv,
    ];

    pub fn parse(s: &str) -> Option<Architecture> {
        match s {
            "persistence" => Some(Architecture::Persistence),
            "ae1d" => Some(Architecture::Ae1d),
            "ae2d" => Some(Architecture::Ae2d),
            "pconv" => Some(Architecture::Pconv),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Persistence => "persistence",
            Architecture::Ae1d => "ae1d",
            Architecture::Ae2d => "ae2d",
            Architecture::Pconv => "pconv",
        }
    }

    /// Whether this architecture has weights to fit.
    pub fn trainable(&self) -> bool {
        !matches!(self, Architecture::Persistence)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Width overrides for the trainable architectures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetWidths {
    Ae1d(Ae1dWidths),
    Ae2d(Ae2dWidths),
    Pconv(PconvWidths),
}

impl NetWidths {
    pub fn default_for(arch: Architecture) -> Option<NetWidths> {
        match arch {
            Architecture::Persistence => None,
            Architecture::Ae1d => Some(NetWidths::Ae1d(Ae1dWidths::default())),
            Architecture::Ae2d => Some(NetWidths::Ae2d(Ae2dWidths::default())),
            Architecture::Pconv => Some(NetWidths::Pconv(PconvWidths::default())),
        }
    }

    pub fn arch(&self) -> Architecture {
        match self {
            NetWidths::Ae1d(_) => Architecture::Ae1d,
            NetWidths::Ae2d(_) => Architecture::Ae2d,
            NetWidths::Pconv(_) => Architecture::Pconv,
        }
    }
}

/// Where a bundle's weights came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_val_loss: Option<f64>,
    pub data_fingerprint: String,
    pub trained: bool,
}

impl Provenance {
    pub fn untrained(seed: u64) -> Provenance {
        Provenance {
            seed,
            epochs_run: 0,
            best_val_loss: None,
            data_fingerprint: String::from("-"),
            trained: false,
        }
    }
}

/// One of the trainable networks, dispatched by enum so callers hold a
/// single concrete type.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Ae1d(Ae1dNet),
    Ae2d(Ae2dNet),
    Pconv(PconvNet),
}

pub enum NetCache {
    Ae1d(ae1d::Ae1dCache),
    Ae2d(ae2d::Ae2dCache),
    Pconv(PconvCache),
}

impl Network {
    pub fn init(widths: &NetWidths, seed: u64) -> Network {
        let arch = widths.arch();
        let mut rng = rng_for(seed, &["model", arch.as_str(), "init"]);
        match widths {
            NetWidths::Ae1d(w) => Network::Ae1d(Ae1dNet::init(w, &mut rng)),
            NetWidths::Ae2d(w) => Network::Ae2d(Ae2dNet::init(w, &mut rng)),
            NetWidths::Pconv(w) => Network::Pconv(PconvNet::init(w, &mut rng)),
        }
    }

    pub fn arch(&self) -> Architecture {
        match self {
            Network::Ae1d(_) => Architecture::Ae1d,
            Network::Ae2d(_) => Architecture::Ae2d,
            Network::Pconv(_) => Architecture::Pconv,
        }
    }

    pub fn widths(&self) -> NetWidths {
        match self {
            Network::Ae1d(n) => NetWidths::Ae1d(n.widths.clone()),
            Network::Ae2d(n) => NetWidths::Ae2d(n.widths.clone()),
            Network::Pconv(n) => NetWidths::Pconv(n.widths.clone()),
        }
    }

    /// Forward pass; `mask` is required by pconv and ignored otherwise.
    pub fn forward(&self, input: &Tensor, mask: Option<&Tensor>) -> Result<Tensor, ModelError> {
        Ok(self.forward_train(input, mask)?.0)
    }

    pub fn forward_train(
        &self,
        input: &Tensor,
        mask: Option<&Tensor>,
    ) -> Result<(Tensor, NetCache), ModelError> {
        match self {
            Network::Ae1d(n) => {
                let (out, c) = n.forward_train(input)?;
                Ok((out, NetCache::Ae1d(c)))
            }
            Network::Ae2d(n) => {
                let (out, c) = n.forward_train(input)?;
                Ok((out, NetCache::Ae2d(c)))
            }
            Network::Pconv(n) => {
                let mask = mask.ok_or(ModelError::BadInput {
                    arch: "pconv",
                    msg: "mask required".into(),
                })?;
                let (out, c) = n.forward_train(input, mask)?;
                Ok((out, NetCache::Pconv(c)))
            }
        }
    }

    /// Parameter gradients in `params()` order for an upstream gradient
    /// of the loss with respect to the forward output.
    pub fn backward(
        &self,
        input: &Tensor,
        mask: Option<&Tensor>,
        cache: &NetCache,
        upstream: &Tensor,
    ) -> Result<Vec<Tensor>, ModelError> {
        match (self, cache) {
            (Network::Ae1d(n), NetCache::Ae1d(c)) => n.backward(input, c, upstream),
            (Network::Ae2d(n), NetCache::Ae2d(c)) => n.backward(input, c, upstream),
            (Network::Pconv(n), NetCache::Pconv(c)) => {
                let mask = mask.ok_or(ModelError::BadInput {
                    arch: "pconv",
                    msg: "mask required".into(),
                })?;
                n.backward(input, mask, c, upstream)
            }
            _ => Err(ModelError::CacheMismatch),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Network::Ae1d(n) => n.params(),
            Network::Ae2d(n) => n.params(),
            Network::Pconv(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Network::Ae1d(n) => n.params_mut(),
            Network::Ae2d(n) => n.params_mut(),
            Network::Pconv(n) => n.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Network::Ae1d(n) => n.param_names(),
            Network::Ae2d(n) => n.param_names(),
            Network::Pconv(n) => n.param_names(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Parameter shapes in `params()` order for a net of these widths,
    /// computed without allocating the net.
    pub(crate) fn param_shapes(widths: &NetWidths) -> Vec<Vec<usize>> {
        match widths {
            NetWidths::Ae1d(w) => Ae1dNet::param_shapes(w),
            NetWidths::Ae2d(w) => Ae2dNet::param_shapes(w),
            NetWidths::Pconv(w) => PconvNet::param_shapes(w),
        }
    }

    /// Assemble a net from tensors already validated against
    /// `param_shapes`.
    pub(crate) fn from_params(widths: &NetWidths, params: Vec<Tensor>) -> Network {
        match widths {
            NetWidths::Ae1d(w) => Network::Ae1d(Ae1dNet::from_params(w, params)),
            NetWidths::Ae2d(w) => Network::Ae2d(Ae2dNet::from_params(w, params)),
            NetWidths::Pconv(w) => Network::Pconv(PconvNet::from_params(w, params)),
        }
    }
}

/// A model plus where it came from: the unit the CLI saves, loads, and
/// hands to training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub arch: Architecture,
    pub net: Option<Network>,
    pub provenance: Provenance,
}

impl ModelBundle {
    pub fn persistence() -> ModelBundle {
        ModelBundle {
            arch: Architecture::Persistence,
            net: None,
            provenance: Provenance {
                trained: true,
                ..Provenance::untrained(0)
            },
        }
    }

    /// Fresh untrained bundle with default widths; persistence has no
    /// weights and comes back ready to use.
    pub fn init(arch: Architecture, seed: u64) -> ModelBundle {
        match NetWidths::default_for(arch) {
            None => ModelBundle::persistence(),
            Some(widths) => ModelBundle::init_with(&widths, seed),
        }
    }

    pub fn init_with(widths: &NetWidths, seed: u64) -> ModelBundle {
        ModelBundle {
            arch: widths.arch(),
            net: Some(Network::init(widths, seed)),
            provenance: Provenance::untrained(seed),
        }
    }

    pub fn network(&self) -> Result<&Network, ModelError> {
        self.net
            .as_ref()
            .ok_or(ModelError::NotInitialized { arch: self.arch })
    }
}

/// Which path a stored output cell came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSource {
    Observed,
    Imputed,
}

/// A completed grid: observed cells verbatim from the input, holes
/// filled, each cell flagged with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub matrix: Tensor,
    pub source: Vec<CellSource>,
}

impl Imputation {
    pub fn imputed_count(&self) -> usize {
        self.source.iter().filter(|s| **s == CellSource::Imputed).count()
    }
}

/// Validate that the image and mask agree on the (168, 52) grid.
pub(crate) fn check_grids(
    image: &EnergyImage,
    mask: &MaskGrid,
) -> Result<(usize, usize), ModelError> {
    let s = image.matrix.shape();
    if s != [WEEK_HOURS, YEAR_WEEKS] || mask.grid.shape() != s {
        return Err(ModelError::BadInput {
            arch: "impute",
            msg: format!(
                "image {:?} and mask {:?} must both be ({WEEK_HOURS}, {YEAR_WEEKS})",
                s,
                mask.grid.shape()
            ),
        });
    }
    Ok((s[0], s[1]))
}

/// Input hygiene shared by training and inference: the grid a network
/// sees carries the stored value only where the mask observes the cell
/// AND the cell is raw-valid; everything else is zero. Returns the
/// zeroed grid and that combined mask, both (168, 52).
pub fn model_input(image: &EnergyImage, mask: &MaskGrid) -> (Tensor, Tensor) {
    let mut zeroed = Tensor::zeros(&[WEEK_HOURS, YEAR_WEEKS]);
    let mut combined = Tensor::zeros(&[WEEK_HOURS, YEAR_WEEKS]);
    for i in 0..zeroed.len() {
        if mask.grid.data()[i] == 1.0 && image.validity[i] {
            zeroed.data_mut()[i] = image.matrix.data()[i];
            combined.data_mut()[i] = 1.0;
        }
    }
    (zeroed, combined)
}

/// (168, 52) grid to the (1, 8736) hour-ordered series.
pub fn grid_to_series(grid: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(&[1, YEAR_HOURS]);
    for t in 0..YEAR_HOURS {
        out.data_mut()[t] = grid.data()[(t % WEEK_HOURS) * YEAR_WEEKS + t / WEEK_HOURS];
    }
    out
}

/// Inverse of `grid_to_series`.
pub fn series_to_grid(series: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(&[WEEK_HOURS, YEAR_WEEKS]);
    for t in 0..YEAR_HOURS {
        out.data_mut()[(t % WEEK_HOURS) * YEAR_WEEKS + t / WEEK_HOURS] = series.data()[t];
    }
    out
}

/// Run one network over a hole-zeroed grid and return the filled grid in
/// (168, 52) layout. Resampling to and from the 192x192 U-Net canvas
/// happens here.
pub fn net_fill(net: &Network, zeroed: &Tensor, combined: &Tensor) -> Result<Tensor, ModelError> {
    match net {
        Network::Ae1d(n) => {
            let series = grid_to_series(zeroed);
            let (out, _) = n.forward_train(&series)?;
            Ok(series_to_grid(&out))
        }
        Network::Ae2d(n) => {
            let input = zeroed.reshape(&[1, WEEK_HOURS, YEAR_WEEKS])?;
            let (out, _) = n.forward_train(&input)?;
            Ok(out.reshape(&[WEEK_HOURS, YEAR_WEEKS])?)
        }
        Network::Pconv(n) => {
            let (feat, m) = pconv_canvas(zeroed, combined);
            let (out, _) = n.forward_train(&feat, &m)?;
            let square = out.reshape(&[PCONV_SIZE, PCONV_SIZE])?;
            Ok(crate::dataset::sample_back(&square, WEEK_HOURS, YEAR_WEEKS))
        }
    }
}

/// Resample a hole-zeroed grid and its mask onto the square U-Net canvas:
/// bilinear for values, nearest for the binary mask, then re-zero the
/// values wherever the resampled mask is a hole so the pair stays
/// consistent.
pub fn pconv_canvas(zeroed: &Tensor, combined: &Tensor) -> (Tensor, Tensor) {
    let mut feat = crate::dataset::resize_bilinear(zeroed, PCONV_SIZE, PCONV_SIZE);
    let m = crate::dataset::resize_nearest(combined, PCONV_SIZE, PCONV_SIZE);
    for i in 0..feat.len() {
        if m.data()[i] == 0.0 {
            feat.data_mut()[i] = 0.0;
        }
    }
    let feat = feat.reshape(&[1, PCONV_SIZE, PCONV_SIZE]).expect("canvas");
    let m = m.reshape(&[1, PCONV_SIZE, PCONV_SIZE]).expect("canvas");
    (feat, m)
}

/// Fill the mask's holes with the bundle's model. Observed cells pass
/// through bit-identical; only holes take model values.
pub fn impute(
    bundle: &ModelBundle,
    image: &EnergyImage,
    mask: &MaskGrid,
    allow_untrained: bool,
) -> Result<Imputation, ModelError> {
    check_grids(image, mask)?;
    if bundle.arch == Architecture::Persistence {
        return persistence_impute(image, mask);
    }
    let net = bundle.network()?;
    if net.arch() != bundle.arch {
        return Err(ModelError::ArchMismatch { bundle: bundle.arch, net: net.arch() });
    }
    if !bundle.provenance.trained && !allow_untrained {
        return Err(ModelError::Untrained { arch: bundle.arch });
    }
    let (zeroed, combined) = model_input(image, mask);
    let filled = net_fill(net, &zeroed, &combined)?;
    Ok(compose(image, &filled, mask))
}

fn compose(image: &EnergyImage, filled: &Tensor, mask: &MaskGrid) -> Imputation {
    let mut matrix = image.matrix.clone();
    let mut source = vec![CellSource::Observed; matrix.len()];
    for i in 0..matrix.len() {
        if mask.grid.data()[i] == 0.0 {
            matrix.data_mut()[i] = filled.data()[i];
            source[i] = CellSource::Imputed;
        }
    }
    Imputation { matrix, source }
}

fn uniform(limit: f64, rng: &mut ChaCha12Rng) -> f64 {
    rng.random_range(-limit..limit)
}

pub(crate) fn init_tensor(shape: &[usize], limit: f64, rng: &mut ChaCha12Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = uniform(limit, rng));
    t
}

pub(crate) fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub(crate) fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn init_kernel_1d(
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
    rng: &mut ChaCha12Rng,
) -> ConvKernel {
    init_kernel_1d_limit(out_c, in_c, k, stride, padding, he_limit(in_c * k), rng)
}

pub(crate) fn init_kernel_1d_limit(
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
    limit: f64,
    rng: &mut ChaCha12Rng,
) -> ConvKernel {
    let weights = init_tensor(&[out_c, in_c, k], limit, rng);
    ConvKernel::new(weights, Tensor::zeros(&[out_c]), stride, padding).expect("kernel shape")
}

pub(crate) fn init_kernel_2d(
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
    rng: &mut ChaCha12Rng,
) -> ConvKernel {
    init_kernel_2d_limit(out_c, in_c, k, stride, padding, he_limit(in_c * k * k), rng)
}

pub(crate) fn init_kernel_2d_limit(
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
    limit: f64,
    rng: &mut ChaCha12Rng,
) -> ConvKernel {
    let weights = init_tensor(&[out_c, in_c, k, k], limit, rng);
    ConvKernel::new(weights, Tensor::zeros(&[out_c]), stride, padding).expect("kernel shape")
}

/// Stack two (C, H, W) tensors along the channel axis.
pub(crate) fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (sa, sb) = (a.shape(), b.shape());
    assert_eq!(sa[1..], sb[1..], "spatial dims must match to concat");
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[sa[0] + sb[0], sa[1], sa[2]], data).expect("concat shape")
}

/// Split a (C, H, W) tensor into its first `c_first` channels and the rest.
pub(crate) fn split_channels(t: &Tensor, c_first: usize) -> (Tensor, Tensor) {
    let s = t.shape();
    let plane = s[1] * s[2];
    let cut = c_first * plane;
    let first = Tensor::from_vec(&[c_first, s[1], s[2]], t.data()[..cut].to_vec());
    let rest = Tensor::from_vec(&[s[0] - c_first, s[1], s[2]], t.data()[cut..].to_vec());
    (first.expect("split shape"), rest.expect("split shape"))
}

/// Union of two binary masks by elementwise max.
pub(crate) fn mask_union_max(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "mask shapes must match");
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        if v > *o {
            *o = v;
        }
    }
    out
}

pub(crate) fn add_into(a: &mut Tensor, b: &Tensor) {
    assert_eq!(a.shape(), b.shape(), "gradient shapes must match");
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{continuous_mask, random_day_mask};
    use crate::rng::rng_for;
    use crate::testutil::test_image;
    use rand::Rng;

    fn tiny_bundles() -> Vec<ModelBundle> {
        vec![
            ModelBundle::persistence(),
            ModelBundle::init_with(
                &NetWidths::Ae1d(Ae1dWidths { channels: [2, 2, 2], bottleneck: 4 }),
                11,
            ),
            ModelBundle::init_with(
                &NetWidths::Ae2d(Ae2dWidths { channels: [2, 2], bottleneck: 4 }),
                12,
            ),
            ModelBundle::init_with(&NetWidths::Pconv(PconvWidths { channels: [2, 3, 2, 2] }), 13),
        ]
    }

    #[test]
    fn observed_cells_pass_through_bit_identical() {
        let image = test_image(20, "m20");
        let mask = random_day_mask(0.3, 21).unwrap();
        for bundle in tiny_bundles() {
            let out = impute(&bundle, &image, &mask, true).unwrap();
            for i in 0..out.matrix.len() {
                if mask.grid.data()[i] == 1.0 {
                    assert_eq!(
                        out.matrix.data()[i].to_bits(),
                        image.matrix.data()[i].to_bits(),
                        "{}: observed cell {i} changed",
                        bundle.arch
                    );
                    assert_eq!(out.source[i], CellSource::Observed);
                } else {
                    assert_eq!(out.source[i], CellSource::Imputed, "{}", bundle.arch);
                }
            }
            assert_eq!(out.imputed_count(), mask.hole_count());
        }
    }

    #[test]
    fn complete_mask_returns_input_for_every_model() {
        let image = test_image(22, "m22");
        let mask = random_day_mask(0.0, 23).unwrap();
        assert_eq!(mask.hole_count(), 0);
        for bundle in tiny_bundles() {
            let out = impute(&bundle, &image, &mask, true).unwrap();
            assert_eq!(out.matrix.data(), image.matrix.data(), "{}", bundle.arch);
        }
    }

    #[test]
    fn outputs_stay_in_unit_interval_at_holes() {
        let image = test_image(24, "m24");
        let mask = continuous_mask(0.4, 25).unwrap();
        for bundle in tiny_bundles() {
            let out = impute(&bundle, &image, &mask, true).unwrap();
            for i in 0..out.matrix.len() {
                let v = out.matrix.data()[i];
                assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{} cell {i}", bundle.arch);
            }
        }
    }

    #[test]
    fn untrained_network_needs_the_escape_hatch() {
        let image = test_image(26, "m26");
        let mask = random_day_mask(0.2, 27).unwrap();
        let bundle = ModelBundle::init_with(
            &NetWidths::Ae1d(Ae1dWidths { channels: [2, 2, 2], bottleneck: 4 }),
            3,
        );
        let err = impute(&bundle, &image, &mask, false).unwrap_err();
        assert!(matches!(err, ModelError::Untrained { arch: Architecture::Ae1d }));
        assert!(impute(&bundle, &image, &mask, true).is_ok());
    }

    #[test]
    fn raw_invalid_cells_are_zeroed_before_the_network() {
        let mut image = test_image(28, "m28");
        image.validity[500] = false;
        image.matrix.data_mut()[500] = 0.9;
        let mask = random_day_mask(0.2, 29).unwrap();
        assert_eq!(mask.grid.data()[500], 1.0, "fixture expects cell 500 observed");
        let (zeroed, combined) = model_input(&image, &mask);
        assert_eq!(zeroed.data()[500], 0.0);
        assert_eq!(combined.data()[500], 0.0);
    }

    #[test]
    fn series_round_trip_is_identity() {
        let image = test_image(30, "m30");
        let series = grid_to_series(&image.matrix);
        assert_eq!(series.shape(), &[1, YEAR_HOURS]);
        let back = series_to_grid(&series);
        assert_eq!(back.data(), image.matrix.data());
        // Hour 0 is (row 0, week 0); hour 168 wraps to (row 0, week 1).
        assert_eq!(series.data()[0], image.matrix.data()[0]);
        assert_eq!(series.data()[168], image.matrix.data()[1]);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let mut rng = rng_for(31, &["models", "concat"]);
        let a = init_tensor(&[2, 4, 3], 1.0, &mut rng);
        let b = init_tensor(&[3, 4, 3], 1.0, &mut rng);
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.shape(), &[5, 4, 3]);
        let (a2, b2) = split_channels(&cat, 2);
        assert_eq!(a2.data(), a.data());
        assert_eq!(b2.data(), b.data());
    }

    #[test]
    fn mask_union_is_elementwise_max() {
        let a = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[1, 2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let u = mask_union_max(&a, &b);
        assert_eq!(u.data(), &[0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn canvas_mask_is_binary_and_values_rezeroed() {
        let image = test_image(32, "m32");
        let mask = continuous_mask(0.3, 33).unwrap();
        let (zeroed, combined) = model_input(&image, &mask);
        let (feat, m) = pconv_canvas(&zeroed, &combined);
        assert_eq!(feat.shape(), &[1, PCONV_SIZE, PCONV_SIZE]);
        for i in 0..m.len() {
            let mv = m.data()[i];
            assert!(mv == 0.0 || mv == 1.0);
            if mv == 0.0 {
                assert_eq!(feat.data()[i], 0.0);
            }
        }
    }

    // Finite-difference gradient oracle for the full networks at tiny
    // widths. The loss is a fixed random projection of the output, so its
    // parameter gradient is exactly `backward` with that projection as
    // the upstream signal.
    //
    // Zero-initialized biases put every all-zero conv window exactly on
    // the relu kink, where central differences straddle the two slopes
    // and disagree with the one-sided analytic gradient. Jittering all
    // parameters first moves those pre-activations off zero so the loss
    // is smooth at the evaluation point.
    fn fd_worst_rel_err(net: &mut Network, input: &Tensor, mask: Option<&Tensor>) -> f64 {
        let mut rng = rng_for(77, &["models", "fd"]);
        for t in net.params_mut() {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        let (out, cache) = net.forward_train(input, mask).unwrap();
        let mut proj = Tensor::zeros(out.shape());
        proj.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        let analytic = net.backward(input, mask, &cache, &proj).unwrap();

        let loss = |net: &Network| -> f64 {
            let y = net.forward(input, mask).unwrap();
            y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let n_tensors = analytic.len();
        for t_idx in 0..n_tensors {
            let len = analytic[t_idx].len();
            for _ in 0..2 {
                let coord = rng.random_range(0..len);
                let orig = net.params()[t_idx].data()[coord];
                net.params_mut()[t_idx].data_mut()[coord] = orig + h;
                let up = loss(net);
                net.params_mut()[t_idx].data_mut()[coord] = orig - h;
                let down = loss(net);
                net.params_mut()[t_idx].data_mut()[coord] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = analytic[t_idx].data()[coord];
                let denom = fd.abs().max(an.abs());
                if denom > 1e-7 {
                    let rel = (fd - an).abs() / denom;
                    if rel > 1e-4 {
                        eprintln!(
                            "tensor {t_idx} ({}) coord {coord}: fd {fd} analytic {an}",
                            net.param_names()[t_idx]
                        );
                    }
                    worst = worst.max(rel);
                }
            }
        }
        worst
    }

    #[test]
    fn ae1d_gradients_match_finite_differences() {
        let image = test_image(40, "fd1");
        let mask = random_day_mask(0.3, 41).unwrap();
        let (zeroed, _) = model_input(&image, &mask);
        let input = grid_to_series(&zeroed);
        let mut net = Network::init(
            &NetWidths::Ae1d(Ae1dWidths { channels: [2, 2, 2], bottleneck: 4 }),
            42,
        );
        let worst = fd_worst_rel_err(&mut net, &input, None);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn ae2d_gradients_match_finite_differences() {
        let image = test_image(43, "fd2");
        let mask = random_day_mask(0.3, 44).unwrap();
        let (zeroed, _) = model_input(&image, &mask);
        let input = zeroed.reshape(&[1, WEEK_HOURS, YEAR_WEEKS]).unwrap();
        let mut net = Network::init(
            &NetWidths::Ae2d(Ae2dWidths { channels: [2, 2], bottleneck: 4 }),
            45,
        );
        let worst = fd_worst_rel_err(&mut net, &input, None);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn pconv_gradients_match_finite_differences() {
        let mut rng = rng_for(46, &["models", "fd-pconv"]);
        let (h, w) = (32, 32);
        let mut input = Tensor::zeros(&[1, h, w]);
        let mut mask = Tensor::zeros(&[1, h, w]);
        for i in 0..h * w {
            let observed = rng.random::<f64>() > 0.3;
            mask.data_mut()[i] = if observed { 1.0 } else { 0.0 };
            input.data_mut()[i] = if observed { rng.random() } else { 0.0 };
        }
        let mut net = Network::init(&NetWidths::Pconv(PconvWidths { channels: [2, 3, 2, 2] }), 47);
        let worst = fd_worst_rel_err(&mut net, &input, Some(&mask));
        assert!(worst < 1e-4, "worst rel err {worst}");
    }
}
