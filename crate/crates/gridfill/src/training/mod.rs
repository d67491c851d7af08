//! Training loop for the neural imputers: Adam over a hole-weighted MSE,
//! fresh synthetic masks every epoch, frozen validation masks, and early
//! stopping on the validation loss.

mod adam;
mod config_file;
mod run;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use config_file::{format_config, parse_config, read_config, write_config};
pub use run::{
    train, validation_loss, EpochRow, StopReason, TrainLog, write_train_log,
};

use crate::dataset::EnergyImage;
use crate::masks::{
    continuous_mask, irregular_mask, random_day_mask, MaskError, MaskGrid, MaskKind,
};
use crate::models::{Architecture, Ae1dWidths, Ae2dWidths, ModelError, NetWidths, PconvWidths};
use crate::numeric::NumericError;
use crate::rng::{derive_seed, rng_for};
use crate::tensor::{Tensor, TensorError};
use rand::Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("config {path}: {msg}")]
    ConfigFormat { path: String, msg: String },
    #[error("{which} set is empty")]
    EmptySet { which: &'static str },
    #[error("{0} has no weights to train")]
    UntrainableArch(Architecture),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("optimizer shape mismatch: {0}")]
    OptimizerShape(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which synthetic masks to sample during training and at what rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPolicy {
    pub kinds: Vec<MaskKind>,
    pub rate_lo: f64,
    pub rate_hi: f64,
}

/// Training hyperparameters. Field names double as the config file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hole_weight: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub mask_kinds: Vec<MaskKind>,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub ae1d_channels: Option<[usize; 3]>,
    pub ae1d_bottleneck: Option<usize>,
    pub ae2d_channels: Option<[usize; 2]>,
    pub ae2d_bottleneck: Option<usize>,
    pub pconv_channels: Option<[usize; 4]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            max_epochs: 50,
            patience: 5,
            hole_weight: 6.0,
            grad_clip: 5.0,
            seed: 0,
            mask_kinds: vec![MaskKind::RandomDays, MaskKind::Continuous, MaskKind::Irregular],
            rate_lo: 0.05,
            rate_hi: 0.5,
            ae1d_channels: None,
            ae1d_bottleneck: None,
            ae2d_channels: None,
            ae2d_bottleneck: None,
            pconv_channels: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::BadConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} must be in [0, 1)"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.patience == 0 || self.patience >= self.max_epochs {
            return bad(format!(
                "patience {} must satisfy 1 <= patience < max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(self.hole_weight.is_finite() && self.hole_weight >= 0.0) {
            return bad(format!("hole_weight {} must be non-negative", self.hole_weight));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return bad(format!("grad_clip {} must be positive", self.grad_clip));
        }
        if self.mask_kinds.is_empty() {
            return bad("mask_kinds must name at least one kind".into());
        }
        if !(0.05..=0.5).contains(&self.rate_lo)
            || !(0.05..=0.5).contains(&self.rate_hi)
            || self.rate_lo > self.rate_hi
        {
            return bad(format!(
                "rates must satisfy 0.05 <= rate_lo <= rate_hi <= 0.5, got {} and {}",
                self.rate_lo, self.rate_hi
            ));
        }
        for widths in [
            self.ae1d_channels.map(|c| c.to_vec()),
            self.ae1d_bottleneck.map(|b| vec![b]),
            self.ae2d_channels.map(|c| c.to_vec()),
            self.ae2d_bottleneck.map(|b| vec![b]),
            self.pconv_channels.map(|c| c.to_vec()),
        ]
        .into_iter()
        .flatten()
        {
            if widths.iter().any(|&w| w == 0) {
                return bad("width overrides must be positive".into());
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> MaskPolicy {
        MaskPolicy {
            kinds: self.mask_kinds.clone(),
            rate_lo: self.rate_lo,
            rate_hi: self.rate_hi,
        }
    }

    /// Widths for a fresh net of this architecture, applying any
    /// overrides on top of the defaults.
    pub fn widths_for(&self, arch: Architecture) -> Option<NetWidths> {
        match arch {
            Architecture::Persistence => None,
            Architecture::Ae1d => {
                let mut w = Ae1dWidths::default();
                if let Some(c) = self.ae1d_channels {
                    w.channels = c;
                }
                if let Some(b) = self.ae1d_bottleneck {
                    w.bottleneck = b;
                }
                Some(NetWidths::Ae1d(w))
            }
            Architecture::Ae2d => {
                let mut w = Ae2dWidths::default();
                if let Some(c) = self.ae2d_channels {
                    w.channels = c;
                }
                if let Some(b) = self.ae2d_bottleneck {
                    w.bottleneck = b;
                }
                Some(NetWidths::Ae2d(w))
            }
            Architecture::Pconv => {
                let mut w = PconvWidths::default();
                if let Some(c) = self.pconv_channels {
                    w.channels = c;
                }
                Some(NetWidths::Pconv(w))
            }
        }
    }
}

/// Deterministic per-(epoch, item) mask draw: the kind comes uniformly
/// from the policy's kinds, the rate uniformly from its range, and the
/// grid seed derives from (seed, epoch, item) so every epoch sees fresh
/// masks that replay exactly.
pub fn sample_training_mask(
    policy: &MaskPolicy,
    seed: u64,
    epoch: usize,
    item: usize,
) -> Result<MaskGrid, TrainError> {
    if policy.kinds.is_empty() {
        return Err(TrainError::BadConfig("mask policy has no kinds".into()));
    }
    let e = epoch.to_string();
    let it = item.to_string();
    let mut rng = rng_for(seed, &["train-mask", &e, &it]);
    let kind = policy.kinds[rng.random_range(0..policy.kinds.len())];
    let rate = rng.random_range(policy.rate_lo..=policy.rate_hi);
    let grid_seed = derive_seed(seed, &["train-mask-grid", &e, &it]);
    let mask = match kind {
        MaskKind::RandomDays => random_day_mask(rate, grid_seed)?,
        MaskKind::Continuous => continuous_mask(rate, grid_seed)?,
        // The irregular generator draws its own coverage target.
        MaskKind::Irregular => irregular_mask(grid_seed),
    };
    Ok(mask)
}

/// Per-cell loss weights: `hole_weight` at hole-and-valid cells, 1 at
/// observed-and-valid cells, 0 wherever the raw data is invalid.
pub fn loss_weights(mask_grid: &Tensor, validity: &Tensor, hole_weight: f64) -> Tensor {
    assert_eq!(mask_grid.len(), validity.len(), "mask and validity must align");
    let mut w = Tensor::zeros(mask_grid.shape());
    for i in 0..w.len() {
        if validity.data()[i] == 0.0 {
            continue;
        }
        w.data_mut()[i] = if mask_grid.data()[i] == 0.0 { hole_weight } else { 1.0 };
    }
    w
}

/// Stable fingerprint of the images a model was fit on, for provenance.
pub fn data_fingerprint(sets: &[&[EnergyImage]]) -> String {
    let mut h = Sha256::new();
    for set in sets {
        h.update((set.len() as u64).to_le_bytes());
        for img in set.iter() {
            for field in [&img.meter_id, &img.site_id] {
                h.update((field.len() as u64).to_le_bytes());
                h.update(field.as_bytes());
            }
            h.update(img.meter_type.as_str().as_bytes());
            h.update(crate::dataset::format_ts(&img.week0_start).as_bytes());
            h.update(img.norm.x_min.to_le_bytes());
            h.update(img.norm.x_max.to_le_bytes());
            for v in img.matrix.data() {
                h.update(v.to_le_bytes());
            }
            for &b in &img.validity {
                h.update([b as u8]);
            }
        }
    }
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
