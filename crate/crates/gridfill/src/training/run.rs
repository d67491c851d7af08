use super::{
    adam_step, clip_grad_norm, data_fingerprint, loss_weights, sample_training_mask, AdamState,
    TrainConfig, TrainError,
};
use crate::dataset::{resize_bilinear, resize_nearest, EnergyImage, WEEK_HOURS, YEAR_WEEKS};
use crate::masks::MaskGrid;
use crate::models::{
    grid_to_series, model_input, pconv_canvas, Architecture, ModelBundle, Network, Provenance,
    PCONV_SIZE,
};
use crate::numeric::weighted_mse_loss;
use crate::parallel::par_map;
use crate::rng::rng_for;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use std::path::Path;
use std::time::Instant;

/// Why a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map(|r| r.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.seconds
            ));
        }
        out
    }
}

pub fn write_train_log(log: &TrainLog, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, log.to_csv())?;
    Ok(())
}

/// Tracks the running best validation loss and how many consecutive
/// epochs have failed to improve on it. Improvement is strict.
struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    streak: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> EarlyStopper {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, streak: 0 }
    }

    /// Record one epoch's validation loss; true means stop now.
    fn observe(&mut self, epoch: usize, val: f64) -> bool {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.streak = 0;
        } else {
            self.streak += 1;
        }
        self.streak >= self.patience
    }

    fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == epoch
    }
}

/// One sample in network-native form: input (and mask for the U-Net),
/// the reconstruction target, and per-cell loss weights, all shaped like
/// the network's output.
pub(crate) struct PreparedItem {
    pub input: Tensor,
    pub mask: Option<Tensor>,
    pub target: Tensor,
    pub weights: Tensor,
}

/// Build the network-native tensors for one (image, mask) pair. The 1D
/// and 2D autoencoders train in grid space; the U-Net trains on its
/// square canvas, with the target resampled the same way as the input
/// and the weights resampled nearest so the hole/observed/invalid
/// classes stay crisp.
pub(crate) fn prepare_item(
    arch: Architecture,
    image: &EnergyImage,
    mask: &MaskGrid,
    hole_weight: f64,
) -> Result<PreparedItem, TrainError> {
    let (zeroed, combined) = model_input(image, mask);
    let validity = image.validity_grid().reshape(&[WEEK_HOURS, YEAR_WEEKS])?;
    let native_weights = loss_weights(&mask.grid, &validity, hole_weight);
    match arch {
        Architecture::Persistence => Err(TrainError::UntrainableArch(arch)),
        Architecture::Ae1d => Ok(PreparedItem {
            input: grid_to_series(&zeroed),
            mask: None,
            target: grid_to_series(&image.matrix),
            weights: grid_to_series(&native_weights),
        }),
        Architecture::Ae2d => Ok(PreparedItem {
            input: zeroed.reshape(&[1, WEEK_HOURS, YEAR_WEEKS])?,
            mask: None,
            target: image.matrix.reshape(&[1, WEEK_HOURS, YEAR_WEEKS])?,
            weights: native_weights.reshape(&[1, WEEK_HOURS, YEAR_WEEKS])?,
        }),
        Architecture::Pconv => {
            let (input, canvas_mask) = pconv_canvas(&zeroed, &combined);
            // Targets must not smear raw-invalid garbage into their
            // neighbors, so invalid cells are zeroed before the bilinear
            // resample; the weights zero those regions out of the loss.
            let mut clean = image.matrix.clone();
            for i in 0..clean.len() {
                if validity.data()[i] == 0.0 {
                    clean.data_mut()[i] = 0.0;
                }
            }
            let target = resize_bilinear(&clean, PCONV_SIZE, PCONV_SIZE)
                .reshape(&[1, PCONV_SIZE, PCONV_SIZE])?;
            let mask192 = resize_nearest(&mask.grid, PCONV_SIZE, PCONV_SIZE);
            let valid192 = resize_nearest(&validity, PCONV_SIZE, PCONV_SIZE);
            let weights = loss_weights(&mask192, &valid192, hole_weight)
                .reshape(&[1, PCONV_SIZE, PCONV_SIZE])?;
            Ok(PreparedItem { input, mask: Some(canvas_mask), target, weights })
        }
    }
}

fn item_loss(net: &Network, item: &PreparedItem) -> Result<f64, TrainError> {
    let out = net.forward(&item.input, item.mask.as_ref())?;
    let (loss, _) = weighted_mse_loss(&out, &item.target, &item.weights)?;
    Ok(loss)
}

fn item_pass(net: &Network, item: &PreparedItem) -> Result<(f64, Vec<Tensor>), TrainError> {
    let (out, cache) = net.forward_train(&item.input, item.mask.as_ref())?;
    let (loss, grad) = weighted_mse_loss(&out, &item.target, &item.weights)?;
    let grads = net.backward(&item.input, item.mask.as_ref(), &cache, &grad)?;
    Ok((loss, grads))
}

/// Mean loss over a prepared set, reduced in item order.
fn set_loss(net: &Network, items: &[PreparedItem]) -> Result<f64, TrainError> {
    let losses: Result<Vec<f64>, TrainError> =
        par_map(items, |item| item_loss(net, item)).into_iter().collect();
    let losses = losses?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Re-evaluate a bundle's validation loss under the frozen validation
/// masks the training run used. Matches the logged values bit for bit.
pub fn validation_loss(
    bundle: &ModelBundle,
    val_set: &[EnergyImage],
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    if val_set.is_empty() {
        return Err(TrainError::EmptySet { which: "validation" });
    }
    let net = bundle.network()?;
    let items = frozen_val_items(bundle.arch, val_set, config)?;
    set_loss(net, &items)
}

/// Validation masks are drawn once, tagged as epoch 0 so they can never
/// collide with the training masks of epochs 1 and up.
fn frozen_val_items(
    arch: Architecture,
    val_set: &[EnergyImage],
    config: &TrainConfig,
) -> Result<Vec<PreparedItem>, TrainError> {
    let policy = config.policy();
    val_set
        .iter()
        .enumerate()
        .map(|(j, image)| {
            let mask = sample_training_mask(&policy, config.seed, 0, j)?;
            prepare_item(arch, image, &mask, config.hole_weight)
        })
        .collect()
}

/// Fit a fresh or resumed bundle: per epoch, shuffle the train set,
/// sample fresh masks, take minibatch Adam steps, then score the frozen
/// validation set; stop early after `patience` consecutive epochs
/// without improvement. The returned bundle carries the parameters of
/// the best validation epoch.
pub fn train(
    bundle: &ModelBundle,
    train_set: &[EnergyImage],
    val_set: &[EnergyImage],
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainLog), TrainError> {
    config.validate()?;
    if !bundle.arch.trainable() {
        return Err(TrainError::UntrainableArch(bundle.arch));
    }
    if train_set.is_empty() {
        return Err(TrainError::EmptySet { which: "train" });
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySet { which: "validation" });
    }
    let arch = bundle.arch;
    let policy = config.policy();
    let mut net = bundle.network()?.clone();
    let val_items = frozen_val_items(arch, val_set, config)?;

    let mut state = AdamState::new(&net.params());
    let mut best_params: Vec<Tensor> = net.params().into_iter().cloned().collect();
    let mut stopper = EarlyStopper::new(config.patience);
    let mut rows: Vec<EpochRow> = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_for(config.seed, &["train-shuffle", &epoch.to_string()]));

        let mut loss_sum = 0.0;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let results: Result<Vec<(f64, Vec<Tensor>)>, TrainError> =
                par_map(chunk, |&idx| {
                    let mask = sample_training_mask(&policy, config.seed, epoch, idx)?;
                    let item = prepare_item(arch, &train_set[idx], &mask, config.hole_weight)?;
                    item_pass(&net, &item)
                })
                .into_iter()
                .collect();
            let results = results?;

            // Fixed-order reduction keeps the run bit-reproducible no
            // matter how the batch was scheduled across threads.
            let mut batch_loss = 0.0;
            let mut grads: Vec<Tensor> =
                results[0].1.iter().map(|g| Tensor::zeros(g.shape())).collect();
            for (loss, item_grads) in &results {
                batch_loss += loss;
                for (acc, g) in grads.iter_mut().zip(item_grads) {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / results.len() as f64;
            for g in &mut grads {
                for x in g.data_mut() {
                    *x *= scale;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            loss_sum += batch_loss;

            if arch == Architecture::Pconv {
                clip_grad_norm(&mut grads, config.grad_clip);
            }
            let mut params = net.params_mut();
            adam_step(&mut params, &grads, &mut state, config)?;
        }

        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = set_loss(&net, &val_items)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: 0 });
        }
        rows.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            seconds: t0.elapsed().as_secs_f64(),
        });
        let stop = stopper.observe(epoch, val_loss);
        if stopper.improved_at(epoch) {
            best_params = net.params().into_iter().cloned().collect();
        }
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    for (p, snap) in net.params_mut().into_iter().zip(&best_params) {
        *p = snap.clone();
    }
    let out = ModelBundle {
        arch,
        net: Some(net),
        provenance: Provenance {
            seed: config.seed,
            epochs_run: rows.len(),
            best_val_loss: Some(stopper.best),
            data_fingerprint: data_fingerprint(&[train_set, val_set]),
            trained: true,
        },
    };
    let log = TrainLog { epochs: rows, best_epoch: stopper.best_epoch, stop_reason };
    Ok((out, log))
}
