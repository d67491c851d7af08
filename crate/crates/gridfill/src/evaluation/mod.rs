//! Scoring for imputation experiments: MSE and R-squared on the
//! synthetic-hole cells, a cross-model experiment grid with paired
//! masks, grouped summary tables, and plot-data emission.

mod plots;

pub use plots::{emit_plots, ExampleSpec};

use crate::dataset::{EnergyImage, FoldAssignment, MeterType, WEEK_HOURS, YEAR_WEEKS};
use crate::masks::{continuous_mask, irregular_mask, random_day_mask, MaskError, MaskGrid, MaskKind};
use crate::models::{impute, Architecture, ModelBundle, ModelError};
use crate::parallel::par_map;
use crate::rng::derive_seed;
use crate::tensor::{Tensor, TensorError};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("evaluation mask selects no cells")]
    EmptyMask,
    #[error("truth is constant over the evaluation cells, r2 undefined")]
    DegenerateTruth,
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("no {arch} model for fold {fold}")]
    MissingModel { arch: Architecture, fold: usize },
    #[error("site {0} is not in the fold assignment")]
    UnknownSite(String),
    #[error("meter {0} is not in the image set")]
    UnknownMeter(String),
    #[error("unknown group key {0:?}")]
    UnknownGroupKey(String),
    #[error("report has no rows")]
    EmptyReport,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The missing rates every experiment sweeps.
pub const RATE_GRID: [f64; 6] = [0.05, 0.10, 0.20, 0.30, 0.40, 0.50];

/// Cells a score may depend on: synthetic holes that are also raw-valid,
/// as a (168, 52) indicator grid.
pub fn eval_mask(mask: &MaskGrid, image: &EnergyImage) -> Tensor {
    let mut out = Tensor::zeros(&[WEEK_HOURS, YEAR_WEEKS]);
    for i in 0..out.len() {
        if mask.grid.data()[i] == 0.0 && image.validity[i] {
            out.data_mut()[i] = 1.0;
        }
    }
    out
}

fn check_aligned(pred: &Tensor, truth: &Tensor, mask: &Tensor) -> Result<(), EvalError> {
    if pred.shape() != truth.shape() || pred.shape() != mask.shape() {
        return Err(EvalError::ShapeMismatch(format!(
            "pred {:?}, truth {:?}, mask {:?} must match",
            pred.shape(),
            truth.shape(),
            mask.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over the cells the mask selects.
pub fn mse_masked(pred: &Tensor, truth: &Tensor, mask: &Tensor) -> Result<f64, EvalError> {
    check_aligned(pred, truth, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if mask.data()[i] != 0.0 {
            let d = pred.data()[i] - truth.data()[i];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Coefficient of determination over the cells the mask selects:
/// 1 - SSres/SStot. Needs at least two cells with non-constant truth.
pub fn r2_masked(pred: &Tensor, truth: &Tensor, mask: &Tensor) -> Result<f64, EvalError> {
    check_aligned(pred, truth, mask)?;
    let mut t_sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if mask.data()[i] != 0.0 {
            t_sum += truth.data()[i];
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    let mean = t_sum / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..pred.len() {
        if mask.data()[i] != 0.0 {
            let r = pred.data()[i] - truth.data()[i];
            let t = truth.data()[i] - mean;
            ss_res += r * r;
            ss_tot += t * t;
        }
    }
    if ss_tot == 0.0 {
        return Err(EvalError::DegenerateTruth);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Which masks and rates an experiment sweeps, plus the root seed the
/// paired masks derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kinds: Vec<MaskKind>,
    pub rates: Vec<f64>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kinds: vec![MaskKind::RandomDays, MaskKind::Continuous],
            rates: RATE_GRID.to_vec(),
            seed: 0,
        }
    }
}

/// The evaluation mask for one experiment cell. The derivation never
/// sees the model, so every model is scored on identical holes for a
/// given (meter, kind, rate).
pub fn experiment_mask(
    seed: u64,
    meter_id: &str,
    kind: MaskKind,
    rate: f64,
) -> Result<MaskGrid, EvalError> {
    let rate_tag = format!("{rate}");
    let mask_seed = derive_seed(seed, &["eval-mask", meter_id, kind.as_str(), &rate_tag]);
    let mask = match kind {
        MaskKind::RandomDays => random_day_mask(rate, mask_seed)?,
        MaskKind::Continuous => continuous_mask(rate, mask_seed)?,
        MaskKind::Irregular => irregular_mask(mask_seed),
    };
    Ok(mask)
}

/// The per-fold model bundles an experiment scores. Persistence counts
/// like any other entry so the scored model set is always explicit.
#[derive(Debug, Clone, Default)]
pub struct ExperimentModels {
    entries: BTreeMap<(&'static str, usize), ModelBundle>,
}

impl ExperimentModels {
    pub fn new() -> ExperimentModels {
        ExperimentModels::default()
    }

    pub fn insert(&mut self, fold: usize, bundle: ModelBundle) {
        self.entries.insert((bundle.arch.as_str(), fold), bundle);
    }

    /// Register one bundle for every fold; fits persistence, which has
    /// no per-fold weights.
    pub fn insert_for_all_folds(&mut self, bundle: ModelBundle, n_folds: usize) {
        for fold in 0..n_folds {
            self.insert(fold, bundle.clone());
        }
    }

    pub fn get(&self, arch: Architecture, fold: usize) -> Result<&ModelBundle, EvalError> {
        self.entries
            .get(&(arch.as_str(), fold))
            .ok_or(EvalError::MissingModel { arch, fold })
    }

    /// Architectures present, in the fixed model ordering.
    pub fn archs(&self) -> Vec<Architecture> {
        Architecture::ALL
            .into_iter()
            .filter(|a| self.entries.keys().any(|(name, _)| *name == a.as_str()))
            .collect()
    }
}

/// One scored experiment cell. A missing r2 marks a degenerate cell
/// (constant truth in the holes); it stays in the report but drops out
/// of r2 aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: Architecture,
    pub meter_id: String,
    pub site_id: String,
    pub meter_type: MeterType,
    pub mask_kind: MaskKind,
    pub rate: f64,
    pub fold: usize,
    pub mse: f64,
    pub r2: Option<f64>,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn degenerate_r2_count(&self) -> usize {
        self.rows.iter().filter(|r| r.r2.is_none()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("model,meter_id,site_id,meter_type,mask_kind,rate,fold,mse,r2,n_cells\n");
        for r in &self.rows {
            let r2 = r.r2.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.model,
                r.meter_id,
                r.site_id,
                r.meter_type.as_str(),
                r.mask_kind.as_str(),
                r.rate,
                r.fold,
                r.mse,
                r2,
                r.n_cells
            ));
        }
        out
    }
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, report.to_csv())?;
    Ok(())
}

/// Score every (model, mask kind, rate, meter) cell of the experiment
/// grid. Each meter is scored by the model for its own fold, and masks
/// are paired: identical across models for the same (meter, kind, rate).
/// Rows come back ordered by (model, kind, rate, fold, meter id).
pub fn run_experiment(
    images: &[EnergyImage],
    folds: &FoldAssignment,
    models: &ExperimentModels,
    spec: &ExperimentSpec,
) -> Result<EvalReport, EvalError> {
    // Resolve folds up front so an unknown site fails fast.
    let mut by_fold: Vec<(usize, &EnergyImage)> = images
        .iter()
        .map(|img| {
            folds
                .by_site
                .get(&img.site_id)
                .map(|&f| (f, img))
                .ok_or_else(|| EvalError::UnknownSite(img.site_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    by_fold.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.meter_id.cmp(&b.1.meter_id)));

    struct Cell<'a> {
        arch: Architecture,
        bundle: &'a ModelBundle,
        kind: MaskKind,
        rate: f64,
        fold: usize,
        image: &'a EnergyImage,
    }
    let mut cells = Vec::new();
    for arch in models.archs() {
        for &kind in &spec.kinds {
            for &rate in &spec.rates {
                for &(fold, image) in &by_fold {
                    let bundle = models.get(arch, fold)?;
                    cells.push(Cell { arch, bundle, kind, rate, fold, image });
                }
            }
        }
    }

    let rows: Result<Vec<EvalRow>, EvalError> = par_map(&cells, |cell| {
        let mask = experiment_mask(spec.seed, &cell.image.meter_id, cell.kind, cell.rate)?;
        let imputation = impute(cell.bundle, cell.image, &mask, false)?;
        let scored = eval_mask(&mask, cell.image);
        let mse = mse_masked(&imputation.matrix, &cell.image.matrix, &scored)?;
        let r2 = match r2_masked(&imputation.matrix, &cell.image.matrix, &scored) {
            Ok(v) => Some(v),
            Err(EvalError::DegenerateTruth) => None,
            Err(e) => return Err(e),
        };
        let n_cells = scored.data().iter().filter(|&&v| v != 0.0).count();
        Ok(EvalRow {
            model: cell.arch,
            meter_id: cell.image.meter_id.clone(),
            site_id: cell.image.site_id.clone(),
            meter_type: cell.image.meter_type,
            mask_kind: cell.kind,
            rate: cell.rate,
            fold: cell.fold,
            mse,
            r2,
            n_cells,
        })
    })
    .into_iter()
    .collect();
    Ok(EvalReport { rows: rows? })
}

/// Mean/median/quartile block over one metric within a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

fn stats_of(mut values: Vec<f64>) -> Stats {
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let q = |p| crate::dataset::clean::quantile(&values, p);
    Stats { mean, median: q(0.5), q1: q(0.25), q3: q(0.75) }
}

/// One group's row in a summary table. `r2` is absent when every row in
/// the group was r2-degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: Vec<String>,
    pub n: usize,
    pub mse: Stats,
    pub r2_n: usize,
    pub r2: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub keys: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.keys.join(",");
        out.push_str(",n,mse_mean,mse_median,mse_q1,mse_q3,r2_n,r2_mean,r2_median,r2_q1,r2_q3\n");
        for row in &self.rows {
            out.push_str(&row.group.join(","));
            out.push_str(&format!(
                ",{},{},{},{},{},{}",
                row.n, row.mse.mean, row.mse.median, row.mse.q1, row.mse.q3, row.r2_n
            ));
            match &row.r2 {
                Some(s) => out.push_str(&format!(",{},{},{},{}\n", s.mean, s.median, s.q1, s.q3)),
                None => out.push_str(",,,,\n"),
            }
        }
        out
    }
}

pub fn write_summary(table: &SummaryTable, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

fn group_value(row: &EvalRow, key: &str) -> Result<String, EvalError> {
    Ok(match key {
        "model" => row.model.as_str().to_string(),
        "meter_id" => row.meter_id.clone(),
        "site_id" => row.site_id.clone(),
        "meter_type" => row.meter_type.as_str().to_string(),
        "mask_kind" => row.mask_kind.as_str().to_string(),
        "rate" => row.rate.to_string(),
        "fold" => row.fold.to_string(),
        _ => return Err(EvalError::UnknownGroupKey(key.to_string())),
    })
}

/// Group the report by the named keys and summarize mse and r2 per
/// group. Degenerate-r2 rows still count toward `n` and the mse block
/// but are excluded from the r2 block.
pub fn aggregate(report: &EvalReport, keys: &[&str]) -> Result<SummaryTable, EvalError> {
    if report.rows.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut groups: BTreeMap<Vec<String>, Vec<&EvalRow>> = BTreeMap::new();
    for row in &report.rows {
        let group: Vec<String> =
            keys.iter().map(|k| group_value(row, k)).collect::<Result<_, _>>()?;
        groups.entry(group).or_default().push(row);
    }
    let rows = groups
        .into_iter()
        .map(|(group, members)| {
            let mse = stats_of(members.iter().map(|r| r.mse).collect());
            let r2_values: Vec<f64> = members.iter().filter_map(|r| r.r2).collect();
            let r2_n = r2_values.len();
            let r2 = if r2_values.is_empty() { None } else { Some(stats_of(r2_values)) };
            SummaryRow { group, n: members.len(), mse, r2_n, r2 }
        })
        .collect();
    Ok(SummaryTable { keys: keys.iter().map(|k| k.to_string()).collect(), rows })
}

/// Model-by-rate summary, split by mask kind: how performance decays as
/// the missing rate grows.
pub fn summary_by_rate(report: &EvalReport) -> Result<SummaryTable, EvalError> {
    aggregate(report, &["model", "rate", "mask_kind"])
}

/// Model-by-meter-type summary, split by mask kind.
pub fn summary_by_meter_type(report: &EvalReport) -> Result<SummaryTable, EvalError> {
    aggregate(report, &["model", "meter_type", "mask_kind"])
}
