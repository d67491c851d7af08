//! Batch command-line surface tying the pipeline together: synthesize a
//! fleet, prepare a store, train, impute, evaluate, and gradient-check,
//! one subcommand per step.
//!
//! Every subcommand accepts `--seed`, `--config`, and `--out`, writes its
//! outputs atomically (temp file + rename), and drops exactly one run
//! manifest next to them. Exit codes: 0 on success, 2 when arguments or
//! inputs fail validation, 1 when the work itself fails.

mod manifest;

pub use manifest::{file_sha256, RunManifest};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{
    clean, filter_low_missing, format_ts, image_filename, ingest_csv, read_folds, read_image,
    reshape_to_image, round_folds, split_by_site, write_folds, write_image, CleanRules, CsvSchema,
    DatasetError, EnergyImage, FoldAssignment, FOLD_COUNT, WEEK_HOURS, YEAR_HOURS, YEAR_WEEKS,
};
use crate::evaluation::{
    emit_plots, experiment_mask, run_experiment, summary_by_meter_type, summary_by_rate,
    ExampleSpec, ExperimentModels, ExperimentSpec, RATE_GRID,
};
use crate::masks::MaskKind;
use crate::models::{
    impute, load_model, save_model, Architecture, CellSource, ModelBundle, ModelError,
};
use crate::numeric::{check_registry, op_names};
use crate::synth::{generate_fleet, write_fleet_csv, SynthError, SynthSpec};
use crate::training::{data_fingerprint, train, write_train_log, TrainConfig, TrainError};

/// Records excluded by `prepare` must miss strictly less than this
/// fraction of their modeling year.
const MISSING_CUTOFF: f64 = 0.05;

#[derive(Debug)]
pub enum CliError {
    /// Arguments or inputs failed an upfront check; exit code 2.
    Validation(String),
    /// The work itself failed; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(format!("io: {e}"))
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config_error(e: TrainError) -> CliError {
    match e {
        TrainError::Io(err) => CliError::Runtime(format!("config: {err}")),
        other => CliError::Validation(other.to_string()),
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::BadConfig(_)
        | TrainError::ConfigFormat { .. }
        | TrainError::UntrainableArch(_)
        | TrainError::EmptySet { .. } => CliError::Validation(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gridfill",
    version,
    about = "Impute gaps in hourly building-energy series via image inpainting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Master seed; overrides the config file's seed when given.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Config file of `key value` lines (training config format).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

impl CommonArgs {
    /// Effective config: file if given, defaults otherwise, `--seed` wins.
    fn load_config(&self) -> Result<TrainConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => crate::training::read_config(path).map_err(config_error)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic meter fleet as an ingestable CSV.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of sites in the fleet.
        #[arg(long, default_value_t = 10)]
        sites: usize,
        /// Meters per site.
        #[arg(long, default_value_t = 20)]
        meters_per_site: usize,
        /// Multiplicative reading noise sigma.
        #[arg(long, default_value_t = 0.02)]
        noise_sigma: f64,
    },
    /// Ingest, clean, filter, and grid a meter CSV into a prepared store.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
        /// Input meter CSV (plain or .gz).
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Rebuild over an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Train one model for one cross-validation round.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Model to train: ae1d, ae2d, or pconv.
        #[arg(long)]
        model: String,
        /// Cross-validation round, 0 through 4.
        #[arg(long)]
        fold: usize,
        /// Prepared store directory.
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
    },
    /// Cut a synthetic mask into one meter and write the imputed series.
    Impute {
        #[command(flatten)]
        common: CommonArgs,
        /// Model checkpoint; the persistence baseline when omitted.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Prepared store directory.
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        /// Meter id to impute.
        #[arg(long)]
        meter: String,
        /// Mask kind: random_days, continuous, or irregular.
        #[arg(long)]
        mask_kind: String,
        /// Target missing rate for day-based masks.
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        /// Emit readings on the original scale instead of normalized.
        #[arg(long)]
        denormalize: bool,
    },
    /// Score models over the full mask-kind x rate grid and summarize.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Prepared store directory.
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        /// Comma-separated models to score.
        #[arg(long, value_delimiter = ',', default_value = "persistence")]
        models: Vec<String>,
        /// Directory holding `<model>_fold<k>.ckpt` checkpoints.
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
        /// Comma-separated mask kinds.
        #[arg(long, value_delimiter = ',', default_value = "random_days,continuous")]
        kinds: Vec<String>,
        /// Comma-separated missing rates; the full grid when omitted.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Overlay/heatmap examples as meter:kind:rate triples.
        #[arg(long, value_delimiter = ',', value_name = "METER:KIND:RATE")]
        example: Vec<String>,
    },
    /// Check every registered op's analytic gradient against central
    /// differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Random evaluation points per op.
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Maximum accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Scale this op's analytic gradient by 2 to prove the check
        /// rejects wrong gradients.
        #[arg(long, value_name = "OP")]
        corrupt: Option<String>,
    },
}

/// Parses argv and runs the chosen subcommand; returns the process exit
/// code. Usage errors exit 2 via clap before this returns.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gridfill: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth { common, sites, meters_per_site, noise_sigma } => {
            cmd_synth(common, *sites, *meters_per_site, *noise_sigma)
        }
        Command::Prepare { common, input, force } => cmd_prepare(common, input, *force),
        Command::Train { common, model, fold, store } => cmd_train(common, model, *fold, store),
        Command::Impute { common, checkpoint, store, meter, mask_kind, rate, denormalize } => {
            cmd_impute(common, checkpoint.as_deref(), store, meter, mask_kind, *rate, *denormalize)
        }
        Command::Evaluate { common, store, models, model_dir, kinds, rates, example } => {
            cmd_evaluate(common, store, models, model_dir.as_deref(), kinds, rates.as_deref(), example)
        }
        Command::Gradcheck { common, points, tolerance, corrupt } => {
            cmd_gradcheck(common, *points, *tolerance, corrupt.as_deref())
        }
    }
}

/// Writes `bytes` to a sibling temp file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_sibling(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Runs a path-taking writer against a temp sibling, then renames.
fn write_via_temp<E: std::fmt::Display>(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), E>,
) -> Result<(), CliError> {
    let tmp = tmp_sibling(path);
    write(&tmp).map_err(runtime)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_arch(name: &str) -> Result<Architecture, CliError> {
    Architecture::parse(name).ok_or_else(|| {
        validation(format!("unknown model '{name}' (expected persistence, ae1d, ae2d, or pconv)"))
    })
}

fn parse_kind(name: &str) -> Result<MaskKind, CliError> {
    MaskKind::parse(name).ok_or_else(|| {
        validation(format!(
            "unknown mask kind '{name}' (expected random_days, continuous, or irregular)"
        ))
    })
}

fn check_rate(rate: f64) -> Result<(), CliError> {
    if !(rate > 0.0 && rate <= 0.5) {
        return Err(validation(format!("rate {rate} outside (0, 0.5]")));
    }
    Ok(())
}

/// A prepared store loaded back into memory: every image plus the fold
/// assignment, with paths kept for manifest fingerprints.
struct Store {
    images: Vec<EnergyImage>,
    folds: FoldAssignment,
    folds_path: PathBuf,
    image_paths: Vec<PathBuf>,
}

fn load_store(dir: &Path) -> Result<Store, CliError> {
    let folds_path = dir.join("folds.csv");
    if !folds_path.exists() {
        return Err(validation(format!(
            "{} is not a prepared store (missing folds.csv); run `gridfill prepare` first",
            dir.display()
        )));
    }
    let folds = read_folds(&folds_path).map_err(runtime)?;
    let mut image_paths = Vec::new();
    for entry in std::fs::read_dir(dir.join("images"))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "gfi") {
            image_paths.push(path);
        }
    }
    // Directory order is arbitrary; sort so every run sees one order.
    image_paths.sort();
    if image_paths.is_empty() {
        return Err(validation(format!("store {} holds no images", dir.display())));
    }
    let mut images = Vec::with_capacity(image_paths.len());
    for path in &image_paths {
        images.push(read_image(path).map_err(runtime)?);
    }
    Ok(Store { images, folds, folds_path, image_paths })
}

fn cmd_synth(
    common: &CommonArgs,
    sites: usize,
    meters_per_site: usize,
    noise_sigma: f64,
) -> Result<(), CliError> {
    let config = common.load_config()?;
    let seed = config.seed;
    let spec = SynthSpec {
        n_sites: sites,
        meters_per_site,
        noise_sigma,
        seed,
        ..SynthSpec::default()
    };
    let records = generate_fleet(&spec).map_err(|e| match e {
        SynthError::BadSpec(msg) => validation(msg),
        SynthError::Io(err) => CliError::from(err),
    })?;
    std::fs::create_dir_all(&common.out)?;
    let csv_path = common.out.join("fleet.csv");
    write_via_temp(&csv_path, |tmp| write_fleet_csv(&records, tmp))?;

    let mut m = RunManifest::new("synth", seed);
    m.setting("sites", sites);
    m.setting("meters_per_site", meters_per_site);
    m.setting("noise_sigma", noise_sigma);
    m.output(&csv_path);
    m.write(&common.out.join("synth.manifest"))?;
    println!("wrote {} meters to {}", records.len(), csv_path.display());
    Ok(())
}

fn cmd_prepare(common: &CommonArgs, input: &Path, force: bool) -> Result<(), CliError> {
    let config = common.load_config()?;
    let seed = config.seed;
    let folds_path = common.out.join("folds.csv");
    if folds_path.exists() && !force {
        return Err(validation(format!(
            "{} already holds a prepared store; pass --force to rebuild",
            common.out.display()
        )));
    }
    if !input.exists() {
        return Err(validation(format!("input {} does not exist", input.display())));
    }

    let outcome = ingest_csv(input, &CsvSchema::default()).map_err(runtime)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    let rules = CleanRules::default();
    let cleaned: Vec<_> = outcome.records.iter().map(|r| clean(r, &rules)).collect();
    let filtered = filter_low_missing(cleaned, MISSING_CUTOFF);

    let mut exclusions = String::new();
    for ex in &filtered.excluded {
        let _ = writeln!(exclusions, "{} {}", ex.meter_id, ex.reason);
        eprintln!("excluded {}: {}", ex.meter_id, ex.reason);
    }
    let mut images = Vec::with_capacity(filtered.kept.len());
    for record in &filtered.kept {
        images.push(reshape_to_image(record).map_err(runtime)?);
    }
    let folds = split_by_site(&images, seed).map_err(|e| match e {
        DatasetError::FewSites(_) => validation(e.to_string()),
        other => runtime(other),
    })?;

    // All computation succeeded; only now touch the store directory.
    let images_dir = common.out.join("images");
    if images_dir.exists() {
        std::fs::remove_dir_all(&images_dir)?;
    }
    std::fs::create_dir_all(&images_dir)?;
    let mut seen = BTreeSet::new();
    let mut image_paths = Vec::with_capacity(images.len());
    for image in &images {
        let name = image_filename(&image.meter_id);
        if !seen.insert(name.clone()) {
            return Err(runtime(format!("meter ids collide on image file {name}")));
        }
        let path = images_dir.join(name);
        write_via_temp(&path, |tmp| write_image(image, tmp))?;
        image_paths.push(path);
    }
    write_via_temp(&folds_path, |tmp| write_folds(&folds, tmp))?;
    let exclusions_path = common.out.join("exclusions.txt");
    write_atomic(&exclusions_path, exclusions.as_bytes())?;

    let mut m = RunManifest::new("prepare", seed);
    m.setting("missing_cutoff", MISSING_CUTOFF);
    m.setting("nonzero_streak", rules.nonzero_streak);
    m.setting("zero_streak", rules.zero_streak);
    m.setting("spike_iqr_k", rules.spike_iqr_k);
    m.input_file(input)?;
    m.output(&folds_path);
    m.output(&exclusions_path);
    for path in &image_paths {
        m.output(path);
    }
    m.write(&common.out.join("prepare.manifest"))?;
    println!(
        "prepared {} images across {} sites ({} excluded) into {}",
        images.len(),
        folds.by_site.len(),
        filtered.excluded.len(),
        common.out.display()
    );
    Ok(())
}

fn cmd_train(
    common: &CommonArgs,
    model: &str,
    fold: usize,
    store_dir: &Path,
) -> Result<(), CliError> {
    let arch = parse_arch(model)?;
    if !arch.trainable() {
        return Err(validation("persistence needs no training"));
    }
    if fold >= FOLD_COUNT {
        return Err(validation(format!("--fold must be below {FOLD_COUNT}")));
    }
    let config = common.load_config()?;
    let store = load_store(store_dir)?;

    let round = round_folds(fold);
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for image in &store.images {
        let f = store
            .folds
            .fold_of(&image.site_id)
            .ok_or_else(|| runtime(format!("site {} missing from fold file", image.site_id)))?;
        if f == round.val {
            val_set.push(image.clone());
        } else if round.train.contains(&f) {
            train_set.push(image.clone());
        }
    }

    let widths = config.widths_for(arch).expect("trainable arch has widths");
    let bundle = ModelBundle::init_with(&widths, config.seed);
    let (trained, log) = train(&bundle, &train_set, &val_set, &config).map_err(train_error)?;

    std::fs::create_dir_all(&common.out)?;
    let stem = format!("{}_fold{fold}", arch.as_str());
    let ckpt_path = common.out.join(format!("{stem}.ckpt"));
    let log_path = common.out.join(format!("{stem}_log.csv"));
    write_via_temp(&ckpt_path, |tmp| save_model(&trained, tmp))?;
    write_via_temp(&log_path, |tmp| write_train_log(&log, tmp))?;

    let best_val = log.best_val_loss().expect("trained log has at least one epoch");
    let mut m = RunManifest::new("train", config.seed);
    m.setting("model", arch.as_str());
    m.setting("fold", fold);
    m.setting("train_meters", train_set.len());
    m.setting("val_meters", val_set.len());
    m.setting("data_fingerprint", data_fingerprint(&[&train_set, &val_set]));
    m.setting("result.stop_reason", log.stop_reason);
    m.setting("result.best_epoch", log.best_epoch);
    m.setting("result.best_val_loss", best_val);
    m.setting("result.epochs_run", log.epochs.len());
    m.config_snapshot(&config);
    m.input_file(&store.folds_path)?;
    for (image, path) in store.images.iter().zip(&store.image_paths) {
        let f = store.folds.fold_of(&image.site_id).expect("checked above");
        if f == round.val || round.train.contains(&f) {
            m.input_file(path)?;
        }
    }
    m.output(&ckpt_path);
    m.output(&log_path);
    m.write(&common.out.join(format!("train_{stem}.manifest")))?;
    println!(
        "{} fold {fold}: {} epochs, best val {:.6} at epoch {}, stopped by {}",
        arch.as_str(),
        log.epochs.len(),
        best_val,
        log.best_epoch,
        log.stop_reason
    );
    Ok(())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Untrained { .. } => validation(e.to_string()),
        other => runtime(other),
    }
}

fn cmd_impute(
    common: &CommonArgs,
    checkpoint: Option<&Path>,
    store_dir: &Path,
    meter: &str,
    mask_kind: &str,
    rate: f64,
    denormalize: bool,
) -> Result<(), CliError> {
    let config = common.load_config()?;
    let seed = config.seed;
    let kind = parse_kind(mask_kind)?;
    check_rate(rate)?;
    let bundle = match checkpoint {
        None => ModelBundle::persistence(),
        Some(path) => load_model(path)
            .map_err(|e| validation(format!("cannot load checkpoint {}: {e}", path.display())))?,
    };
    let store = load_store(store_dir)?;
    let image = store
        .images
        .iter()
        .find(|i| i.meter_id == meter)
        .ok_or_else(|| validation(format!("meter '{meter}' is not in the store")))?;

    // Same mask derivation as evaluate, so a spot-checked meter sees the
    // exact holes the experiment scored.
    let mask = experiment_mask(seed, meter, kind, rate).map_err(|e| validation(e.to_string()))?;
    let result = impute(&bundle, image, &mask, false).map_err(model_error)?;

    let mut csv = String::from("timestamp,value,provenance\n");
    for t in 0..YEAR_HOURS {
        let ts = image.week0_start + chrono::Duration::hours(t as i64);
        let idx = (t % WEEK_HOURS) * YEAR_WEEKS + t / WEEK_HOURS;
        let mut value = result.matrix.data()[idx];
        if denormalize {
            value = image.norm.denormalize(value);
        }
        let provenance = match result.source[idx] {
            CellSource::Observed => "observed",
            CellSource::Imputed => "imputed",
        };
        let _ = writeln!(csv, "{},{value},{provenance}", format_ts(&ts));
    }
    std::fs::create_dir_all(&common.out)?;
    let file_stem = image_filename(meter);
    let file_stem = file_stem.strip_suffix(".gfi").expect("image_filename appends .gfi");
    let csv_path = common.out.join(format!("imputed_{file_stem}.csv"));
    write_atomic(&csv_path, csv.as_bytes())?;

    let mut m = RunManifest::new("impute", seed);
    m.setting("model", bundle.arch.as_str());
    m.setting("meter", meter);
    m.setting("mask_kind", kind.as_str());
    m.setting("rate", rate);
    m.setting("denormalize", denormalize);
    m.setting("imputed_cells", result.imputed_count());
    if let Some(path) = checkpoint {
        m.input_file(path)?;
    }
    m.input_file(&store_dir.join("images").join(image_filename(meter)))?;
    m.output(&csv_path);
    m.write(&common.out.join(format!("imputed_{file_stem}.manifest")))?;
    println!("wrote {} ({} imputed cells)", csv_path.display(), result.imputed_count());
    Ok(())
}

fn parse_example(text: &str) -> Result<ExampleSpec, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(validation(format!("example '{text}' is not meter:kind:rate")));
    }
    let kind = parse_kind(parts[1])?;
    let rate: f64 = parts[2]
        .parse()
        .map_err(|_| validation(format!("example '{text}' has a bad rate")))?;
    check_rate(rate)?;
    Ok(ExampleSpec { meter_id: parts[0].to_string(), kind, rate })
}

fn cmd_evaluate(
    common: &CommonArgs,
    store_dir: &Path,
    models: &[String],
    model_dir: Option<&Path>,
    kinds: &[String],
    rates: Option<&[f64]>,
    examples: &[String],
) -> Result<(), CliError> {
    let config = common.load_config()?;
    let seed = config.seed;

    let mut archs: Vec<Architecture> = Vec::new();
    for name in models {
        let arch = parse_arch(name)?;
        if archs.contains(&arch) {
            return Err(validation(format!("model '{name}' listed twice")));
        }
        archs.push(arch);
    }
    let mut mask_kinds: Vec<MaskKind> = Vec::new();
    for name in kinds {
        let kind = parse_kind(name)?;
        if mask_kinds.contains(&kind) {
            return Err(validation(format!("mask kind '{name}' listed twice")));
        }
        mask_kinds.push(kind);
    }
    let rates: Vec<f64> = rates.map(<[f64]>::to_vec).unwrap_or_else(|| RATE_GRID.to_vec());
    for &rate in &rates {
        check_rate(rate)?;
    }
    let examples: Vec<ExampleSpec> =
        examples.iter().map(|e| parse_example(e)).collect::<Result<_, _>>()?;

    let store = load_store(store_dir)?;
    let mut experiment_models = ExperimentModels::new();
    let mut checkpoint_paths = Vec::new();
    for &arch in &archs {
        if arch == Architecture::Persistence {
            experiment_models.insert_for_all_folds(ModelBundle::persistence(), FOLD_COUNT);
            continue;
        }
        let dir = model_dir.ok_or_else(|| {
            validation(format!("--model-dir is required to score '{}'", arch.as_str()))
        })?;
        for round in 0..FOLD_COUNT {
            let path = dir.join(format!("{}_fold{round}.ckpt", arch.as_str()));
            if !path.exists() {
                return Err(validation(format!("missing checkpoint {}", path.display())));
            }
            let bundle = load_model(&path).map_err(runtime)?;
            if bundle.arch != arch {
                return Err(validation(format!(
                    "{} holds a {} model, expected {}",
                    path.display(),
                    bundle.arch.as_str(),
                    arch.as_str()
                )));
            }
            // The checkpoint trained in round r scores the meters of that
            // round's held-out test fold.
            experiment_models.insert(round_folds(round).test, bundle);
            checkpoint_paths.push(path);
        }
    }

    let spec = ExperimentSpec { kinds: mask_kinds, rates, seed };
    let report =
        run_experiment(&store.images, &store.folds, &experiment_models, &spec).map_err(runtime)?;
    let by_rate = summary_by_rate(&report).map_err(runtime)?;
    let by_type = summary_by_meter_type(&report).map_err(runtime)?;

    std::fs::create_dir_all(&common.out)?;
    let report_path = common.out.join("report.csv");
    let by_rate_path = common.out.join("summary_by_rate.csv");
    let by_type_path = common.out.join("summary_by_meter_type.csv");
    write_atomic(&report_path, report.to_csv().as_bytes())?;
    write_atomic(&by_rate_path, by_rate.to_csv().as_bytes())?;
    write_atomic(&by_type_path, by_type.to_csv().as_bytes())?;

    // Plot data lands in a temp directory that is swapped in whole, so a
    // crash never leaves a half-written plots/.
    let plots_tmp = common.out.join("plots.tmp");
    if plots_tmp.exists() {
        std::fs::remove_dir_all(&plots_tmp)?;
    }
    let tmp_files = emit_plots(
        &store.images,
        &store.folds,
        &experiment_models,
        &spec,
        &report,
        &examples,
        &plots_tmp,
    )
    .map_err(runtime)?;
    let plots_dir = common.out.join("plots");
    if plots_dir.exists() {
        std::fs::remove_dir_all(&plots_dir)?;
    }
    std::fs::rename(&plots_tmp, &plots_dir)?;
    let plot_files: Vec<PathBuf> = tmp_files
        .iter()
        .map(|p| {
            p.strip_prefix(&plots_tmp).map(|rest| plots_dir.join(rest)).unwrap_or_else(|_| p.clone())
        })
        .collect();

    let mut m = RunManifest::new("evaluate", seed);
    m.setting("models", archs.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(","));
    m.setting(
        "kinds",
        spec.kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","),
    );
    m.setting(
        "rates",
        spec.rates.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
    );
    m.setting("rows", report.rows.len());
    m.setting("degenerate_r2_rows", report.degenerate_r2_count());
    m.input_file(&store.folds_path)?;
    for path in &store.image_paths {
        m.input_file(path)?;
    }
    for path in &checkpoint_paths {
        m.input_file(path)?;
    }
    m.output(&report_path);
    m.output(&by_rate_path);
    m.output(&by_type_path);
    for path in &plot_files {
        m.output(path);
    }
    m.write(&common.out.join("evaluate.manifest"))?;
    println!(
        "scored {} rows over {} meters; report at {}",
        report.rows.len(),
        store.images.len(),
        report_path.display()
    );
    Ok(())
}

fn cmd_gradcheck(
    common: &CommonArgs,
    points: usize,
    tolerance: f64,
    corrupt: Option<&str>,
) -> Result<(), CliError> {
    let config = common.load_config()?;
    let seed = config.seed;
    if points == 0 {
        return Err(validation("--points must be at least 1"));
    }
    if !(tolerance > 0.0) {
        return Err(validation("--tolerance must be positive"));
    }
    if let Some(op) = corrupt {
        if !op_names().contains(&op) {
            return Err(validation(format!(
                "unknown op '{op}' (registered: {})",
                op_names().join(", ")
            )));
        }
    }

    let reports = check_registry(seed, points, tolerance, corrupt);
    println!("{:<22} {:>12}  {:>9}  result", "op", "max_rel_err", "tolerance");
    let mut csv = String::from("op,max_rel_err,tolerance,pass\n");
    for r in &reports {
        println!(
            "{:<22} {:>12.3e}  {:>9.1e}  {}",
            r.op,
            r.max_rel_err,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
        let _ = writeln!(csv, "{},{},{},{}", r.op, r.max_rel_err, r.tolerance, r.pass);
    }
    std::fs::create_dir_all(&common.out)?;
    let csv_path = common.out.join("gradcheck.csv");
    write_atomic(&csv_path, csv.as_bytes())?;

    let mut m = RunManifest::new("gradcheck", seed);
    m.setting("points", points);
    m.setting("tolerance", tolerance);
    if let Some(op) = corrupt {
        m.setting("corrupt", op);
    }
    m.output(&csv_path);
    m.write(&common.out.join("gradcheck.manifest"))?;

    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.op.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Runtime(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_internally_consistent() {
        Cli::command().debug_assert();
    }

    // Every flag the parser accepts must show up in that subcommand's
    // help text.
    #[test]
    fn help_documents_every_flag() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            let help = sub.clone().render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(
                        help.contains(&format!("--{long}")),
                        "{} help is missing --{long}",
                        sub.get_name()
                    );
                }
            }
        }
    }

    #[test]
    fn defaults_parse_as_documented() {
        let cli = Cli::try_parse_from(["gridfill", "synth"]).unwrap();
        match cli.command {
            Command::Synth { common, sites, meters_per_site, noise_sigma } => {
                assert_eq!(sites, 10);
                assert_eq!(meters_per_site, 20);
                assert_eq!(noise_sigma, 0.02);
                assert_eq!(common.out, PathBuf::from("."));
                assert_eq!(common.seed, None);
            }
            other => panic!("parsed {other:?}"),
        }

        let cli = Cli::try_parse_from(["gridfill", "evaluate", "--store", "s"]).unwrap();
        match cli.command {
            Command::Evaluate { models, kinds, rates, .. } => {
                assert_eq!(models, vec!["persistence".to_string()]);
                assert_eq!(kinds, vec!["random_days".to_string(), "continuous".to_string()]);
                assert_eq!(rates, None);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn comma_lists_split() {
        let cli = Cli::try_parse_from([
            "gridfill", "evaluate", "--store", "s", "--models", "persistence,ae2d", "--rates",
            "0.1,0.3",
        ])
        .unwrap();
        match cli.command {
            Command::Evaluate { models, rates, .. } => {
                assert_eq!(models.len(), 2);
                assert_eq!(rates, Some(vec![0.1, 0.3]));
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn example_triples_parse() {
        let ex = parse_example("S01M01:continuous:0.2").unwrap();
        assert_eq!(ex.meter_id, "S01M01");
        assert_eq!(ex.kind, MaskKind::Continuous);
        assert_eq!(ex.rate, 0.2);

        assert!(matches!(parse_example("S01M01:continuous"), Err(CliError::Validation(_))));
        assert!(matches!(parse_example("m:badkind:0.2"), Err(CliError::Validation(_))));
        assert!(matches!(parse_example("m:continuous:0.9"), Err(CliError::Validation(_))));
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(validation("x").exit_code(), 2);
        assert_eq!(runtime("x").exit_code(), 1);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["f.txt".to_string()]);
    }

    #[test]
    fn rate_bounds_are_enforced() {
        assert!(check_rate(0.05).is_ok());
        assert!(check_rate(0.5).is_ok());
        assert!(check_rate(0.0).is_err());
        assert!(check_rate(0.51).is_err());
        assert!(check_rate(f64::NAN).is_err());
    }
}
