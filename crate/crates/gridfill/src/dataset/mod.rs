//! Meter data pipeline: ingest hourly CSV, clean, pick the modeling year,
//! normalize, reshape to 168x52 weekly grids, resize/augment, and split
//! sites into 5 folds.
//!
//! A meter-year becomes an image: hour t of the year lands at
//! (row = t mod 168, col = t div 168), so a row is an hour-of-week, a
//! column is one week, and a day is a 24-cell run within a column.

pub mod augment;
pub mod clean;
pub mod ingest;
pub mod normalize;
pub mod resize;
pub mod split;
pub mod store;

pub use augment::{augment, flip_image, shift_image};
pub use clean::{clean, filter_low_missing, year_slice, CleanRules, Excluded, FilterOutcome};
pub use ingest::{ingest_csv, CsvSchema, IngestOutcome};
pub use normalize::{denormalize_slice, flatten_image, normalize_slice, reshape_to_image};
pub use resize::{resize_bilinear, resize_nearest, sample_back};
pub use split::{read_folds, round_folds, split_by_site, write_folds, RoundFolds};
pub use store::{image_filename, read_image, write_image};

use crate::tensor::Tensor;
use chrono::NaiveDateTime;
use std::collections::BTreeMap;
use thiserror::Error;

/// Hours in one week-row cycle.
pub const WEEK_HOURS: usize = 168;
/// Weeks per modeling year.
pub const YEAR_WEEKS: usize = 52;
/// Hours in the modeling year (168 * 52; 364 days).
pub const YEAR_HOURS: usize = WEEK_HOURS * YEAR_WEEKS;
/// Days in the modeling year.
pub const YEAR_DAYS: usize = YEAR_HOURS / 24;
/// Number of cross-validation folds.
pub const FOLD_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: unknown meter_type \"{ty}\" (expected electricity, chilledwater, steam, or hotwater)")]
    UnknownMeterType { line: u64, ty: String },
    #[error("meter {meter}: no valid cells to normalize")]
    AllInvalid { meter: String },
    #[error("meter {meter}: record holds {have} hours from the first Monday 00:00, need {need}")]
    SliceTooShort { meter: String, have: usize, need: usize },
    #[error("need at least {FOLD_COUNT} distinct sites, got {0}")]
    FewSites(usize),
    #[error("{path}: bad image file: {msg}")]
    StoreFormat { path: String, msg: String },
}

/// Meter kind, matching the input CSV vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeterType {
    Electricity,
    Chilledwater,
    Steam,
    Hotwater,
}

impl MeterType {
    pub fn parse(s: &str) -> Option<MeterType> {
        match s {
            "electricity" => Some(MeterType::Electricity),
            "chilledwater" => Some(MeterType::Chilledwater),
            "steam" => Some(MeterType::Steam),
            "hotwater" => Some(MeterType::Hotwater),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MeterType::Electricity => "electricity",
            MeterType::Chilledwater => "chilledwater",
            MeterType::Steam => "steam",
            MeterType::Hotwater => "hotwater",
        }
    }

    pub const ALL: [MeterType; 4] = [
        MeterType::Electricity,
        MeterType::Chilledwater,
        MeterType::Steam,
        MeterType::Hotwater,
    ];
}

impl std::fmt::Display for MeterType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One meter's hourly series on a contiguous hour grid.
///
/// `values` and `valid` run in parallel from `start`; hours absent from
/// the source data carry valid = false. After cleaning, every value with
/// valid = true is finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterRecord {
    pub meter_id: String,
    pub site_id: String,
    pub meter_type: MeterType,
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Min-max scaling parameters: x_norm = (x - x_min)/(x_max - x_min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub x_min: f64,
    pub x_max: f64,
}

impl NormParams {
    pub fn denormalize(&self, x: f64) -> f64 {
        x * (self.x_max - self.x_min) + self.x_min
    }
}

/// A normalized meter-year as a 168x52 grid.
///
/// `matrix` is the (168, 52) value grid; cells with validity = true lie in
/// [0,1]. `validity` marks raw-data availability (false = missing or
/// cleaned out); its layout matches the matrix. `week0_start` is the
/// timestamp of row 0, column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyImage {
    pub meter_id: String,
    pub site_id: String,
    pub meter_type: MeterType,
    pub matrix: Tensor,
    pub validity: Vec<bool>,
    pub norm: NormParams,
    pub week0_start: NaiveDateTime,
}

impl EnergyImage {
    /// Validity as a (1, 168, 52) binary grid for the mask-aware ops.
    pub fn validity_grid(&self) -> Tensor {
        let data = self.validity.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Tensor::from_vec(&[1, WEEK_HOURS, YEAR_WEEKS], data).expect("binary")
    }

    pub fn valid_fraction(&self) -> f64 {
        self.validity.iter().filter(|&&v| v).count() as f64 / YEAR_HOURS as f64
    }
}

/// Site-to-fold map; folds partition the site set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FoldAssignment {
    pub by_site: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, site_id: &str) -> Option<usize> {
        self.by_site.get(site_id).copied()
    }

    /// Sites of one fold, sorted.
    pub fn sites_in(&self, fold: usize) -> Vec<&str> {
        self.by_site
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

pub(crate) fn hour_of_week(ts: &NaiveDateTime) -> usize {
    use chrono::{Datelike, Timelike};
    ts.weekday().num_days_from_monday() as usize * 24 + ts.hour() as usize
}

pub(crate) const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub(crate) fn format_ts(ts: &NaiveDateTime) -> String {
    ts.format(TS_FORMAT).to_string()
}
