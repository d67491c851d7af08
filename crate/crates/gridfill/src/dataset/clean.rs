//! Cleaning rules, the modeling-year window, and the missing-data filter.
//!
//! Cleaning only flips validity flags, never stored values. Three rules:
//! constant streaks (runs of one repeated value at least 24 hours long for
//! nonzero values, 48 for zeros), spikes (|x - median| > 10 * IQR over the
//! meter's valid cells), and negative readings (a meter cannot consume
//! negative energy). The modeling year is the first contiguous 8736-hour
//! window starting at the record's first Monday 00:00.

use super::{hour_of_week, DatasetError, MeterRecord, WEEK_HOURS, YEAR_HOURS};

#[derive(Debug, Clone)]
pub struct CleanRules {
    /// Minimum run length of a repeated nonzero value to flag, in hours.
    pub nonzero_streak: usize,
    /// Minimum run length of repeated zeros to flag, in hours.
    pub zero_streak: usize,
    /// Spike threshold multiplier on the interquartile range.
    pub spike_iqr_k: f64,
}

impl Default for CleanRules {
    fn default() -> Self {
        CleanRules {
            nonzero_streak: 24,
            zero_streak: 48,
            spike_iqr_k: 10.0,
        }
    }
}

/// Flags suspect cells invalid. Values are retained untouched.
pub fn clean(record: &MeterRecord, rules: &CleanRules) -> MeterRecord {
    let mut out = record.clone();
    let n = out.values.len();

    for i in 0..n {
        if out.valid[i] && out.values[i] < 0.0 {
            out.valid[i] = false;
        }
    }

    // Constant streaks: maximal runs of equal values over cells still
    // valid; invalid cells break a run.
    let mut i = 0;
    while i < n {
        if !out.valid[i] {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && out.valid[j] && out.values[j] == out.values[i] {
            j += 1;
        }
        let run = j - i;
        let threshold = if out.values[i] == 0.0 {
            rules.zero_streak
        } else {
            rules.nonzero_streak
        };
        if run >= threshold {
            for v in &mut out.valid[i..j] {
                *v = false;
            }
        }
        i = j;
    }

    // Spikes relative to the distribution of the remaining valid cells.
    let mut sorted: Vec<f64> = out
        .values
        .iter()
        .zip(&out.valid)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .collect();
    if sorted.len() >= 4 {
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = quantile(&sorted, 0.5);
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        // A zero IQR would flag every deviation from the median; the
        // streak rule already covers near-constant meters.
        if iqr > 0.0 {
            let limit = rules.spike_iqr_k * iqr;
            for i in 0..n {
                if out.valid[i] && (out.values[i] - median).abs() > limit {
                    out.valid[i] = false;
                }
            }
        }
    }
    out
}

/// Linear-interpolation quantile of an ascending slice (the q(p) at rank
/// p*(n-1) rule, so (1,2,3,4) has median 2.5 and quartiles 1.75 / 3.25).
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Offset of the modeling year inside the record: the first Monday 00:00,
/// requiring 8736 hours from there.
pub fn year_slice(record: &MeterRecord) -> Result<usize, DatasetError> {
    let offset = (WEEK_HOURS - hour_of_week(&record.start)) % WEEK_HOURS;
    let have = record.values.len().saturating_sub(offset);
    if have < YEAR_HOURS {
        return Err(DatasetError::SliceTooShort {
            meter: record.meter_id.clone(),
            have,
            need: YEAR_HOURS,
        });
    }
    Ok(offset)
}

#[derive(Debug)]
pub struct Excluded {
    pub meter_id: String,
    pub reason: String,
}

pub struct FilterOutcome {
    pub kept: Vec<MeterRecord>,
    pub excluded: Vec<Excluded>,
}

/// Keeps records whose invalid fraction over the modeling year is strictly
/// below `threshold` (default 0.05). Records without a full modeling year
/// are excluded with the reason recorded.
pub fn filter_low_missing(records: Vec<MeterRecord>, threshold: f64) -> FilterOutcome {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for record in records {
        match year_slice(&record) {
            Err(e) => excluded.push(Excluded {
                meter_id: record.meter_id.clone(),
                reason: e.to_string(),
            }),
            Ok(offset) => {
                let invalid = record.valid[offset..offset + YEAR_HOURS]
                    .iter()
                    .filter(|&&ok| !ok)
                    .count();
                let frac = invalid as f64 / YEAR_HOURS as f64;
                if frac < threshold {
                    kept.push(record);
                } else {
                    excluded.push(Excluded {
                        meter_id: record.meter_id.clone(),
                        reason: format!(
                            "invalid fraction {frac:.4} not below threshold {threshold}"
                        ),
                    });
                }
            }
        }
    }
    FilterOutcome { kept, excluded }
}
