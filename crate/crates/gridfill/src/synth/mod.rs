//! Synthetic meter fleets: seeded generators for hourly energy series
//! with realistic weekly structure and weather coupling, emitted in the
//! ingestion CSV format so the whole pipeline runs without real data.
//!
//! Every meter mixes a work-week occupancy square wave with a day/night
//! sinusoid; weather-driven types scale with a shared synthetic
//! temperature so heating and cooling meters move in opposite seasons.

use crate::dataset::{format_ts, MeterRecord, MeterType, YEAR_HOURS, WEEK_HOURS};
use crate::parallel::par_map;
use crate::rng::rng_for;
use chrono::{NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("bad synth spec: {0}")]
    BadSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Fleet shape and signal parameters. `weather_amplitude` follows the
/// `MeterType::ALL` order; electricity stays low so those meters remain
/// close to weekly-periodic, while the thermal types swing with the
/// seasons.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_sites: usize,
    pub meters_per_site: usize,
    pub type_mix: Vec<MeterType>,
    pub weather_amplitude: [f64; 4],
    pub noise_sigma: f64,
    pub seed: u64,
    pub start: NaiveDateTime,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_sites: 10,
            meters_per_site: 20,
            type_mix: vec![
                MeterType::Electricity,
                MeterType::Electricity,
                MeterType::Chilledwater,
                MeterType::Steam,
                MeterType::Hotwater,
            ],
            weather_amplitude: [0.05, 0.5, 0.45, 0.45],
            noise_sigma: 0.02,
            seed: 0,
            // A Monday, so the generated year needs no alignment trim.
            start: NaiveDate::from_ymd_opt(2016, 1, 4)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_sites == 0 || self.meters_per_site == 0 {
            return Err(SynthError::BadSpec("fleet must have sites and meters".into()));
        }
        if self.type_mix.is_empty() {
            return Err(SynthError::BadSpec("type_mix must name at least one type".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::BadSpec(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            )));
        }
        if self.weather_amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(SynthError::BadSpec("weather amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    pub fn amplitude(&self, meter_type: MeterType) -> f64 {
        let slot = MeterType::ALL.iter().position(|t| *t == meter_type).unwrap();
        self.weather_amplitude[slot]
    }
}

/// Shared hourly temperature for one fleet, in roughly [-1.5, 1.5]:
/// a yearly sinusoid that bottoms out at the (winter) start, a daily
/// swing, and slow AR(1) weather drift.
fn temperature_series(seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, &["synth", "temperature"]);
    let day_phase: f64 = rng.random_range(0.0..TAU);
    let mut drift = 0.0;
    (0..YEAR_HOURS)
        .map(|t| {
            let e: f64 = rng.sample(StandardNormal);
            drift = 0.98 * drift + 0.04 * e;
            let seasonal = -(TAU * t as f64 / YEAR_HOURS as f64).cos();
            let daily = 0.2 * (TAU * (t % 24) as f64 / 24.0 - day_phase).sin();
            seasonal + daily + drift
        })
        .collect()
}

/// One meter's weekly shape: base load, a work-week occupancy square
/// wave with randomized hours, and a day/night sinusoid. Always > 0.
fn weekly_profile(rng: &mut impl Rng) -> Vec<f64> {
    let base = rng.random_range(0.2..0.5);
    let occ_gain = rng.random_range(0.5..1.0);
    let cycle_gain = rng.random_range(0.1..0.4);
    let weekend_level = rng.random_range(0.2..0.5);
    let work_start = rng.random_range(7..=9);
    let work_end = rng.random_range(17..=19);
    let day_phase: f64 = rng.random_range(0.0..TAU);
    (0..WEEK_HOURS)
        .map(|h| {
            let day = h / 24;
            let hod = h % 24;
            let occupancy = if day < 5 && hod >= work_start && hod < work_end {
                1.0
            } else {
                weekend_level
            };
            let cycle = 0.5 + 0.5 * (TAU * hod as f64 / 24.0 - day_phase).sin();
            base + occ_gain * occupancy + cycle_gain * cycle
        })
        .collect()
}

fn meter_series(
    spec: &SynthSpec,
    temperature: &[f64],
    site_id: &str,
    meter_id: &str,
    meter_type: MeterType,
) -> Vec<f64> {
    let mut rng = rng_for(spec.seed, &["synth", site_id, meter_id]);
    let scale = rng.random_range(20.0..200.0);
    let profile = weekly_profile(&mut rng);
    let amp = spec.amplitude(meter_type);
    (0..YEAR_HOURS)
        .map(|t| {
            let weather = match meter_type {
                MeterType::Electricity => 1.0 + amp * temperature[t],
                MeterType::Chilledwater => 0.15 + amp * temperature[t].max(0.0),
                MeterType::Steam | MeterType::Hotwater => {
                    0.15 + amp * (-temperature[t]).max(0.0)
                }
            };
            let e: f64 = rng.sample(StandardNormal);
            let noise = 1.0 + spec.noise_sigma * e;
            (scale * profile[t % WEEK_HOURS] * weather * noise).max(0.0)
        })
        .collect()
}

/// Generate the whole fleet, deterministically from the spec's seed.
/// Meter ids are `S<site>M<index>`; types cycle through the mix.
pub fn generate_fleet(spec: &SynthSpec) -> Result<Vec<MeterRecord>, SynthError> {
    spec.validate()?;
    let temperature = temperature_series(spec.seed);
    let mut slots = Vec::with_capacity(spec.n_sites * spec.meters_per_site);
    for s in 0..spec.n_sites {
        let site_id = format!("S{:02}", s + 1);
        for m in 0..spec.meters_per_site {
            let meter_id = format!("{}M{:02}", site_id, m + 1);
            let meter_type = spec.type_mix[m % spec.type_mix.len()];
            slots.push((site_id.clone(), meter_id, meter_type));
        }
    }
    let records = par_map(&slots, |(site_id, meter_id, meter_type)| MeterRecord {
        meter_id: meter_id.clone(),
        site_id: site_id.clone(),
        meter_type: *meter_type,
        start: spec.start,
        values: meter_series(spec, &temperature, site_id, meter_id, *meter_type),
        valid: vec![true; YEAR_HOURS],
    });
    Ok(records)
}

/// Write records in the ingestion CSV format, one row per meter-hour.
pub fn write_fleet_csv(records: &[MeterRecord], path: &Path) -> Result<(), SynthError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "timestamp,site_id,meter_id,meter_type,reading")?;
    for r in records {
        for (h, v) in r.values.iter().enumerate() {
            let ts = r.start + chrono::Duration::hours(h as i64);
            writeln!(
                w,
                "{},{},{},{},{}",
                format_ts(&ts),
                r.site_id,
                r.meter_id,
                r.meter_type.as_str(),
                v
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
