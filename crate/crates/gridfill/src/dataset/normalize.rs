//! Min-max scaling and the series/grid reshape.
//!
//! Scaling parameters come from valid cells only, but the affine map is
//! applied to every cell so the grid stays well-defined. Hour t of the
//! modeling year lands at (row = t mod 168, col = t div 168): rows are the
//! time of week, columns the week of the year.

use super::{
    year_slice, DatasetError, EnergyImage, MeterRecord, NormParams, WEEK_HOURS, YEAR_HOURS,
    YEAR_WEEKS,
};
use crate::tensor::Tensor;
use chrono::Duration;

/// Scales values into [0,1] using the min/max over valid cells.
/// A constant series maps to all zeros with x_min = x_max.
pub fn normalize_slice(
    values: &[f64],
    valid: &[bool],
    meter: &str,
) -> Result<(Vec<f64>, NormParams), DatasetError> {
    assert_eq!(values.len(), valid.len());
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for (&v, &ok) in values.iter().zip(valid) {
        if ok {
            x_min = x_min.min(v);
            x_max = x_max.max(v);
        }
    }
    if x_min > x_max {
        return Err(DatasetError::AllInvalid {
            meter: meter.to_string(),
        });
    }
    let range = x_max - x_min;
    let scaled = if range == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|&v| (v - x_min) / range).collect()
    };
    Ok((scaled, NormParams { x_min, x_max }))
}

pub fn denormalize_slice(values: &[f64], params: NormParams) -> Vec<f64> {
    values.iter().map(|&v| params.denormalize(v)).collect()
}

/// Builds the normalized 168x52 grid from a record's modeling year.
pub fn reshape_to_image(record: &MeterRecord) -> Result<EnergyImage, DatasetError> {
    let offset = year_slice(record)?;
    let values = &record.values[offset..offset + YEAR_HOURS];
    let valid = &record.valid[offset..offset + YEAR_HOURS];
    let (scaled, norm) = normalize_slice(values, valid, &record.meter_id)?;

    let mut grid = vec![0.0; YEAR_HOURS];
    let mut validity = vec![false; YEAR_HOURS];
    for t in 0..YEAR_HOURS {
        let idx = (t % WEEK_HOURS) * YEAR_WEEKS + t / WEEK_HOURS;
        grid[idx] = scaled[t];
        validity[idx] = valid[t];
    }
    Ok(EnergyImage {
        meter_id: record.meter_id.clone(),
        site_id: record.site_id.clone(),
        meter_type: record.meter_type,
        matrix: Tensor::from_vec(&[WEEK_HOURS, YEAR_WEEKS], grid).expect("year grid shape"),
        validity,
        norm,
        week0_start: record.start + Duration::hours(offset as i64),
    })
}

/// Inverse of the grid fill: the normalized hourly series and its validity.
pub fn flatten_image(image: &EnergyImage) -> (Vec<f64>, Vec<bool>) {
    let data = image.matrix.data();
    let mut values = vec![0.0; YEAR_HOURS];
    let mut valid = vec![false; YEAR_HOURS];
    for t in 0..YEAR_HOURS {
        let idx = (t % WEEK_HOURS) * YEAR_WEEKS + t / WEEK_HOURS;
        values[t] = data[idx];
        valid[t] = image.validity[idx];
    }
    (values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MeterType;
    use crate::rng::rng_for;
    use chrono::NaiveDateTime;
    use rand::Rng;

    fn monday_record(values: Vec<f64>) -> MeterRecord {
        let valid = vec![true; values.len()];
        MeterRecord {
            meter_id: "m".into(),
            site_id: "s".into(),
            meter_type: MeterType::Electricity,
            start: NaiveDateTime::parse_from_str("2016-01-04T00:00:00", "%Y-%m-%dT%H:%M:%S")
                .unwrap(),
            values,
            valid,
        }
    }

    #[test]
    fn scales_to_unit_range() {
        let (v, p) = normalize_slice(&[0.0, 5.0, 10.0], &[true; 3], "m").unwrap();
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
        assert_eq!(p, NormParams { x_min: 0.0, x_max: 10.0 });
    }

    #[test]
    fn constant_series_maps_to_zero() {
        let (v, p) = normalize_slice(&[3.0, 3.0], &[true; 2], "m").unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert_eq!(p, NormParams { x_min: 3.0, x_max: 3.0 });
        assert_eq!(p.denormalize(0.0), 3.0);
    }

    #[test]
    fn invalid_cells_do_not_set_params() {
        let (v, p) = normalize_slice(&[100.0, 2.0, 4.0], &[false, true, true], "m").unwrap();
        assert_eq!(p, NormParams { x_min: 2.0, x_max: 4.0 });
        assert_eq!(v, vec![49.0, 0.0, 1.0]);
    }

    #[test]
    fn all_invalid_is_an_error() {
        let err = normalize_slice(&[1.0], &[false], "m7").unwrap_err();
        assert!(err.to_string().contains("m7"));
    }

    #[test]
    fn round_trip_within_1e12() {
        let mut rng = rng_for(99, &["normalize-roundtrip"]);
        for _ in 0..1000 {
            let values: Vec<f64> = (0..64).map(|_| rng.random_range(-50.0..150.0)).collect();
            let valid = vec![true; values.len()];
            let (scaled, p) = normalize_slice(&values, &valid, "m").unwrap();
            let back = denormalize_slice(&scaled, p);
            for (a, b) in values.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hour_to_cell_mapping() {
        let mut values = vec![0.0; YEAR_HOURS];
        values[0] = 10.0;
        values[167] = 20.0;
        values[168] = 30.0;
        values[8735] = 40.0;
        let image = reshape_to_image(&monday_record(values)).unwrap();
        assert_eq!(image.matrix.shape(), &[168, 52]);
        assert_eq!(image.matrix.data()[0], 0.25); // (0,0) <- t=0
        assert_eq!(image.matrix.data()[167 * 52], 0.5); // (167,0) <- t=167
        assert_eq!(image.matrix.data()[1], 0.75); // (0,1) <- t=168
        assert_eq!(image.matrix.data()[167 * 52 + 51], 1.0); // (167,51) <- t=8735
    }

    #[test]
    fn flatten_inverts_reshape() {
        let mut rng = rng_for(7, &["flatten"]);
        let values: Vec<f64> = (0..YEAR_HOURS).map(|_| rng.random_range(0.0..9.0)).collect();
        let mut record = monday_record(values.clone());
        record.valid[1234] = false;
        let image = reshape_to_image(&record).unwrap();
        let (flat, valid) = flatten_image(&image);
        assert!(!valid[1234]);
        assert_eq!(valid.iter().filter(|&&v| !v).count(), 1);
        let back = denormalize_slice(&flat, image.norm);
        for (t, (a, b)) in values.iter().zip(&back).enumerate() {
            assert!((a - b).abs() <= 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn week0_start_skips_to_monday() {
        let mut record = monday_record(vec![1.0; YEAR_HOURS + 50]);
        record.values[43] = 2.0; // make it non-constant
        record.start =
            NaiveDateTime::parse_from_str("2016-01-02T05:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
        let image = reshape_to_image(&record).unwrap();
        assert_eq!(
            image.week0_start,
            NaiveDateTime::parse_from_str("2016-01-04T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap()
        );
    }
}
