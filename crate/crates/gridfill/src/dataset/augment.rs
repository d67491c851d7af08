//! Training-set augmentation: circular time shift and vertical flip.
//!
//! Each image expands fourfold: original, shifted, flipped, and
//! shifted+flipped. The shift moves the flattened series forward by a
//! per-meter random 1..=167 hours (validity moves with the values); the
//! flip reflects valid cells through the middle of the unit range.

use super::{flatten_image, EnergyImage, WEEK_HOURS, YEAR_HOURS, YEAR_WEEKS};
use crate::rng::rng_for;
use rand::Rng;

/// Circularly shifts the flattened series forward by `hours`:
/// cell t moves to (t + hours) mod 8736.
pub fn shift_image(image: &EnergyImage, hours: usize) -> EnergyImage {
    let (values, valid) = flatten_image(image);
    let mut out = image.clone();
    let grid = out.matrix.data_mut();
    for t in 0..YEAR_HOURS {
        let dst = (t + hours) % YEAR_HOURS;
        let idx = (dst % WEEK_HOURS) * YEAR_WEEKS + dst / WEEK_HOURS;
        grid[idx] = values[t];
        out.validity[idx] = valid[t];
    }
    out
}

/// Reflects every valid cell x to 1 - x; invalid cells are untouched.
pub fn flip_image(image: &EnergyImage) -> EnergyImage {
    let mut out = image.clone();
    let grid = out.matrix.data_mut();
    for (cell, &ok) in grid.iter_mut().zip(&out.validity) {
        if ok {
            *cell = 1.0 - *cell;
        }
    }
    out
}

/// Expands images fourfold. The shift amount is drawn per meter id from
/// `seed`, so reruns and reorderings reproduce the same outputs.
pub fn augment(images: &[EnergyImage], seed: u64) -> Vec<EnergyImage> {
    let mut out = Vec::with_capacity(images.len() * 4);
    for image in images {
        let mut rng = rng_for(seed, &["augment", "shift", &image.meter_id]);
        let u = rng.random_range(1..=WEEK_HOURS - 1);
        let shifted = shift_image(image, u);
        out.push(image.clone());
        out.push(flip_image(image));
        out.push(flip_image(&shifted));
        out.push(shifted);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{reshape_to_image, MeterRecord, MeterType, NormParams};
    use crate::rng::rng_for;
    use crate::tensor::Tensor;
    use chrono::NaiveDateTime;
    use rand::Rng;

    /// Cells drawn straight from the RNG sit on the 2^-53 lattice, where
    /// 1 - (1 - x) is exact in f64.
    fn random_image(tag: &str) -> EnergyImage {
        let mut rng = rng_for(11, &["augment-test", tag]);
        let data: Vec<f64> = (0..YEAR_HOURS).map(|_| rng.random()).collect();
        let mut validity = vec![true; YEAR_HOURS];
        for _ in 0..100 {
            validity[rng.random_range(0..YEAR_HOURS)] = false;
        }
        EnergyImage {
            meter_id: format!("m-{tag}"),
            site_id: "s".into(),
            meter_type: MeterType::Electricity,
            matrix: Tensor::from_vec(&[168, 52], data).unwrap(),
            validity,
            norm: NormParams { x_min: 0.0, x_max: 1.0 },
            week0_start: NaiveDateTime::parse_from_str(
                "2016-01-04T00:00:00",
                "%Y-%m-%dT%H:%M:%S",
            )
            .unwrap(),
        }
    }

    #[test]
    fn flip_is_an_involution() {
        let image = random_image("flip");
        assert_eq!(flip_image(&flip_image(&image)), image);
    }

    /// Off the 2^-53 lattice (e.g. after min-max scaling) the double flip
    /// can lose the last mantissa bit, never more.
    #[test]
    fn flip_twice_within_an_ulp_on_arbitrary_values() {
        let mut rng = rng_for(11, &["augment-test", "offgrid"]);
        let values: Vec<f64> = (0..YEAR_HOURS).map(|_| rng.random_range(0.0..7.0)).collect();
        let record = MeterRecord {
            meter_id: "m".into(),
            site_id: "s".into(),
            meter_type: MeterType::Electricity,
            start: NaiveDateTime::parse_from_str("2016-01-04T00:00:00", "%Y-%m-%dT%H:%M:%S")
                .unwrap(),
            valid: vec![true; values.len()],
            values,
        };
        let image = reshape_to_image(&record).unwrap();
        let round = flip_image(&flip_image(&image));
        for (a, b) in round.matrix.data().iter().zip(image.matrix.data()) {
            assert!((a - b).abs() <= f64::EPSILON / 2.0, "{a} vs {b}");
        }
    }

    #[test]
    fn flip_reflects_cell_values() {
        let mut image = random_image("flip-val");
        image.matrix.data_mut()[0] = 0.3;
        image.validity[0] = true;
        assert_eq!(flip_image(&image).matrix.data()[0], 0.7);
    }

    #[test]
    fn shift_moves_cells_forward_with_validity() {
        let image = random_image("shift");
        let shifted = shift_image(&image, 5);
        let (values, valid) = flatten_image(&image);
        let (svalues, svalid) = flatten_image(&shifted);
        for t in 0..YEAR_HOURS {
            assert_eq!(svalues[(t + 5) % YEAR_HOURS], values[t]);
            assert_eq!(svalid[(t + 5) % YEAR_HOURS], valid[t]);
        }
    }

    #[test]
    fn opposite_shifts_cancel() {
        let image = random_image("shift-inv");
        let round = shift_image(&shift_image(&image, 123), YEAR_HOURS - 123);
        assert_eq!(round, image);
    }

    #[test]
    fn fourfold_and_deterministic() {
        let images = vec![random_image("a"), random_image("b"), random_image("c")];
        let first = augment(&images, 42);
        assert_eq!(first.len(), 12);
        assert_eq!(first[0], images[0]);
        assert_eq!(augment(&images, 42), first);
        for image in &first {
            for (cell, &ok) in image.matrix.data().iter().zip(&image.validity) {
                if ok {
                    assert!((0.0..=1.0).contains(cell));
                }
            }
        }
        // flip(shift) composes the other two members of the quadruple
        assert_eq!(first[2], flip_image(&first[3]));
    }
}
