//! Shared fixtures for unit tests.

use crate::dataset::{EnergyImage, MeterType, NormParams, WEEK_HOURS, YEAR_WEEKS};
use crate::rng::rng_for;
use crate::tensor::Tensor;
use chrono::NaiveDate;
use rand::Rng;

/// A fully valid image with uniform random values in [0, 1).
pub fn test_image(seed: u64, meter_id: &str) -> EnergyImage {
    let mut rng = rng_for(seed, &["testutil", "image"]);
    let mut matrix = Tensor::zeros(&[WEEK_HOURS, YEAR_WEEKS]);
    matrix.data_mut().iter_mut().for_each(|v| *v = rng.random());
    EnergyImage {
        meter_id: meter_id.to_string(),
        site_id: format!("{meter_id}-site"),
        meter_type: MeterType::Electricity,
        matrix,
        validity: vec![true; WEEK_HOURS * YEAR_WEEKS],
        norm: NormParams { x_min: 0.0, x_max: 100.0 },
        week0_start: NaiveDate::from_ymd_opt(2016, 1, 4)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap(),
    }
}

/// A perfectly weekly-periodic image: every week repeats one random
/// 168-hour profile, so any same-hour week is an exact stand-in.
pub fn periodic_image(seed: u64, meter_id: &str) -> EnergyImage {
    let mut image = test_image(seed, meter_id);
    let mut rng = rng_for(seed, &["testutil", "profile"]);
    let profile: Vec<f64> = (0..WEEK_HOURS).map(|_| rng.random()).collect();
    for h in 0..WEEK_HOURS {
        for w in 0..YEAR_WEEKS {
            image.matrix.data_mut()[h * YEAR_WEEKS + w] = profile[h];
        }
    }
    image
}
