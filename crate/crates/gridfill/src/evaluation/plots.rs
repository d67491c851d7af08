//! Plot-data emission: long-form CSVs for boxplots, per-meter overlay
//! traces, and heatmap matrices. Everything is plain text so plotting
//! stays a user-side concern.

use super::{experiment_mask, EvalError, EvalReport, ExperimentModels, ExperimentSpec};
use crate::dataset::{EnergyImage, FoldAssignment, WEEK_HOURS, YEAR_WEEKS};
use crate::masks::MaskKind;
use crate::models::{grid_to_series, impute, model_input};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One meter the overlay and heatmap files should showcase.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSpec {
    pub meter_id: String,
    pub kind: MaskKind,
    pub rate: f64,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn boxplot_csv(report: &EvalReport, third_key: &str) -> String {
    let mut out = format!("model,mask_kind,{third_key},mse,r2\n");
    for r in &report.rows {
        let third = match third_key {
            "rate" => r.rate.to_string(),
            _ => r.meter_type.as_str().to_string(),
        };
        let r2 = r.r2.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.model,
            r.mask_kind.as_str(),
            third,
            r.mse,
            r2
        );
    }
    out
}

/// 168x52 grid as 168 lines of 52 space-separated values.
fn matrix_text(grid: &Tensor) -> String {
    let mut out = String::new();
    for row in 0..WEEK_HOURS {
        for col in 0..YEAR_WEEKS {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", grid.data()[row * YEAR_WEEKS + col]);
        }
        out.push('\n');
    }
    out
}

/// Write all plot data for a finished experiment: two boxplot-ready
/// long-form CSVs from the report, and per example one overlay CSV
/// (hour, truth, one column per model, mask flag) plus a heatmap
/// directory holding the masked input, each model's imputation, and the
/// ground truth as matrix text. Returns the paths written, in order.
pub fn emit_plots(
    images: &[EnergyImage],
    folds: &FoldAssignment,
    models: &ExperimentModels,
    spec: &ExperimentSpec,
    report: &EvalReport,
    examples: &[ExampleSpec],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    if report.rows.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |path: PathBuf, text: String| -> Result<(), EvalError> {
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };

    emit(out_dir.join("box_by_rate.csv"), boxplot_csv(report, "rate"))?;
    emit(out_dir.join("box_by_meter_type.csv"), boxplot_csv(report, "meter_type"))?;

    let archs = models.archs();
    for example in examples {
        let image = images
            .iter()
            .find(|img| img.meter_id == example.meter_id)
            .ok_or_else(|| EvalError::UnknownMeter(example.meter_id.clone()))?;
        let fold = *folds
            .by_site
            .get(&image.site_id)
            .ok_or_else(|| EvalError::UnknownSite(image.site_id.clone()))?;
        let mask = experiment_mask(spec.seed, &image.meter_id, example.kind, example.rate)?;

        let truth = grid_to_series(&image.matrix);
        let mask_series = grid_to_series(&mask.grid);
        let mut model_series = Vec::new();
        let mut imputed_grids = Vec::new();
        for &arch in &archs {
            let bundle = models.get(arch, fold)?;
            let imputation = impute(bundle, image, &mask, false)?;
            model_series.push(grid_to_series(&imputation.matrix));
            imputed_grids.push((arch, imputation.matrix));
        }

        let stem = format!(
            "{}_{}_{}",
            sanitize(&example.meter_id),
            example.kind.as_str(),
            example.rate
        );
        let mut overlay = String::from("time,truth");
        for &arch in &archs {
            let _ = write!(overlay, ",{arch}");
        }
        overlay.push_str(",mask\n");
        for hour in 0..truth.len() {
            let _ = write!(overlay, "{},{}", hour, truth.data()[hour]);
            for series in &model_series {
                let _ = write!(overlay, ",{}", series.data()[hour]);
            }
            let _ = writeln!(overlay, ",{}", mask_series.data()[hour]);
        }
        emit(out_dir.join(format!("overlay_{stem}.csv")), overlay)?;

        let heat_dir = out_dir.join(format!("heatmap_{stem}"));
        std::fs::create_dir_all(&heat_dir)?;
        let (masked_input, _) = model_input(image, &mask);
        emit(heat_dir.join("input.txt"), matrix_text(&masked_input))?;
        emit(heat_dir.join("truth.txt"), matrix_text(&image.matrix))?;
        for (arch, grid) in &imputed_grids {
            emit(heat_dir.join(format!("imputed_{arch}.txt")), matrix_text(grid))?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::super::run_experiment;
    use super::*;
    use crate::dataset::{FoldAssignment, FOLD_COUNT, YEAR_HOURS};
    use crate::models::ModelBundle;
    use crate::testutil::periodic_image;

    fn world() -> (Vec<EnergyImage>, FoldAssignment, ExperimentModels, ExperimentSpec) {
        let images: Vec<EnergyImage> =
            (0..4).map(|i| periodic_image(33, &format!("px{i}"))).collect();
        let mut folds = FoldAssignment::default();
        for (i, img) in images.iter().enumerate() {
            folds.by_site.insert(img.site_id.clone(), i % FOLD_COUNT);
        }
        let mut models = ExperimentModels::new();
        models.insert_for_all_folds(ModelBundle::persistence(), FOLD_COUNT);
        let spec = ExperimentSpec {
            kinds: vec![MaskKind::RandomDays],
            rates: vec![0.1, 0.3],
            seed: 6,
        };
        (images, folds, models, spec)
    }

    #[test]
    fn emits_expected_files_with_expected_shapes() {
        let (images, folds, models, spec) = world();
        let report = run_experiment(&images, &folds, &models, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let examples = vec![ExampleSpec {
            meter_id: "px1".into(),
            kind: MaskKind::RandomDays,
            rate: 0.3,
        }];
        let written =
            emit_plots(&images, &folds, &models, &spec, &report, &examples, dir.path()).unwrap();

        let names: Vec<String> = written
            .iter()
            .map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string())
            .collect();
        assert!(names.contains(&"box_by_rate.csv".to_string()));
        assert!(names.contains(&"box_by_meter_type.csv".to_string()));
        assert!(names.contains(&"overlay_px1_random_days_0.3.csv".to_string()));
        assert!(names.iter().any(|n| n.ends_with("input.txt")));
        assert!(names.iter().any(|n| n.ends_with("imputed_persistence.txt")));
        assert!(names.iter().any(|n| n.ends_with("truth.txt")));

        let overlay =
            std::fs::read_to_string(dir.path().join("overlay_px1_random_days_0.3.csv")).unwrap();
        let lines: Vec<&str> = overlay.lines().collect();
        assert_eq!(lines.len(), 1 + YEAR_HOURS);
        assert_eq!(lines[0], "time,truth,persistence,mask");

        let heat =
            std::fs::read_to_string(dir.path().join("heatmap_px1_random_days_0.3/truth.txt"))
                .unwrap();
        let rows: Vec<&str> = heat.lines().collect();
        assert_eq!(rows.len(), WEEK_HOURS);
        assert!(rows.iter().all(|r| r.split(' ').count() == YEAR_WEEKS));

        let box_csv = std::fs::read_to_string(dir.path().join("box_by_rate.csv")).unwrap();
        assert_eq!(box_csv.lines().count(), 1 + report.rows.len());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (images, folds, models, spec) = world();
        let report = run_experiment(&images, &folds, &models, &spec).unwrap();
        let examples = vec![ExampleSpec {
            meter_id: "px0".into(),
            kind: MaskKind::RandomDays,
            rate: 0.1,
        }];
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut dumps = Vec::new();
        for dir in &dirs {
            let written =
                emit_plots(&images, &folds, &models, &spec, &report, &examples, dir.path())
                    .unwrap();
            let mut dump = Vec::new();
            for path in written {
                let rel = path.strip_prefix(dir.path()).unwrap().display().to_string();
                dump.push((rel, std::fs::read(&path).unwrap()));
            }
            dumps.push(dump);
        }
        assert_eq!(dumps[0], dumps[1]);
    }

    #[test]
    fn unknown_example_meter_is_an_error() {
        let (images, folds, models, spec) = world();
        let report = run_experiment(&images, &folds, &models, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let examples = vec![ExampleSpec {
            meter_id: "nope".into(),
            kind: MaskKind::RandomDays,
            rate: 0.1,
        }];
        assert!(matches!(
            emit_plots(&images, &folds, &models, &spec, &report, &examples, dir.path()),
            Err(EvalError::UnknownMeter(_))
        ));
    }
}
