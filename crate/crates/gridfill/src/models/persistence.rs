//! Weekly-persistence baseline: each hole copies the same hour-of-week
//! from the nearest earlier observed week, falling back to the nearest
//! later observed week when nothing earlier exists.

use crate::dataset::EnergyImage;
use crate::masks::MaskGrid;
use super::{CellSource, Imputation, ModelError};

/// Fill the mask's holes by weekly persistence. Consults only the given
/// mask: callers decide whether raw-invalid cells count as observed by
/// combining validity into the mask beforehand.
pub fn persistence_impute(
    image: &EnergyImage,
    mask: &MaskGrid,
) -> Result<Imputation, ModelError> {
    let (rows, cols) = super::check_grids(image, mask)?;
    let mut matrix = image.matrix.clone();
    let mut source = vec![CellSource::Observed; rows * cols];
    for h in 0..rows {
        let observed: Vec<usize> = (0..cols)
            .filter(|&w| mask.grid.data()[h * cols + w] == 1.0)
            .collect();
        if observed.is_empty() {
            return Err(ModelError::RowAllMissing { row: h });
        }
        for w in 0..cols {
            if mask.grid.data()[h * cols + w] == 1.0 {
                continue;
            }
            let src = match observed.iter().rev().find(|&&o| o < w) {
                Some(&earlier) => earlier,
                None => *observed.iter().find(|&&o| o > w).expect("row has observed weeks"),
            };
            matrix.data_mut()[h * cols + w] = image.matrix.data()[h * cols + src];
            source[h * cols + w] = CellSource::Imputed;
        }
    }
    Ok(Imputation { matrix, source })
}
