//! Site-level fold assignment for 5-round cross-validation.
//!
//! Sites are greedily packed into 5 folds, largest meter count first, each
//! into the currently lightest fold, so no site ever straddles two folds.
//! Round r trains on three folds, validates on fold (3+r) mod 5, and tests
//! on fold (4+r) mod 5.

use super::{DatasetError, EnergyImage, FoldAssignment, FOLD_COUNT};
use crate::rng::derive_seed;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Fold indices used by one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundFolds {
    pub train: Vec<usize>,
    pub val: usize,
    pub test: usize,
}

pub fn round_folds(round: usize) -> RoundFolds {
    let val = (3 + round) % FOLD_COUNT;
    let test = (4 + round) % FOLD_COUNT;
    let train = (0..FOLD_COUNT).filter(|&f| f != val && f != test).collect();
    RoundFolds { train, val, test }
}

/// Assigns each site to one of 5 folds, balancing meter counts: sites are
/// taken largest first (ties ordered by a per-site seeded key) and placed
/// into the fold with the smallest running total.
pub fn split_by_site(images: &[EnergyImage], seed: u64) -> Result<FoldAssignment, DatasetError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for image in images {
        *counts.entry(&image.site_id).or_insert(0) += 1;
    }
    if counts.len() < FOLD_COUNT {
        return Err(DatasetError::FewSites(counts.len()));
    }
    let mut order: Vec<(&str, usize, u64)> = counts
        .iter()
        .map(|(&site, &n)| (site, n, derive_seed(seed, &["split", site])))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(b.0)));

    let mut totals = [0usize; FOLD_COUNT];
    let mut by_site = BTreeMap::new();
    for (site, n, _) in order {
        let fold = (0..FOLD_COUNT).min_by_key(|&f| (totals[f], f)).unwrap();
        totals[fold] += n;
        by_site.insert(site.to_string(), fold);
    }
    Ok(FoldAssignment { by_site })
}

/// Writes `site_id,fold_index` rows, sites in lexicographic order.
pub fn write_folds(assignment: &FoldAssignment, path: &Path) -> Result<(), DatasetError> {
    let mut out = std::fs::File::create(path)?;
    for (site, fold) in &assignment.by_site {
        writeln!(out, "{site},{fold}")?;
    }
    Ok(())
}

pub fn read_folds(path: &Path) -> Result<FoldAssignment, DatasetError> {
    parse_folds(BufReader::new(std::fs::File::open(path)?))
}

pub fn parse_folds<R: std::io::Read>(reader: BufReader<R>) -> Result<FoldAssignment, DatasetError> {
    let mut by_site = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let (site, fold) = line.rsplit_once(',').ok_or(DatasetError::Parse {
            line: lineno,
            msg: "expected site_id,fold_index".into(),
        })?;
        let fold: usize = fold.parse().map_err(|_| DatasetError::Parse {
            line: lineno,
            msg: format!("bad fold index \"{fold}\""),
        })?;
        if fold >= FOLD_COUNT || site.is_empty() {
            return Err(DatasetError::Parse {
                line: lineno,
                msg: format!("fold index {fold} out of range or empty site id"),
            });
        }
        if by_site.insert(site.to_string(), fold).is_some() {
            return Err(DatasetError::Parse {
                line: lineno,
                msg: format!("duplicate site id \"{site}\""),
            });
        }
    }
    Ok(FoldAssignment { by_site })
}
