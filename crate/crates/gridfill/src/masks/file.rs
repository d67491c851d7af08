//! Text format for masks: three header lines, then the grid as 168 rows
//! of 52 '0'/'1' characters.
//!
//! ```text
//! gridfill-mask 1
//! kind <random_days|continuous|irregular>
//! rate <f64>
//! seed <u64>
//! 1111...
//! ```

use super::{MaskError, MaskGrid, MaskKind};
use crate::dataset::{WEEK_HOURS, YEAR_WEEKS};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_mask(mask: &MaskGrid, path: &Path) -> Result<(), MaskError> {
    let mut text = String::with_capacity(64 + WEEK_HOURS * (YEAR_WEEKS + 1));
    text.push_str("gridfill-mask 1\n");
    let _ = writeln!(text, "kind {}", mask.kind);
    let _ = writeln!(text, "rate {}", mask.target_rate);
    let _ = writeln!(text, "seed {}", mask.seed);
    let data = mask.grid.data();
    for row in 0..WEEK_HOURS {
        for col in 0..YEAR_WEEKS {
            text.push(if data[row * YEAR_WEEKS + col] == 1.0 { '1' } else { '0' });
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<MaskGrid, MaskError> {
    let bytes = std::fs::read(path)?;
    parse_mask(&bytes, &path.display().to_string())
}

pub fn parse_mask(bytes: &[u8], label: &str) -> Result<MaskGrid, MaskError> {
    let bad = |msg: String| MaskError::Format {
        path: label.to_string(),
        msg,
    };
    let text = std::str::from_utf8(bytes).map_err(|_| bad("not utf-8".into()))?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String, MaskError> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing \"{key}\" line")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(bad(format!("expected \"{key} ...\", found {line:?}"))),
        }
    };
    if header("gridfill-mask")? != "1" {
        return Err(bad("unsupported format version".into()));
    }
    let kind_str = header("kind")?;
    let kind =
        MaskKind::parse(&kind_str).ok_or_else(|| bad(format!("unknown kind \"{kind_str}\"")))?;
    let rate_str = header("rate")?;
    let target_rate: f64 = rate_str
        .parse()
        .map_err(|e| bad(format!("bad rate \"{rate_str}\": {e}")))?;
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(bad(format!("rate {target_rate} outside [0, 1]")));
    }
    let seed_str = header("seed")?;
    let seed: u64 = seed_str
        .parse()
        .map_err(|e| bad(format!("bad seed \"{seed_str}\": {e}")))?;

    let mut data = Vec::with_capacity(WEEK_HOURS * YEAR_WEEKS);
    for row in 0..WEEK_HOURS {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing grid row {row}")))?;
        if line.len() != YEAR_WEEKS {
            return Err(bad(format!(
                "grid row {row} has {} characters, expected {YEAR_WEEKS}",
                line.len()
            )));
        }
        for ch in line.chars() {
            match ch {
                '0' => data.push(0.0),
                '1' => data.push(1.0),
                _ => return Err(bad(format!("grid row {row} holds {ch:?}"))),
            }
        }
    }
    if lines.next().is_some() {
        return Err(bad("trailing lines after the grid".into()));
    }
    Ok(MaskGrid {
        grid: Tensor::from_vec(&[WEEK_HOURS, YEAR_WEEKS], data).expect("mask shape"),
        kind,
        target_rate,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{continuous_mask, random_day_mask};

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        for mask in [
            random_day_mask(0.2, 17).unwrap(),
            continuous_mask(0.35, 3).unwrap(),
        ] {
            let path = dir.path().join(format!("{}.mask", mask.kind));
            write_mask(&mask, &path).unwrap();
            assert_eq!(read_mask(&path).unwrap(), mask);
        }
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mask = random_day_mask(0.1, 5).unwrap();
        let a = dir.path().join("a.mask");
        let b = dir.path().join("b.mask");
        write_mask(&mask, &a).unwrap();
        write_mask(&mask, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let good = {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.mask");
            write_mask(&random_day_mask(0.1, 5).unwrap(), &path).unwrap();
            std::fs::read(path).unwrap()
        };
        let text = String::from_utf8(good.clone()).unwrap();

        assert!(parse_mask(b"gridfill-mask 2\n", "t").is_err());
        assert!(parse_mask(&good[..good.len() - 60], "t").is_err());
        assert!(parse_mask(format!("{text}1111\n").as_bytes(), "t").is_err());
        assert!(parse_mask(text.replace("kind random_days", "kind x").as_bytes(), "t").is_err());
        assert!(parse_mask(text.replace("rate 0.1", "rate 1.5").as_bytes(), "t").is_err());
        let edit_grid_row = |f: &dyn Fn(&str) -> String| {
            let mut lines: Vec<String> = text.lines().map(String::from).collect();
            lines[10] = f(&lines[10]); // line 10 is inside the grid
            lines.join("\n") + "\n"
        };
        let bad_char = edit_grid_row(&|row| format!("2{}", &row[1..]));
        assert!(parse_mask(bad_char.as_bytes(), "t").is_err());
        let short_row = edit_grid_row(&|row| row[..51].to_string());
        assert!(parse_mask(short_row.as_bytes(), "t").is_err());
    }
}
