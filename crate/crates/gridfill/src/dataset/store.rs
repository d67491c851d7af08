//! On-disk format for processed meter-years.
//!
//! One file per image: a fixed-order text header, then the value and
//! validity grids as two binary tensor payloads. Writing the same image
//! twice produces byte-identical files. Filenames percent-encode anything
//! outside [A-Za-z0-9._-] so arbitrary meter ids stay filesystem-safe.
//!
//! ```text
//! gridfill-image 1
//! meter_id <id>
//! site_id <id>
//! meter_type <electricity|chilledwater|steam|hotwater>
//! week0_start <YYYY-MM-DDTHH:MM:SS>
//! x_min <f64>
//! x_max <f64>
//! tensors 2
//! <GFT1 matrix (168,52)><GFT1 validity (168,52), cells 0 or 1>
//! ```

use super::{
    format_ts, DatasetError, EnergyImage, MeterType, NormParams, TS_FORMAT, WEEK_HOURS, YEAR_WEEKS,
};
use crate::tensor::Tensor;
use chrono::NaiveDateTime;
use std::path::Path;

/// Filesystem-safe name for a meter's image file.
pub fn image_filename(meter_id: &str) -> String {
    let mut name = String::with_capacity(meter_id.len() + 4);
    for &b in meter_id.as_bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'.' | b'_' | b'-' => {
                name.push(b as char)
            }
            _ => name.push_str(&format!("%{b:02X}")),
        }
    }
    name.push_str(".gfi");
    name
}

pub fn write_image(image: &EnergyImage, path: &Path) -> Result<(), DatasetError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"gridfill-image 1\n");
    bytes.extend_from_slice(format!("meter_id {}\n", image.meter_id).as_bytes());
    bytes.extend_from_slice(format!("site_id {}\n", image.site_id).as_bytes());
    bytes.extend_from_slice(format!("meter_type {}\n", image.meter_type).as_bytes());
    bytes.extend_from_slice(
        format!("week0_start {}\n", format_ts(&image.week0_start)).as_bytes(),
    );
    bytes.extend_from_slice(format!("x_min {}\n", image.norm.x_min).as_bytes());
    bytes.extend_from_slice(format!("x_max {}\n", image.norm.x_max).as_bytes());
    bytes.extend_from_slice(b"tensors 2\n");
    image.matrix.encode(&mut bytes);
    let validity: Vec<f64> = image.validity.iter().map(|&v| v as u8 as f64).collect();
    Tensor::from_vec(&[WEEK_HOURS, YEAR_WEEKS], validity)
        .expect("validity grid shape")
        .encode(&mut bytes);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<EnergyImage, DatasetError> {
    parse_image(&std::fs::read(path)?, &path.display().to_string())
}

pub fn parse_image(bytes: &[u8], label: &str) -> Result<EnergyImage, DatasetError> {
    let bad = |msg: String| DatasetError::StoreFormat {
        path: label.to_string(),
        msg,
    };
    let mut off = 0usize;
    let mut line = |expect_key: &str| -> Result<String, DatasetError> {
        let end = bytes[off..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(format!("missing \"{expect_key}\" header line")))?;
        let raw = &bytes[off..off + end];
        off += end + 1;
        let text = std::str::from_utf8(raw)
            .map_err(|_| bad(format!("non-utf8 \"{expect_key}\" header line")))?;
        let (key, value) = text
            .split_once(' ')
            .ok_or_else(|| bad(format!("malformed header line {text:?}")))?;
        if key != expect_key {
            return Err(bad(format!("expected \"{expect_key}\", found \"{key}\"")));
        }
        Ok(value.to_string())
    };

    if line("gridfill-image")? != "1" {
        return Err(bad("unsupported format version".into()));
    }
    let meter_id = line("meter_id")?;
    let site_id = line("site_id")?;
    let type_str = line("meter_type")?;
    let meter_type = MeterType::parse(&type_str)
        .ok_or_else(|| bad(format!("unknown meter_type \"{type_str}\"")))?;
    let ts_str = line("week0_start")?;
    let week0_start = NaiveDateTime::parse_from_str(&ts_str, TS_FORMAT)
        .map_err(|e| bad(format!("bad week0_start \"{ts_str}\": {e}")))?;
    let x_min: f64 = line("x_min")?
        .parse()
        .map_err(|e| bad(format!("bad x_min: {e}")))?;
    let x_max: f64 = line("x_max")?
        .parse()
        .map_err(|e| bad(format!("bad x_max: {e}")))?;
    if !x_min.is_finite() || !x_max.is_finite() || x_min > x_max {
        return Err(bad(format!("invalid range x_min {x_min}, x_max {x_max}")));
    }
    if line("tensors")? != "2" {
        return Err(bad("expected 2 tensor payloads".into()));
    }

    let (matrix, used) =
        Tensor::decode(&bytes[off..]).map_err(|e| bad(format!("matrix payload: {e}")))?;
    off += used;
    let (validity_t, used) =
        Tensor::decode(&bytes[off..]).map_err(|e| bad(format!("validity payload: {e}")))?;
    off += used;
    if off != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - off)));
    }
    let want = [WEEK_HOURS, YEAR_WEEKS];
    if matrix.shape() != want || validity_t.shape() != want {
        return Err(bad(format!(
            "grid shapes {:?} / {:?}, expected {want:?}",
            matrix.shape(),
            validity_t.shape()
        )));
    }
    let mut validity = Vec::with_capacity(validity_t.len());
    for &v in validity_t.data() {
        match v {
            v if v == 0.0 => validity.push(false),
            v if v == 1.0 => validity.push(true),
            _ => return Err(bad(format!("validity cell {v} is not 0 or 1"))),
        }
    }
    Ok(EnergyImage {
        meter_id,
        site_id,
        meter_type,
        matrix,
        validity,
        norm: NormParams { x_min, x_max },
        week0_start,
    })
}
