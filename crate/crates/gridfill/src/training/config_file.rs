//! Flat key-value config file for training runs. One `key value` pair
//! per line, keys named exactly after the TrainConfig fields; `#` starts
//! a comment. Missing keys fall back to the defaults, unknown or
//! repeated keys are errors.

use super::{TrainConfig, TrainError};
use crate::masks::MaskKind;
use std::collections::BTreeSet;
use std::path::Path;

fn fail(label: &str, msg: String) -> TrainError {
    TrainError::ConfigFormat { path: label.to_string(), msg }
}

fn parse_num<T: std::str::FromStr>(label: &str, key: &str, value: &str) -> Result<T, TrainError> {
    value
        .parse::<T>()
        .map_err(|_| fail(label, format!("bad value {value:?} for {key}")))
}

fn parse_usize_list<const N: usize>(
    label: &str,
    key: &str,
    value: &str,
) -> Result<[usize; N], TrainError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(fail(label, format!("{key} wants {N} comma-separated values, got {value:?}")));
    }
    let mut out = [0usize; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = parse_num(label, key, part)?;
    }
    Ok(out)
}

/// Parse config text. `label` names the source in error messages.
pub fn parse_config(bytes: &[u8], label: &str) -> Result<TrainConfig, TrainError> {
    let text = std::str::from_utf8(bytes).map_err(|_| fail(label, "not utf-8".into()))?;
    let mut config = TrainConfig::default();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| fail(label, format!("line {}: no value for {line:?}", lineno + 1)))?;
        if value.is_empty() {
            return Err(fail(label, format!("line {}: empty value for {key}", lineno + 1)));
        }
        if !seen.insert(key.to_string()) {
            return Err(fail(label, format!("line {}: duplicate key {key}", lineno + 1)));
        }
        match key {
            "learning_rate" => config.learning_rate = parse_num(label, key, value)?,
            "beta1" => config.beta1 = parse_num(label, key, value)?,
            "beta2" => config.beta2 = parse_num(label, key, value)?,
            "epsilon" => config.epsilon = parse_num(label, key, value)?,
            "batch_size" => config.batch_size = parse_num(label, key, value)?,
            "max_epochs" => config.max_epochs = parse_num(label, key, value)?,
            "patience" => config.patience = parse_num(label, key, value)?,
            "hole_weight" => config.hole_weight = parse_num(label, key, value)?,
            "grad_clip" => config.grad_clip = parse_num(label, key, value)?,
            "seed" => config.seed = parse_num(label, key, value)?,
            "mask_kinds" => {
                let mut kinds = Vec::new();
                for part in value.split(',').map(str::trim) {
                    let kind = MaskKind::parse(part)
                        .ok_or_else(|| fail(label, format!("unknown mask kind {part:?}")))?;
                    if kinds.contains(&kind) {
                        return Err(fail(label, format!("mask kind {part} listed twice")));
                    }
                    kinds.push(kind);
                }
                config.mask_kinds = kinds;
            }
            "rate_lo" => config.rate_lo = parse_num(label, key, value)?,
            "rate_hi" => config.rate_hi = parse_num(label, key, value)?,
            "ae1d_channels" => config.ae1d_channels = Some(parse_usize_list(label, key, value)?),
            "ae1d_bottleneck" => config.ae1d_bottleneck = Some(parse_num(label, key, value)?),
            "ae2d_channels" => config.ae2d_channels = Some(parse_usize_list(label, key, value)?),
            "ae2d_bottleneck" => config.ae2d_bottleneck = Some(parse_num(label, key, value)?),
            "pconv_channels" => config.pconv_channels = Some(parse_usize_list(label, key, value)?),
            _ => return Err(fail(label, format!("line {}: unknown key {key}", lineno + 1))),
        }
    }
    config.validate()?;
    Ok(config)
}

/// Render a config as file text. Parsing the output reproduces the
/// config exactly; width overrides appear only when set.
pub fn format_config(config: &TrainConfig) -> String {
    let mut out = String::new();
    let mut line = |key: &str, value: String| {
        out.push_str(key);
        out.push(' ');
        out.push_str(&value);
        out.push('\n');
    };
    line("learning_rate", config.learning_rate.to_string());
    line("beta1", config.beta1.to_string());
    line("beta2", config.beta2.to_string());
    line("epsilon", config.epsilon.to_string());
    line("batch_size", config.batch_size.to_string());
    line("max_epochs", config.max_epochs.to_string());
    line("patience", config.patience.to_string());
    line("hole_weight", config.hole_weight.to_string());
    line("grad_clip", config.grad_clip.to_string());
    line("seed", config.seed.to_string());
    let kinds: Vec<&str> = config.mask_kinds.iter().map(|k| k.as_str()).collect();
    line("mask_kinds", kinds.join(","));
    line("rate_lo", config.rate_lo.to_string());
    line("rate_hi", config.rate_hi.to_string());
    let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    if let Some(c) = config.ae1d_channels {
        line("ae1d_channels", join(&c));
    }
    if let Some(b) = config.ae1d_bottleneck {
        line("ae1d_bottleneck", b.to_string());
    }
    if let Some(c) = config.ae2d_channels {
        line("ae2d_channels", join(&c));
    }
    if let Some(b) = config.ae2d_bottleneck {
        line("ae2d_bottleneck", b.to_string());
    }
    if let Some(c) = config.pconv_channels {
        line("pconv_channels", join(&c));
    }
    out
}

pub fn read_config(path: &Path) -> Result<TrainConfig, TrainError> {
    let bytes = std::fs::read(path)?;
    parse_config(&bytes, &path.display().to_string())
}

pub fn write_config(config: &TrainConfig, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, format_config(config))?;
    Ok(())
}
