//! On-disk model format: a fixed-order text manifest, then each
//! parameter tensor as a named binary payload in canonical order.
//! Saving the same bundle twice produces byte-identical files.
//!
//! ```text
//! gridfill-model 1
//! arch <persistence|ae1d|ae2d|pconv>
//! widths <comma-separated, or - for persistence>
//! seed <u64>
//! epochs_run <usize>
//! best_val_loss <f64, or ->
//! data_fingerprint <token, or ->
//! trained <true|false>
//! tensors <count>
//! name <param name>
//! <GFT1 payload>
//! ...
//! ```

use super::{
    Ae1dWidths, Ae2dWidths, Architecture, ModelBundle, ModelError, NetWidths, Network,
    PconvWidths, Provenance,
};
use crate::tensor::Tensor;
use std::path::Path;

/// Upper bound on any single width read from disk; rejects absurd
/// manifests before shape arithmetic can overflow.
const MAX_WIDTH: usize = 1_000_000;

fn widths_string(widths: &NetWidths) -> String {
    let nums: Vec<usize> = match widths {
        NetWidths::Ae1d(w) => {
            let [c0, c1, c2] = w.channels;
            vec![c0, c1, c2, w.bottleneck]
        }
        NetWidths::Ae2d(w) => {
            let [c0, c1] = w.channels;
            vec![c0, c1, w.bottleneck]
        }
        NetWidths::Pconv(w) => w.channels.to_vec(),
    };
    nums.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(arch: Architecture, s: &str) -> Result<NetWidths, String> {
    let nums: Vec<usize> = s
        .split(',')
        .map(|p| p.parse::<usize>().map_err(|e| format!("bad width {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if nums.iter().any(|&n| n == 0 || n > MAX_WIDTH) {
        return Err(format!("widths must be in 1..={MAX_WIDTH}"));
    }
    match (arch, nums.as_slice()) {
        (Architecture::Ae1d, &[c0, c1, c2, b]) => {
            Ok(NetWidths::Ae1d(Ae1dWidths { channels: [c0, c1, c2], bottleneck: b }))
        }
        (Architecture::Ae2d, &[c0, c1, b]) => {
            Ok(NetWidths::Ae2d(Ae2dWidths { channels: [c0, c1], bottleneck: b }))
        }
        (Architecture::Pconv, &[c0, c1, c2, c3]) => {
            Ok(NetWidths::Pconv(PconvWidths { channels: [c0, c1, c2, c3] }))
        }
        _ => Err(format!("{} takes a different width count, got {}", arch, nums.len())),
    }
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<(), ModelError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"gridfill-model 1\n");
    bytes.extend_from_slice(format!("arch {}\n", bundle.arch).as_bytes());
    let widths_line = match (&bundle.net, bundle.arch.trainable()) {
        (Some(net), true) => {
            if net.arch() != bundle.arch {
                return Err(ModelError::ArchMismatch { bundle: bundle.arch, net: net.arch() });
            }
            widths_string(&net.widths())
        }
        (None, false) => "-".into(),
        (Some(_), false) => {
            return Err(ModelError::BadInput {
                arch: "checkpoint",
                msg: "persistence bundle carries network weights".into(),
            })
        }
        (None, true) => return Err(ModelError::NotInitialized { arch: bundle.arch }),
    };
    bytes.extend_from_slice(format!("widths {widths_line}\n").as_bytes());
    let p = &bundle.provenance;
    bytes.extend_from_slice(format!("seed {}\n", p.seed).as_bytes());
    bytes.extend_from_slice(format!("epochs_run {}\n", p.epochs_run).as_bytes());
    let bvl = match p.best_val_loss {
        Some(v) => v.to_string(),
        None => "-".into(),
    };
    bytes.extend_from_slice(format!("best_val_loss {bvl}\n").as_bytes());
    bytes.extend_from_slice(format!("data_fingerprint {}\n", p.data_fingerprint).as_bytes());
    bytes.extend_from_slice(format!("trained {}\n", p.trained).as_bytes());
    match &bundle.net {
        None => bytes.extend_from_slice(b"tensors 0\n"),
        Some(net) => {
            let params = net.params();
            bytes.extend_from_slice(format!("tensors {}\n", params.len()).as_bytes());
            for (name, tensor) in net.param_names().iter().zip(params) {
                bytes.extend_from_slice(format!("name {name}\n").as_bytes());
                tensor.encode(&mut bytes);
            }
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle, ModelError> {
    parse_model(&std::fs::read(path)?, &path.display().to_string())
}

fn manifest_line(
    bytes: &[u8],
    off: &mut usize,
    expect_key: &str,
    label: &str,
) -> Result<String, ModelError> {
    let bad = |msg: String| ModelError::Format {
        path: label.to_string(),
        msg,
    };
    let end = bytes[*off..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad(format!("missing \"{expect_key}\" header line")))?;
    let raw = &bytes[*off..*off + end];
    *off += end + 1;
    let text = std::str::from_utf8(raw)
        .map_err(|_| bad(format!("non-utf8 \"{expect_key}\" header line")))?;
    let (key, value) = text
        .split_once(' ')
        .ok_or_else(|| bad(format!("malformed header line {text:?}")))?;
    if key != expect_key {
        return Err(bad(format!("expected \"{expect_key}\", found \"{key}\"")));
    }
    Ok(value.to_string())
}

pub fn parse_model(bytes: &[u8], label: &str) -> Result<ModelBundle, ModelError> {
    let bad = |msg: String| ModelError::Format {
        path: label.to_string(),
        msg,
    };
    let mut off = 0usize;
    let mut line = |expect_key: &str| manifest_line(bytes, &mut off, expect_key, label);

    if line("gridfill-model")? != "1" {
        return Err(bad("unsupported format version".into()));
    }
    let arch_str = line("arch")?;
    let arch = Architecture::parse(&arch_str)
        .ok_or_else(|| bad(format!("unknown arch \"{arch_str}\"")))?;
    let widths_str = line("widths")?;
    let widths = match (arch.trainable(), widths_str.as_str()) {
        (false, "-") => None,
        (false, other) => return Err(bad(format!("persistence widths must be -, got {other:?}"))),
        (true, s) => Some(parse_widths(arch, s).map_err(&bad)?),
    };
    let seed: u64 = line("seed")?
        .parse()
        .map_err(|e| bad(format!("bad seed: {e}")))?;
    let epochs_run: usize = line("epochs_run")?
        .parse()
        .map_err(|e| bad(format!("bad epochs_run: {e}")))?;
    let bvl_str = line("best_val_loss")?;
    let best_val_loss = if bvl_str == "-" {
        None
    } else {
        let v: f64 = bvl_str
            .parse()
            .map_err(|e| bad(format!("bad best_val_loss: {e}")))?;
        if !v.is_finite() {
            return Err(bad(format!("best_val_loss {v} is not finite")));
        }
        Some(v)
    };
    let data_fingerprint = line("data_fingerprint")?;
    let trained = match line("trained")?.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(bad(format!("trained must be true or false, got {other:?}"))),
    };
    let count: usize = line("tensors")?
        .parse()
        .map_err(|e| bad(format!("bad tensor count: {e}")))?;

    let net = match widths {
        None => {
            if count != 0 {
                return Err(bad(format!("persistence must have 0 tensors, got {count}")));
            }
            None
        }
        Some(widths) => {
            let shapes = Network::param_shapes(&widths);
            if count != shapes.len() {
                return Err(bad(format!(
                    "{arch} needs {} tensors, manifest says {count}",
                    shapes.len()
                )));
            }
            let mut names = Vec::with_capacity(count);
            let mut params = Vec::with_capacity(count);
            for (i, want_shape) in shapes.iter().enumerate() {
                names.push(manifest_line(bytes, &mut off, "name", label)?);
                let (tensor, used) = Tensor::decode(&bytes[off..])
                    .map_err(|e| bad(format!("tensor {i} payload: {e}")))?;
                off += used;
                if tensor.shape() != want_shape.as_slice() {
                    return Err(bad(format!(
                        "tensor {i} shape {:?}, expected {want_shape:?}",
                        tensor.shape()
                    )));
                }
                tensor
                    .check_finite()
                    .map_err(|e| bad(format!("tensor {i}: {e}")))?;
                params.push(tensor);
            }
            let net = Network::from_params(&widths, params);
            for (i, (got, want)) in names.iter().zip(net.param_names()).enumerate() {
                if *got != want {
                    return Err(bad(format!(
                        "tensor {i} named \"{got}\", expected \"{want}\""
                    )));
                }
            }
            Some(net)
        }
    };
    if off != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - off)));
    }
    Ok(ModelBundle {
        arch,
        net,
        provenance: Provenance {
            seed,
            epochs_run,
            best_val_loss,
            data_fingerprint,
            trained,
        },
    })
}
