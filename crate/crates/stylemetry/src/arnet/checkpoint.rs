//! Bit-exact model checkpoints.
//!
//! Layout, all ASCII until the separator:
//!
//! ```text
//! ARNETCKPT1\n
//! key=value key=value ...\n        (config, keys sorted)
//! 0:driver_a,1:driver_b\n          (label map; empty line if unset)
//! scaler.mu 35,1 0 140\n           (per tensor: name d0,d1 offset nbytes)
//! ...\n
//! \0
//! <little-endian f32 blobs, concatenated in header order>
//! ```
//!
//! Tensor lines appear in a fixed order: the two input-scaler vectors, then
//! every parameter in canonical order; 1-D tensors are written with a
//! trailing dimension of 1. Offsets are relative to the first byte after the
//! separator and must be contiguous. Values are stored as 32-bit floats, so
//! save -> load -> save reproduces the file byte for byte and a loaded model
//! matches the original to f32 precision.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Param;

use super::{ArnetConfig, ArnetModel, Mode};

const MAGIC: &str = "ARNETCKPT1";

pub fn save_model(model: &ArnetModel, path: &Path) -> Result<()> {
    let bytes = serialize_model(model)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ArnetModel> {
    let bytes = fs::read(path)?;
    deserialize_model(&bytes)
}

pub fn serialize_model(model: &ArnetModel) -> Result<Vec<u8>> {
    for (i, driver) in model.label_map.iter().enumerate() {
        if driver.contains(',') || driver.contains(':') || driver.contains('\n') {
            return Err(Error::Checkpoint(format!(
                "driver id {driver:?} (class {i}) contains a reserved character"
            )));
        }
    }

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&config_line(&model.config));
    header.push('\n');
    let labels: Vec<String> = model
        .label_map
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{i}:{d}"))
        .collect();
    header.push_str(&labels.join(","));
    header.push('\n');

    let mut entries: Vec<(&str, usize, usize, &[f64])> = vec![
        ("scaler.mu", model.scaler.mu.len(), 1, &model.scaler.mu),
        ("scaler.sigma", model.scaler.sigma.len(), 1, &model.scaler.sigma),
    ];
    let params = model.params();
    for p in &params {
        let (d0, d1) = tensor_dims(p);
        entries.push((&p.name, d0, d1, &p.value.data));
    }

    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, d0, d1, data) in entries {
        let nbytes = d0 * d1 * 4;
        header.push_str(&format!("{name} {d0},{d1} {offset} {nbytes}\n"));
        for &v in data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += nbytes;
    }

    let mut out = header.into_bytes();
    out.push(0);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<ArnetModel> {
    let sep = bytes
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| Error::Checkpoint("missing header separator".into()))?;
    let header = std::str::from_utf8(&bytes[..sep])
        .map_err(|_| Error::Checkpoint("header is not valid UTF-8".into()))?;
    let blob = &bytes[sep + 1..];

    let mut lines = header.lines();
    match lines.next() {
        Some(MAGIC) => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "bad magic {:?}, expected {MAGIC:?}",
                other.unwrap_or("")
            )))
        }
    }
    let config = parse_config_line(
        lines.next().ok_or_else(|| Error::Checkpoint("missing config line".into()))?,
    )?;
    let label_line =
        lines.next().ok_or_else(|| Error::Checkpoint("missing label map line".into()))?;
    let label_map = parse_label_line(label_line, config.n_classes)?;

    let mut model = ArnetModel::zeros(config)?;
    model.label_map = label_map;
    let mut offset = 0usize;
    let mu_len = model.scaler.mu.len();
    offset += fill_tensor(lines.next(), "scaler.mu", mu_len, 1, offset, blob, &mut model.scaler.mu)?;
    offset +=
        fill_tensor(lines.next(), "scaler.sigma", mu_len, 1, offset, blob, &mut model.scaler.sigma)?;
    if model.scaler.sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::Checkpoint("scaler.sigma holds a non-positive value".into()));
    }
    for p in model.params_mut() {
        let (d0, d1) = tensor_dims(p);
        let name = p.name.clone();
        offset += fill_tensor(lines.next(), &name, d0, d1, offset, blob, &mut p.value.data)?;
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Checkpoint(format!("unexpected trailing header line {extra:?}")));
    }
    if blob.len() != offset {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, header describes {offset}",
            blob.len()
        )));
    }
    Ok(model)
}

/// Validates one tensor line against the expected name/dims/offset, copies
/// the f32 payload out of `blob`, and returns the byte count consumed.
fn fill_tensor(
    line: Option<&str>,
    name: &str,
    d0: usize,
    d1: usize,
    offset: usize,
    blob: &[u8],
    out: &mut [f64],
) -> Result<usize> {
    let line =
        line.ok_or_else(|| Error::Checkpoint(format!("missing tensor line for {name}")))?;
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 4 {
        return Err(Error::Checkpoint(format!("malformed tensor line {line:?}")));
    }
    if fields[0] != name {
        return Err(Error::Checkpoint(format!(
            "tensor {:?} out of order, expected {name:?}",
            fields[0]
        )));
    }
    if fields[1] != format!("{d0},{d1}") {
        return Err(Error::Checkpoint(format!(
            "tensor {name} has dims {}, expected {d0},{d1}",
            fields[1]
        )));
    }
    let file_offset: usize = fields[2]
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad offset in line {line:?}")))?;
    let nbytes: usize = fields[3]
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad byte count in line {line:?}")))?;
    if file_offset != offset || nbytes != d0 * d1 * 4 {
        return Err(Error::Checkpoint(format!(
            "tensor {name} is not contiguous at offset {offset}"
        )));
    }
    if offset + nbytes > blob.len() {
        return Err(Error::Checkpoint(format!(
            "blob truncated: tensor {name} needs bytes {}..{}, blob has {}",
            offset,
            offset + nbytes,
            blob.len()
        )));
    }
    debug_assert_eq!(out.len(), d0 * d1);
    for (i, v) in out.iter_mut().enumerate() {
        let at = offset + i * 4;
        let raw = f32::from_le_bytes([blob[at], blob[at + 1], blob[at + 2], blob[at + 3]]);
        if !raw.is_finite() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} holds a non-finite value at index {i}"
            )));
        }
        *v = raw as f64;
    }
    Ok(nbytes)
}

/// (d0, d1) with 1-D tensors widened to a trailing 1.
fn tensor_dims(p: &Param) -> (usize, usize) {
    match p.value.shape.as_slice() {
        [d0] => (*d0, 1),
        [d0, d1] => (*d0, *d1),
        other => unreachable!("tensor {} has rank {}", p.name, other.len()),
    }
}

fn config_line(cfg: &ArnetConfig) -> String {
    format!(
        "batch_size={} bottleneck_units={} detach_autoencoder={} dropout_p={} eps={} \
         gru1_units={} gru2_units={} lambda={} lr={} max_epochs={} mode={} n_classes={} \
         patience={} rho={} seed={}",
        cfg.batch_size,
        cfg.bottleneck_units,
        cfg.detach_autoencoder,
        cfg.dropout_p,
        cfg.eps,
        cfg.gru1_units,
        cfg.gru2_units,
        cfg.lambda,
        cfg.lr,
        cfg.max_epochs,
        cfg.mode,
        cfg.n_classes,
        cfg.patience,
        cfg.rho,
        cfg.seed
    )
}

fn parse_config_line(line: &str) -> Result<ArnetConfig> {
    // Start from placeholders; every field must be overwritten exactly once.
    let mut cfg = ArnetConfig::full(1);
    let mut seen = Vec::new();
    for pair in line.split(' ') {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed config entry {pair:?}")))?;
        if seen.contains(&key) {
            return Err(Error::Checkpoint(format!("duplicate config key {key:?}")));
        }
        seen.push(key);
        match key {
            "batch_size" => cfg.batch_size = parse_value(key, value)?,
            "bottleneck_units" => cfg.bottleneck_units = parse_value(key, value)?,
            "detach_autoencoder" => cfg.detach_autoencoder = parse_value(key, value)?,
            "dropout_p" => cfg.dropout_p = parse_value(key, value)?,
            "eps" => cfg.eps = parse_value(key, value)?,
            "gru1_units" => cfg.gru1_units = parse_value(key, value)?,
            "gru2_units" => cfg.gru2_units = parse_value(key, value)?,
            "lambda" => cfg.lambda = parse_value(key, value)?,
            "lr" => cfg.lr = parse_value(key, value)?,
            "max_epochs" => cfg.max_epochs = parse_value(key, value)?,
            "mode" => cfg.mode = Mode::from_str(value)?,
            "n_classes" => cfg.n_classes = parse_value(key, value)?,
            "patience" => cfg.patience = parse_value(key, value)?,
            "rho" => cfg.rho = parse_value(key, value)?,
            "seed" => cfg.seed = parse_value(key, value)?,
            other => return Err(Error::Checkpoint(format!("unknown config key {other:?}"))),
        }
    }
    const REQUIRED: [&str; 15] = [
        "batch_size",
        "bottleneck_units",
        "detach_autoencoder",
        "dropout_p",
        "eps",
        "gru1_units",
        "gru2_units",
        "lambda",
        "lr",
        "max_epochs",
        "mode",
        "n_classes",
        "patience",
        "rho",
        "seed",
    ];
    for key in REQUIRED {
        if !seen.contains(&key) {
            return Err(Error::Checkpoint(format!("config key {key:?} is missing")));
        }
    }
    Ok(cfg)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for config key {key:?}: {value:?}")))
}

fn parse_label_line(line: &str, n_classes: usize) -> Result<Vec<String>> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, entry) in line.split(',').enumerate() {
        let (index, driver) = entry
            .split_once(':')
            .ok_or_else(|| Error::Checkpoint(format!("malformed label entry {entry:?}")))?;
        if index.parse::<usize>().ok() != Some(i) {
            return Err(Error::Checkpoint(format!(
                "label entry {entry:?} out of order, expected class {i}"
            )));
        }
        out.push(driver.to_string());
    }
    if out.len() != n_classes {
        return Err(Error::Checkpoint(format!(
            "label map has {} entries for {n_classes} classes",
            out.len()
        )));
    }
    Ok(out)
}
