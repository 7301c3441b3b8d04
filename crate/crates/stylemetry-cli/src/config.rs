//! Three-layer option resolution: command-line flags override config-file
//! values, which override built-in defaults. The resolved value of every
//! option a command consumes is logged to stderr for auditability.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use stylemetry::arnet::Mode;

use crate::CliError;

/// Optional overrides loaded from a `key=value` config file. Every field
/// mirrors a training, featurization, or benchmark option; unknown keys
/// are rejected so typos cannot silently fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub gru1_units: Option<usize>,
    pub gru2_units: Option<usize>,
    pub bottleneck_units: Option<usize>,
    pub dropout_p: Option<f64>,
    pub lambda: Option<f64>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub rho: Option<f64>,
    pub eps: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub detach_autoencoder: Option<bool>,
    pub val_fraction: Option<f64>,
    pub segment_len: Option<usize>,
    pub frame_len: Option<usize>,
    pub max_gap: Option<i64>,
    pub groups: Option<usize>,
    pub repeats: Option<usize>,
    pub preference: Option<f64>,
    pub trips_per_driver_cap: Option<usize>,
    pub damping: Option<f64>,
    pub ap_max_iter: Option<usize>,
    pub ap_convergence_iter: Option<usize>,
}

impl RunConfig {
    /// Loads a config file, or the empty overrides when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!(
            "cannot read config file {}: {e}",
            path.display()
        )))?;
        parse_run_config(&text)
            .map_err(|msg| CliError::validation(format!("config file {}: {msg}", path.display())))
    }
}

fn parse_run_config(text: &str) -> Result<RunConfig, String> {
    fn set<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), String>
    where
        T::Err: Display,
    {
        if slot.is_some() {
            return Err(format!("duplicate key {key}"));
        }
        *slot = Some(
            value
                .parse::<T>()
                .map_err(|e| format!("bad value {value:?} for {key}: {e}"))?,
        );
        Ok(())
    }

    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let result = match key {
            "mode" => set(&mut cfg.mode, key, value),
            "seed" => set(&mut cfg.seed, key, value),
            "gru1_units" => set(&mut cfg.gru1_units, key, value),
            "gru2_units" => set(&mut cfg.gru2_units, key, value),
            "bottleneck_units" => set(&mut cfg.bottleneck_units, key, value),
            "dropout_p" => set(&mut cfg.dropout_p, key, value),
            "lambda" => set(&mut cfg.lambda, key, value),
            "batch_size" => set(&mut cfg.batch_size, key, value),
            "lr" => set(&mut cfg.lr, key, value),
            "rho" => set(&mut cfg.rho, key, value),
            "eps" => set(&mut cfg.eps, key, value),
            "max_epochs" => set(&mut cfg.max_epochs, key, value),
            "patience" => set(&mut cfg.patience, key, value),
            "detach_autoencoder" => set(&mut cfg.detach_autoencoder, key, value),
            "val_fraction" => set(&mut cfg.val_fraction, key, value),
            "segment_len" => set(&mut cfg.segment_len, key, value),
            "frame_len" => set(&mut cfg.frame_len, key, value),
            "max_gap" => set(&mut cfg.max_gap, key, value),
            "groups" => set(&mut cfg.groups, key, value),
            "repeats" => set(&mut cfg.repeats, key, value),
            "preference" => set(&mut cfg.preference, key, value),
            "trips_per_driver_cap" => set(&mut cfg.trips_per_driver_cap, key, value),
            "damping" => set(&mut cfg.damping, key, value),
            "ap_max_iter" => set(&mut cfg.ap_max_iter, key, value),
            "ap_convergence_iter" => set(&mut cfg.ap_convergence_iter, key, value),
            other => Err(format!("unknown key {other}")),
        };
        result.map_err(|msg| format!("line {}: {msg}", i + 1))?;
    }
    Ok(cfg)
}

/// Picks flag, then config-file value, then default, and logs the winner
/// with its source.
pub fn pick<T: Display + Clone>(name: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
    let (value, source) = match (flag, file) {
        (Some(v), _) => (v, "flag"),
        (None, Some(v)) => (v, "config"),
        (None, None) => (default, "default"),
    };
    eprintln!("config: {name}={value} ({source})");
    value
}

/// Like [`pick`] but without a built-in default; errors name the flag.
pub fn pick_required<T: Display + Clone>(
    name: &str,
    flag: Option<T>,
    file: Option<T>,
) -> Result<T, CliError> {
    let (value, source) = match (flag, file) {
        (Some(v), _) => (v, "flag"),
        (None, Some(v)) => (v, "config"),
        (None, None) => {
            return Err(CliError::validation(format!(
                "missing required option --{name} (not set by flag or config file)"
            )))
        }
    };
    eprintln!("config: {name}={value} ({source})");
    Ok(value)
}

/// Optional value that stays optional: flag wins, then config file.
pub fn pick_optional<T: Display + Clone>(name: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
    let (value, source) = match (flag, file) {
        (Some(v), _) => (Some(v), "flag"),
        (None, Some(v)) => (Some(v), "config"),
        (None, None) => (None, "default"),
    };
    match &value {
        Some(v) => eprintln!("config: {name}={v} ({source})"),
        None => eprintln!("config: {name}=unset ({source})"),
    }
    value
}

/// Resolves the RNG seed: flag, config file, the STYLEMETRY_SEED
/// environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(v) = flag {
        eprintln!("config: seed={v} (flag)");
        return Ok(v);
    }
    if let Some(v) = file {
        eprintln!("config: seed={v} (config)");
        return Ok(v);
    }
    if let Ok(raw) = std::env::var("STYLEMETRY_SEED") {
        let v = raw.parse::<u64>().map_err(|e| {
            CliError::validation(format!("STYLEMETRY_SEED holds a bad seed {raw:?}: {e}"))
        })?;
        eprintln!("config: seed={v} (STYLEMETRY_SEED)");
        return Ok(v);
    }
    eprintln!("config: seed=0 (default)");
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys_and_comments() {
        let cfg = parse_run_config(
            "# comment\n\nmode=conet\nseed=9\nlambda=1e-4\npreference=-2.5\nmax_gap=5\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(Mode::Conet));
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.lambda, Some(1e-4));
        assert_eq!(cfg.preference, Some(-2.5));
        assert_eq!(cfg.max_gap, Some(5));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = parse_run_config("sneed=1\n").unwrap_err();
        assert!(err.contains("unknown key sneed"));
        let err = parse_run_config("seed=1\nseed=2\n").unwrap_err();
        assert!(err.contains("duplicate key seed"));
        let err = parse_run_config("seed one\n").unwrap_err();
        assert!(err.contains("key=value"));
    }

    #[test]
    fn precedence_is_flag_config_default() {
        assert_eq!(pick("x", Some(1), Some(2), 3), 1);
        assert_eq!(pick("x", None, Some(2), 3), 2);
        assert_eq!(pick("x", None, None, 3), 3);
    }
}
