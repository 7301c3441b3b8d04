//! Command-line pipeline for driving-style representation learning.
//!
//! Subcommands follow the data flow: `gen` makes synthetic GPS trips,
//! `featurize` turns trips into segment feature matrices, `train` fits a
//! model and writes a checkpoint plus a training history, `encode` turns
//! held-out features into per-trip style vectors, `estimate` scores
//! driver-number estimation over sampled groups, `identify` scores driver
//! identification, and `tune` sweeps the clustering preference.
//!
//! Exit codes: 0 success, 1 validation failure (bad flags, bad data, bad
//! config), 2 I/O failure. Every run with identical flags and inputs
//! writes byte-identical outputs.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use stylemetry::arnet::{load_model, save_model, train, ArnetConfig, Mode};
use stylemetry::clusteval::ApOptions;
use stylemetry::experiments::{
    generate_synthetic, run_estimation_benchmark_on_vectors, run_identification_benchmark,
    tune_preference, EstimationBenchConfig,
};
use stylemetry::featurize::{
    featurize_trips, read_feature_file, write_feature_file, FeatureMatrix, FeaturizeConfig,
};
use stylemetry::ingest::{read_trips_csv, validate_trips, write_trips_csv};
use stylemetry::trip2vec::{encode_trips, read_trip_vector_file, write_trip_vector_file};
use stylemetry::Error;

use config::{pick, pick_optional, pick_required, resolve_seed, RunConfig};

/// A failure with its process exit code: 1 for validation, 2 for I/O.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 1 }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 2 }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 2,
            _ => 1,
        };
        CliError { message: e.to_string(), code }
    }
}

/// Writes to stdout, tolerating a closed pipe downstream (e.g. `| head`):
/// a broken pipe ends the process quietly, any other write failure exits
/// with the I/O code.
fn emit(text: std::fmt::Arguments) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().write_fmt(text) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(2);
    }
}

/// Attaches the file path to an error so every message names its source.
fn at_path<T>(result: stylemetry::Result<T>, verb: &str, path: &Path) -> Result<T, CliError> {
    result.map_err(|e| {
        let base = CliError::from(e);
        CliError {
            message: format!("cannot {verb} {}: {}", path.display(), base.message),
            code: base.code,
        }
    })
}

#[derive(Parser)]
#[command(
    name = "stylemetry",
    version,
    about = "Driving-style pipeline: synthetic trips, feature matrices, representation training, trip vectors, driver-count estimation, driver identification."
)]
struct Cli {
    /// Cap on worker threads for all parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// key=value config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic GPS trips from auto-spread driver personas.
    Gen(GenArgs),
    /// Turn a trip CSV into segment feature matrices.
    Featurize(FeaturizeArgs),
    /// Train a model on a feature file and write checkpoint + history.
    Train(TrainArgs),
    /// Encode a feature file into per-trip style vectors.
    Encode(EncodeArgs),
    /// Score driver-count estimation over sampled driver groups.
    Estimate(EstimateArgs),
    /// Score driver identification on held-out feature matrices.
    Identify(IdentifyArgs),
    /// Sweep the clustering preference grid on a labeled vector file.
    Tune(TuneArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of synthetic drivers.
    #[arg(long)]
    drivers: usize,
    /// Trips per driver.
    #[arg(long)]
    trips: usize,
    /// Seconds (1 Hz GPS points) per trip.
    #[arg(long)]
    seconds: usize,
    /// RNG seed (default: STYLEMETRY_SEED env var, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output trip CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Input trip CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output feature-matrix file.
    #[arg(long)]
    out: PathBuf,
    /// Segment window length in seconds (default 256).
    #[arg(long)]
    segment_len: Option<usize>,
    /// Statistics frame length in seconds (default 4).
    #[arg(long)]
    frame_len: Option<usize>,
    /// Largest timestamp gap bridged by interpolation (default 3).
    #[arg(long)]
    max_gap: Option<i64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input feature-matrix file.
    #[arg(long)]
    features: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training-history table path (default: <out>.history).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Objective mode: arnet, ronet, or conet (default arnet).
    #[arg(long)]
    mode: Option<String>,
    /// RNG seed (default: STYLEMETRY_SEED env var, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Use the desk-scale preset (gru 32/32, bottleneck 16, batch 256).
    #[arg(long)]
    desk: bool,
    /// First GRU width (default 256; desk 32).
    #[arg(long)]
    gru1: Option<usize>,
    /// Second GRU width (default 256; desk 32).
    #[arg(long)]
    gru2: Option<usize>,
    /// Bottleneck code width (default 50; desk 16).
    #[arg(long)]
    bottleneck: Option<usize>,
    /// Dropout probability on the second GRU state (default 0.5).
    #[arg(long)]
    dropout: Option<f64>,
    /// L1 weight on the bottleneck code (default 1e-5).
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Mini-batch size (default 2560; desk 256).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning-rate scale on the adaptive step (default 1.0).
    #[arg(long)]
    lr: Option<f64>,
    /// Squared-gradient decay rate (default 0.95).
    #[arg(long)]
    rho: Option<f64>,
    /// Numerical floor inside the adaptive step (default 1e-8).
    #[arg(long)]
    eps: Option<f64>,
    /// Epoch cap (default 200).
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping (default 10).
    #[arg(long)]
    patience: Option<usize>,
    /// Sever the autoencoder from the joint objective (ablation; default off).
    #[arg(long)]
    detach_autoencoder: bool,
    /// Fraction of each driver's trips held out for validation (default 0.2).
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input feature-matrix file.
    #[arg(long)]
    features: PathBuf,
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output trip-vector file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input trip-vector file (driver ids are the ground truth).
    #[arg(long)]
    vectors: PathBuf,
    /// Output report path.
    #[arg(long)]
    out: PathBuf,
    /// Clustering preference (self-similarity); required here or in the config file.
    #[arg(long, allow_hyphen_values = true)]
    preference: Option<f64>,
    /// Largest sampled group size G; sweeps g = 1..=G (default 10).
    #[arg(long)]
    groups: Option<usize>,
    /// Samples per group size (default 25).
    #[arg(long)]
    repeats: Option<usize>,
    /// RNG seed (default: STYLEMETRY_SEED env var, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on trips used per sampled driver (default: all trips).
    #[arg(long)]
    cap: Option<usize>,
    /// Message damping factor (default 0.5).
    #[arg(long)]
    damping: Option<f64>,
    /// Message-passing iteration cap (default 200).
    #[arg(long)]
    ap_max_iter: Option<usize>,
    /// Stable iterations required for convergence (default 15).
    #[arg(long)]
    ap_convergence_iter: Option<usize>,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Held-out feature-matrix file of drivers the model was trained on.
    #[arg(long)]
    features: PathBuf,
    /// Trained classifier checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    /// Input trip-vector file (driver ids are the ground truth).
    #[arg(long)]
    vectors: PathBuf,
    /// Output curve path.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated preference grid, e.g. --grid=-50,-10,-2.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Vec<f64>,
    /// Message damping factor (default 0.5).
    #[arg(long)]
    damping: Option<f64>,
    /// Message-passing iteration cap (default 200).
    #[arg(long)]
    ap_max_iter: Option<usize>,
    /// Stable iterations required for convergence (default 15).
    #[arg(long)]
    ap_convergence_iter: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                emit(format_args!("{e}"));
                ExitCode::SUCCESS
            } else {
                eprint!("{e}");
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("--threads: {e}")))?;
        eprintln!("config: threads={n} (flag)");
    }
    let file_cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a, &file_cfg),
        Command::Featurize(a) => cmd_featurize(a, &file_cfg),
        Command::Train(a) => cmd_train(a, &file_cfg),
        Command::Encode(a) => cmd_encode(a),
        Command::Estimate(a) => cmd_estimate(a, &file_cfg),
        Command::Identify(a) => cmd_identify(a),
        Command::Tune(a) => cmd_tune(a, &file_cfg),
    }
}

fn cmd_gen(a: GenArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed, cfg.seed)?;
    let trips = generate_synthetic(a.drivers, a.trips, a.seconds, None, seed)?;
    let segment_len = cfg.segment_len.unwrap_or_else(|| FeaturizeConfig::default().segment_len);
    if a.seconds < segment_len {
        eprintln!(
            "warning: --seconds {} is below the segment length {segment_len}; \
             these trips will yield zero segments",
            a.seconds
        );
    }
    at_path(write_trips_csv(&a.out, &trips), "write", &a.out)?;
    let points: usize = trips.iter().map(|t| t.points.len()).sum();
    emit(format_args!("wrote {} drivers, {} trips, {points} points to {}\n",
        a.drivers,
        trips.len(),
        a.out.display()
    ));
    Ok(())
}

fn cmd_featurize(a: FeaturizeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let feat = FeaturizeConfig {
        segment_len: pick("segment_len", a.segment_len, cfg.segment_len, 256),
        frame_len: pick("frame_len", a.frame_len, cfg.frame_len, 4),
    };
    let max_gap = pick("max_gap", a.max_gap, cfg.max_gap, 3i64);

    let trips = at_path(read_trips_csv(&a.input), "read", &a.input)?;
    if trips.is_empty() {
        return Err(CliError::validation(format!(
            "trip file {} holds no trips",
            a.input.display()
        )));
    }
    let validated = validate_trips(&trips, max_gap)?;
    let matrices = featurize_trips(&validated, &feat)?;
    if matrices.is_empty() {
        eprintln!("warning: no trip was long enough to yield a segment");
    }
    at_path(write_feature_file(&a.out, &matrices), "write", &a.out)?;
    emit(format_args!("wrote {} segments from {} trips to {}\n",
        matrices.len(),
        validated.len(),
        a.out.display()
    ));
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let matrices = at_path(read_feature_file(&a.features), "read", &a.features)?;
    if matrices.is_empty() {
        return Err(CliError::validation(format!(
            "feature file {} is empty",
            a.features.display()
        )));
    }
    let drivers: Vec<String> = matrices
        .iter()
        .map(|m| m.meta.driver_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_classes = drivers.len();

    let flag_mode = a.mode.as_deref().map(Mode::from_str).transpose()?;
    let mode = pick("mode", flag_mode, cfg.mode, Mode::Arnet);
    let detach_autoencoder = if a.detach_autoencoder {
        eprintln!("config: detach_autoencoder=true (flag)");
        true
    } else {
        pick("detach_autoencoder", None, cfg.detach_autoencoder, false)
    };
    let preset = if a.desk { ArnetConfig::desk(n_classes) } else { ArnetConfig::full(n_classes) };
    let model_cfg = ArnetConfig {
        gru1_units: pick("gru1_units", a.gru1, cfg.gru1_units, preset.gru1_units),
        gru2_units: pick("gru2_units", a.gru2, cfg.gru2_units, preset.gru2_units),
        bottleneck_units: pick(
            "bottleneck_units",
            a.bottleneck,
            cfg.bottleneck_units,
            preset.bottleneck_units,
        ),
        n_classes,
        dropout_p: pick("dropout_p", a.dropout, cfg.dropout_p, preset.dropout_p),
        lambda: pick("lambda", a.lambda, cfg.lambda, preset.lambda),
        mode,
        batch_size: pick("batch_size", a.batch_size, cfg.batch_size, preset.batch_size),
        lr: pick("lr", a.lr, cfg.lr, preset.lr),
        rho: pick("rho", a.rho, cfg.rho, preset.rho),
        eps: pick("eps", a.eps, cfg.eps, preset.eps),
        max_epochs: pick("max_epochs", a.max_epochs, cfg.max_epochs, preset.max_epochs),
        seed: resolve_seed(a.seed, cfg.seed)?,
        patience: pick("patience", a.patience, cfg.patience, preset.patience),
        detach_autoencoder,
    };

    let val_fraction = pick("val_fraction", a.val_fraction, cfg.val_fraction, 0.2);
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(CliError::validation(format!(
            "--val-fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    let (train_set, val_set) = split_by_trip(&matrices, &drivers, val_fraction);

    let (model, history) = train(&model_cfg, drivers, &train_set, &val_set)?;
    at_path(save_model(&model, &a.out), "write", &a.out)?;
    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut os = a.out.clone().into_os_string();
        os.push(".history");
        PathBuf::from(os)
    });
    fs::write(&history_path, history.serialize()).map_err(|e| {
        CliError::io(format!("cannot write {}: {e}", history_path.display()))
    })?;

    let best = history.best_record();
    emit(format_args!("trained {n_classes} classes on {} segments; best epoch {} (val_metric {})\n",
        train_set.len(),
        history.best_epoch,
        best.val_metric
    ));
    emit(format_args!("checkpoint: {}\n", a.out.display()));
    emit(format_args!("history: {}\n", history_path.display()));
    Ok(())
}

/// Labeled segments referencing the feature file they were read from.
type LabeledSet<'a> = Vec<(&'a FeatureMatrix, usize)>;

/// Splits segments into train/validation at trip granularity so segments
/// of one trip never straddle the split. Within each driver's sorted trip
/// list, every k-th trip validates, with k = round(1 / val_fraction); a
/// fraction of 0 or too few trips per driver leaves validation empty, in
/// which case the (degenerate) training set doubles as validation.
fn split_by_trip<'a>(
    matrices: &'a [FeatureMatrix],
    drivers: &[String],
    val_fraction: f64,
) -> (LabeledSet<'a>, LabeledSet<'a>) {
    let mut by_trip: BTreeMap<(&str, &str), Vec<&FeatureMatrix>> = BTreeMap::new();
    for m in matrices {
        by_trip
            .entry((&m.meta.driver_id, &m.meta.trip_id))
            .or_default()
            .push(m);
    }

    let stride = if val_fraction > 0.0 {
        (1.0 / val_fraction).round().max(2.0) as usize
    } else {
        usize::MAX
    };

    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    let mut trip_index: BTreeMap<&str, usize> = BTreeMap::new();
    for ((driver, _trip), segments) in &by_trip {
        let class = drivers
            .binary_search_by(|d| d.as_str().cmp(driver))
            .expect("driver list was built from these matrices");
        let i = trip_index.entry(driver).or_insert(0);
        let dest = if (*i + 1).is_multiple_of(stride) { &mut val_set } else { &mut train_set };
        for m in segments {
            dest.push((*m, class));
        }
        *i += 1;
    }
    if val_set.is_empty() {
        eprintln!(
            "warning: validation split is empty (too few trips per driver); \
             validating on the training set"
        );
        val_set = train_set.clone();
    }
    (train_set, val_set)
}

fn cmd_encode(a: EncodeArgs) -> Result<(), CliError> {
    let model = at_path(load_model(&a.checkpoint), "read", &a.checkpoint)?;
    let matrices = at_path(read_feature_file(&a.features), "read", &a.features)?;
    if matrices.is_empty() {
        return Err(CliError::validation(format!(
            "feature file {} is empty",
            a.features.display()
        )));
    }
    let vectors = encode_trips(&model, &matrices)?;
    at_path(write_trip_vector_file(&a.out, &vectors), "write", &a.out)?;
    emit(format_args!("encoded {} trips ({} segments) to {}\n",
        vectors.len(),
        matrices.len(),
        a.out.display()
    ));
    Ok(())
}

fn ap_options(
    damping: Option<f64>,
    max_iter: Option<usize>,
    convergence_iter: Option<usize>,
    cfg: &RunConfig,
) -> ApOptions {
    let d = ApOptions::default();
    ApOptions {
        damping: pick("damping", damping, cfg.damping, d.damping),
        max_iter: pick("ap_max_iter", max_iter, cfg.ap_max_iter, d.max_iter),
        convergence_iter: pick(
            "ap_convergence_iter",
            convergence_iter,
            cfg.ap_convergence_iter,
            d.convergence_iter,
        ),
    }
}

fn cmd_estimate(a: EstimateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let vectors = at_path(read_trip_vector_file(&a.vectors), "read", &a.vectors)?;
    let bench = EstimationBenchConfig {
        groups: pick("groups", a.groups, cfg.groups, 10),
        repeats: pick("repeats", a.repeats, cfg.repeats, 25),
        preference: pick_required("preference", a.preference, cfg.preference)?,
        trips_per_driver_cap: pick_optional("trips_per_driver_cap", a.cap, cfg.trips_per_driver_cap),
        ap: ap_options(a.damping, a.ap_max_iter, a.ap_convergence_iter, cfg),
        seed: resolve_seed(a.seed, cfg.seed)?,
    };
    let report = run_estimation_benchmark_on_vectors(&vectors, &bench)?;
    at_path(
        fs::write(&a.out, report.to_text()).map_err(Error::from),
        "write",
        &a.out,
    )?;
    emit(format_args!("{}\n", report.avg_line()));
    Ok(())
}

fn cmd_identify(a: IdentifyArgs) -> Result<(), CliError> {
    let model = at_path(load_model(&a.checkpoint), "read", &a.checkpoint)?;
    let matrices = at_path(read_feature_file(&a.features), "read", &a.features)?;
    let report = run_identification_benchmark(&model, &matrices)?;
    at_path(
        fs::write(&a.out, report.to_text()).map_err(Error::from),
        "write",
        &a.out,
    )?;
    emit(format_args!("{}\n", report.avg_line()));
    Ok(())
}

fn cmd_tune(a: TuneArgs, cfg: &RunConfig) -> Result<(), CliError> {
    if a.grid.is_empty() {
        return Err(CliError::validation(
            "--grid needs at least one preference value (e.g. --grid=-50,-10,-2)",
        ));
    }
    let vectors = at_path(read_trip_vector_file(&a.vectors), "read", &a.vectors)?;
    let opts = ap_options(a.damping, a.ap_max_iter, a.ap_convergence_iter, cfg);
    let (best, curve) = tune_preference(&vectors, &a.grid, &opts)?;

    let mut text = String::from("preference mean_abs_error\n");
    for p in &curve {
        text.push_str(&format!("{} {}\n", p.preference, p.mean_abs_error));
    }
    text.push_str(&format!("best {best}\n"));
    at_path(fs::write(&a.out, text).map_err(Error::from), "write", &a.out)?;
    emit(format_args!("best preference: {best}\n"));
    Ok(())
}
