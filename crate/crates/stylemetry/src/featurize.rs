//! GPS trip to statistical feature matrices.
//!
//! A validated 1 Hz trip becomes five instantaneous movement signals (speed
//! norm, its difference, acceleration norm, its difference, angular speed).
//! The signal matrix is windowed into segments of `segment_len` columns with
//! half-length shift; each segment is windowed again into short frames, and
//! every frame contributes one column of 35 statistics (5 features x 7
//! statistics). With the default configuration each segment yields a 35x128
//! matrix.
//!
//! Conventions fixed for bit-stable outputs: quartiles use linear
//! interpolation at position `p * (n - 1)`, the standard deviation is the
//! population form, and warm-up columns (index 0, and 1 for angular speed)
//! are filled by copy/zero so columns stay aligned with GPS timestamps.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{GpsPoint, RawTrip};

/// Mean Earth radius in meters used by the haversine distance.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Number of instantaneous movement signals.
pub const N_BASIC: usize = 5;

/// Number of statistics per signal (mean, min, max, q25, q50, q75, std).
pub const N_STATS: usize = 7;

/// Rows of every feature matrix.
pub const N_ROWS: usize = N_BASIC * N_STATS;

/// Segment and frame windowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturizeConfig {
    /// Segment length in seconds (columns per segment window).
    pub segment_len: usize,
    /// Frame length in seconds (columns per statistics window).
    pub frame_len: usize,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig { segment_len: 256, frame_len: 4 }
    }
}

impl FeaturizeConfig {
    /// Checks the windowing invariants: frame_len even, shorter than
    /// segment_len, and dividing it exactly.
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.segment_len == 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if !self.frame_len.is_multiple_of(2) {
            return Err(Error::Config(format!("frame_len {} must be even", self.frame_len)));
        }
        if self.frame_len >= self.segment_len {
            return Err(Error::Config(format!(
                "frame_len {} must be shorter than segment_len {}",
                self.frame_len, self.segment_len
            )));
        }
        if !self.segment_len.is_multiple_of(self.frame_len) {
            return Err(Error::Config(format!(
                "segment_len {} must be divisible by frame_len {}",
                self.segment_len, self.frame_len
            )));
        }
        Ok(())
    }

    /// Columns of every feature matrix: `2 * segment_len / frame_len`.
    pub fn frame_cols(&self) -> usize {
        2 * self.segment_len / self.frame_len
    }
}

/// The five per-second movement signals of one trip, one column per point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicFeatureSeries {
    /// Row order: speed, diff speed, acceleration, diff acceleration,
    /// angular speed.
    pub values: [Vec<f64>; N_BASIC],
}

impl BasicFeatureSeries {
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Identifies which segment of which trip a feature matrix describes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentMeta {
    pub driver_id: String,
    pub trip_id: String,
    pub segment_index: usize,
}

/// One 35 x frame_cols statistics matrix, the network input.
///
/// Row `7 * f + s` holds statistic `s` of basic feature `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub meta: SegmentMeta,
    pub cols: usize,
    /// Row-major storage, length `N_ROWS * cols`.
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Copies column `col` into a 35-vector (one network timestep).
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..N_ROWS).map(|r| self.get(r, col)).collect()
    }

    /// All columns as timestep vectors, oldest first.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }
}

/// Great-circle distance (meters) and initial bearing (radians, in (-pi, pi],
/// 0 = north) from `p1` to `p2`. Identical points give (0, 0).
pub fn geo_step(p1: GpsPoint, p2: GpsPoint) -> (f64, f64) {
    let phi1 = p1.lat.to_radians();
    let phi2 = p2.lat.to_radians();
    let dphi = (p2.lat - p1.lat).to_radians();
    let dlambda = (p2.lon - p1.lon).to_radians();

    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let distance = 2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin();
    if distance == 0.0 {
        return (0.0, 0.0);
    }

    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    let mut bearing = y.atan2(x);
    if bearing == -PI {
        bearing = PI;
    }
    (distance, bearing)
}

/// Wraps an angle difference into [-pi, pi).
fn wrap_angle(d: f64) -> f64 {
    (d + PI).rem_euclid(2.0 * PI) - PI
}

/// Derives the five movement signals from a validated 1 Hz trip.
///
/// Warm-up conventions: `speed[0] = speed[1]`; the three difference signals
/// are 0 at index 0; angular speed is 0 at indices 0 and 1 (the first
/// bearing exists only from the second step on).
pub fn basic_features(trip: &RawTrip) -> Result<BasicFeatureSeries> {
    let n = trip.points.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "trip {}/{} has {} points; at least 3 are required",
            trip.driver_id, trip.trip_id, n
        )));
    }

    let mut speed = vec![0.0; n];
    let mut bearing = vec![0.0; n];
    for i in 1..n {
        let (d, b) = geo_step(trip.points[i - 1], trip.points[i]);
        speed[i] = d;
        bearing[i] = b;
    }
    speed[0] = speed[1];

    let mut diff_speed = vec![0.0; n];
    let mut accel = vec![0.0; n];
    let mut diff_accel = vec![0.0; n];
    let mut angular = vec![0.0; n];
    for i in 1..n {
        diff_speed[i] = speed[i] - speed[i - 1];
        accel[i] = (speed[i] - speed[i - 1]).abs();
        if i >= 2 {
            angular[i] = wrap_angle(bearing[i] - bearing[i - 1]);
        }
    }
    for i in 1..n {
        diff_accel[i] = accel[i] - accel[i - 1];
    }

    Ok(BasicFeatureSeries { values: [speed, diff_speed, accel, diff_accel, angular] })
}

/// Start offsets of full segment windows over a series of length `n`.
fn segment_starts(n: usize, segment_len: usize) -> Vec<usize> {
    if n < segment_len {
        return Vec::new();
    }
    (0..=(n - segment_len)).step_by(segment_len / 2).collect()
}

/// Cuts the signal matrix into full 5 x segment_len windows with
/// half-segment shift. Short series yield no segments.
pub fn segment_series(series: &BasicFeatureSeries, cfg: &FeaturizeConfig) -> Vec<[Vec<f64>; N_BASIC]> {
    segment_starts(series.len(), cfg.segment_len)
        .into_iter()
        .map(|start| {
            std::array::from_fn(|f| series.values[f][start..start + cfg.segment_len].to_vec())
        })
        .collect()
}

/// Quantile by linear interpolation at position `p * (n - 1)`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The seven statistics of one signal row within one frame, in the fixed
/// order mean, min, max, q25, q50, q75, std (population form).
pub fn row_statistics(row: &[f64]) -> [f64; N_STATS] {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    [
        mean,
        sorted[0],
        sorted[sorted.len() - 1],
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.50),
        quantile(&sorted, 0.75),
        var.sqrt(),
    ]
}

/// Statistics column of a 5 x frame_len window: 35 values ordered
/// feature-major (`7 * f + s`).
pub fn frame_statistics(window: &[&[f64]; N_BASIC]) -> [f64; N_ROWS] {
    let mut out = [0.0; N_ROWS];
    for (f, row) in window.iter().enumerate() {
        let stats = row_statistics(row);
        out[f * N_STATS..(f + 1) * N_STATS].copy_from_slice(&stats);
    }
    out
}

/// Featurizes one validated trip into per-segment statistics matrices.
///
/// Each segment is right-padded with its final column repeated `frame_len/2`
/// times, then scanned by a 5 x frame_len window with half-frame shift; this
/// yields exactly `2 * segment_len / frame_len` statistics columns per
/// segment regardless of trip length.
pub fn featurize_trip(trip: &RawTrip, cfg: &FeaturizeConfig) -> Result<Vec<FeatureMatrix>> {
    cfg.validate()?;
    let series = basic_features(trip)?;
    let half_frame = cfg.frame_len / 2;
    let cols = cfg.frame_cols();

    let matrices = segment_series(&series, cfg)
        .into_iter()
        .enumerate()
        .map(|(segment_index, segment)| {
            let padded: [Vec<f64>; N_BASIC] = std::array::from_fn(|f| {
                let mut row = segment[f].clone();
                let last = *row.last().expect("segment rows are non-empty");
                row.extend(std::iter::repeat_n(last, half_frame));
                row
            });

            let mut data = vec![0.0; N_ROWS * cols];
            for (c, start) in (0..).step_by(half_frame).take(cols).enumerate() {
                let window: [&[f64]; N_BASIC] =
                    std::array::from_fn(|f| &padded[f][start..start + cfg.frame_len]);
                for (r, v) in frame_statistics(&window).into_iter().enumerate() {
                    data[r * cols + c] = v;
                }
            }
            FeatureMatrix {
                meta: SegmentMeta {
                    driver_id: trip.driver_id.clone(),
                    trip_id: trip.trip_id.clone(),
                    segment_index,
                },
                cols,
                data,
            }
        })
        .collect();
    Ok(matrices)
}

/// Featurizes a batch of trips, concatenating their segment matrices.
pub fn featurize_trips(trips: &[RawTrip], cfg: &FeaturizeConfig) -> Result<Vec<FeatureMatrix>> {
    let mut out = Vec::new();
    for trip in trips {
        out.extend(featurize_trip(trip, cfg)?);
    }
    Ok(out)
}

/// Writes feature matrices in the feature-matrix text format: per record a
/// meta line `driver_id,trip_id,segment_index` followed by 35 lines of
/// comma-separated values. Files written this way are concatenable.
pub fn serialize_feature_matrices<W: Write>(matrices: &[FeatureMatrix], mut out: W) -> Result<()> {
    for m in matrices {
        writeln!(out, "{},{},{}", m.meta.driver_id, m.meta.trip_id, m.meta.segment_index)?;
        for r in 0..N_ROWS {
            let row: Vec<String> =
                (0..m.cols).map(|c| m.get(r, c).to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Parses the feature-matrix text format.
pub fn parse_feature_matrices<R: BufRead>(reader: R) -> Result<Vec<FeatureMatrix>> {
    let mut lines = reader.lines().enumerate();
    let mut out = Vec::new();

    while let Some((i, line)) = lines.next() {
        let line = line?;
        let meta_line = line.trim_end_matches('\r');
        if meta_line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = meta_line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected meta line with 3 fields, got {}", fields.len()),
            });
        }
        let segment_index = fields[2].trim().parse::<usize>().map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("bad segment index {:?}: {e}", fields[2]),
        })?;
        let meta = SegmentMeta {
            driver_id: fields[0].to_string(),
            trip_id: fields[1].to_string(),
            segment_index,
        };

        let mut cols = 0usize;
        let mut data: Vec<f64> = Vec::new();
        for r in 0..N_ROWS {
            let (j, row_line) = lines.next().ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("record truncated: expected {N_ROWS} value rows, got {r}"),
            })?;
            let row_line = row_line?;
            let mut row = Vec::new();
            for tok in row_line.trim_end_matches('\r').split(',') {
                row.push(tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: j + 1,
                    message: format!("bad value {tok:?}: {e}"),
                })?);
            }
            if r == 0 {
                cols = row.len();
            } else if row.len() != cols {
                return Err(Error::Parse {
                    line: j + 1,
                    message: format!("row has {} values, expected {cols}", row.len()),
                });
            }
            data.extend(row);
        }
        out.push(FeatureMatrix { meta, cols, data });
    }
    Ok(out)
}

/// Reads a feature-matrix file.
pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureMatrix>> {
    parse_feature_matrices(BufReader::new(File::open(path)?))
}

/// Writes a feature-matrix file.
pub fn write_feature_file(path: &Path, matrices: &[FeatureMatrix]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serialize_feature_matrices(matrices, &mut out)?;
    out.flush()?;
    Ok(())
}
