//! Trip-level driving-style vectors and trip-level class votes.
//!
//! A trip's segments are encoded independently; their codes are summed and
//! the sum is divided by its largest entry, giving a bag-of-words style
//! profile in [0, 1] per dimension. Class predictions for a whole trip sum
//! the per-segment softmax distributions, i.e. a vote weighted by each
//! segment's confidence.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::arnet::ArnetModel;
use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;

/// Fixed-length driving-style profile of one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripVector {
    pub driver_id: String,
    pub trip_id: String,
    /// Number of segments aggregated.
    pub q: usize,
    /// k entries in [0, 1]; the maximum entry is exactly 1 unless the
    /// vector is all-zero.
    pub values: Vec<f64>,
}

/// Significant digits written per value in the trip-vector file.
const FILE_DIGITS: usize = 9;

/// Sums the codes and normalizes by the largest component. An all-zero sum
/// stays the zero vector.
pub fn normalized_code_sum(codes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = codes.first().ok_or_else(|| {
        Error::Validation("cannot aggregate an empty list of segment codes".into())
    })?;
    let mut sigma = vec![0.0; first.len()];
    for code in codes {
        if code.len() != sigma.len() {
            return Err(Error::Shape {
                expected: format!("code of {}", sigma.len()),
                actual: format!("{}", code.len()),
            });
        }
        for (acc, v) in sigma.iter_mut().zip(code.iter()) {
            *acc += v;
        }
    }
    let max = sigma.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max > 0.0 {
        for v in &mut sigma {
            *v /= max;
        }
    }
    Ok(sigma)
}

/// Ranks summed class distributions: descending vote, ties broken by
/// ascending class index. Returns (top-1 class, full ranking).
pub fn ranked_vote(distributions: &[Vec<f64>]) -> Result<(usize, Vec<usize>)> {
    let votes = {
        let first = distributions.first().ok_or_else(|| {
            Error::Validation("cannot vote over an empty list of distributions".into())
        })?;
        let mut votes = vec![0.0; first.len()];
        for dist in distributions {
            if dist.len() != votes.len() {
                return Err(Error::Shape {
                    expected: format!("distribution of {}", votes.len()),
                    actual: format!("{}", dist.len()),
                });
            }
            for (acc, v) in votes.iter_mut().zip(dist.iter()) {
                *acc += v;
            }
        }
        votes
    };
    let mut ranking: Vec<usize> = (0..votes.len()).collect();
    ranking.sort_by(|&a, &b| {
        votes[b].partial_cmp(&votes[a]).expect("votes are finite").then(a.cmp(&b))
    });
    Ok((ranking[0], ranking))
}

/// Encodes all segments of one trip into its [`TripVector`]. The segments
/// must agree on (driver_id, trip_id).
pub fn encode_trip<S: Borrow<FeatureMatrix>>(
    model: &ArnetModel,
    segments: &[S],
) -> Result<TripVector> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Validation("cannot encode a trip with no segments".into()))?
        .borrow();
    for seg in segments {
        let seg = seg.borrow();
        if seg.meta.driver_id != first.meta.driver_id || seg.meta.trip_id != first.meta.trip_id {
            return Err(Error::Validation(format!(
                "segments mix trips: ({}, {}) and ({}, {})",
                first.meta.driver_id, first.meta.trip_id, seg.meta.driver_id, seg.meta.trip_id
            )));
        }
    }
    let mut codes = Vec::with_capacity(segments.len());
    for seg in segments {
        codes.push(model.encode_segment(seg.borrow())?);
    }
    Ok(TripVector {
        driver_id: first.meta.driver_id.clone(),
        trip_id: first.meta.trip_id.clone(),
        q: segments.len(),
        values: normalized_code_sum(&codes)?,
    })
}

/// Groups a segment batch by (driver_id, trip_id) and encodes every trip,
/// returning vectors in ascending id order. Trips encode in parallel;
/// grouping and output order are independent of thread count.
pub fn encode_trips(model: &ArnetModel, segments: &[FeatureMatrix]) -> Result<Vec<TripVector>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&FeatureMatrix>> = BTreeMap::new();
    for seg in segments {
        groups
            .entry((&seg.meta.driver_id, &seg.meta.trip_id))
            .or_default()
            .push(seg);
    }
    let trips: Vec<Vec<&FeatureMatrix>> = groups.into_values().collect();
    trips.par_iter().map(|segs| encode_trip(model, segs)).collect()
}

/// Confidence-weighted vote over all segments of a trip. Returns the top-1
/// class and the full descending ranking; the first five entries are the
/// top-5 prediction.
pub fn predict_trip<S: Borrow<FeatureMatrix>>(
    model: &ArnetModel,
    segments: &[S],
) -> Result<(usize, Vec<usize>)> {
    if segments.is_empty() {
        return Err(Error::Validation("cannot predict a trip with no segments".into()));
    }
    let mut distributions = Vec::with_capacity(segments.len());
    for seg in segments {
        distributions.push(model.predict_segment(seg.borrow())?);
    }
    ranked_vote(&distributions)
}

/// Formats with a fixed number of significant digits, in plain decimal.
fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

/// One CSV-style text block, `driver_id,trip_id,q,v0,...`; all vectors must
/// share the same width.
pub fn serialize_trip_vectors(vectors: &[TripVector]) -> Result<String> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Validation("cannot serialize zero trip vectors".into()))?;
    let k = first.values.len();
    let mut out = String::from("driver_id,trip_id,q");
    for j in 0..k {
        out.push_str(&format!(",v{j}"));
    }
    out.push('\n');
    for v in vectors {
        if v.values.len() != k {
            return Err(Error::Shape {
                expected: format!("vector of {k}"),
                actual: format!("{}", v.values.len()),
            });
        }
        if v.driver_id.contains(',') || v.trip_id.contains(',') {
            return Err(Error::Validation(format!(
                "trip ({}, {}) holds a comma in its ids",
                v.driver_id, v.trip_id
            )));
        }
        out.push_str(&v.driver_id);
        out.push(',');
        out.push_str(&v.trip_id);
        out.push_str(&format!(",{}", v.q));
        for &value in &v.values {
            out.push(',');
            out.push_str(&format_sig(value, FILE_DIGITS));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses the format written by [`serialize_trip_vectors`].
pub fn parse_trip_vectors(text: &str) -> Result<Vec<TripVector>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty trip-vector file".into() })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[..3] != ["driver_id", "trip_id", "q"] {
        return Err(Error::Parse { line: 1, message: format!("bad header {header:?}") });
    }
    for (j, name) in columns[3..].iter().enumerate() {
        if *name != format!("v{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad header column {name:?}, expected v{j}"),
            });
        }
    }
    let k = columns.len() - 3;

    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + k {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", 3 + k, fields.len()),
            });
        }
        let q: usize = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad segment count {:?}", fields[2]),
        })?;
        let mut values = Vec::with_capacity(k);
        for raw in &fields[3..] {
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad value {raw:?}"),
            })?;
            values.push(v);
        }
        out.push(TripVector {
            driver_id: fields[0].to_string(),
            trip_id: fields[1].to_string(),
            q,
            values,
        });
    }
    Ok(out)
}

pub fn write_trip_vector_file(path: &Path, vectors: &[TripVector]) -> Result<()> {
    fs::write(path, serialize_trip_vectors(vectors)?)?;
    Ok(())
}

pub fn read_trip_vector_file(path: &Path) -> Result<Vec<TripVector>> {
    parse_trip_vectors(&fs::read_to_string(path)?)
}
