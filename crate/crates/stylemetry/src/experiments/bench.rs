//! The two evaluation protocols: driver-number estimation over sampled
//! groups of unseen drivers, and driver identification on held-out trips
//! of seen drivers.
//!
//! Both reports render as a fixed-width table with an `avg` footer row,
//! followed by a machine-readable `key=value` block. Benchmark repeats run
//! in parallel; every repeat seeds its own RNG from (seed, group, repeat),
//! so scheduling cannot change any number in a report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arnet::train::argmax;
use crate::arnet::ArnetModel;
use crate::clusteval::{abs_error, ami, ApOptions};
use crate::error::{Error, Result};
use crate::featurize::{featurize_trip, FeatureMatrix, FeaturizeConfig};
use crate::ingest::RawTrip;
use crate::trip2vec::{encode_trip, predict_trip, TripVector};

use super::{estimate_driver_count, mix_seed, EstimateOutcome};

/// Controls for the estimation benchmark. `groups` is the largest sampled
/// group size G (the benchmark sweeps g = 1..=G) and `repeats` the number
/// of independent samples R per group size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationBenchConfig {
    pub groups: usize,
    pub repeats: usize,
    pub preference: f64,
    /// Cap on trips taken per sampled driver; `None` uses every pool trip.
    pub trips_per_driver_cap: Option<usize>,
    pub ap: ApOptions,
    pub seed: u64,
}

impl EstimationBenchConfig {
    pub fn new(preference: f64, seed: u64) -> Self {
        EstimationBenchConfig {
            groups: 10,
            repeats: 25,
            preference,
            trips_per_driver_cap: None,
            ap: ApOptions::default(),
            seed,
        }
    }
}

/// Mean/std of absolute count error and AMI over the repeats of one group
/// size, plus how many repeats failed to converge.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub group: usize,
    pub mean_abs_error: f64,
    pub std_abs_error: f64,
    pub mean_ami: f64,
    pub std_ami: f64,
    pub non_converged: usize,
}

/// Full estimation benchmark outcome: one row per group size and the
/// averages of the per-group means.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub repeats: usize,
    pub groups: Vec<GroupStats>,
    pub overall_mean_abs_error: f64,
    pub overall_mean_ami: f64,
}

impl EstimationReport {
    /// The table footer: overall averaged means, printable on its own.
    pub fn avg_line(&self) -> String {
        format!(
            "{:<7}{:<18}{:.3}",
            "avg",
            format!("{:.3}", self.overall_mean_abs_error),
            self.overall_mean_ami
        )
        .trim_end()
        .to_string()
    }

    /// Table plus key=value block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "group  abs_error         ami");
        for s in &self.groups {
            let abs = format!("{:.3} \u{b1} {:.3}", s.mean_abs_error, s.std_abs_error);
            let ami = format!("{:.3} \u{b1} {:.3}", s.mean_ami, s.std_ami);
            let _ = writeln!(out, "{:<7}{abs:<18}{ami}", s.group);
        }
        let _ = writeln!(out, "{}", self.avg_line());
        let _ = writeln!(out);
        let _ = writeln!(out, "groups={}", self.groups.len());
        let _ = writeln!(out, "repeats={}", self.repeats);
        for s in &self.groups {
            let _ = writeln!(out, "group.{}.abs_error.mean={}", s.group, s.mean_abs_error);
            let _ = writeln!(out, "group.{}.abs_error.std={}", s.group, s.std_abs_error);
            let _ = writeln!(out, "group.{}.ami.mean={}", s.group, s.mean_ami);
            let _ = writeln!(out, "group.{}.ami.std={}", s.group, s.std_ami);
            let _ = writeln!(out, "group.{}.non_converged={}", s.group, s.non_converged);
        }
        let _ = writeln!(out, "overall.abs_error.mean={}", self.overall_mean_abs_error);
        let _ = writeln!(out, "overall.ami.mean={}", self.overall_mean_ami);
        out
    }
}

/// Sorts vectors into per-driver pools, ascending by driver id.
pub(crate) fn group_by_driver(vectors: &[TripVector]) -> Result<Vec<(String, Vec<TripVector>)>> {
    if vectors.is_empty() {
        return Err(Error::Validation("no trip vectors to group by driver".into()));
    }
    let mut map: BTreeMap<String, Vec<TripVector>> = BTreeMap::new();
    for v in vectors {
        map.entry(v.driver_id.clone()).or_default().push(v.clone());
    }
    Ok(map.into_iter().collect())
}

/// Runs the estimation protocol on already-encoded vectors: for every
/// group size g = 1..=G, R seeded driver samples are clustered and scored
/// by absolute count error and AMI against the sampled driver partition.
pub fn run_estimation_benchmark_on_vectors(
    vectors: &[TripVector],
    cfg: &EstimationBenchConfig,
) -> Result<EstimationReport> {
    let pool = group_by_driver(vectors)?;
    benchmark_over_pool(&pool, cfg, |group| {
        estimate_driver_count(group, cfg.preference, &cfg.ap)
    })
}

/// Featurizes and encodes an unseen pool of trips, then runs the
/// estimation protocol. Pool drivers must be disjoint from the drivers the
/// model was trained on.
pub fn run_estimation_benchmark(
    model: &ArnetModel,
    pool_trips: &[RawTrip],
    feat: &FeaturizeConfig,
    cfg: &EstimationBenchConfig,
) -> Result<EstimationReport> {
    for trip in pool_trips {
        if model.label_map.iter().any(|d| d == &trip.driver_id) {
            return Err(Error::Validation(format!(
                "pool driver {} was seen in training; the estimation pool must be unseen",
                trip.driver_id
            )));
        }
    }
    let vectors: Vec<TripVector> = pool_trips
        .par_iter()
        .map(|trip| {
            let segments = featurize_trip(trip, feat)?;
            if segments.is_empty() {
                return Err(Error::Validation(format!(
                    "pool trip {}/{} is too short to yield any segment",
                    trip.driver_id, trip.trip_id
                )));
            }
            encode_trip(model, &segments)
        })
        .collect::<Result<_>>()?;
    run_estimation_benchmark_on_vectors(&vectors, cfg)
}

/// Protocol core, generic in the estimator so tests can substitute a
/// perfect oracle for affinity propagation.
pub(crate) fn benchmark_over_pool(
    pool: &[(String, Vec<TripVector>)],
    cfg: &EstimationBenchConfig,
    estimate: impl Fn(&[TripVector]) -> Result<EstimateOutcome> + Sync,
) -> Result<EstimationReport> {
    if cfg.groups == 0 || cfg.repeats == 0 {
        return Err(Error::Config("groups and repeats must both be at least 1".into()));
    }
    if pool.len() < cfg.groups {
        return Err(Error::Validation(format!(
            "cannot sample g={} distinct drivers from an estimation pool of {}",
            pool.len() + 1,
            pool.len()
        )));
    }

    let tasks: Vec<(usize, usize)> = (1..=cfg.groups)
        .flat_map(|g| (0..cfg.repeats).map(move |r| (g, r)))
        .collect();
    let runs: Vec<(f64, f64, bool)> = tasks
        .par_iter()
        .map(|&(g, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, g as u64, r as u64));
            let mut chosen = rand::seq::index::sample(&mut rng, pool.len(), g).into_vec();
            chosen.sort_unstable();

            let mut group = Vec::new();
            let mut truth = Vec::new();
            for (slot, &driver) in chosen.iter().enumerate() {
                let trips = &pool[driver].1;
                let take = cfg.trips_per_driver_cap.map_or(trips.len(), |c| c.min(trips.len()));
                for tv in &trips[..take] {
                    group.push(tv.clone());
                    truth.push(slot);
                }
            }
            let outcome = estimate(&group)?;
            let err = abs_error(g, outcome.n_clusters) as f64;
            let score = ami(&truth, &outcome.labels)?;
            Ok((err, score, outcome.converged))
        })
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(cfg.groups);
    for g in 1..=cfg.groups {
        let rows = &runs[(g - 1) * cfg.repeats..g * cfg.repeats];
        let errs: Vec<f64> = rows.iter().map(|t| t.0).collect();
        let amis: Vec<f64> = rows.iter().map(|t| t.1).collect();
        groups.push(GroupStats {
            group: g,
            mean_abs_error: mean(&errs),
            std_abs_error: std_dev(&errs),
            mean_ami: mean(&amis),
            std_ami: std_dev(&amis),
            non_converged: rows.iter().filter(|t| !t.2).count(),
        });
    }
    let overall_mean_abs_error =
        groups.iter().map(|s| s.mean_abs_error).sum::<f64>() / groups.len() as f64;
    let overall_mean_ami = groups.iter().map(|s| s.mean_ami).sum::<f64>() / groups.len() as f64;
    Ok(EstimationReport {
        repeats: cfg.repeats,
        groups,
        overall_mean_abs_error,
        overall_mean_ami,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divisor n).
fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Identification accuracies over a held-out segment batch, with per-class
/// confusion counts of the trip-level top-1 prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    /// Class axis of the confusion matrix, copied from the model.
    pub classes: Vec<String>,
    pub n_segments: usize,
    pub n_trips: usize,
    pub segment_accuracy: f64,
    pub trip_top1_accuracy: f64,
    pub trip_top5_accuracy: f64,
    /// `confusion[true_class][predicted_class]`, counted over trips.
    pub confusion: Vec<Vec<usize>>,
}

impl IdentificationReport {
    /// The table footer: mean of the three accuracies.
    pub fn avg_line(&self) -> String {
        let avg =
            (self.segment_accuracy + self.trip_top1_accuracy + self.trip_top5_accuracy) / 3.0;
        format!("{:<11}{avg:.3}", "avg").trim_end().to_string()
    }

    /// Accuracy table, confusion matrix, and key=value block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "metric     accuracy");
        let _ = writeln!(out, "{:<11}{:.3}", "segment", self.segment_accuracy);
        let _ = writeln!(out, "{:<11}{:.3}", "trip_top1", self.trip_top1_accuracy);
        let _ = writeln!(out, "{:<11}{:.3}", "trip_top5", self.trip_top5_accuracy);
        let _ = writeln!(out, "{}", self.avg_line());
        let _ = writeln!(out);

        let _ = writeln!(out, "confusion (rows true driver, columns predicted driver)");
        let w = self.classes.iter().map(|c| c.len()).max().unwrap_or(1).max(4) + 2;
        let mut header = format!("{:<w$}", "");
        for c in &self.classes {
            header.push_str(&format!("{c:<w$}"));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for (i, row) in self.confusion.iter().enumerate() {
            let mut line = format!("{:<w$}", self.classes[i]);
            for count in row {
                line.push_str(&format!("{count:<w$}"));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        let _ = writeln!(out);

        let _ = writeln!(out, "segments={}", self.n_segments);
        let _ = writeln!(out, "trips={}", self.n_trips);
        let _ = writeln!(out, "segment_accuracy={}", self.segment_accuracy);
        let _ = writeln!(out, "trip_top1_accuracy={}", self.trip_top1_accuracy);
        let _ = writeln!(out, "trip_top5_accuracy={}", self.trip_top5_accuracy);
        for (i, row) in self.confusion.iter().enumerate() {
            for (j, count) in row.iter().enumerate() {
                let _ = writeln!(out, "confusion.{}.{}={}", self.classes[i], self.classes[j], count);
            }
        }
        out
    }
}

/// Scores a classifier model on held-out segments of drivers it was
/// trained on: per-segment argmax accuracy, and per-trip top-1/top-5 via
/// the confidence-weighted vote. Every segment's driver must appear in the
/// model's label map.
pub fn run_identification_benchmark(
    model: &ArnetModel,
    test_segments: &[FeatureMatrix],
) -> Result<IdentificationReport> {
    if test_segments.is_empty() {
        return Err(Error::Validation("identification test set is empty".into()));
    }
    let class_of: HashMap<&str, usize> = model
        .label_map
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();

    let mut trips: BTreeMap<(&str, &str), Vec<&FeatureMatrix>> = BTreeMap::new();
    for seg in test_segments {
        if !class_of.contains_key(seg.meta.driver_id.as_str()) {
            return Err(Error::Validation(format!(
                "test driver {} is not in the model's label map",
                seg.meta.driver_id
            )));
        }
        trips
            .entry((&seg.meta.driver_id, &seg.meta.trip_id))
            .or_default()
            .push(seg);
    }
    let trip_list: Vec<(usize, Vec<&FeatureMatrix>)> = trips
        .into_iter()
        .map(|((driver, _), segs)| (class_of[driver], segs))
        .collect();

    struct TripScore {
        truth: usize,
        top1: usize,
        top5_hit: bool,
        segment_hits: usize,
    }
    let scores: Vec<TripScore> = trip_list
        .par_iter()
        .map(|(truth, segs)| {
            let mut segment_hits = 0;
            for seg in segs {
                if argmax(&model.predict_segment(seg)?) == *truth {
                    segment_hits += 1;
                }
            }
            let (top1, ranking) = predict_trip(model, segs)?;
            let top5_hit = ranking[..ranking.len().min(5)].contains(truth);
            Ok(TripScore { truth: *truth, top1, top5_hit, segment_hits })
        })
        .collect::<Result<_>>()?;

    let c = model.label_map.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let (mut seg_hits, mut top1_hits, mut top5_hits) = (0usize, 0usize, 0usize);
    for s in &scores {
        confusion[s.truth][s.top1] += 1;
        seg_hits += s.segment_hits;
        top1_hits += usize::from(s.top1 == s.truth);
        top5_hits += usize::from(s.top5_hit);
    }
    let n_trips = scores.len();
    Ok(IdentificationReport {
        classes: model.label_map.clone(),
        n_segments: test_segments.len(),
        n_trips,
        segment_accuracy: seg_hits as f64 / test_segments.len() as f64,
        trip_top1_accuracy: top1_hits as f64 / n_trips as f64,
        trip_top5_accuracy: top5_hits as f64 / n_trips as f64,
        confusion,
    })
}
