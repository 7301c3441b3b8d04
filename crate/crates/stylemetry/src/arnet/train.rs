//! Deterministic mini-batch training with ADADELTA and early stopping.
//!
//! Reproducibility contract: given the same config (including the seed) and
//! the same data, training produces bit-identical parameters and history on
//! any machine and any thread count. Three independent ChaCha streams are
//! derived from the seed: parameter initialization, epoch shuffles, and
//! dropout masks. Masks are drawn sequentially per batch before the parallel
//! gradient pass so the draw order never depends on scheduling.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::nn::{sample_mask, AdaDelta};

use super::{batch_gradients, ArnetConfig, ArnetModel, InputScaler, Mode};

/// Stream separators so init, shuffling, and dropout never share a
/// generator.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;
const DROPOUT_STREAM: u64 = 0x4452_4f50_4f55_5431;

/// Reconstruction-mode stopping: training ends once the validation J_r
/// moves less than this across an epoch, or drops to 0.001.
const RONET_DELTA: f64 = 1e-4;
const RONET_FLOOR: f64 = 0.001;

/// One epoch's losses and validation score.
///
/// Equality ignores `wall_secs`: wall-clock time is diagnostic output, not
/// part of the deterministic training contract.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    /// 1-based, contiguous.
    pub epoch: usize,
    pub j: f64,
    pub j_r: f64,
    pub j_c: f64,
    /// Validation segment accuracy, or validation J_r in reconstruction-only
    /// mode.
    pub val_metric: f64,
    pub wall_secs: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.j == other.j
            && self.j_r == other.j_r
            && self.j_c == other.j_c
            && self.val_metric == other.val_metric
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameter snapshot was returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_record(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// Plain-text table, one row per epoch. Wall-clock seconds are omitted
    /// so the file is byte-identical across same-seed runs.
    pub fn serialize(&self) -> String {
        let mut out = String::from("epoch j j_r j_c val_metric\n");
        for r in &self.epochs {
            out.push_str(&format!("{} {} {} {} {}\n", r.epoch, r.j, r.j_r, r.j_c, r.val_metric));
        }
        out.push_str(&format!("best_epoch {}\n", self.best_epoch));
        out
    }
}

/// Trains a freshly initialized model and returns the parameter snapshot of
/// the best validation epoch together with the full history.
///
/// `label_map[i]` is the driver id of class `i` (sorted, distinct); labels
/// in both sets must lie in `[0, n_classes)`. Validation runs after every
/// epoch: segment accuracy (maximized) in the modes with a classifier,
/// J_r (minimized) in reconstruction-only mode.
pub fn train(
    config: &ArnetConfig,
    label_map: Vec<String>,
    train_set: &[(&FeatureMatrix, usize)],
    val_set: &[(&FeatureMatrix, usize)],
) -> Result<(ArnetModel, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Validation("training and validation sets must be nonempty".into()));
    }
    if label_map.len() != config.n_classes {
        return Err(Error::Validation(format!(
            "label map has {} entries for {} classes",
            label_map.len(),
            config.n_classes
        )));
    }
    for &(_, label) in train_set.iter().chain(val_set.iter()) {
        if label >= config.n_classes {
            return Err(Error::Validation(format!(
                "label {label} out of range for {} classes",
                config.n_classes
            )));
        }
    }

    let mut model = ArnetModel::new(config.clone())?;
    model.label_map = label_map;
    model.scaler = InputScaler::fit(train_set)?;
    let opt = AdaDelta { lr: config.lr, rho: config.rho, eps: config.eps };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_STREAM);

    // Higher accuracy is better; lower reconstruction loss is better.
    let maximize = config.classification_active();
    let mut best_model = model.clone();
    let mut best_metric = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut best_epoch = 0;
    let mut stale_epochs = 0;
    let mut prev_val = None;
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut j_sum = 0.0;
        let mut j_r_sum = 0.0;
        let mut j_c_sum = 0.0;
        for batch_indices in order.chunks(config.batch_size) {
            let batch: Vec<(&FeatureMatrix, usize)> =
                batch_indices.iter().map(|&i| train_set[i]).collect();
            let masks: Option<Vec<Vec<f64>>> = if config.dropout_p > 0.0 {
                Some(
                    batch
                        .iter()
                        .map(|_| sample_mask(config.gru2_units, config.dropout_p, &mut dropout_rng))
                        .collect(),
                )
            } else {
                None
            };
            let (loss, grads) = batch_gradients(&model, &batch, masks.as_deref())?;
            grads.accumulate_into(&mut model);
            for p in model.params_mut() {
                p.adadelta_step(&opt);
            }
            let weight = batch.len() as f64;
            j_sum += loss.j * weight;
            j_r_sum += loss.j_r * weight;
            j_c_sum += loss.j_c * weight;
        }
        let n = train_set.len() as f64;

        let val_metric = if maximize {
            validation_accuracy(&model, val_set)?
        } else {
            validation_reconstruction_loss(&model, val_set)?
        };

        let improved =
            if maximize { val_metric > best_metric } else { val_metric < best_metric };
        if improved {
            best_metric = val_metric;
            best_model = model.clone();
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }

        epochs.push(EpochRecord {
            epoch,
            j: j_sum / n,
            j_r: j_r_sum / n,
            j_c: j_c_sum / n,
            val_metric,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        if stale_epochs >= config.patience {
            break;
        }
        if config.mode == Mode::Ronet {
            if val_metric <= RONET_FLOOR {
                break;
            }
            if let Some(prev) = prev_val {
                if f64::abs(val_metric - prev) < RONET_DELTA {
                    break;
                }
            }
            prev_val = Some(val_metric);
        }
    }

    Ok((best_model, TrainHistory { epochs, best_epoch }))
}

/// Fraction of segments whose argmax class (lowest index on ties) matches
/// the label. Inference mode; parallel over fixed chunks, and exactly
/// reproducible because the correct-count sum is integral.
pub fn validation_accuracy(
    model: &ArnetModel,
    set: &[(&FeatureMatrix, usize)],
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Validation("validation set must be nonempty".into()));
    }
    let counts: Vec<Result<usize>> = set
        .par_chunks(super::GRAD_CHUNK)
        .map(|chunk| {
            let mut correct = 0;
            for (x, label) in chunk {
                let trace = model.forward_trace(&model.scaled_columns(x), None)?;
                if argmax(&trace.logits) == *label {
                    correct += 1;
                }
            }
            Ok(correct)
        })
        .collect();
    let mut correct = 0;
    for c in counts {
        correct += c?;
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Mean J_r of the set at inference (clean features, reconstruction target
/// equals the encoder input). Chunk sums are reduced in order, so the value
/// is bit-identical for any thread count.
pub fn validation_reconstruction_loss(
    model: &ArnetModel,
    set: &[(&FeatureMatrix, usize)],
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Validation("validation set must be nonempty".into()));
    }
    let lambda = model.config.lambda;
    let sums: Vec<Result<f64>> = set
        .par_chunks(super::GRAD_CHUNK)
        .map(|chunk| {
            let mut sum = 0.0;
            for (x, _) in chunk {
                let trace = model.forward_trace(&model.scaled_columns(x), None)?;
                for (r, t) in trace.x_hat.iter().zip(trace.x_tilde.iter()) {
                    sum += (r - t) * (r - t);
                }
                for &s in &trace.s {
                    sum += lambda * s.abs();
                }
            }
            Ok(sum)
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / set.len() as f64)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::{SegmentMeta, N_ROWS};
    use rand::Rng;

    /// Two synthetic "styles": class 0 drifts positive, class 1 negative,
    /// with per-sample noise. Linearly separable through the GRU stack.
    fn labeled_set(n_per_class: usize, cols: usize, seed: u64) -> Vec<(FeatureMatrix, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for class in 0..2usize {
            let sign = if class == 0 { 1.0 } else { -1.0 };
            for k in 0..n_per_class {
                let mut data = vec![0.0; N_ROWS * cols];
                for v in &mut data {
                    *v = sign * 0.4 + rng.gen::<f64>() * 0.2 - 0.1;
                }
                out.push((
                    FeatureMatrix {
                        meta: SegmentMeta {
                            driver_id: format!("d{class}"),
                            trip_id: format!("t{k}"),
                            segment_index: 0,
                        },
                        cols,
                        data,
                    },
                    class,
                ));
            }
        }
        out
    }

    fn as_refs(set: &[(FeatureMatrix, usize)]) -> Vec<(&FeatureMatrix, usize)> {
        set.iter().map(|(x, l)| (x, *l)).collect()
    }

    fn tiny_config() -> ArnetConfig {
        ArnetConfig {
            gru1_units: 16,
            gru2_units: 16,
            bottleneck_units: 8,
            n_classes: 2,
            batch_size: 32,
            max_epochs: 6,
            seed: 7,
            ..ArnetConfig::full(2)
        }
    }

    #[test]
    fn classification_loss_falls_below_chance() {
        // ADADELTA with eps=1e-8 warms up over a few hundred updates, so the
        // set is sized to give the optimizer enough batches.
        let data = labeled_set(128, 10, 11);
        let holdout = labeled_set(8, 10, 12);
        let mut cfg = tiny_config();
        cfg.max_epochs = 40;
        cfg.patience = 40;
        let (model, history) = train(
            &cfg,
            vec!["d0".into(), "d1".into()],
            &as_refs(&data),
            &as_refs(&holdout),
        )
        .unwrap();
        assert!(history.epochs.last().unwrap().j_c < 2.0f64.ln());
        assert_eq!(model.label_map, vec!["d0".to_string(), "d1".to_string()]);
    }

    #[test]
    fn epochs_are_contiguous_from_one() {
        let data = labeled_set(8, 8, 21);
        let (_, history) = train(
            &tiny_config(),
            vec!["d0".into(), "d1".into()],
            &as_refs(&data),
            &as_refs(&data),
        )
        .unwrap();
        for (i, r) in history.epochs.iter().enumerate() {
            assert_eq!(r.epoch, i + 1);
        }
        assert!(history.best_epoch >= 1);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let data = labeled_set(8, 8, 31);
        let mut cfg = tiny_config();
        cfg.lr = 0.0;
        cfg.max_epochs = 2;
        let fresh = ArnetModel::new(cfg.clone()).unwrap();
        let (trained, _) = train(
            &cfg,
            vec!["d0".into(), "d1".into()],
            &as_refs(&data),
            &as_refs(&data),
        )
        .unwrap();
        for (a, b) in fresh.params().iter().zip(trained.params().iter()) {
            assert_eq!(a.value.data, b.value.data, "{} changed", a.name);
        }
    }

    #[test]
    fn same_seed_reproduces_the_history_exactly() {
        let data = labeled_set(12, 8, 41);
        let holdout = labeled_set(4, 8, 42);
        let run = || {
            train(
                &tiny_config(),
                vec!["d0".into(), "d1".into()],
                &as_refs(&data),
                &as_refs(&holdout),
            )
            .unwrap()
        };
        let (model_a, hist_a) = run();
        let (model_b, hist_b) = run();
        assert_eq!(hist_a, hist_b);
        for (a, b) in model_a.params().iter().zip(model_b.params().iter()) {
            assert_eq!(a.value.data, b.value.data);
        }
    }

    #[test]
    fn best_epoch_matches_the_maximum_validation_metric() {
        let data = labeled_set(16, 8, 51);
        let holdout = labeled_set(6, 8, 52);
        let (model, history) = train(
            &tiny_config(),
            vec!["d0".into(), "d1".into()],
            &as_refs(&data),
            &as_refs(&holdout),
        )
        .unwrap();
        let max = history
            .epochs
            .iter()
            .map(|r| r.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(history.best_record().val_metric, max);
        let acc = validation_accuracy(&model, &as_refs(&holdout)).unwrap();
        assert_eq!(acc, max);
    }

    #[test]
    fn reconstruction_mode_trains_and_stops() {
        let data = labeled_set(16, 8, 61);
        let mut cfg = tiny_config();
        cfg.mode = Mode::Ronet;
        cfg.max_epochs = 30;
        let (model, history) = train(
            &cfg,
            vec!["d0".into(), "d1".into()],
            &as_refs(&data),
            &as_refs(&data),
        )
        .unwrap();
        assert!(history.epochs.len() <= 30);
        assert!(model.predict_segment(&data[0].0).is_err());
        // The best epoch has the lowest validation J_r.
        let min = history.epochs.iter().map(|r| r.val_metric).fold(f64::INFINITY, f64::min);
        assert_eq!(history.best_record().val_metric, min);
        // J_c is never reported in this mode.
        assert!(history.epochs.iter().all(|r| r.j_c == 0.0));
    }

    #[test]
    fn rejects_out_of_range_labels_before_training() {
        let data = labeled_set(4, 8, 71);
        let mut bad: Vec<(&FeatureMatrix, usize)> = as_refs(&data);
        bad[0].1 = 9;
        let err = train(&tiny_config(), vec!["d0".into(), "d1".into()], &bad, &as_refs(&data));
        assert!(err.is_err());
    }

    #[test]
    fn rejects_empty_sets() {
        let data = labeled_set(4, 8, 81);
        assert!(train(&tiny_config(), vec!["a".into(), "b".into()], &[], &as_refs(&data)).is_err());
        assert!(train(&tiny_config(), vec!["a".into(), "b".into()], &as_refs(&data), &[]).is_err());
    }

    #[test]
    fn serialized_history_omits_wall_clock() {
        let history = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                j: 0.5,
                j_r: 0.25,
                j_c: 0.25,
                val_metric: 0.75,
                wall_secs: 123.456,
            }],
            best_epoch: 1,
        };
        let text = history.serialize();
        assert_eq!(text, "epoch j j_r j_c val_metric\n1 0.5 0.25 0.25 0.75\nbest_epoch 1\n");
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.7, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[3.0]), 0);
    }
}
