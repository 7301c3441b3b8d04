use std::collections::BTreeMap;
use std::time::Instant;

use stylemetry::arnet::{train, ArnetConfig, ArnetModel, Mode};
use stylemetry::clusteval::ApOptions;
use stylemetry::experiments::{
    auto_personas, generate_synthetic, run_estimation_benchmark, run_identification_benchmark,
    tune_preference, EstimationBenchConfig,
};
use stylemetry::featurize::{featurize_trips, FeatureMatrix, FeaturizeConfig};
use stylemetry::trip2vec::encode_trips;

type Split<'a> = (Vec<String>, Vec<(&'a FeatureMatrix, usize)>, Vec<(&'a FeatureMatrix, usize)>);

fn split_by_trip(matrices: &[FeatureMatrix], stride: usize) -> Split<'_> {
    let mut label_map: Vec<String> =
        matrices.iter().map(|m| m.meta.driver_id.clone()).collect();
    label_map.sort();
    label_map.dedup();
    let mut by_trip: BTreeMap<(&str, &str), Vec<&FeatureMatrix>> = BTreeMap::new();
    for m in matrices {
        by_trip
            .entry((m.meta.driver_id.as_str(), m.meta.trip_id.as_str()))
            .or_default()
            .push(m);
    }
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    let mut per_driver: BTreeMap<&str, usize> = BTreeMap::new();
    for ((driver, _trip), ms) in by_trip {
        let idx = per_driver.entry(driver).or_insert(0);
        let label = label_map.iter().position(|d| d == driver).unwrap();
        if (*idx + 1) % stride == 0 {
            val_set.extend(ms.iter().map(|m| (*m, label)));
        } else {
            train_set.extend(ms.iter().map(|m| (*m, label)));
        }
        *idx += 1;
    }
    (label_map, train_set, val_set)
}

fn zero_fraction(model: &ArnetModel, matrices: &[FeatureMatrix]) -> f64 {
    let mut zeros = 0usize;
    let mut total = 0usize;
    for m in matrices {
        let code = model.encode_segment(m).unwrap();
        zeros += code.iter().filter(|v| **v == 0.0).count();
        total += code.len();
    }
    zeros as f64 / total as f64
}

#[test]
#[ignore]
fn pilot_desk_c7() {
    let personas = auto_personas(10, 11);
    let trips = generate_synthetic(10, 40, 600, Some(&personas), 11).unwrap();
    let matrices = featurize_trips(&trips, &FeaturizeConfig::default()).unwrap();
    let (label_map, train_set, val_set) = split_by_trip(&matrices, 5);
    println!("train {} val {}", train_set.len(), val_set.len());

    let mut cfg = ArnetConfig::desk(10);
    cfg.max_epochs = 50;
    cfg.patience = 50;
    cfg.seed = 13;
    let t0 = Instant::now();
    let (model, hist) = train(&cfg, label_map, &train_set, &val_set).unwrap();
    println!("train wall {:.1}s best {}", t0.elapsed().as_secs_f64(), hist.best_epoch);
    for e in &hist.epochs {
        if e.epoch % 5 == 0 || e.epoch >= 45 {
            println!(
                "ep {:2} j {:.4} j_r {:.4} j_c {:.4} val {:.4}",
                e.epoch, e.j, e.j_r, e.j_c, e.val_metric
            );
        }
    }
    let val_matrices: Vec<FeatureMatrix> = val_set.iter().map(|(m, _)| (*m).clone()).collect();
    let id = run_identification_benchmark(&model, &val_matrices).unwrap();
    println!(
        "ident: seg {:.4} top1 {:.4} top5 {:.4}",
        id.segment_accuracy, id.trip_top1_accuracy, id.trip_top5_accuracy
    );
}

#[test]
#[ignore]
fn pilot_estimation_c8_c9() {
    let personas = auto_personas(10, 11);
    let trips = generate_synthetic(10, 40, 600, Some(&personas), 11).unwrap();
    let matrices = featurize_trips(&trips, &FeaturizeConfig::default()).unwrap();
    let (label_map, train_set, val_set) = split_by_trip(&matrices, 5);
    let val_matrices: Vec<FeatureMatrix> = val_set.iter().map(|(m, _)| (*m).clone()).collect();

    let unseen_personas = auto_personas(10, 17);
    let mut unseen = generate_synthetic(10, 40, 600, Some(&unseen_personas), 17).unwrap();
    for t in &mut unseen {
        t.driver_id = t.driver_id.replace('d', "u");
    }

    let grid: Vec<f64> =
        vec![-24.0, -16.0, -12.0, -8.0, -6.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.5, -0.25];

    for mode in [Mode::Arnet, Mode::Ronet, Mode::Conet] {
        let mut cfg = ArnetConfig::desk(10);
        cfg.mode = mode;
        cfg.max_epochs = 50;
        cfg.seed = 13;
        let t0 = Instant::now();
        let (model, hist) = train(&cfg, label_map.clone(), &train_set, &val_set).unwrap();
        println!(
            "{mode}: epochs {} best {} wall {:.1}s",
            hist.epochs.len(),
            hist.best_epoch,
            t0.elapsed().as_secs_f64()
        );
        let val_vecs = encode_trips(&model, &val_matrices).unwrap();
        let (best_pref, curve) = tune_preference(&val_vecs, &grid, &ApOptions::default()).unwrap();
        for p in &curve {
            println!("  pref {:7.2} err {:.3}", p.preference, p.mean_abs_error);
        }
        println!("  tuned pref {best_pref}");
        let bench = EstimationBenchConfig {
            groups: 5,
            repeats: 10,
            preference: best_pref,
            trips_per_driver_cap: None,
            ap: ApOptions::default(),
            seed: 19,
        };
        let report =
            run_estimation_benchmark(&model, &unseen, &FeaturizeConfig::default(), &bench)
                .unwrap();
        for g in &report.groups {
            println!(
                "  g{} err {:.2}±{:.2} ami {:.2}±{:.2} nc {}",
                g.group, g.mean_abs_error, g.std_abs_error, g.mean_ami, g.std_ami, g.non_converged
            );
        }
        println!(
            "  OVERALL err {:.3} ami {:.3}",
            report.overall_mean_abs_error, report.overall_mean_ami
        );
    }
}

#[test]
#[ignore]
fn pilot_sparsity_smooth() {
    use stylemetry::experiments::PersonaConfig;
    let persona = PersonaConfig {
        cruise_speed: 20.0,
        accel_aggressiveness: 0.0,
        turn_sharpness: 0.0,
        speed_change_rate: 0.0,
        jitter: 0.0,
    };
    let trips = generate_synthetic(1, 2, 256, Some(&[persona]), 23).unwrap();
    let matrices = featurize_trips(&trips, &FeaturizeConfig::default()).unwrap();
    let (label_map, train_set, val_set) = split_by_trip(&matrices, 2);
    println!("train {} val {}", train_set.len(), val_set.len());
    for (lr, batch, epochs) in [(0.2, 1, 10000), (0.2, 1, 30000), (1.0, 1, 10000)] {
        let mut frac = Vec::new();
        for lambda in [1e-5, 0.0] {
            let mut cfg = ArnetConfig::desk(1);
            cfg.gru1_units = 16;
            cfg.gru2_units = 16;
            cfg.bottleneck_units = 16;
            cfg.dropout_p = 0.0;
            cfg.lambda = lambda;
            cfg.lr = lr;
            cfg.max_epochs = epochs;
            cfg.patience = epochs;
            cfg.batch_size = batch;
            cfg.seed = 29;
            let t0 = Instant::now();
            let (model, hist) = train(&cfg, label_map.clone(), &train_set, &val_set).unwrap();
            let last = hist.epochs.last().unwrap();
            let zf_all = zero_fraction(&model, &matrices);
            let mut small = 0usize;
            let mut total = 0usize;
            let mut minpos = f64::INFINITY;
            for m in &matrices {
                let code = model.encode_segment(m).unwrap();
                small += code.iter().filter(|v| **v > 0.0 && **v < 1e-3).count();
                total += code.len();
                for v in &code {
                    if *v > 0.0 && *v < minpos {
                        minpos = *v;
                    }
                }
            }
            println!(
                "  lr {lr} bs {batch} ep {epochs} lambda {lambda:>7}: j_r {:.2e} zero {:.4} tiny {:.4} minpos {:.2e} wall {:.1}s",
                last.j_r,
                zf_all,
                small as f64 / total as f64,
                minpos,
                t0.elapsed().as_secs_f64()
            );
            frac.push(zf_all);
        }
        println!("  sparsity gap: {} > {} ?", frac[0], frac[1]);
    }
}

#[test]
#[ignore]
fn pilot_sparsity_c10() {
    let personas = auto_personas(10, 23);
    let trips = generate_synthetic(10, 100, 600, Some(&personas), 23).unwrap();
    let matrices = featurize_trips(&trips, &FeaturizeConfig::default()).unwrap();
    let (label_map, train_set, val_set) = split_by_trip(&matrices, 10);
    println!("train {} val {}", train_set.len(), val_set.len());

    for lambda in [1e-5, 0.0] {
        let mut cfg = ArnetConfig::desk(10);
        cfg.gru1_units = 16;
        cfg.gru2_units = 16;
        cfg.bottleneck_units = 256;
        cfg.dropout_p = 0.0;
        cfg.lambda = lambda;
        cfg.max_epochs = 500;
        cfg.patience = 500;
        cfg.batch_size = 32;
        cfg.seed = 29;
        let t0 = Instant::now();
        let (model, hist) = train(&cfg, label_map.clone(), &train_set, &val_set).unwrap();
        let last = hist.epochs.last().unwrap();
        let mut zeros = 0usize;
        let mut tiny3 = 0usize;
        let mut tiny4 = 0usize;
        let mut total = 0usize;
        for m in &matrices {
            let code = model.encode_segment(m).unwrap();
            for v in &code {
                if *v == 0.0 {
                    zeros += 1;
                } else if *v < 1e-4 {
                    tiny4 += 1;
                } else if *v < 1e-3 {
                    tiny3 += 1;
                }
            }
            total += code.len();
        }
        println!(
            "lambda {lambda:>7}: epochs {} j_r {:.3e} j_c {:.3e} zeros {zeros}/{total} ({:.5}) tiny4 {tiny4} tiny3 {tiny3} wall {:.0}s",
            hist.epochs.len(),
            last.j_r,
            last.j_c,
            zeros as f64 / total as f64,
            t0.elapsed().as_secs_f64()
        );
    }
}
