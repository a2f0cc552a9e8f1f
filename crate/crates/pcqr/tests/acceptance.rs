//! End-to-end acceptance checks, one line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL without failing the
//! run; any other failure exits non-zero. `PCQR_ACCEPTANCE_ONLY=2,3` runs a
//! subset.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::process::ExitCode;
use std::time::Instant;

use pcqr::dataset::{episodes_csv, read_dataset, write_dataset, DatasetMeta};
use pcqr::model_io::{decode_suite, encode_suite};
use pcqr::report::write_report;
use pcqr::settings::experiment_to_kv;
use pcqr_core::conformal::{
    calibrate, cqr_interval, interval_index_unclamped, pcqr_interval, ConformalScores, Interval, IntervalKind,
    Score,
};
use pcqr_core::eval::{run_experiment, CalibrationReport, ExperimentConfig};
use pcqr_core::forest::{fit_forest, CdfValue, ForestConfig, ForestModel, TrainingSet};
use pcqr_core::inverse::{
    calibrate_alphas, coverage_bounds, interval_rank_stats, CalibrationAlphas, CoverageBounds,
    TargetInterval,
};
use pcqr_core::monitor::build_monitor;
use pcqr_core::sim::{generate_dataset, DomainConfig, SkirmishConfig, TamariskConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_RED: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("PCQR_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let selected = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut tamarisk: Option<CalibrationReport> = None;
    let mut full = || -> CalibrationReport {
        tamarisk
            .get_or_insert_with(|| {
                let domain = DomainConfig::Tamarisk(TamariskConfig::default());
                run_experiment(&domain, &ExperimentConfig::default()).expect("tamarisk experiment")
            })
            .clone()
    };

    let mut unexpected = Vec::new();
    for id in 1..=9 {
        if !selected(id) {
            continue;
        }
        let start = Instant::now();
        let (name, o) = match id {
            1 => ("forward coverage", forward(&full())),
            2 => ("forward sandwich at small n", forward_small_n()),
            3 => ("inverse sandwich", inverse_sandwich()),
            4 => ("pooled lower-bound ECE", ece(&full())),
            5 => ("mean coverage curve", mean_curve(&full())),
            6 => ("CQR non-invertibility", invertibility()),
            7 => ("brute-force oracles", oracles()),
            8 => ("round trips and determinism", round_trips()),
            _ => ("convergence at t=H-1", convergence(&full())),
        };
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let known = !o.pass && KNOWN_RED.contains(&id);
        println!(
            "criterion {id} {name}: {verdict}{} {} [{:.1}s]",
            if known { " (known)" } else { "" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass && !known {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}

fn forward(report: &CalibrationReport) -> Outcome {
    let c = report.forward_coverage();
    outcome(
        (0.785..=0.815).contains(&c.mean) && c.std <= 0.02,
        format!("mean {:.4} std {:.4} over {} partitions", c.mean, c.std, report.partitions.len()),
    )
}

fn ece(tamarisk: &CalibrationReport) -> Outcome {
    let skirmish = run_experiment(
        &DomainConfig::Skirmish(SkirmishConfig::default()),
        &ExperimentConfig::default(),
    )
    .expect("skirmish experiment");
    let (t, s) = (tamarisk.pooled_ece_lower(), skirmish.pooled_ece_lower());
    outcome(
        t.mean <= 0.02 && s.mean <= 0.03,
        format!(
            "tamarisk {:.4} ± {:.4} (≤ 0.02), skirmish {:.4} ± {:.4} (≤ 0.03)",
            t.mean, t.std, s.mean, s.std
        ),
    )
}

fn mean_curve(report: &CalibrationReport) -> Outcome {
    let (t, dev) = (0..report.horizon)
        .map(|t| (t, (report.mean_coverage_at(t).mean - 0.8).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    outcome(dev <= 0.03, format!("max |mean p_lower - 0.8| = {dev:.4} at t={t}"))
}

fn convergence(report: &CalibrationReport) -> Outcome {
    let c = report.convergence;
    outcome(
        c.fraction() >= 0.9,
        format!("{}/{} = {:.4} (≥ 0.90)", c.converged, c.eligible, c.fraction()),
    )
}

/// `y = 2x + (0.2 + x)·(u₁ + u₂ + u₃ − 3/2)` with `x ~ U(0, 4)`.
fn draw(rng: &mut ChaCha8Rng) -> ([f64; 1], f64) {
    let x: f64 = rng.gen_range(0.0..4.0);
    let e: f64 = (0..3).map(|_| rng.gen::<f64>()).sum::<f64>() - 1.5;
    ([x], 2.0 * x + (0.2 + x) * e)
}

fn synthetic_model() -> ForestModel {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (rows, y): (Vec<Vec<f64>>, Vec<f64>) = (0..1000)
        .map(|_| {
            let (x, y) = draw(&mut rng);
            (x.to_vec(), y)
        })
        .unzip();
    let config = ForestConfig {
        min_leaf_size: 25,
        seed: 1,
        ..ForestConfig::default()
    };
    fit_forest(&TrainingSet::new(&rows, y).unwrap(), &config).unwrap()
}

fn within(freq: f64, target: f64, resamples: usize) -> (bool, f64) {
    let se = (target * (1.0 - target) / resamples as f64).sqrt();
    ((freq - target).abs() <= 3.0 * se, se)
}

fn forward_small_n() -> Outcome {
    let model = synthetic_model();
    let resamples = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pass = true;
    let mut detail = Vec::new();
    for (n, delta, lower_target, upper_target) in [(99, 0.2, 0.80, 0.80), (9, 0.25, 0.7, 0.8)] {
        let (mut lower, mut upper) = (0usize, 0usize);
        for _ in 0..resamples {
            let cal: Vec<_> = (0..n).map(|_| draw(&mut rng)).collect();
            let scores = calibrate(&model, cal.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap();
            let (x, y) = draw(&mut rng);
            lower += pcqr_interval(&model, &scores, &x, delta, IntervalKind::Lower).unwrap().contains(y)
                as usize;
            upper += pcqr_interval(&model, &scores, &x, delta, IntervalKind::Upper).unwrap().contains(y)
                as usize;
        }
        for (name, hits, target) in [("I-", lower, lower_target), ("I+", upper, upper_target)] {
            let freq = hits as f64 / resamples as f64;
            let (ok, se) = within(freq, target, resamples);
            pass &= ok;
            detail.push(format!("n={n} {name} {freq:.4} vs {target:.2}±{:.4}", 3.0 * se));
        }
    }
    outcome(pass, detail.join(", "))
}

fn inverse_sandwich() -> Outcome {
    let model = synthetic_model();
    let target = TargetInterval::new(2.0, 6.0).unwrap();
    let resamples = 2000;
    let n = 99;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut inside, mut sum_lo, mut sum_hi) = (0usize, 0.0, 0.0);
    let mut width_ok = true;
    let mut unclamped = 0;
    for _ in 0..resamples {
        let cal: Vec<_> = (0..n).map(|_| draw(&mut rng)).collect();
        let alphas = calibrate_alphas(&model, cal.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap();
        let (x, y) = draw(&mut rng);
        let b = coverage_bounds(&model, &alphas, &x, &target).unwrap();
        inside += target.contains(y) as usize;
        sum_lo += b.p_lower;
        sum_hi += b.p_upper;
        if b.is_unclamped() {
            unclamped += 1;
            let d = b.lower_numerator();
            let denom = (n + 1) as f64;
            width_ok &= b.p_lower == d as f64 / denom && b.p_upper == (d + 2) as f64 / denom;
        }
    }
    let r = resamples as f64;
    let freq = inside as f64 / r;
    let se = (freq * (1.0 - freq) / r).sqrt();
    let (lo, hi) = (sum_lo / r, sum_hi / r);
    outcome(
        lo - 3.0 * se <= freq && freq <= hi + 3.0 * se && width_ok,
        format!(
            "freq {freq:.4} in [{lo:.4} - {:.4}, {hi:.4} + {:.4}], width 2/(n+1) exact in {unclamped}/{resamples} unclamped",
            3.0 * se,
            3.0 * se
        ),
    )
}

fn invertibility() -> Outcome {
    let (a, b, eps) = (0.0, 10.0, 1.0);
    let (c10, c20) = (-0.5, 0.5);
    let i90 = cqr_interval(a, b, c10).unwrap();
    let i80 = cqr_interval(a + eps, b - eps, c20).unwrap();
    let expected = Interval { lo: 0.5, hi: 9.5 };
    let cqr_collapses = i90 == expected && i80 == expected;

    // Single-leaf forest on 20 equally weighted responses with
    // Q̂(0.05) = a, Q̂(0.1) = a + ε, Q̂(0.9) = b − ε, Q̂(0.95) = b.
    let mut y = vec![a, a + eps];
    y.extend((1..16).map(|i| a + eps + (b - a - 2.0 * eps) * i as f64 / 16.0));
    y.extend([b - eps, b, b + eps]);
    let rows: Vec<Vec<f64>> = y.iter().map(|_| vec![0.0]).collect();
    let model = fit_forest(&TrainingSet::new(&rows, y).unwrap(), &ForestConfig::default()).unwrap();
    let scores =
        ConformalScores::from_scores((1..=99).map(|i| Score::new(i as f64 / 200.0)).collect()).unwrap();
    let x = [0.0];
    let mut seen: Vec<(usize, Interval)> = Vec::new();
    let mut recovered = true;
    for k in 2..20 {
        let delta = k as f64 / 20.0;
        let iv = pcqr_interval(&model, &scores, &x, delta, IntervalKind::Upper).unwrap();
        let s = scores.order_statistic(iv.index).unwrap().value;
        let lo = model.cdf(&x, iv.lo).unwrap();
        let hi = model.cdf(&x, iv.hi).unwrap();
        recovered &= (lo - (0.5 - s)).abs() < 1e-9 && (hi - (0.5 + s)).abs() < 1e-9;
        seen.push((iv.index, Interval { lo: iv.lo, hi: iv.hi }));
    }
    let distinct = seen
        .iter()
        .all(|(i, a)| seen.iter().all(|(j, b)| i == j || a != b));
    let get = |d: f64| {
        let iv = pcqr_interval(&model, &scores, &x, d, IntervalKind::Upper).unwrap();
        Interval { lo: iv.lo, hi: iv.hi }
    };
    let close = |i: Interval, lo: f64, hi: f64| (i.lo - lo).abs() < 1e-9 && (i.hi - hi).abs() < 1e-9;
    let pcqr_separates = close(get(0.1), a, b) && close(get(0.2), a + eps, b - eps);
    outcome(
        cqr_collapses && recovered && distinct && pcqr_separates,
        format!(
            "CQR δ=0.1 {:?} δ=0.2 {:?}; PCQR δ=0.1 [{:.3}, {:.3}] δ=0.2 [{:.3}, {:.3}], endpoints recover 1/2∓s",
            (i90.lo, i90.hi),
            (i80.lo, i80.hi),
            get(0.1).lo,
            get(0.1).hi,
            get(0.2).lo,
            get(0.2).hi
        ),
    )
}

fn oracle_value(knots: &[(f64, f64)], y: f64) -> CdfValue {
    let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
    let overshoot = if y < lo { y - lo } else if y >= hi { y - hi } else { 0.0 };
    CdfValue {
        level: support::cdf(knots, y),
        overshoot,
    }
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut mismatches = 0usize;
    let mut fixtures = 0usize;

    for n in 1..=10 {
        for num in 1..40u64 {
            for kind in [IntervalKind::Lower, IntervalKind::Upper] {
                let want = support::interval_index(n, num, 40, kind);
                mismatches += (interval_index_unclamped(n, num as f64 / 40.0, kind).ok() != want) as usize;
            }
        }
    }

    let mut max_err = 0.0f64;
    while fixtures < 500 {
        let n_rows = rng.gen_range(2..=10);
        let rows: Vec<Vec<f64>> = (0..n_rows).map(|_| vec![rng.gen_range(0..4) as f64]).collect();
        let y: Vec<f64> = (0..n_rows).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let config = ForestConfig {
            tree_count: rng.gen_range(1..=3),
            min_leaf_size: rng.gen_range(1..=3),
            feature_subsample: 1.0,
            bootstrap: true,
            seed: rng.gen(),
        };
        let model = fit_forest(&TrainingSet::new(&rows, y.clone()).unwrap(), &config).unwrap();
        let knots_at = |x: &[f64]| support::knots(&y, &support::weights(&model, x));

        let x = [rng.gen_range(-1.0..4.0)];
        let knots = knots_at(&x);
        let q = rng.gen_range(-3.0..4.0);
        let alpha: f64 = rng.gen();
        max_err = max_err
            .max((model.cdf(&x, q).unwrap() - support::cdf(&knots, q)).abs())
            .max((model.quantile(&x, alpha).unwrap() - support::quantile(&knots, alpha)).abs());

        let n = rng.gen_range(1..=10);
        let cal: Vec<([f64; 1], f64)> = (0..n)
            .map(|_| ([rng.gen_range(0..4) as f64], rng.gen_range(-2.5..3.5)))
            .collect();
        let Ok(alphas) = calibrate_alphas(&model, cal.iter().map(|(x, y)| (x.as_slice(), *y))) else {
            continue;
        };
        let oracle_alphas: Vec<CdfValue> =
            cal.iter().map(|(x, yv)| oracle_value(&knots_at(x), *yv)).collect();
        let mut ends = [rng.gen_range(-3.0..4.0), rng.gen_range(-3.0..4.0)];
        ends.sort_by(f64::total_cmp);
        let target = TargetInterval::new(ends[0], ends[1]).unwrap();
        let got = coverage_bounds(&model, &alphas, &x, &target).unwrap();
        let want = support::bounds(&oracle_alphas, oracle_value(&knots, ends[0]), oracle_value(&knots, ends[1]));
        mismatches += ((got.p_lower, got.p_upper) != want) as usize;

        let sorted = CalibrationAlphas::from_values(oracle_alphas.clone()).unwrap();
        let (lo, hi) = interval_rank_stats(&sorted, oracle_value(&knots, ends[0]), oracle_value(&knots, ends[1]));
        mismatches += (CoverageBounds::from_ranks(lo, hi, n).p_lower != want.0) as usize;

        let Ok(scores) = calibrate(&model, cal.iter().map(|(x, y)| (x.as_slice(), *y))) else {
            continue;
        };
        let mut oracle_scores: Vec<(f64, f64)> = oracle_alphas
            .iter()
            .map(|a| ((0.5 - a.level).abs(), a.overshoot.abs()))
            .collect();
        oracle_scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let num = rng.gen_range(1..20u64);
        for kind in [IntervalKind::Lower, IntervalKind::Upper] {
            let got = pcqr_interval(&model, &scores, &x, num as f64 / 20.0, kind);
            match (support::interval_index(n, num, 20, kind), got) {
                (None, Err(_)) => {}
                (Some(k), Ok(iv)) if iv.index == k.min(n) && iv.clamped == (k > n) => {
                    let (v, o) = oracle_scores[k.min(n) - 1];
                    let lo = support::quantile(&knots, 0.5 - v) - o;
                    let hi = support::quantile(&knots, 0.5 + v) + o;
                    max_err = max_err.max((iv.lo - lo).abs()).max((iv.hi - hi).abs());
                }
                _ => mismatches += 1,
            }
        }
        fixtures += 1;
    }
    outcome(
        mismatches == 0 && max_err <= 1e-12,
        format!("{fixtures} fixtures, {mismatches} index/bound mismatches, max cdf/quantile/endpoint error {max_err:.1e}"),
    )
}

fn round_trips() -> Outcome {
    let domain = DomainConfig::Skirmish(SkirmishConfig::default());
    let episodes = generate_dataset(&domain, 200, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = DatasetMeta {
        domain: domain.clone(),
        seed: 9,
        episode_count: 200,
    };
    write_dataset(dir.path(), &episodes, &meta).unwrap();
    let (back, back_meta) = read_dataset(dir.path()).unwrap();
    let names = domain.feature_names();
    let dataset_ok =
        back == episodes && back_meta == meta && episodes_csv(&back, &names) == episodes_csv(&episodes, &names);

    let forest = ForestConfig {
        tree_count: 20,
        ..ForestConfig::default()
    };
    let suite = build_monitor(&episodes[..100], &episodes[100..], &forest).unwrap();
    let bytes = encode_suite(&suite);
    let decoded = decode_suite(&bytes).unwrap();
    let model_ok = decoded == suite && encode_suite(&decoded) == bytes;

    let config = ExperimentConfig {
        episode_count: 300,
        n_train: 100,
        n_cal: 99,
        n_test: 101,
        partition_seeds: vec![1, 2],
        forest,
        ..ExperimentConfig::default()
    };
    let tamarisk = DomainConfig::Tamarisk(TamariskConfig {
        horizon: 10,
        ..TamariskConfig::default()
    });
    let files = |dir: &std::path::Path| {
        let report = run_experiment(&tamarisk, &config).unwrap();
        write_report(dir, &report, &experiment_to_kv(&config)).unwrap();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        entries.sort();
        entries
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (files(a.path()), files(b.path()));
    let report_ok = ra == rb && !ra.is_empty();
    outcome(
        dataset_ok && model_ok && report_ok,
        format!(
            "dataset {}, suite {} ({} bytes), report files identical {} ({} files)",
            dataset_ok,
            model_ok,
            bytes.len(),
            report_ok,
            ra.len()
        ),
    )
}
