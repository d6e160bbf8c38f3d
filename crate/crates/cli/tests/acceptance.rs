//! Acceptance gate: nine end-to-end checks, one test per criterion, each
//! printing a single PASS (or SKIP) line. Tolerances and budgets are pinned
//! as constants here; a failure anywhere means the gate is not met.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhmm_cli::checkpoint::{load_model, Checkpoint};
use nhmm_core::data::{
    generate, make_windows, DatasetManifest, RegimeParams, ScalerParams, SplitPolicy,
    SyntheticSpec, WindowBatch,
};
use nhmm_core::diffmath::check::{central_difference, compare_gradients};
use nhmm_core::diffmath::{Tape, Tensor};
use nhmm_core::metrics::{build_subsamples, eval_cases, mase, score_corpus, snaive, snaive_scores};
use nhmm_core::model::{
    build_elbo, build_transition, exact_log_likelihood, forecast, forward_log_likelihood,
    ModelConfig, NhmmModel, PriorMode, Trainable,
};
use nhmm_core::training::{fit, TrainConfig};

/// Relative tolerance between analytic and central-difference gradients.
const GRAD_REL_TOL: f64 = 1e-4;
/// Coordinate differences below this always pass the gradient check.
const GRAD_ABS_FLOOR: f64 = 1e-8;
/// Central-difference step.
const GRAD_STEP: f64 = 1e-5;
/// Wall-clock budget for the 100-configuration gradient check.
const GRAD_BUDGET: Duration = Duration::from_secs(120);
/// Slack allowed on `objective <= log-likelihood` and on the agreement
/// between the enumerated and recursive likelihoods.
const BOUND_SLACK: f64 = 1e-8;
/// Single-state objective must equal the Gaussian log-likelihood this tightly.
const DEGENERATE_TOL: f64 = 1e-10;
/// Wall-clock budget for the regime-recovery fit and its checks.
const RECOVERY_BUDGET: Duration = Duration::from_secs(900);
/// Required hard-assignment accuracy of the posterior, best over state
/// relabelings.
const RECOVERY_ACCURACY: f64 = 0.9;
/// Monte-Carlo trajectory mean must sit within this many standard errors
/// of the closed-form mixture mean.
const MC_SIGMA: f64 = 4.0;
const MC_TRAJECTORIES: usize = 10_000;
/// Scaled-error invariance under rescaling the whole problem.
const SCALE_INVARIANCE_TOL: f64 = 1e-10;
/// Corpus baseline score expected on the optional reference dataset,
/// matched to its published three decimals.
const REFERENCE_BASELINE_MASE: f64 = 0.881;
const REFERENCE_BASELINE_TOL: f64 = 5e-4;

/// A batch of `rows` fabricated windows with identity scalers, so scaled
/// and original units coincide.
fn random_batch(
    rng: &mut ChaCha8Rng,
    rows: usize,
    lookback: usize,
    horizon: usize,
    channels: usize,
) -> WindowBatch {
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    WindowBatch {
        past_y: Tensor::new(vec![rows, lookback], draw(rows * lookback)).unwrap(),
        past_w: (channels > 0).then(|| {
            Tensor::new(vec![rows, lookback, channels], draw(rows * lookback * channels)).unwrap()
        }),
        future_y: Tensor::new(vec![rows, horizon], draw(rows * horizon)).unwrap(),
        scalers: vec![ScalerParams::MinMax { min: 0.0, max: 1.0 }; rows],
        ids: (0..rows).map(|i| format!("row{i}")).collect(),
        origins: vec![lookback; rows],
    }
}

fn random_model(
    states: usize,
    horizon: usize,
    lookback: usize,
    channels: usize,
    hidden: &[usize],
    seed: u64,
) -> NhmmModel {
    let mut config = ModelConfig::new(states, horizon, lookback).with_signal(channels);
    config.hidden = hidden.to_vec();
    NhmmModel::init(config, seed).unwrap()
}

/// Minus the full objective of `model` on `batch`, rebuilt from scratch.
fn loss_value(model: &NhmmModel, batch: &WindowBatch) -> f64 {
    let tape = Tape::new();
    let graph = build_elbo(&tape, model, batch, PriorMode::Learned, Trainable::NONE).unwrap();
    -graph.terms.total
}

#[test]
fn criterion_1_gradients_match_central_differences() {
    let start = Instant::now();
    let states = [1, 2, 3];
    let horizons = [1, 3, 5];
    let lookbacks = [4, 8];
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    for i in 0..100 {
        let k = states[i % 3];
        let h = horizons[(i / 3) % 3];
        let w = lookbacks[(i / 9) % 2];
        let channels = i % 2;
        let model = random_model(k, h, w, channels, &[4], 1_000 + i as u64);
        let batch = random_batch(&mut rng, 3, w, h, channels);

        let tape = Tape::new();
        let graph = build_elbo(&tape, &model, &batch, PriorMode::Learned, Trainable::ALL).unwrap();
        let grads = tape.backward(graph.loss).unwrap();
        let analytic: Vec<Tensor> =
            graph.param_vars.iter().map(|(_, v)| grads.wrt(*v)).collect();

        let base: Vec<Tensor> = model.params().into_iter().map(|(_, t)| t.clone()).collect();
        let mut probe = model.clone();
        let numeric = central_difference(
            |params| {
                for ((_, slot), p) in probe.params_mut().into_iter().zip(params) {
                    *slot = p.clone();
                }
                Ok(loss_value(&probe, &batch))
            },
            &base,
            GRAD_STEP,
        )
        .unwrap();

        let report = compare_gradients(&analytic, &numeric, GRAD_REL_TOL, GRAD_ABS_FLOOR).unwrap();
        assert!(
            report.ok,
            "configuration {i} (K={k}, h={h}, W={w}, E={channels}): \
             worst gradient difference {} at parameter {:?}",
            report.max_abs_diff, report.worst
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed < GRAD_BUDGET, "gradient check took {elapsed:?}");
    println!(
        "criterion 1 PASS: 100/100 configurations within rel {GRAD_REL_TOL:.0e} \
         (abs floor {GRAD_ABS_FLOOR:.0e}) in {:.1}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_2_objective_stays_below_the_exact_log_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = f64::INFINITY;
    for i in 0..100 {
        let k = 1 + i % 3;
        let h = 1 + i % 5;
        let w = 4 + i % 3;
        let channels = usize::from(i % 4 == 0);
        let model = random_model(k, h, w, channels, &[5], 2_000 + i as u64);
        let batch = random_batch(&mut rng, 4, w, h, channels);

        let exact = exact_log_likelihood(&model, &batch).unwrap();
        let recursive = forward_log_likelihood(&model, &batch).unwrap();
        for (row, (e, r)) in exact.iter().zip(&recursive).enumerate() {
            assert!(
                (e - r).abs() <= BOUND_SLACK,
                "model {i}, row {row}: enumeration {e} vs recursion {r}"
            );
        }

        let tape = Tape::new();
        let graph =
            build_elbo(&tape, &model, &batch, PriorMode::Learned, Trainable::NONE).unwrap();
        let mean_exact = exact.iter().sum::<f64>() / exact.len() as f64;
        assert!(
            graph.terms.total <= mean_exact + BOUND_SLACK,
            "model {i}: objective {} exceeds the log-likelihood {mean_exact}",
            graph.terms.total
        );
        worst_gap = worst_gap.min(mean_exact - graph.terms.total);
    }
    println!(
        "criterion 2 PASS: 100/100 models bounded (tightest slack {worst_gap:.3e}), \
         both likelihood evaluators agree within {BOUND_SLACK:.0e}"
    );
}

#[test]
fn criterion_3_single_state_collapses_to_gaussian_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let model = random_model(1, 3, 6, i % 2, &[6], 3_000 + i as u64);
        let batch = random_batch(&mut rng, 5, 6, 3, i % 2);
        let mean_exact = exact_log_likelihood(&model, &batch).unwrap().iter().sum::<f64>() / 5.0;
        for mode in [PriorMode::Uniform, PriorMode::Learned] {
            let tape = Tape::new();
            let graph = build_elbo(&tape, &model, &batch, mode, Trainable::NONE).unwrap();
            assert_eq!(graph.terms.transition, 0.0, "lone state has no chain term");
            assert_eq!(graph.terms.entropy, 0.0, "degenerate posterior has no entropy");
            assert!(
                (graph.terms.total - mean_exact).abs() < DEGENERATE_TOL,
                "model {i}: objective {} vs log-likelihood {mean_exact}",
                graph.terms.total
            );
        }
    }

    // Training a single-state model is plain maximum likelihood: every
    // epoch's monitored objective is exactly the negated emission term and
    // the second stage has nothing to improve.
    let spec = SyntheticSpec {
        n_series: 4,
        length: 48,
        seasonality: 8,
        regimes: vec![RegimeParams { amplitude: 1.0, trend: 0.0, noise_std: 0.1 }],
        stickiness: 1.0,
        signal_lead: None,
        signal_noise_std: 0.0,
    };
    let records = generate(&spec, 5).unwrap().records;
    let windows =
        make_windows(&records, 8, 4, 2, &SplitPolicy::default(), Default::default()).unwrap();
    let mut model = random_model(1, 4, 8, 0, &[8], 0);
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 64,
        max_epochs: 3,
        min_delta: 0.0,
        ..TrainConfig::default()
    };
    let report = fit(&mut model, &windows, &config).unwrap();
    for record in report.epochs.iter().filter(|r| r.stage == 1) {
        let terms = record.monitor_terms.as_ref().unwrap();
        assert_eq!(terms.transition, 0.0);
        assert_eq!(terms.entropy, 0.0);
        assert_eq!(record.monitor_objective, -terms.emission);
    }
    let stage2 = report.stage2.as_ref().unwrap();
    assert_eq!(stage2.start_objective, 0.0);
    assert_eq!(stage2.best_objective, 0.0);
    println!(
        "criterion 3 PASS: single-state objective equals the Gaussian log-likelihood \
         within {DEGENERATE_TOL:.0e}; stage 1 is maximum-likelihood regression"
    );
}

#[test]
fn criterion_4_second_stage_freezes_emissions_and_improves_the_chain_term() {
    let spec = SyntheticSpec {
        n_series: 6,
        length: 48,
        seasonality: 8,
        regimes: vec![
            RegimeParams { amplitude: 1.0, trend: 0.0, noise_std: 0.1 },
            RegimeParams { amplitude: 0.3, trend: 0.05, noise_std: 0.3 },
        ],
        stickiness: 0.95,
        signal_lead: None,
        signal_noise_std: 0.0,
    };
    let records = generate(&spec, 21).unwrap().records;
    let windows =
        make_windows(&records, 8, 4, 2, &SplitPolicy::default(), Default::default()).unwrap();
    let mut model = random_model(2, 4, 8, 0, &[8], 3);
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 64,
        max_epochs: 10,
        patience: 10,
        min_delta: 0.0,
        ..TrainConfig::default()
    };
    let report = fit(&mut model, &windows, &config).unwrap();

    assert_eq!(
        report.hashes_after_stage1.emissions, report.hashes_after_stage2.emissions,
        "stage 2 must not touch the emission networks"
    );
    assert_eq!(
        report.hashes_after_stage1.posterior, report.hashes_after_stage2.posterior,
        "stage 2 must not touch the posterior network"
    );

    let stage2 = report.stage2.as_ref().expect("stage 1 did not diverge");
    let start_chain_term = -stage2.start_objective;
    let end_chain_term = -stage2.best_objective;
    assert!(
        end_chain_term >= start_chain_term,
        "chain term fell from {start_chain_term} to {end_chain_term}"
    );

    // The returned parameters really are the monitored best: rebuilding the
    // chain term on the validation windows reproduces it exactly.
    let tape = Tape::new();
    let graph = build_transition(&tape, &model, &windows.validation, false).unwrap();
    assert_eq!(graph.transition, end_chain_term);
    println!(
        "criterion 4 PASS: emission and posterior parameters frozen through stage 2; \
         validation chain term {start_chain_term:.4} -> {end_chain_term:.4}"
    );
}

#[test]
fn criterion_5_recovers_planted_regimes_on_a_signal_led_corpus() {
    let start = Instant::now();
    let spec = SyntheticSpec {
        n_series: 500,
        length: 209,
        seasonality: 52,
        regimes: vec![
            RegimeParams { amplitude: 1.0, trend: 0.0, noise_std: 0.03 },
            RegimeParams { amplitude: 0.05, trend: 0.15, noise_std: 0.4 },
        ],
        stickiness: 0.98,
        signal_lead: Some(8),
        signal_noise_std: 0.02,
    };
    let data = generate(&spec, 2024).unwrap();
    let windows = make_windows(
        &data.records,
        52,
        8,
        5,
        &SplitPolicy::LastHorizon { validation_fraction: 0.2 },
        Default::default(),
    )
    .unwrap();

    // The lead channel feeds only the prior and posterior. Wired into the
    // emissions too, one state fits both regimes conditionally on it and
    // the other never specializes.
    let mut config = ModelConfig::new(2, 8, 52).with_signal(1);
    config.signal_states = vec![];
    config.hidden = vec![64, 64];
    let mut model = NhmmModel::init(config, 3).unwrap();

    // A coarse pass, then a finer one at a fifth of the rate. The fine
    // pass tightens the emission means, which raises the per-step evidence
    // the posterior is fit against, so the monitored objective and the
    // recovery accuracy checked below improve together.
    let coarse = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 1024,
        max_epochs: 700,
        patience: 50,
        ..TrainConfig::default()
    };
    let fine = TrainConfig {
        learning_rate: 2e-4,
        batch_size: 1024,
        max_epochs: 250,
        patience: 30,
        ..TrainConfig::default()
    };
    let report = fit(&mut model, &windows, &coarse).unwrap();
    assert!(report.diverged().is_none(), "training diverged: {:?}", report.diverged());
    let report = fit(&mut model, &windows, &fine).unwrap();
    assert!(report.diverged().is_none(), "polish diverged: {:?}", report.diverged());

    // (a) the fitted model beats the seasonal-naive baseline on the
    // held-out last-horizon windows, corpus-wide.
    let test = &windows.test;
    let cases = eval_cases(&data.records, test).unwrap();
    let results = forecast(&model, test, 0, 0, false).unwrap();
    let means: Vec<Vec<f64>> = results.iter().map(|r| r.mixture_mean.clone()).collect();
    let scores = score_corpus(&cases, &means).unwrap();
    let model_mase = scores.mean_mase.expect("scaled error defined on noisy series");
    let baseline = snaive_scores(&cases);
    let defined: Vec<f64> = baseline.iter().filter_map(|(_, s)| *s).collect();
    let baseline_mase = defined.iter().sum::<f64>() / defined.len() as f64;
    assert!(
        model_mase < baseline_mase,
        "corpus MASE {model_mase:.4} does not beat the baseline {baseline_mase:.4}"
    );

    // (b) posterior hard assignments match the planted regimes, up to
    // relabeling, on the held-out windows.
    let tape = Tape::new();
    let past_y = tape.constant(test.past_y.clone());
    let past_w = test.past_w.clone().map(|w| tape.constant(w));
    let future = tape.constant(test.future_y.clone());
    let beta = model
        .posterior
        .on_tape(&tape, false)
        .forward(past_y, past_w, future)
        .unwrap()
        .value();
    let index_of: BTreeMap<&str, usize> = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let (h, k) = (8, 2);
    let mut direct = 0usize;
    let mut swapped = 0usize;
    let mut total = 0usize;
    for row in 0..test.len() {
        let series = index_of[test.ids[row].as_str()];
        let origin = test.origins[row];
        for s in 0..h {
            let probs = &beta.data()[(row * h + s) * k..(row * h + s + 1) * k];
            let assigned = usize::from(probs[1] > probs[0]);
            let truth = data.hidden_paths[series][origin + s];
            direct += usize::from(assigned == truth);
            swapped += usize::from(1 - assigned == truth);
            total += 1;
        }
    }
    let accuracy = direct.max(swapped) as f64 / total as f64;
    assert!(
        accuracy >= RECOVERY_ACCURACY,
        "posterior recovers {accuracy:.3} of planted regimes, need {RECOVERY_ACCURACY}"
    );

    // (c) the learned chain is sticky: transition mass concentrates on the
    // diagonal, like the chain that generated the data.
    let tape = Tape::new();
    let past_y = tape.constant(test.past_y.clone());
    let past_w = test.past_w.clone().map(|w| tape.constant(w));
    let law = model.prior.on_tape(&tape, false).forward(past_y, past_w).unwrap();
    let alpha = law.alpha.value();
    let mut diag = 0.0;
    let mut off = 0.0;
    for row in 0..test.len() {
        for s in 0..h - 1 {
            for from in 0..k {
                for to in 0..k {
                    let v = alpha.data()[((row * (h - 1) + s) * k + from) * k + to];
                    if from == to {
                        diag += v;
                    } else {
                        off += v;
                    }
                }
            }
        }
    }
    assert!(diag > off, "diagonal mass {diag:.1} vs off-diagonal {off:.1}");

    let elapsed = start.elapsed();
    assert!(elapsed < RECOVERY_BUDGET, "regime recovery took {elapsed:?}");
    println!(
        "criterion 5 PASS: MASE {model_mase:.3} < baseline {baseline_mase:.3}, \
         regime accuracy {accuracy:.3}, diagonal mass {:.3}, in {:.0}s",
        diag / (diag + off),
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_6_sampled_trajectories_average_to_the_mixture_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let model = random_model(2, 6, 8, 0, &[8], 23);
    let batch = random_batch(&mut rng, 2, 8, 6, 0);
    let results = forecast(&model, &batch, MC_TRAJECTORIES, 5, true).unwrap();

    let mut worst = 0.0f64;
    for (row, result) in results.iter().enumerate() {
        for s in 0..6 {
            let draws: Vec<f64> = result.trajectories.iter().map(|t| t[s]).collect();
            let n = draws.len() as f64;
            let mc_mean = draws.iter().sum::<f64>() / n;
            let var =
                draws.iter().map(|d| (d - mc_mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let gap = (mc_mean - result.mixture_mean[s]).abs();
            assert!(
                gap <= MC_SIGMA * se,
                "row {row}, step {s}: Monte-Carlo mean off by {gap:.3e} ({} standard errors)",
                gap / se
            );
            worst = worst.max(gap / se);
        }
    }
    println!(
        "criterion 6 PASS: {MC_TRAJECTORIES} trajectories match the mixture mean at \
         every step (worst {worst:.2} of {MC_SIGMA} allowed standard errors)"
    );
}

#[test]
fn criterion_7_metric_oracles_hold() {
    // Hand-worked example: forecast error 1 per step, seasonal in-sample
    // error 1 per step, so the scaled error is exactly one.
    assert_eq!(mase(&[2.0, 2.0], &[1.0, 1.0], &[0.0, 0.0, 1.0, 1.0], 2).unwrap(), 1.0);

    // Scale invariance: multiplying every input by c leaves MASE unchanged.
    let insample = [12.0, 9.5, 14.0, 10.0, 13.0, 9.0, 15.5, 11.0];
    let actual = [14.5, 10.5];
    let forecast = [13.0, 9.8];
    let reference = mase(&actual, &forecast, &insample, 4).unwrap();
    for c in [0.5, 3.0, 100.0] {
        let scale = |xs: &[f64]| -> Vec<f64> { xs.iter().map(|x| c * x).collect() };
        let scaled =
            mase(&scale(&actual), &scale(&forecast), &scale(&insample), 4).unwrap();
        assert!(
            (scaled - reference).abs() < SCALE_INVARIANCE_TOL,
            "c={c}: {scaled} vs {reference}"
        );
    }

    // The seasonal-naive forecast tiles the last observed period.
    assert_eq!(snaive(&[1.0, 2.0, 3.0, 4.0], 2, 4).unwrap(), vec![3.0, 4.0, 3.0, 4.0]);
    assert_eq!(snaive(&[5.0, 1.0, 2.0], 3, 5).unwrap(), vec![5.0, 1.0, 2.0, 5.0, 1.0]);
    println!(
        "criterion 7 PASS: hand-worked scaled error, scale invariance within \
         {SCALE_INVARIANCE_TOL:.0e}, and exact seasonal tiling"
    );
}

#[test]
fn criterion_8_reruns_and_checkpoint_round_trips_are_bitwise_identical() {
    let spec = SyntheticSpec {
        n_series: 5,
        length: 48,
        seasonality: 8,
        regimes: vec![
            RegimeParams { amplitude: 1.0, trend: 0.0, noise_std: 0.1 },
            RegimeParams { amplitude: 0.4, trend: 0.03, noise_std: 0.25 },
        ],
        stickiness: 0.9,
        signal_lead: None,
        signal_noise_std: 0.0,
    };
    let records = generate(&spec, 31).unwrap().records;
    let windows =
        make_windows(&records, 8, 4, 2, &SplitPolicy::default(), Default::default()).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 64,
        max_epochs: 4,
        ..TrainConfig::default()
    };

    let run = || {
        let mut model = random_model(2, 4, 8, 0, &[8], 13);
        let report = fit(&mut model, &windows, &config).unwrap();
        (model, report)
    };
    let (model_a, report_a) = run();
    let (_, report_b) = run();
    let strip_timing = |r: &nhmm_core::training::TrainReport| {
        let mut v = serde_json::to_value(r).unwrap();
        v.as_object_mut().unwrap().remove("wall_clock_seconds");
        v
    };
    assert_eq!(
        strip_timing(&report_a),
        strip_timing(&report_b),
        "identical (config, seed, data) must reproduce the report"
    );

    let before = forecast(&model_a, &windows.test, 50, 9, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    Checkpoint::from_model(&model_a, 13, report_a.stage1.epochs_run, 0).save(&path).unwrap();
    let (_, loaded) = load_model(&path).unwrap();
    let after = forecast(&loaded, &windows.test, 50, 9, true).unwrap();

    assert_eq!(before.len(), after.len());
    for (a, b) in before.iter().zip(&after) {
        let bits = |xs: &[f64]| -> Vec<u64> { xs.iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(&a.mixture_mean), bits(&b.mixture_mean));
        for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(bits(ta), bits(tb));
        }
        assert_eq!(a.hidden_paths, b.hidden_paths);
        for s in 0..a.mu.len() {
            assert_eq!(bits(&a.mu[s]), bits(&b.mu[s]));
            assert_eq!(bits(&a.sigma[s]), bits(&b.sigma[s]));
            assert_eq!(bits(&a.state_probs[s]), bits(&b.state_probs[s]));
        }
    }
    println!(
        "criterion 8 PASS: reruns reproduce the report; checkpoint round trip \
         forecasts bitwise identically"
    );
}

#[test]
fn criterion_9_reference_corpus_baseline_when_supplied() {
    // Optional: runs only when a local copy of the reference dataset is
    // supplied. The baseline is deterministic, so its corpus score must
    // match the expected value to its three published decimals.
    let Ok(manifest_path) = std::env::var("NHMM_FASHION_MANIFEST") else {
        println!(
            "criterion 9 SKIP: optional reference dataset not supplied \
             (set NHMM_FASHION_MANIFEST to its manifest to enable)"
        );
        return;
    };
    let horizon: usize = std::env::var("NHMM_FASHION_HORIZON")
        .ok()
        .and_then(|h| h.parse().ok())
        .unwrap_or(12);

    let (_, records) =
        DatasetManifest::load_dataset(std::path::Path::new(&manifest_path)).unwrap();
    let cases: Vec<_> = records
        .iter()
        .map(|r| {
            let origin = r.y.len() - horizon;
            nhmm_core::metrics::EvalCase {
                id: r.id.clone(),
                m: r.m,
                insample: r.y[..origin].to_vec(),
                actual: r.y[origin..].to_vec(),
            }
        })
        .collect();
    let scores = snaive_scores(&cases);
    let defined: Vec<f64> = scores.iter().filter_map(|(_, s)| *s).collect();
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    assert!(
        (mean - REFERENCE_BASELINE_MASE).abs() < REFERENCE_BASELINE_TOL,
        "baseline corpus MASE {mean:.4}, expected {REFERENCE_BASELINE_MASE}"
    );

    // The difficulty split takes the thousand weakest and thousand
    // strongest baseline series.
    let subsamples = build_subsamples(&scores, 1000).unwrap();
    assert_eq!(subsamples.non_stationary.len(), 1000);
    assert_eq!(subsamples.stationary.len(), 1000);
    println!("criterion 9 PASS: baseline corpus MASE {mean:.3} on the reference dataset");
}
