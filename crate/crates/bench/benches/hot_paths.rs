//! Benchmarks for the three hot paths: building and differentiating the
//! training objective, scoring with the forward recursion, and sampling
//! forecast trajectories. Sizes mirror a realistic weekly setup.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhmm_core::data::{ScalerParams, WindowBatch};
use nhmm_core::diffmath::{Tape, Tensor};
use nhmm_core::model::{
    build_elbo, forecast, forward_log_likelihood, ModelConfig, NhmmModel, PriorMode, Trainable,
};

const STATES: usize = 4;
const HORIZON: usize = 12;
const LOOKBACK: usize = 52;

fn batch(rows: usize) -> WindowBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    WindowBatch {
        past_y: Tensor::new(vec![rows, LOOKBACK], draw(rows * LOOKBACK)).unwrap(),
        past_w: Some(Tensor::new(vec![rows, LOOKBACK, 1], draw(rows * LOOKBACK)).unwrap()),
        future_y: Tensor::new(vec![rows, HORIZON], draw(rows * HORIZON)).unwrap(),
        scalers: vec![ScalerParams::MinMax { min: 0.0, max: 1.0 }; rows],
        ids: (0..rows).map(|i| format!("row{i}")).collect(),
        origins: vec![LOOKBACK; rows],
    }
}

fn model() -> NhmmModel {
    let mut config = ModelConfig::new(STATES, HORIZON, LOOKBACK).with_signal(1);
    config.hidden = vec![64, 64];
    NhmmModel::init(config, 0).unwrap()
}

fn objective_and_gradient(c: &mut Criterion) {
    let model = model();
    let rows = batch(256);
    c.bench_function("elbo_build_and_backward_256x52", |b| {
        b.iter_batched(
            Tape::new,
            |tape| {
                let graph =
                    build_elbo(&tape, &model, &rows, PriorMode::Learned, Trainable::ALL).unwrap();
                tape.backward(graph.loss).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
}

fn likelihood_scoring(c: &mut Criterion) {
    let model = model();
    let rows = batch(256);
    c.bench_function("forward_log_likelihood_256x52", |b| {
        b.iter(|| forward_log_likelihood(&model, &rows).unwrap())
    });
}

fn trajectory_sampling(c: &mut Criterion) {
    let model = model();
    let rows = batch(32);
    c.bench_function("forecast_32_rows_100_trajectories", |b| {
        b.iter(|| forecast(&model, &rows, 100, 0, true).unwrap())
    });
}

criterion_group!(benches, objective_and_gradient, likelihood_scoring, trajectory_sampling);
criterion_main!(benches);
