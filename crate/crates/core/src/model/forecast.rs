//! Probabilistic forecasts from a fitted model.
//!
//! The prior chain gives closed-form per-step state marginals and a mixture
//! mean. Trajectory sampling walks the chain instead: draw a state from the
//! initial law, follow the transition rows, and emit Gaussian noise, which
//! carries the full predictive uncertainty. Every output is mapped back to
//! original units through the window's own scaler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::WindowBatch;
use crate::error::Result;

use super::likelihood::{alpha_index, eval_parts, EvalParts};
use super::NhmmModel;

/// Forecast for one window. All values are in original units; the `[s][k]`
/// grids run over forecast steps and hidden states.
#[derive(Debug, Clone)]
pub struct ForecastResult {
    /// Per-state emission means.
    pub mu: Vec<Vec<f64>>,
    /// Per-state emission widths.
    pub sigma: Vec<Vec<f64>>,
    /// Marginal state probabilities under the prior chain.
    pub state_probs: Vec<Vec<f64>>,
    /// Marginal predictive mean per step, the probability-weighted
    /// combination of the state means.
    pub mixture_mean: Vec<f64>,
    /// Sampled futures, `[trajectory][step]`.
    pub trajectories: Vec<Vec<f64>>,
    /// The hidden states behind each trajectory, `[trajectory][step]`.
    pub hidden_paths: Vec<Vec<usize>>,
}

/// Inverse-CDF draw from an unnormalized-by-rounding-only simplex row.
fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn pi_row<'a>(parts: &'a EvalParts, row: usize, k: usize) -> &'a [f64] {
    &parts.pi.data()[row * k..(row + 1) * k]
}

fn alpha_row<'a>(
    parts: &'a EvalParts,
    row: usize,
    step: usize,
    from: usize,
    k: usize,
    h: usize,
) -> &'a [f64] {
    let base = alpha_index(row, step, from, 0, k, h);
    &parts.alpha.data()[base..base + k]
}

/// Forecasts every window in `batch`, drawing `n_trajectories` sampled
/// futures per window. Each batch row consumes its own random stream,
/// derived from `seed`, so results do not depend on batch composition or
/// ordering. With `sample_noise` off, trajectories follow their sampled
/// hidden path's means exactly.
pub fn forecast(
    model: &NhmmModel,
    batch: &WindowBatch,
    n_trajectories: usize,
    seed: u64,
    sample_noise: bool,
) -> Result<Vec<ForecastResult>> {
    let parts = eval_parts(model, batch)?;
    let k = model.states();
    let h = model.horizon();
    let mut out = Vec::with_capacity(batch.len());
    for row in 0..batch.len() {
        let scaler = &batch.scalers[row];
        let spread = scaler.scale_factor();

        let mut state_probs = vec![vec![0.0; k]; h];
        state_probs[0].copy_from_slice(pi_row(&parts, row, k));
        for s in 1..h {
            for to in 0..k {
                state_probs[s][to] = (0..k)
                    .map(|from| {
                        state_probs[s - 1][from]
                            * parts.alpha.data()[alpha_index(row, s - 1, from, to, k, h)]
                    })
                    .sum();
            }
        }

        let mu_scaled: Vec<Vec<f64>> = (0..h)
            .map(|s| (0..k).map(|x| parts.mu[x].data()[row * h + s]).collect())
            .collect();
        let sigma_scaled: Vec<Vec<f64>> = (0..h)
            .map(|s| (0..k).map(|x| parts.sigma[x].data()[row * h + s]).collect())
            .collect();
        let mixture_mean: Vec<f64> = (0..h)
            .map(|s| {
                let m: f64 = (0..k).map(|x| state_probs[s][x] * mu_scaled[s][x]).sum();
                scaler.invert(m)
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        let mut trajectories = Vec::with_capacity(n_trajectories);
        let mut hidden_paths = Vec::with_capacity(n_trajectories);
        for _ in 0..n_trajectories {
            let mut path = Vec::with_capacity(h);
            let mut traj = Vec::with_capacity(h);
            let mut prev = 0;
            for s in 0..h {
                let dist = if s == 0 {
                    pi_row(&parts, row, k)
                } else {
                    alpha_row(&parts, row, s - 1, prev, k, h)
                };
                let state = sample_categorical(&mut rng, dist);
                let z: f64 = if sample_noise { rng.sample(StandardNormal) } else { 0.0 };
                traj.push(scaler.invert(mu_scaled[s][state] + sigma_scaled[s][state] * z));
                path.push(state);
                prev = state;
            }
            trajectories.push(traj);
            hidden_paths.push(path);
        }

        out.push(ForecastResult {
            mu: mu_scaled
                .iter()
                .map(|row| row.iter().map(|&m| scaler.invert(m)).collect())
                .collect(),
            sigma: sigma_scaled
                .iter()
                .map(|row| row.iter().map(|&s| s * spread).collect())
                .collect(),
            state_probs,
            mixture_mean,
            trajectories,
            hidden_paths,
        });
    }
    Ok(out)
}
