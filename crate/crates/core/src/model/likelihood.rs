//! Marginal log-likelihood of the observations.
//!
//! Two evaluators of the same quantity: brute-force enumeration of every
//! hidden path, and the forward recursion in log space. Enumeration is the
//! reference implementation; the recursion scales to horizons and state
//! counts the enumeration cannot reach. Probabilities pass through the same
//! [`PROB_FLOOR`] clamp and tape kernels as the training objective, so the
//! objective lower-bounds these values exactly, not just approximately.

use crate::data::WindowBatch;
use crate::diffmath::{Tape, Tensor};
use crate::error::{Error, Result};

use super::elbo::gaussian_log_density;
use super::{NhmmModel, PROB_FLOOR};

/// Largest number of hidden paths `K^h` the enumeration evaluator accepts.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Constant forward-pass outputs shared by the likelihood evaluators and
/// the forecaster: per-state emission parameters plus the hidden chain's
/// probabilities, raw and as floored logs.
pub(crate) struct EvalParts {
    /// Per state, `[B, h]`.
    pub mu: Vec<Tensor>,
    /// Per state, `[B, h]`.
    pub sigma: Vec<Tensor>,
    /// `[B, K]`.
    pub pi: Tensor,
    /// `[B, h-1, K, K]`.
    pub alpha: Tensor,
    pub ln_pi: Tensor,
    pub ln_alpha: Tensor,
}

pub(crate) fn eval_parts(model: &NhmmModel, batch: &WindowBatch) -> Result<EvalParts> {
    model.check_batch(batch)?;
    if batch.is_empty() {
        return Err(Error::Config("cannot evaluate an empty batch".into()));
    }
    let tape = Tape::new();
    let past_y = tape.constant(batch.past_y.clone());
    let past_w = batch.past_w.as_ref().map(|w| tape.constant(w.clone()));
    let mut mu = Vec::with_capacity(model.states());
    let mut sigma = Vec::with_capacity(model.states());
    for net in &model.emissions {
        let (m, s) = net.on_tape(&tape, false).forward(past_y, past_w)?;
        mu.push(m.value());
        sigma.push(s.value());
    }
    let law = model.prior.on_tape(&tape, false).forward(past_y, past_w)?;
    let ln_pi = law.pi.clamp_min(PROB_FLOOR)?.ln()?;
    let ln_alpha = law.alpha.clamp_min(PROB_FLOOR)?.ln()?;
    Ok(EvalParts {
        mu,
        sigma,
        pi: law.pi.value(),
        alpha: law.alpha.value(),
        ln_pi: ln_pi.value(),
        ln_alpha: ln_alpha.value(),
    })
}

/// Per-state Gaussian log-densities of the batch targets, `[B, h]` each.
pub(crate) fn log_densities(parts: &EvalParts, batch: &WindowBatch) -> Result<Vec<Tensor>> {
    let tape = Tape::new();
    let future = tape.constant(batch.future_y.clone());
    let mut out = Vec::with_capacity(parts.mu.len());
    for (state, (mu, sigma)) in parts.mu.iter().zip(&parts.sigma).enumerate() {
        let ll = gaussian_log_density(
            future,
            tape.constant(mu.clone()),
            tape.constant(sigma.clone()),
        )?
        .value();
        if !ll.is_finite() {
            let idx = ll.data().iter().position(|v| !v.is_finite()).unwrap();
            return Err(Error::Numerical(format!(
                "non-finite log-likelihood (state {state}) for series `{}`",
                batch.ids[idx / batch.future_y.shape()[1]]
            )));
        }
        out.push(ll);
    }
    Ok(out)
}

/// Index into the `[B, h-1, K, K]` transition block.
pub(crate) fn alpha_index(row: usize, step: usize, from: usize, to: usize, k: usize, h: usize) -> usize {
    ((row * (h - 1) + step) * k + from) * k + to
}

fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    Ok(Tensor::from_slice(xs).logsumexp(0)?.item())
}

/// Log-likelihood by full enumeration of hidden paths, one value per row.
///
/// The path space has `K^h` members, so evaluation is refused above
/// [`ENUMERATION_CAP`]; [`forward_log_likelihood`] computes the same
/// quantity at any size.
pub fn exact_log_likelihood(model: &NhmmModel, batch: &WindowBatch) -> Result<Vec<f64>> {
    let k = model.states();
    let h = model.horizon();
    let n_paths = (k as u64)
        .checked_pow(h as u32)
        .filter(|&n| n <= ENUMERATION_CAP)
        .ok_or_else(|| {
            Error::Config(format!(
                "{k} states over {h} steps exceed {ENUMERATION_CAP} hidden paths; \
                 use forward_log_likelihood instead"
            ))
        })?;
    let parts = eval_parts(model, batch)?;
    let ll = log_densities(&parts, batch)?;
    let mut out = Vec::with_capacity(batch.len());
    for row in 0..batch.len() {
        let mut terms = Vec::with_capacity(n_paths as usize);
        for path in 0..n_paths {
            let mut rem = path as usize;
            let mut prev = 0;
            let mut lp = 0.0;
            for s in 0..h {
                let state = rem % k;
                rem /= k;
                lp += ll[state].data()[row * h + s];
                lp += if s == 0 {
                    parts.ln_pi.data()[row * k + state]
                } else {
                    parts.ln_alpha.data()[alpha_index(row, s - 1, prev, state, k, h)]
                };
                prev = state;
            }
            terms.push(lp);
        }
        out.push(log_sum_exp(&terms)?);
    }
    Ok(out)
}

/// Log-likelihood by the forward recursion in log space, one value per row.
/// Linear in the horizon and quadratic in the state count.
pub fn forward_log_likelihood(model: &NhmmModel, batch: &WindowBatch) -> Result<Vec<f64>> {
    let k = model.states();
    let h = model.horizon();
    let parts = eval_parts(model, batch)?;
    let ll = log_densities(&parts, batch)?;
    let mut out = Vec::with_capacity(batch.len());
    for row in 0..batch.len() {
        let mut layer: Vec<f64> = (0..k)
            .map(|x| parts.ln_pi.data()[row * k + x] + ll[x].data()[row * h])
            .collect();
        let mut scratch = vec![0.0; k];
        for s in 1..h {
            let mut next = vec![0.0; k];
            for (x, slot) in next.iter_mut().enumerate() {
                for (j, v) in scratch.iter_mut().enumerate() {
                    *v = layer[j] + parts.ln_alpha.data()[alpha_index(row, s - 1, j, x, k, h)];
                }
                *slot = log_sum_exp(&scratch)? + ll[x].data()[row * h + s];
            }
            layer = next;
        }
        out.push(log_sum_exp(&layer)?);
    }
    Ok(out)
}
