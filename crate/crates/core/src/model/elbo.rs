//! Evidence lower bound under the factorized posterior.
//!
//! With a posterior that factorizes over forecast steps, all three
//! expectations have closed forms, so the objective is assembled exactly on
//! the tape with no sampling:
//!
//! * emission term: sum over steps and states of `beta * logN(y; mu, sigma)`;
//! * transition term: `beta[1]·log pi` plus pairwise products
//!   `beta[s-1, j] * beta[s, k] * log alpha[s, j, k]`;
//! * entropy term: sum of `beta * log beta` (non-positive).
//!
//! `total = emission + transition - entropy`. Every probability is clamped
//! to [`PROB_FLOOR`] before its logarithm; the likelihood evaluations clamp
//! identically, which keeps `total <= log-likelihood` exact rather than
//! approximate.

use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::networks::HiddenLaw;

use super::{NhmmModel, PROB_FLOOR};

/// 0.5 * ln(2 * pi), the Gaussian normalization constant.
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Which parameter families receive gradients when building a graph.
#[derive(Debug, Clone, Copy)]
pub struct Trainable {
    pub emissions: bool,
    pub prior: bool,
    pub posterior: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable { emissions: true, prior: true, posterior: true };
    pub const NONE: Trainable = Trainable { emissions: false, prior: false, posterior: false };
}

/// How the transition term treats the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// Fixed uniform initial law and transitions. The term collapses to the
    /// constant `h * ln(1/K)` per row: every beta row sums to one, so the
    /// gradient through the posterior vanishes identically.
    Uniform,
    /// Use the prior network's output.
    Learned,
}

/// The three objective terms plus their combination, as batch means.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ElboTerms {
    pub emission: f64,
    pub transition: f64,
    /// `E_q[log q] <= 0`; subtracted from the total.
    pub entropy: f64,
    pub total: f64,
}

/// A built objective graph: term values, differentiable roots, and every
/// model parameter's tape variable in canonical order.
pub struct ElboGraph<'t> {
    pub terms: ElboTerms,
    /// Scalar ELBO (batch mean); maximize this.
    pub total: Var<'t>,
    /// `-total`; minimize this.
    pub loss: Var<'t>,
    /// `(name, var)` aligned with [`NhmmModel::params`].
    pub param_vars: Vec<(String, Var<'t>)>,
}

/// The transition term alone, used when only the prior is being fitted.
pub struct TransitionGraph<'t> {
    pub transition: f64,
    /// `-transition`; minimize this.
    pub loss: Var<'t>,
    pub param_vars: Vec<(String, Var<'t>)>,
}

/// Elementwise Gaussian log-density `logN(y; mu, sigma)` over `[B, h]` vars.
pub(crate) fn gaussian_log_density<'t>(
    y: Var<'t>,
    mu: Var<'t>,
    sigma: Var<'t>,
) -> Result<Var<'t>> {
    let d = y.sub(mu)?.div(sigma)?;
    d.mul(d)?
        .scale(-0.5)?
        .sub(sigma.ln()?)?
        .add_scalar(-HALF_LN_2PI)
}

/// Fails with the offending series and step when `t` holds a non-finite
/// value. `t`'s rows must correspond to batch rows, with `horizon` steps
/// spread evenly over each row.
fn ensure_finite_steps(t: &Tensor, what: &str, ids: &[String], horizon: usize) -> Result<()> {
    if t.is_finite() {
        return Ok(());
    }
    let idx = t.data().iter().position(|v| !v.is_finite()).unwrap();
    let per_row = t.len() / t.shape()[0];
    let row = idx / per_row;
    let step = (idx % per_row) * horizon / per_row;
    Err(Error::Numerical(format!(
        "non-finite {what} for series `{}` at step {}",
        ids[row],
        step + 1
    )))
}

fn ensure_finite_rows(t: &Tensor, what: &str, ids: &[String]) -> Result<()> {
    if t.is_finite() {
        return Ok(());
    }
    let idx = t.data().iter().position(|v| !v.is_finite()).unwrap();
    let row = idx / (t.len() / t.shape()[0]);
    Err(Error::Numerical(format!(
        "non-finite {what} for series `{}`",
        ids[row]
    )))
}

struct TapedModel<'t> {
    emissions: Vec<crate::networks::TapedEmission<'t>>,
    prior: crate::networks::TapedPrior<'t>,
    posterior: crate::networks::TapedPosterior<'t>,
}

impl<'t> TapedModel<'t> {
    fn new(tape: &'t Tape, model: &NhmmModel, trainable: Trainable) -> Self {
        TapedModel {
            emissions: model
                .emissions
                .iter()
                .map(|e| e.on_tape(tape, trainable.emissions))
                .collect(),
            prior: model.prior.on_tape(tape, trainable.prior),
            posterior: model.posterior.on_tape(tape, trainable.posterior),
        }
    }

    /// Vars in the canonical [`NhmmModel::params`] order.
    fn param_vars(&self, model: &NhmmModel) -> Vec<(String, Var<'t>)> {
        let mut vars = Vec::new();
        for e in &self.emissions {
            vars.extend(e.vars());
        }
        vars.extend(self.prior.vars());
        vars.extend(self.posterior.vars());
        model
            .params()
            .into_iter()
            .map(|(name, _)| name)
            .zip(vars)
            .collect()
    }
}

fn batch_inputs<'t>(
    tape: &'t Tape,
    batch: &WindowBatch,
) -> (Var<'t>, Option<Var<'t>>, Var<'t>) {
    (
        tape.constant(batch.past_y.clone()),
        batch.past_w.as_ref().map(|w| tape.constant(w.clone())),
        tape.constant(batch.future_y.clone()),
    )
}

/// `E_q[log p(x)]` for a learned prior: the initial-law term plus the
/// pairwise transition terms, as a batch mean.
fn transition_term<'t>(
    beta: Var<'t>,
    law: &HiddenLaw<'t>,
    horizon: usize,
    inv_b: f64,
) -> Result<Var<'t>> {
    let ln_pi = law.pi.clamp_min(PROB_FLOOR)?.ln()?;
    let mut term = beta.slice_axis1(0)?.mul(ln_pi)?.sum()?;
    for s in 1..horizon {
        let pair = beta.slice_axis1(s - 1)?.outer_rows(beta.slice_axis1(s)?)?;
        let ln_alpha = law.alpha.slice_axis1(s - 1)?.clamp_min(PROB_FLOOR)?.ln()?;
        term = term.add(pair.mul(ln_alpha)?.sum()?)?;
    }
    term.scale(inv_b)
}

/// Builds the full objective on `tape`.
pub fn build_elbo<'t>(
    tape: &'t Tape,
    model: &NhmmModel,
    batch: &WindowBatch,
    prior_mode: PriorMode,
    trainable: Trainable,
) -> Result<ElboGraph<'t>> {
    model.check_batch(batch)?;
    if batch.is_empty() {
        return Err(Error::Config("cannot evaluate the objective on an empty batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let horizon = model.horizon();
    let (past_y, past_w, future) = batch_inputs(tape, batch);
    let taped = TapedModel::new(tape, model, trainable);

    let beta = taped.posterior.forward(past_y, past_w, future)?;
    ensure_finite_steps(&beta.value(), "posterior probabilities", &batch.ids, horizon)?;

    let mut weighted_sum: Option<Var<'t>> = None;
    for (k, emission) in taped.emissions.iter().enumerate() {
        let (mu, sigma) = emission.forward(past_y, past_w)?;
        let ll = gaussian_log_density(future, mu, sigma)?;
        ensure_finite_steps(
            &ll.value(),
            &format!("emission log-likelihood (state {k})"),
            &batch.ids,
            horizon,
        )?;
        let weighted = beta.slice_last(k)?.mul(ll)?;
        weighted_sum = Some(match weighted_sum {
            Some(acc) => acc.add(weighted)?,
            None => weighted,
        });
    }
    let emission = weighted_sum.unwrap().sum()?.scale(inv_b)?;

    let transition = match prior_mode {
        PriorMode::Uniform => {
            let ln_uniform = (1.0 / model.states() as f64).max(PROB_FLOOR).ln();
            tape.scalar(horizon as f64 * ln_uniform)
        }
        PriorMode::Learned => {
            let law = taped.prior.forward(past_y, past_w)?;
            ensure_finite_rows(&law.pi.value(), "initial-law probabilities", &batch.ids)?;
            ensure_finite_rows(&law.alpha.value(), "transition probabilities", &batch.ids)?;
            transition_term(beta, &law, horizon, inv_b)?
        }
    };

    let entropy = beta
        .mul(beta.clamp_min(PROB_FLOOR)?.ln()?)?
        .sum()?
        .scale(inv_b)?;

    let total = emission.add(transition)?.sub(entropy)?;
    let loss = total.scale(-1.0)?;
    Ok(ElboGraph {
        terms: ElboTerms {
            emission: emission.item(),
            transition: transition.item(),
            entropy: entropy.item(),
            total: total.item(),
        },
        total,
        loss,
        param_vars: taped.param_vars(model),
    })
}

/// Builds only the transition term, with the posterior held fixed. Used to
/// fit the prior to an already-trained posterior: the other two terms do
/// not touch the prior's parameters, so their omission changes no gradient.
pub fn build_transition<'t>(
    tape: &'t Tape,
    model: &NhmmModel,
    batch: &WindowBatch,
    trainable_prior: bool,
) -> Result<TransitionGraph<'t>> {
    model.check_batch(batch)?;
    if batch.is_empty() {
        return Err(Error::Config("cannot evaluate the objective on an empty batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let (past_y, past_w, future) = batch_inputs(tape, batch);
    let taped = TapedModel::new(
        tape,
        model,
        Trainable { emissions: false, prior: trainable_prior, posterior: false },
    );

    let beta = taped.posterior.forward(past_y, past_w, future)?;
    let law = taped.prior.forward(past_y, past_w)?;
    ensure_finite_rows(&law.pi.value(), "initial-law probabilities", &batch.ids)?;
    ensure_finite_rows(&law.alpha.value(), "transition probabilities", &batch.ids)?;
    let transition = transition_term(beta, &law, model.horizon(), inv_b)?;
    Ok(TransitionGraph {
        transition: transition.item(),
        loss: transition.scale(-1.0)?,
        param_vars: taped.param_vars(model),
    })
}
