//! The two-stage fitting procedure.
//!
//! Stage 1 fits the emission and posterior networks by gradient descent on
//! the negated objective while the prior is held uniform; its contribution
//! is then a constant, so the prior receives no gradient. Stage 2 freezes
//! the emission and posterior parameters and fits the prior alone on the
//! negated transition term, the cross-entropy from the learned posterior to
//! the prior chain.
//!
//! Each stage early-stops on a monitored objective (the validation split,
//! or the training split when no validation windows exist) and restores the
//! best parameters seen, so a stage can only improve that objective.
//!
//! Gradients are accumulated over fixed-size row shards that are summed in
//! shard order, which keeps results identical whether shards are evaluated
//! in parallel or not.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SplitWindows, WindowBatch};
use crate::diffmath::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{build_elbo, build_transition, ElboTerms, NhmmModel, PriorMode, Trainable};

use super::adam::{clip_global_norm, Adam, CLIP_GLOBAL_NORM};
use super::{group_hashes, GroupHashes};

/// Rows per gradient shard. Shard results are combined in a fixed order,
/// so the gradient of a batch does not depend on evaluation parallelism.
pub(crate) const GRAD_SHARD_ROWS: usize = 256;

/// Optimization settings shared by both stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Per stage.
    pub max_epochs: usize,
    /// Epochs without improvement before a stage stops.
    pub patience: usize,
    /// Smallest decrease of the monitored objective that counts as an
    /// improvement.
    pub min_delta: f64,
    /// Drives epoch shuffling; model initialization is seeded separately.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 2048,
            max_epochs: 300,
            patience: 10,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.min_delta < 0.0 {
            return Err(Error::Config("min delta cannot be negative".into()));
        }
        Ok(())
    }
}

/// One epoch of one stage. Objectives are the minimized loss: the negated
/// full objective in stage 1, the negated transition term in stage 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    /// Mean over the epoch's minibatches, as seen during training.
    pub train_objective: f64,
    pub monitor_objective: f64,
    /// Full objective terms; absent in stage 2, which builds only the
    /// transition term.
    pub train_terms: Option<ElboTerms>,
    pub monitor_terms: Option<ElboTerms>,
    /// Whether this epoch improved the monitored objective by more than
    /// the configured minimum.
    pub improved: bool,
}

/// Summary of one stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: u8,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept; 0 is the pre-training state.
    pub best_epoch: usize,
    /// Monitored objective before the first update.
    pub start_objective: f64,
    /// Monitored objective of the kept parameters; never above
    /// `start_objective`.
    pub best_objective: f64,
    /// Set when the stage hit a non-finite loss and fell back to the best
    /// parameters seen.
    pub diverged: Option<String>,
}

/// Everything observed during a fit. Parameter hashes are recorded after
/// each stage; groups frozen in stage 2 hash identically in both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stage1: StageOutcome,
    /// Absent when stage 1 diverged.
    pub stage2: Option<StageOutcome>,
    pub hashes_after_stage1: GroupHashes,
    pub hashes_after_stage2: GroupHashes,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    /// The first divergence message, if any stage diverged.
    pub fn diverged(&self) -> Option<&str> {
        self.stage1
            .diverged
            .as_deref()
            .or_else(|| self.stage2.as_ref().and_then(|s| s.diverged.as_deref()))
    }
}

#[derive(Clone, Copy)]
struct StagePlan {
    stage: u8,
    trainable: Trainable,
    /// Build only the transition term instead of the full objective.
    transition_only: bool,
}

const STAGE_ONE: StagePlan = StagePlan {
    stage: 1,
    trainable: Trainable { emissions: true, prior: false, posterior: true },
    transition_only: false,
};

const STAGE_TWO: StagePlan = StagePlan {
    stage: 2,
    trainable: Trainable { emissions: false, prior: true, posterior: false },
    transition_only: true,
};

struct ShardResult {
    rows: usize,
    objective: f64,
    terms: Option<ElboTerms>,
    /// Aligned with the canonical parameter order; empty when gradients
    /// were not requested.
    grads: Vec<Tensor>,
}

fn eval_shard(
    model: &NhmmModel,
    batch: &WindowBatch,
    plan: StagePlan,
    with_grad: bool,
) -> Result<ShardResult> {
    let tape = Tape::new();
    let (loss, terms, param_vars) = if plan.transition_only {
        let g = build_transition(&tape, model, batch, plan.trainable.prior && with_grad)?;
        (g.loss, None, g.param_vars)
    } else {
        let trainable = if with_grad { plan.trainable } else { Trainable::NONE };
        let g = build_elbo(&tape, model, batch, stage_prior_mode(plan), trainable)?;
        (g.loss, Some(g.terms), g.param_vars)
    };
    let objective = loss.item();
    if !objective.is_finite() {
        return Err(Error::Numerical("non-finite training objective".into()));
    }
    let grads = if with_grad {
        let grads = tape.backward(loss)?;
        param_vars.iter().map(|(_, v)| grads.wrt(*v)).collect()
    } else {
        Vec::new()
    };
    Ok(ShardResult { rows: batch.len(), objective, terms, grads })
}

fn stage_prior_mode(plan: StagePlan) -> PriorMode {
    if plan.stage == 1 { PriorMode::Uniform } else { PriorMode::Learned }
}

/// Evaluates `batch` in shard order and combines the per-shard means,
/// weighted by shard size.
fn sharded_pass(
    model: &NhmmModel,
    batch: &WindowBatch,
    plan: StagePlan,
    with_grad: bool,
) -> Result<ShardResult> {
    if batch.len() <= GRAD_SHARD_ROWS {
        return eval_shard(model, batch, plan, with_grad);
    }
    let rows: Vec<usize> = (0..batch.len()).collect();
    let shards: Vec<ShardResult> = rows
        .par_chunks(GRAD_SHARD_ROWS)
        .map(|chunk| eval_shard(model, &batch.select(chunk), plan, with_grad))
        .collect::<Result<_>>()?;
    let total = batch.len() as f64;
    let mut combined = ShardResult {
        rows: batch.len(),
        objective: 0.0,
        terms: shards[0].terms.map(|_| ElboTerms {
            emission: 0.0,
            transition: 0.0,
            entropy: 0.0,
            total: 0.0,
        }),
        grads: if with_grad {
            shards[0].grads.iter().map(|g| Tensor::zeros(g.shape())).collect()
        } else {
            Vec::new()
        },
    };
    for shard in &shards {
        let w = shard.rows as f64 / total;
        combined.objective += w * shard.objective;
        if let (Some(acc), Some(t)) = (combined.terms.as_mut(), shard.terms.as_ref()) {
            acc.emission += w * t.emission;
            acc.transition += w * t.transition;
            acc.entropy += w * t.entropy;
            acc.total += w * t.total;
        }
        for (acc, g) in combined.grads.iter_mut().zip(&shard.grads) {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += w * b;
            }
        }
    }
    Ok(combined)
}

fn snapshot(model: &NhmmModel) -> Vec<Tensor> {
    model.params().into_iter().map(|(_, t)| t.clone()).collect()
}

fn restore(model: &mut NhmmModel, saved: &[Tensor]) {
    for ((_, slot), value) in model.params_mut().into_iter().zip(saved) {
        *slot = value.clone();
    }
}

fn run_stage(
    model: &mut NhmmModel,
    train: &WindowBatch,
    validation: &WindowBatch,
    config: &TrainConfig,
    plan: StagePlan,
    epochs: &mut Vec<EpochRecord>,
) -> Result<StageOutcome> {
    let monitor = if validation.is_empty() { train } else { validation };
    let start = sharded_pass(model, monitor, plan, false)?;
    let mut best_objective = start.objective;
    let mut best_epoch = 0;
    let mut best_params = snapshot(model);
    let mut bad_epochs = 0;
    let mut diverged = None;
    let mut epochs_run = 0;
    let shapes: Vec<Vec<usize>> =
        model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);

    'stage: for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(((plan.stage as u64) << 32) | epoch as u64);
        order.shuffle(&mut rng);

        epochs_run = epoch;
        let mut train_objective = 0.0;
        let mut train_terms: Option<ElboTerms> = None;
        for minibatch in order.chunks(config.batch_size) {
            let batch = train.select(minibatch);
            let mut result = match sharded_pass(model, &batch, plan, true) {
                Ok(r) => r,
                Err(Error::Numerical(msg)) => {
                    diverged = Some(msg);
                    break 'stage;
                }
                Err(other) => return Err(other),
            };
            clip_global_norm(&mut result.grads, CLIP_GLOBAL_NORM);
            adam.step(&mut model.params_mut(), &result.grads)?;

            let w = batch.len() as f64 / train.len() as f64;
            train_objective += w * result.objective;
            if let Some(t) = result.terms {
                let acc = train_terms.get_or_insert(ElboTerms {
                    emission: 0.0,
                    transition: 0.0,
                    entropy: 0.0,
                    total: 0.0,
                });
                acc.emission += w * t.emission;
                acc.transition += w * t.transition;
                acc.entropy += w * t.entropy;
                acc.total += w * t.total;
            }
        }

        let eval = match sharded_pass(model, monitor, plan, false) {
            Ok(r) => r,
            Err(Error::Numerical(msg)) => {
                diverged = Some(msg);
                break 'stage;
            }
            Err(other) => return Err(other),
        };
        let improved = best_objective - eval.objective > config.min_delta;
        epochs.push(EpochRecord {
            stage: plan.stage,
            epoch,
            train_objective,
            monitor_objective: eval.objective,
            train_terms,
            monitor_terms: eval.terms,
            improved,
        });
        if improved {
            best_objective = eval.objective;
            best_epoch = epoch;
            best_params = snapshot(model);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }

    restore(model, &best_params);
    Ok(StageOutcome {
        stage: plan.stage,
        epochs_run,
        best_epoch,
        start_objective: start.objective,
        best_objective,
        diverged,
    })
}

/// Runs both stages on `model` in place. On divergence the model is left at
/// the best parameters seen and the report records the failure; stage 2 is
/// skipped if stage 1 diverged.
pub fn fit(model: &mut NhmmModel, windows: &SplitWindows, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if windows.train.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    let started = Instant::now();
    let mut epochs = Vec::new();
    let stage1 = run_stage(model, &windows.train, &windows.validation, config, STAGE_ONE, &mut epochs)?;
    let hashes_after_stage1 = group_hashes(model);
    let stage2 = if stage1.diverged.is_none() {
        Some(run_stage(model, &windows.train, &windows.validation, config, STAGE_TWO, &mut epochs)?)
    } else {
        None
    };
    Ok(TrainReport {
        seed: config.seed,
        epochs,
        stage1,
        stage2,
        hashes_after_stage1,
        hashes_after_stage2: group_hashes(model),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}
