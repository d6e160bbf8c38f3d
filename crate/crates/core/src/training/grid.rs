//! Hyperparameter grid search with seeded replicates.
//!
//! Every cell trains one model per seed and is scored on the validation
//! windows; cells that cannot train are kept in the ranking with their
//! error instead of aborting the sweep. Ranking is fully deterministic:
//! score ties fall back to the smaller batch size, then the smaller
//! learning rate, state count, and lookback.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, ScalerKind, SeriesRecord, SplitPolicy, WindowBatch};
use crate::error::{Error, Result};
use crate::metrics::{eval_cases, mase, mean_and_sample_std, mse, EvalCase};
use crate::model::{forecast, ModelConfig, NhmmModel};

use super::stages::{fit, TrainConfig, TrainReport};

/// Validation statistic that orders the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    /// Mean absolute scaled error; needs a seasonal period and enough
    /// history, windows where it is undefined are skipped.
    Mase,
    /// Mean squared error in original units.
    Mse,
}

/// The swept hyperparameter values. Lookback is swept as a multiplier on
/// the corpus seasonal period m, so one grid transfers across cadences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub states: Vec<usize>,
    pub lookback_multipliers: Vec<f64>,
    pub scalers: Vec<ScalerKind>,
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            learning_rates: vec![5e-4],
            batch_sizes: vec![2048],
            states: vec![2],
            lookback_multipliers: vec![1.0],
            scalers: vec![ScalerKind::MinMax],
        }
    }
}

/// One point of the grid, with the lookback already resolved to steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub states: usize,
    pub lookback: usize,
    pub scaler: ScalerKind,
}

/// A full sweep specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearch {
    pub horizon: usize,
    pub stride: usize,
    pub policy: SplitPolicy,
    /// Hidden-layer widths shared by every cell's networks.
    pub hidden: Vec<usize>,
    /// Training settings shared by every cell; each cell overrides the
    /// learning rate, batch size, and seed.
    pub base: TrainConfig,
    pub axes: GridAxes,
    pub metric: SelectionMetric,
    /// Replicate seeds; a cell's score is the mean over them.
    pub seeds: Vec<u64>,
}

impl Default for GridSearch {
    fn default() -> Self {
        GridSearch {
            horizon: 1,
            stride: 1,
            policy: SplitPolicy::default(),
            hidden: vec![128, 128],
            base: TrainConfig::default(),
            axes: GridAxes::default(),
            metric: SelectionMetric::Mase,
            seeds: vec![0],
        }
    }
}

/// Outcome of one cell: replicate scores, their mean and sample deviation,
/// or the error that kept the cell from being scored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellScore {
    pub cell: GridCell,
    pub seed_scores: Vec<f64>,
    pub mean: Option<f64>,
    pub std: f64,
    pub error: Option<String>,
}

/// A ranked sweep plus the winning model, taken from the best cell's best
/// replicate.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Every cell, best first; unscored cells trail in configured order.
    pub ranking: Vec<CellScore>,
    pub best: GridCell,
    pub best_model: NhmmModel,
    pub best_report: TrainReport,
}

/// Ranking order: scored before failed, then score, then the tie-break
/// chain toward the cheaper configuration.
fn rank(a: &CellScore, b: &CellScore) -> Ordering {
    match (a.mean, b.mean) {
        (Some(x), Some(y)) => x
            .total_cmp(&y)
            .then(a.cell.batch_size.cmp(&b.cell.batch_size))
            .then(a.cell.learning_rate.total_cmp(&b.cell.learning_rate))
            .then(a.cell.states.cmp(&b.cell.states))
            .then(a.cell.lookback.cmp(&b.cell.lookback)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

impl GridSearch {
    fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.horizon == 0 || self.stride == 0 {
            return Err(Error::Config("horizon and stride must be positive".into()));
        }
        let axes = &self.axes;
        if axes.learning_rates.is_empty()
            || axes.batch_sizes.is_empty()
            || axes.states.is_empty()
            || axes.lookback_multipliers.is_empty()
            || axes.scalers.is_empty()
        {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if axes.lookback_multipliers.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("lookback multipliers must be positive".into()));
        }
        if axes.states.contains(&0) {
            return Err(Error::Config("state counts must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("grid search needs at least one seed".into()));
        }
        Ok(())
    }

    /// Enumerates the cells in a fixed order: learning rate, batch size,
    /// states, lookback multiplier, scaler, slowest axis first.
    pub fn cells(&self, m: usize) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &learning_rate in &self.axes.learning_rates {
            for &batch_size in &self.axes.batch_sizes {
                for &states in &self.axes.states {
                    for &multiplier in &self.axes.lookback_multipliers {
                        let lookback = ((multiplier * m as f64).round() as usize).max(1);
                        for &scaler in &self.axes.scalers {
                            out.push(GridCell {
                                learning_rate,
                                batch_size,
                                states,
                                lookback,
                                scaler,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Sweeps the grid over `records`. Cells run in parallel; the ranking
    /// and the returned model depend only on the sweep settings and data.
    pub fn run(&self, records: &[SeriesRecord]) -> Result<GridOutcome> {
        self.validate()?;
        if records.is_empty() {
            return Err(Error::Data("grid search needs a non-empty corpus".into()));
        }
        let m = records[0].m;
        if records.iter().any(|r| r.m != m) {
            return Err(Error::Config(
                "lookback multipliers need one seasonal period shared by the whole corpus".into(),
            ));
        }
        let channels = records[0].signal_channels();

        let mut evaluated: Vec<(CellScore, Option<(NhmmModel, TrainReport)>)> = self
            .cells(m)
            .into_par_iter()
            .map(|cell| match self.try_cell(&cell, records, channels) {
                Ok((seed_scores, model, report)) => {
                    let (mean, std) = mean_and_sample_std(&seed_scores);
                    let score =
                        CellScore { cell, seed_scores, mean: Some(mean), std, error: None };
                    (score, Some((model, report)))
                }
                Err(e) => {
                    let score = CellScore {
                        cell,
                        seed_scores: Vec::new(),
                        mean: None,
                        std: 0.0,
                        error: Some(e.to_string()),
                    };
                    (score, None)
                }
            })
            .collect();

        evaluated.sort_by(|a, b| rank(&a.0, &b.0));
        let mut winner = None;
        let mut ranking = Vec::with_capacity(evaluated.len());
        for (score, artifacts) in evaluated {
            if winner.is_none() {
                winner = artifacts.map(|a| (score.cell.clone(), a));
            }
            ranking.push(score);
        }
        let (best, (best_model, best_report)) = winner.ok_or_else(|| {
            let first = ranking
                .first()
                .and_then(|c| c.error.clone())
                .unwrap_or_else(|| "empty grid".into());
            Error::Config(format!("every grid cell failed; first error: {first}"))
        })?;
        Ok(GridOutcome { ranking, best, best_model, best_report })
    }

    /// Trains the cell once per seed and keeps the best replicate's model.
    fn try_cell(
        &self,
        cell: &GridCell,
        records: &[SeriesRecord],
        channels: usize,
    ) -> Result<(Vec<f64>, NhmmModel, TrainReport)> {
        let windows = make_windows(
            records,
            cell.lookback,
            self.horizon,
            self.stride,
            &self.policy,
            cell.scaler,
        )?;
        let monitor =
            if windows.validation.len() > 0 { &windows.validation } else { &windows.train };
        let cases = eval_cases(records, monitor)?;

        let mut scores = Vec::with_capacity(self.seeds.len());
        let mut best: Option<(f64, NhmmModel, TrainReport)> = None;
        for &seed in &self.seeds {
            let mut config =
                ModelConfig::new(cell.states, self.horizon, cell.lookback).with_signal(channels);
            config.hidden = self.hidden.clone();
            config.scaler = cell.scaler;
            let mut model = NhmmModel::init(config, seed)?;
            let mut train = self.base.clone();
            train.learning_rate = cell.learning_rate;
            train.batch_size = cell.batch_size;
            train.seed = seed;
            let report = fit(&mut model, &windows, &train)?;
            if let Some(msg) = report.diverged() {
                return Err(Error::Numerical(format!("seed {seed}: {msg}")));
            }
            let score = self.score(&model, monitor, &cases, seed)?;
            scores.push(score);
            if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
                best = Some((score, model, report));
            }
        }
        let (_, model, report) = best.expect("seeds validated non-empty");
        Ok((scores, model, report))
    }

    /// Point-forecast score of one trained model on the monitor windows.
    fn score(
        &self,
        model: &NhmmModel,
        batch: &WindowBatch,
        cases: &[EvalCase],
        seed: u64,
    ) -> Result<f64> {
        let forecasts = forecast(model, batch, 0, seed, false)?;
        match self.metric {
            SelectionMetric::Mse => {
                let mut total = 0.0;
                for (case, f) in cases.iter().zip(&forecasts) {
                    total += mse(&case.actual, &f.mixture_mean)?;
                }
                Ok(total / cases.len() as f64)
            }
            SelectionMetric::Mase => {
                let mut values = Vec::with_capacity(cases.len());
                for (case, f) in cases.iter().zip(&forecasts) {
                    match mase(&case.actual, &f.mixture_mean, &case.insample, case.m) {
                        Ok(v) => values.push(v),
                        Err(Error::Metric(_)) => continue,
                        Err(other) => return Err(other),
                    }
                }
                if values.is_empty() {
                    return Err(Error::Metric(
                        "no validation window has a defined scaled error".into(),
                    ));
                }
                Ok(values.iter().sum::<f64>() / values.len() as f64)
            }
        }
    }
}
