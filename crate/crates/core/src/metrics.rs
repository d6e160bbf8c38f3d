//! Forecast accuracy metrics, the seasonal-naive baseline, subsample
//! construction, and trajectory scoring.
//!
//! Everything here works in original units; forecasts must be inverted out
//! of scaled space before scoring, since scale-dependent metrics would
//! silently reorder heterogeneous corpora.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{SeriesRecord, WindowBatch};
use crate::error::{Error, Result};
use crate::model::{forecast, NhmmModel};

/// Mean absolute scaled error: the mean absolute forecast error divided by
/// the in-sample mean absolute seasonal difference at period `m`. The
/// denominator runs over the `T - m` valid seasonal differences.
pub fn mase(actual: &[f64], forecast: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    if actual.len() != forecast.len() || actual.is_empty() {
        return Err(Error::Metric(format!(
            "actual and forecast lengths differ or are empty: {} vs {}",
            actual.len(),
            forecast.len()
        )));
    }
    if m == 0 || insample.len() <= m {
        return Err(Error::Metric(format!(
            "scaled error needs more than m = {m} in-sample values, got {}",
            insample.len()
        )));
    }
    let t = insample.len();
    let denominator: f64 = (m..t).map(|i| (insample[i] - insample[i - m]).abs()).sum();
    if denominator == 0.0 {
        return Err(Error::Metric(
            "undefined MASE: the in-sample series is exactly m-periodic".into(),
        ));
    }
    let numerator: f64 = actual.iter().zip(forecast).map(|(y, f)| (y - f).abs()).sum();
    Ok((numerator / actual.len() as f64) / (denominator / (t - m) as f64))
}

pub fn mse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    paired(actual, forecast)?;
    let sum: f64 = actual.iter().zip(forecast).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(sum / actual.len() as f64)
}

pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    paired(actual, forecast)?;
    let sum: f64 = actual.iter().zip(forecast).map(|(y, f)| (y - f).abs()).sum();
    Ok(sum / actual.len() as f64)
}

fn paired(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() || actual.is_empty() {
        return Err(Error::Metric(format!(
            "actual and forecast lengths differ or are empty: {} vs {}",
            actual.len(),
            forecast.len()
        )));
    }
    Ok(())
}

/// Seasonal-naive forecast: the last observed period of length `m`, tiled
/// out to `horizon` values.
pub fn snaive(insample: &[f64], m: usize, horizon: usize) -> Result<Vec<f64>> {
    if m == 0 || insample.len() < m {
        return Err(Error::Metric(format!(
            "seasonal-naive forecast needs at least m = {m} in-sample values, got {}",
            insample.len()
        )));
    }
    let last_period = &insample[insample.len() - m..];
    Ok((0..horizon).map(|j| last_period[j % m]).collect())
}

/// One evaluation window in original units.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub id: String,
    pub m: usize,
    /// History up to the forecast origin.
    pub insample: Vec<f64>,
    /// The `h` observed values after the origin.
    pub actual: Vec<f64>,
}

/// Builds one case per batch row, looking up each row's series for its
/// history and inverting the stored targets back to original units.
pub fn eval_cases(records: &[SeriesRecord], batch: &WindowBatch) -> Result<Vec<EvalCase>> {
    let by_id: BTreeMap<&str, &SeriesRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let horizon = batch.horizon();
    let mut cases = Vec::with_capacity(batch.len());
    for row in 0..batch.len() {
        let id = &batch.ids[row];
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Data(format!("series `{id}` not found in the corpus")))?;
        let origin = batch.origins[row];
        if origin > record.y.len() {
            return Err(Error::Data(format!(
                "window origin {origin} lies beyond series `{id}` of length {}",
                record.y.len()
            )));
        }
        let scaled = &batch.future_y.data()[row * horizon..(row + 1) * horizon];
        cases.push(EvalCase {
            id: id.clone(),
            m: record.m,
            insample: record.y[..origin].to_vec(),
            actual: batch.scalers[row].invert_slice(scaled),
        });
    }
    Ok(cases)
}

/// Point-forecast scores for one case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesScore {
    pub id: String,
    /// Absent when the in-sample series makes the scaled error undefined.
    pub mase: Option<f64>,
    pub mse: f64,
    pub mae: f64,
}

/// Per-case scores plus corpus means. The MASE mean runs over the cases
/// where it is defined; those where it is not are listed in `excluded`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_series: Vec<SeriesScore>,
    pub mean_mase: Option<f64>,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub excluded: Vec<String>,
}

/// Scores one forecast per case.
pub fn score_corpus(cases: &[EvalCase], forecasts: &[Vec<f64>]) -> Result<EvalReport> {
    if cases.len() != forecasts.len() || cases.is_empty() {
        return Err(Error::Metric(format!(
            "{} cases but {} forecasts",
            cases.len(),
            forecasts.len()
        )));
    }
    let mut per_series = Vec::with_capacity(cases.len());
    let mut excluded = Vec::new();
    for (case, forecast) in cases.iter().zip(forecasts) {
        let scaled = match mase(&case.actual, forecast, &case.insample, case.m) {
            Ok(v) => Some(v),
            Err(Error::Metric(_)) => {
                excluded.push(case.id.clone());
                None
            }
            Err(other) => return Err(other),
        };
        per_series.push(SeriesScore {
            id: case.id.clone(),
            mase: scaled,
            mse: mse(&case.actual, forecast)?,
            mae: mae(&case.actual, forecast)?,
        });
    }
    let defined: Vec<f64> = per_series.iter().filter_map(|s| s.mase).collect();
    Ok(EvalReport {
        mean_mase: (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        mean_mse: per_series.iter().map(|s| s.mse).sum::<f64>() / per_series.len() as f64,
        mean_mae: per_series.iter().map(|s| s.mae).sum::<f64>() / per_series.len() as f64,
        per_series,
        excluded,
    })
}

/// Seasonal-naive MASE per case; `None` where it is undefined.
pub fn snaive_scores(cases: &[EvalCase]) -> Vec<(String, Option<f64>)> {
    cases
        .iter()
        .map(|case| {
            let score = snaive(&case.insample, case.m, case.actual.len())
                .and_then(|f| mase(&case.actual, &f, &case.insample, case.m))
                .ok();
            (case.id.clone(), score)
        })
        .collect()
}

/// The corpus split by baseline difficulty: the `n` series where the
/// seasonal-naive forecast scored worst and the `n` where it scored best.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subsamples {
    /// Ids with the highest baseline MASE, hardest first.
    pub non_stationary: Vec<String>,
    /// Ids with the lowest baseline MASE, easiest first.
    pub stationary: Vec<String>,
    /// Ids whose baseline MASE was undefined; never selected.
    pub excluded: Vec<String>,
}

/// Splits `scores` into the top-`n` and bottom-`n` ids by value. Ties are
/// broken by id, lexicographically, so the construction is a pure function
/// of its inputs.
pub fn build_subsamples(scores: &[(String, Option<f64>)], n: usize) -> Result<Subsamples> {
    if n == 0 {
        return Err(Error::Metric("subsample size must be at least 1".into()));
    }
    let mut defined: Vec<(&str, f64)> = Vec::new();
    let mut excluded = Vec::new();
    for (id, score) in scores {
        match score {
            Some(v) => defined.push((id, *v)),
            None => excluded.push(id.clone()),
        }
    }
    if defined.len() < 2 * n {
        return Err(Error::Metric(format!(
            "need at least {} scored series for two subsamples of {n}, got {}",
            2 * n,
            defined.len()
        )));
    }
    defined.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(b.0)));
    let stationary = defined[..n].iter().map(|(id, _)| id.to_string()).collect();
    let non_stationary = defined[defined.len() - n..]
        .iter()
        .rev()
        .map(|(id, _)| id.to_string())
        .collect();
    Ok(Subsamples { non_stationary, stationary, excluded })
}

/// Mean of the defined per-series MASE values within an id subset.
pub fn subset_mean_mase(scores: &[SeriesScore], ids: &[String]) -> Option<f64> {
    let wanted: BTreeMap<&str, ()> = ids.iter().map(|id| (id.as_str(), ())).collect();
    let values: Vec<f64> = scores
        .iter()
        .filter(|s| wanted.contains_key(s.id.as_str()))
        .filter_map(|s| s.mase)
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Scores of sampled futures, pooled over every (case, trajectory) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryScore {
    /// Per-case mean over that case's trajectories.
    pub per_series: Vec<SeriesScore>,
    /// Pooled mean of all trajectory MASEs.
    pub mean: f64,
    /// Pooled sample standard deviation (n - 1) of all trajectory MASEs.
    pub std: f64,
    pub excluded: Vec<String>,
}

/// Scores every sampled trajectory of every case and pools the results.
/// `trajectories[i]` holds the sampled futures for `cases[i]`.
pub fn trajectory_scores(
    cases: &[EvalCase],
    trajectories: &[Vec<Vec<f64>>],
) -> Result<TrajectoryScore> {
    if cases.len() != trajectories.len() || cases.is_empty() {
        return Err(Error::Metric(format!(
            "{} cases but {} trajectory sets",
            cases.len(),
            trajectories.len()
        )));
    }
    let mut pooled = Vec::new();
    let mut per_series = Vec::with_capacity(cases.len());
    let mut excluded = Vec::new();
    for (case, futures) in cases.iter().zip(trajectories) {
        if futures.is_empty() {
            return Err(Error::Metric(format!("no trajectories for series `{}`", case.id)));
        }
        let mut values = Vec::with_capacity(futures.len());
        let mut undefined = false;
        for future in futures {
            match mase(&case.actual, future, &case.insample, case.m) {
                Ok(v) => values.push(v),
                Err(Error::Metric(_)) => {
                    undefined = true;
                    break;
                }
                Err(other) => return Err(other),
            }
        }
        if undefined {
            excluded.push(case.id.clone());
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        per_series.push(SeriesScore {
            id: case.id.clone(),
            mase: Some(mean),
            mse: f64::NAN,
            mae: f64::NAN,
        });
        pooled.extend(values);
    }
    if pooled.is_empty() {
        return Err(Error::Metric("no series produced a defined trajectory score".into()));
    }
    let (mean, std) = mean_and_sample_std(&pooled);
    Ok(TrajectoryScore { per_series, mean, std, excluded })
}

/// Samples trajectories from the model and scores them against the cases,
/// which must align row for row with `batch`.
pub fn probabilistic_score(
    model: &NhmmModel,
    batch: &WindowBatch,
    cases: &[EvalCase],
    n_trajectories: usize,
    seed: u64,
) -> Result<TrajectoryScore> {
    if n_trajectories == 0 {
        return Err(Error::Metric("trajectory scoring needs at least one trajectory".into()));
    }
    let forecasts = forecast(model, batch, n_trajectories, seed, true)?;
    let trajectories: Vec<Vec<Vec<f64>>> =
        forecasts.into_iter().map(|f| f.trajectories).collect();
    trajectory_scores(cases, &trajectories)
}

/// Mean and sample (n - 1) standard deviation; the deviation is 0 for
/// fewer than two values.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
