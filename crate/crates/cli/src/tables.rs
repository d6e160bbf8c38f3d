//! CSV tables: the forecast table and its reader, the grid ranking, and
//! the per-series evaluation.
//!
//! Floats are written in Rust's shortest round-trip form, so writing and
//! re-reading a table preserves values bit for bit.

use std::collections::BTreeSet;
use std::path::Path;

use nhmm_core::data::WindowBatch;
use nhmm_core::model::ForecastResult;
use nhmm_core::training::CellScore;
use nhmm_core::{Error, Result};

/// Writes one row per (series, step): the mixture mean, per-state chain
/// probabilities and emission parameters, and one column per trajectory.
/// All values are in original units.
pub fn write_forecasts(
    path: &Path,
    batch: &WindowBatch,
    results: &[ForecastResult],
    n_trajectories: usize,
) -> Result<()> {
    let states = results.first().map_or(0, |r| r.state_probs.first().map_or(0, Vec::len));
    let mut writer = csv::Writer::from_path(path)?;

    let mut header = vec!["series_id".to_string(), "origin".into(), "step".into(), "mixture_mean".into()];
    for k in 1..=states {
        header.push(format!("p_{k}"));
    }
    for k in 1..=states {
        header.push(format!("mu_{k}"));
    }
    for k in 1..=states {
        header.push(format!("sigma_{k}"));
    }
    for j in 1..=n_trajectories {
        header.push(format!("traj_{j}"));
    }
    writer.write_record(&header)?;

    for (row, result) in results.iter().enumerate() {
        for step in 0..result.mixture_mean.len() {
            let mut record = vec![
                batch.ids[row].clone(),
                batch.origins[row].to_string(),
                (step + 1).to_string(),
                result.mixture_mean[step].to_string(),
            ];
            record.extend(result.state_probs[step].iter().map(f64::to_string));
            record.extend(result.mu[step].iter().map(f64::to_string));
            record.extend(result.sigma[step].iter().map(f64::to_string));
            record.extend(result.trajectories.iter().map(|t| t[step].to_string()));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One series read back from a forecast table.
#[derive(Debug, Clone)]
pub struct SeriesForecast {
    pub id: String,
    pub origin: usize,
    pub mixture_mean: Vec<f64>,
    /// `[trajectory][step]`; empty when the table has no trajectory columns.
    pub trajectories: Vec<Vec<f64>>,
}

fn parse_field(raw: &str, line: u64, column: &str) -> Result<f64> {
    raw.parse().map_err(|_| {
        Error::Data(format!(
            "forecast table: unparseable `{raw}` at line {line}, column `{column}`"
        ))
    })
}

/// Reads a table produced by [`write_forecasts`]. Rows of one series must
/// be contiguous with steps running 1..=h.
pub fn read_forecasts(path: &Path) -> Result<Vec<SeriesForecast>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("forecast table: missing column `{name}`")))
    };
    let id_idx = col("series_id")?;
    let origin_idx = col("origin")?;
    let step_idx = col("step")?;
    let mean_idx = col("mixture_mean")?;
    let traj_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| headers[i].starts_with("traj_"))
        .collect();

    let mut out: Vec<SeriesForecast> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(id_idx).unwrap_or("").to_string();
        let origin = record
            .get(origin_idx)
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|_| Error::Data(format!("forecast table: bad origin at line {line}")))?;
        let step = record
            .get(step_idx)
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|_| Error::Data(format!("forecast table: bad step at line {line}")))?;
        let mean = parse_field(record.get(mean_idx).unwrap_or(""), line, "mixture_mean")?;

        let is_new = out.last().map_or(true, |f| f.id != id);
        if is_new {
            if !seen.insert(id.clone()) {
                return Err(Error::Data(format!(
                    "forecast table: series `{id}` appears in two separate blocks"
                )));
            }
            if step != 1 {
                return Err(Error::Data(format!(
                    "forecast table: series `{id}` starts at step {step}, expected 1"
                )));
            }
            out.push(SeriesForecast {
                id,
                origin,
                mixture_mean: Vec::new(),
                trajectories: vec![Vec::new(); traj_idx.len()],
            });
        }
        let current = out.last_mut().unwrap();
        if step != current.mixture_mean.len() + 1 {
            return Err(Error::Data(format!(
                "forecast table: series `{}` jumps to step {step} after step {}",
                current.id,
                current.mixture_mean.len()
            )));
        }
        if origin != current.origin {
            return Err(Error::Data(format!(
                "forecast table: series `{}` changes origin mid-block",
                current.id
            )));
        }
        current.mixture_mean.push(mean);
        for (t, &i) in traj_idx.iter().enumerate() {
            current.trajectories[t].push(parse_field(
                record.get(i).unwrap_or(""),
                line,
                &headers[i],
            )?);
        }
    }
    if out.is_empty() {
        return Err(Error::Data("forecast table has no rows".into()));
    }
    Ok(out)
}

/// Writes the ranked grid cells, best first.
pub fn write_ranking(path: &Path, ranking: &[CellScore]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "rank",
        "learning_rate",
        "batch_size",
        "states",
        "lookback",
        "scaler",
        "mean",
        "std",
        "seed_scores",
        "error",
    ])?;
    for (i, score) in ranking.iter().enumerate() {
        let scores: Vec<String> = score.seed_scores.iter().map(f64::to_string).collect();
        writer.write_record([
            (i + 1).to_string(),
            score.cell.learning_rate.to_string(),
            score.cell.batch_size.to_string(),
            score.cell.states.to_string(),
            score.cell.lookback.to_string(),
            format!("{:?}", score.cell.scaler).to_lowercase(),
            score.mean.map(|m| m.to_string()).unwrap_or_default(),
            score.mean.map(|_| score.std.to_string()).unwrap_or_default(),
            scores.join(";"),
            score.error.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Which metric columns the evaluation emits.
#[derive(Debug, Clone, Copy)]
pub struct MetricSet {
    pub mase: bool,
    pub mse: bool,
    pub mae: bool,
}

impl MetricSet {
    /// Parses a comma-separated list such as `mase,mse`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut set = MetricSet { mase: false, mse: false, mae: false };
        for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "mase" => set.mase = true,
                "mse" => set.mse = true,
                "mae" => set.mae = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown metric `{other}` (expected mase, mse, or mae)"
                    )))
                }
            }
        }
        if !(set.mase || set.mse || set.mae) {
            return Err(Error::Config("the metric set is empty".into()));
        }
        Ok(set)
    }
}

/// One evaluated series, ready for the per-series table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalRow {
    pub series_id: String,
    /// Absent when the scaled error is undefined for this series.
    pub mase: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    /// The seasonal-naive baseline under the same scaled error.
    pub snaive_mase: Option<f64>,
    /// Mean scaled error over sampled trajectories, when present.
    pub trajectory_mase: Option<f64>,
}

/// Writes the per-series table, one metric per column, blank where a
/// metric is undefined.
pub fn write_evaluation(path: &Path, rows: &[EvalRow], metrics: MetricSet) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["series_id"];
    if metrics.mase {
        header.extend(["mase", "snaive_mase", "trajectory_mase"]);
    }
    if metrics.mse {
        header.push("mse");
    }
    if metrics.mae {
        header.push("mae");
    }
    writer.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        let mut record = vec![row.series_id.clone()];
        if metrics.mase {
            record.push(cell(row.mase));
            record.push(cell(row.snaive_mase));
            record.push(cell(row.trajectory_mase));
        }
        if metrics.mse {
            record.push(row.mse.to_string());
        }
        if metrics.mae {
            record.push(row.mae.to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_sets_parse_and_reject_unknown_names() {
        let set = MetricSet::parse("mase,mae").unwrap();
        assert!(set.mase && set.mae && !set.mse);
        assert!(MetricSet::parse("rmse").is_err());
        assert!(MetricSet::parse("").is_err());
    }

    #[test]
    fn forecast_tables_round_trip_bit_for_bit() {
        use nhmm_core::data::ScalerParams;
        use nhmm_core::diffmath::Tensor;

        let batch = WindowBatch {
            past_y: Tensor::zeros(&[2, 3]),
            past_w: None,
            future_y: Tensor::zeros(&[2, 2]),
            scalers: vec![ScalerParams::MinMax { min: 0.0, max: 1.0 }; 2],
            ids: vec!["a".into(), "b".into()],
            origins: vec![10, 12],
        };
        let result = |mm: [f64; 2]| ForecastResult {
            mu: vec![vec![0.1, 0.2]; 2],
            sigma: vec![vec![0.3, 0.4]; 2],
            state_probs: vec![vec![0.6, 0.4]; 2],
            mixture_mean: mm.to_vec(),
            trajectories: vec![vec![mm[0] + 0.01, mm[1] - 0.01], vec![mm[0], mm[1]]],
            hidden_paths: vec![vec![0, 1], vec![1, 1]],
        };
        let results = vec![result([1.0 / 3.0, 0.7]), result([-2.5, 1e-17])];

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecasts.csv");
        write_forecasts(&path, &batch, &results, 2).unwrap();

        let read = read_forecasts(&path).unwrap();
        assert_eq!(read.len(), 2);
        assert_eq!(read[0].id, "a");
        assert_eq!(read[1].origin, 12);
        for (orig, back) in results.iter().zip(&read) {
            for (x, y) in orig.mixture_mean.iter().zip(&back.mixture_mean) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (tx, ty) in orig.trajectories.iter().zip(&back.trajectories) {
                for (x, y) in tx.iter().zip(ty) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn malformed_forecast_tables_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "series_id,origin,step,mixture_mean\na,5,1,1.0\na,5,3,2.0\n",
        )
        .unwrap();
        let err = read_forecasts(&path).unwrap_err();
        assert!(err.to_string().contains("jumps to step 3"), "{err}");

        std::fs::write(
            &path,
            "series_id,origin,step,mixture_mean\na,5,1,1.0\nb,5,1,1.0\na,5,1,2.0\n",
        )
        .unwrap();
        let err = read_forecasts(&path).unwrap_err();
        assert!(err.to_string().contains("two separate blocks"), "{err}");
    }
}
