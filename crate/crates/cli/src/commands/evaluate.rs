//! The `evaluate` command: score a forecast table against the observed
//! values that follow each forecast origin, next to a seasonal-naive
//! baseline, and split the corpus into difficulty subsamples.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use nhmm_core::data::DatasetManifest;
use nhmm_core::metrics::{
    build_subsamples, score_corpus, snaive_scores, subset_mean_mase, trajectory_scores, EvalCase,
    Subsamples,
};
use nhmm_core::{Error, Result};

use crate::config::write_json;
use crate::tables::{read_forecasts, write_evaluation, EvalRow, MetricSet};

/// Which artifacts the command writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

/// Difficulty split plus the mean model score inside each half.
#[derive(Debug, Serialize)]
struct SubsampleSummary {
    size: usize,
    non_stationary_ids: Vec<String>,
    stationary_ids: Vec<String>,
    non_stationary_mean_mase: Option<f64>,
    stationary_mean_mase: Option<f64>,
    excluded: Vec<String>,
}

#[derive(Debug, Serialize)]
struct TrajectorySummary {
    n_trajectories: usize,
    mean_mase: f64,
    std_mase: f64,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    n_series: usize,
    mean_mase: Option<f64>,
    mean_mse: f64,
    mean_mae: f64,
    snaive_mean_mase: Option<f64>,
    trajectories: Option<TrajectorySummary>,
    subsamples: Option<SubsampleSummary>,
    /// Why `subsamples` is absent, when it is.
    subsample_note: Option<String>,
    /// Series whose scaled error is undefined and sits outside the means.
    excluded: Vec<String>,
    /// Corpus series with no rows in the forecast table.
    missing_forecasts: Vec<String>,
    /// Forecast table ids with no series in the corpus.
    unknown_series: Vec<String>,
}

pub fn run(
    forecasts_path: &Path,
    data: &Path,
    metric_spec: &str,
    subsample_size: usize,
    format: OutputFormat,
    out: &PathBuf,
) -> Result<()> {
    let metrics = MetricSet::parse(metric_spec)?;
    let (_, records) = DatasetManifest::load_dataset(data)?;
    let tables = read_forecasts(forecasts_path)?;

    let known: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let forecasted: BTreeSet<&str> = tables.iter().map(|t| t.id.as_str()).collect();
    let missing_forecasts: Vec<String> = records
        .iter()
        .filter(|r| !forecasted.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    let unknown_series: Vec<String> = tables
        .iter()
        .filter(|t| !known.contains(t.id.as_str()))
        .map(|t| t.id.clone())
        .collect();

    let mut cases = Vec::new();
    let mut means = Vec::new();
    let mut trajectories = Vec::new();
    for table in &tables {
        let Some(record) = records.iter().find(|r| r.id == table.id) else {
            continue;
        };
        let horizon = table.mixture_mean.len();
        if table.origin + horizon > record.y.len() {
            return Err(Error::Data(format!(
                "forecast for `{}` extends past the observed series ({} steps from origin {}, \
                 but only {} values are observed)",
                table.id,
                horizon,
                table.origin,
                record.y.len()
            )));
        }
        cases.push(EvalCase {
            id: table.id.clone(),
            m: record.m,
            insample: record.y[..table.origin].to_vec(),
            actual: record.y[table.origin..table.origin + horizon].to_vec(),
        });
        means.push(table.mixture_mean.clone());
        trajectories.push(table.trajectories.clone());
    }
    if cases.is_empty() {
        return Err(Error::Data(
            "no forecast row matches a series in the corpus".into(),
        ));
    }

    let report = score_corpus(&cases, &means)?;
    let baseline = snaive_scores(&cases);
    let snaive_defined: Vec<f64> = baseline.iter().filter_map(|(_, s)| *s).collect();
    let snaive_mean_mase = (!snaive_defined.is_empty())
        .then(|| snaive_defined.iter().sum::<f64>() / snaive_defined.len() as f64);

    let has_trajectories = trajectories.iter().all(|t| !t.is_empty());
    let trajectory_report = if has_trajectories {
        Some(trajectory_scores(&cases, &trajectories)?)
    } else {
        None
    };

    // The difficulty split needs n series in each half; on a smaller corpus
    // it is skipped, not failed, so evaluation still works on toy data.
    let mut subsample_note = None;
    let subsamples: Option<Subsamples> = if snaive_defined.len() >= 2 * subsample_size {
        Some(build_subsamples(&baseline, subsample_size)?)
    } else {
        subsample_note = Some(format!(
            "subsampling skipped: two subsamples of {subsample_size} need {} baseline-scored \
             series, got {}",
            2 * subsample_size,
            snaive_defined.len()
        ));
        None
    };

    let rows: Vec<EvalRow> = report
        .per_series
        .iter()
        .enumerate()
        .map(|(i, s)| EvalRow {
            series_id: s.id.clone(),
            mase: s.mase,
            mse: s.mse,
            mae: s.mae,
            snaive_mase: baseline[i].1,
            trajectory_mase: trajectory_report
                .as_ref()
                .and_then(|t| t.per_series[i].mase),
        })
        .collect();

    let evaluation = Evaluation {
        n_series: cases.len(),
        mean_mase: report.mean_mase,
        mean_mse: report.mean_mse,
        mean_mae: report.mean_mae,
        snaive_mean_mase,
        trajectories: trajectory_report.as_ref().map(|t| TrajectorySummary {
            n_trajectories: trajectories.first().map_or(0, Vec::len),
            mean_mase: t.mean,
            std_mase: t.std,
        }),
        subsamples: subsamples.map(|s| SubsampleSummary {
            size: subsample_size,
            non_stationary_mean_mase: subset_mean_mase(&report.per_series, &s.non_stationary),
            stationary_mean_mase: subset_mean_mase(&report.per_series, &s.stationary),
            non_stationary_ids: s.non_stationary,
            stationary_ids: s.stationary,
            excluded: s.excluded,
        }),
        subsample_note,
        excluded: report.excluded.clone(),
        missing_forecasts,
        unknown_series,
    };

    fs::create_dir_all(out)?;
    if format != OutputFormat::Json {
        write_evaluation(&out.join("evaluation.csv"), &rows, metrics)?;
    }
    if format != OutputFormat::Csv {
        write_json(&out.join("evaluation.json"), &evaluation)?;
    }

    println!("evaluated {} series", evaluation.n_series);
    if metrics.mase {
        match (evaluation.mean_mase, evaluation.snaive_mean_mase) {
            (Some(model), Some(naive)) => {
                println!("mean MASE {model:.4} (seasonal-naive baseline {naive:.4})")
            }
            _ => println!("mean MASE undefined for every series"),
        }
        if let Some(t) = &evaluation.trajectories {
            println!(
                "trajectory MASE {:.4} +/- {:.4} over {} samples per series",
                t.mean_mase, t.std_mase, t.n_trajectories
            );
        }
    }
    if metrics.mse {
        println!("mean MSE {:.6}", evaluation.mean_mse);
    }
    if metrics.mae {
        println!("mean MAE {:.6}", evaluation.mean_mae);
    }
    if let Some(s) = &evaluation.subsamples {
        println!(
            "subsamples of {}: non-stationary mean MASE {}, stationary mean MASE {}",
            s.size,
            s.non_stationary_mean_mase
                .map_or("undefined".into(), |v| format!("{v:.4}")),
            s.stationary_mean_mase
                .map_or("undefined".into(), |v| format!("{v:.4}")),
        );
    }
    if let Some(note) = &evaluation.subsample_note {
        println!("{note}");
    }
    if !evaluation.excluded.is_empty() {
        println!(
            "MASE undefined for {} series: {}",
            evaluation.excluded.len(),
            evaluation.excluded.join(", ")
        );
    }
    if !evaluation.missing_forecasts.is_empty() {
        println!(
            "warning: {} series have no forecast: {}",
            evaluation.missing_forecasts.len(),
            evaluation.missing_forecasts.join(", ")
        );
    }
    if !evaluation.unknown_series.is_empty() {
        println!(
            "warning: {} forecast ids are not in the corpus: {}",
            evaluation.unknown_series.len(),
            evaluation.unknown_series.join(", ")
        );
    }
    Ok(())
}
