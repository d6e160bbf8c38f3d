//! The `gridsearch` command: sweep hyperparameter combinations over a
//! dataset, rank them on held-out score, and keep the winning model as a
//! ready-to-use checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use nhmm_core::data::DatasetManifest;
use nhmm_core::training::{GridCell, SelectionMetric};
use nhmm_core::Result;

use crate::checkpoint::Checkpoint;
use crate::config::{file_sha256, load_json, resolve, write_json, GridRunConfig, Stamp};
use crate::tables::write_ranking;

#[derive(Debug, Serialize)]
struct GridReport<'a> {
    metric: SelectionMetric,
    seeds: &'a [u64],
    cells_total: usize,
    cells_scored: usize,
    cells_failed: usize,
    best: &'a GridCell,
    best_mean: Option<f64>,
    best_std: f64,
}

pub fn run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut config: GridRunConfig = load_json(config_path)?;
    if let Some(s) = seed {
        config.search.seeds = vec![s];
    }
    if let Some(dir) = out {
        config.out = dir.to_string_lossy().into_owned();
    }

    let manifest_path = resolve(config_path, &config.data);
    let (manifest, records) = DatasetManifest::load_dataset(&manifest_path)?;
    let outcome = config.search.run(&records)?;

    let out_dir = Path::new(&config.out);
    fs::create_dir_all(out_dir)?;
    write_ranking(&out_dir.join("ranking.csv"), &outcome.ranking)?;

    let checkpoint = Checkpoint::from_model(
        &outcome.best_model,
        outcome.best_report.seed,
        outcome.best_report.stage1.epochs_run,
        outcome.best_report.stage2.as_ref().map_or(0, |s| s.epochs_run),
    );
    checkpoint.save(&out_dir.join("checkpoint.json"))?;

    let scored = outcome.ranking.iter().filter(|c| c.mean.is_some()).count();
    write_json(
        &out_dir.join("grid_report.json"),
        &GridReport {
            metric: config.search.metric,
            seeds: &config.search.seeds,
            cells_total: outcome.ranking.len(),
            cells_scored: scored,
            cells_failed: outcome.ranking.len() - scored,
            best: &outcome.best,
            best_mean: outcome.ranking[0].mean,
            best_std: outcome.ranking[0].std,
        },
    )?;
    let data_sha256 = file_sha256(&manifest.csv_path(&manifest_path))?;
    write_json(
        &out_dir.join("stamp.json"),
        &Stamp {
            command: "gridsearch",
            seed: *config.search.seeds.first().unwrap_or(&0),
            data_sha256: &data_sha256,
            config: &config,
        },
    )?;

    println!(
        "swept {} cells over {} series ({} scored, {} failed)",
        outcome.ranking.len(),
        records.len(),
        scored,
        outcome.ranking.len() - scored
    );
    for (i, cell) in outcome.ranking.iter().take(10).enumerate() {
        let score = match (cell.mean, &cell.error) {
            (Some(mean), _) => format!("{mean:.6} (std {:.6})", cell.std),
            (None, Some(err)) => format!("failed: {err}"),
            (None, None) => "failed".into(),
        };
        println!(
            "  #{}: lr {} batch {} states {} lookback {} scaler {:?} -> {score}",
            i + 1,
            cell.cell.learning_rate,
            cell.cell.batch_size,
            cell.cell.states,
            cell.cell.lookback,
            cell.cell.scaler,
        );
    }
    println!("wrote {}", out_dir.join("checkpoint.json").display());
    Ok(())
}
