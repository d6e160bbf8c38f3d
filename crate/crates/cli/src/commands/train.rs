//! The `train` command: fit a model on a dataset and write the checkpoint,
//! the full training report, and a reproducibility stamp.

use std::fs;
use std::path::{Path, PathBuf};

use nhmm_core::data::{make_windows, DatasetManifest};
use nhmm_core::model::NhmmModel;
use nhmm_core::training::fit;
use nhmm_core::{Error, Result};

use crate::checkpoint::Checkpoint;
use crate::config::{file_sha256, load_json, resolve, write_json, RunConfig, Stamp};

pub fn run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut config: RunConfig = load_json(config_path)?;
    if let Some(s) = seed {
        config.train.seed = s;
    }
    if let Some(dir) = out {
        config.out = dir.to_string_lossy().into_owned();
    }

    let manifest_path = resolve(config_path, &config.data);
    let (manifest, records) = DatasetManifest::load_dataset(&manifest_path)?;
    let channels = records.first().map_or(0, |r| r.signal_channels());
    let windows = make_windows(
        &records,
        config.lookback,
        config.horizon,
        config.stride,
        &config.split,
        config.scaler,
    )?;

    let mut model = NhmmModel::init(config.model_config(channels), config.train.seed)?;
    let report = fit(&mut model, &windows, &config.train)?;

    let out_dir = Path::new(&config.out);
    fs::create_dir_all(out_dir)?;
    let checkpoint = Checkpoint::from_model(
        &model,
        config.train.seed,
        report.stage1.epochs_run,
        report.stage2.as_ref().map_or(0, |s| s.epochs_run),
    );
    checkpoint.save(&out_dir.join("checkpoint.json"))?;
    write_json(&out_dir.join("train_report.json"), &report)?;
    let data_sha256 = file_sha256(&manifest.csv_path(&manifest_path))?;
    write_json(
        &out_dir.join("stamp.json"),
        &Stamp {
            command: "train",
            seed: config.train.seed,
            data_sha256: &data_sha256,
            config: &config,
        },
    )?;

    println!(
        "trained on {} series ({} train / {} validation / {} test windows), seed {}",
        records.len(),
        windows.train.len(),
        windows.validation.len(),
        windows.test.len(),
        config.train.seed
    );
    println!(
        "stage 1: {} epochs, monitored objective {:.6} -> {:.6}",
        report.stage1.epochs_run, report.stage1.start_objective, report.stage1.best_objective
    );
    if let Some(stage2) = &report.stage2 {
        println!(
            "stage 2: {} epochs, monitored objective {:.6} -> {:.6}",
            stage2.epochs_run, stage2.start_objective, stage2.best_objective
        );
    }
    println!("wrote {}", out_dir.join("checkpoint.json").display());

    if let Some(msg) = report.diverged() {
        return Err(Error::Numerical(format!(
            "training diverged ({msg}); the checkpoint holds the best parameters seen"
        )));
    }
    Ok(())
}
