//! The `forecast` command: load a checkpoint, window each series at its
//! last observed point, and write per-step predictive distributions plus
//! sampled trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use nhmm_core::data::{make_windows, DatasetManifest, SplitPolicy};
use nhmm_core::model::forecast;
use nhmm_core::Result;

use crate::checkpoint::load_model;
use crate::tables::write_forecasts;

pub fn run(
    checkpoint_path: &Path,
    data: &Path,
    n_trajectories: usize,
    seed: u64,
    out: &PathBuf,
) -> Result<()> {
    let (checkpoint, model) = load_model(checkpoint_path)?;
    let (_, records) = DatasetManifest::load_dataset(data)?;

    // One window per series, anchored so the forecast starts right after
    // the last observation. LastHorizon puts exactly that window in the
    // test split.
    let windows = make_windows(
        &records,
        model.lookback(),
        model.horizon(),
        1,
        &SplitPolicy::LastHorizon { validation_fraction: 0.0 },
        model.config().scaler,
    )?;
    let batch = &windows.test;
    let results = forecast(&model, batch, n_trajectories, seed, true)?;

    fs::create_dir_all(out)?;
    let table = out.join("forecasts.csv");
    write_forecasts(&table, batch, &results, n_trajectories)?;

    println!(
        "forecast {} series, horizon {}, {} trajectories each (checkpoint seed {})",
        batch.len(),
        model.horizon(),
        n_trajectories,
        checkpoint.seed
    );
    println!("wrote {}", table.display());
    Ok(())
}
