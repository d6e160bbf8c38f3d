//! Run configuration files, flag overrides, and provenance stamps.
//!
//! Configs are JSON. Paths inside a config resolve against the config
//! file's own directory, so a config can live next to its data; paths
//! given on the command line resolve against the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nhmm_core::data::{ScalerKind, SplitPolicy};
use nhmm_core::model::ModelConfig;
use nhmm_core::training::{GridSearch, TrainConfig};
use nhmm_core::{Error, Result};

/// Settings for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset manifest path.
    pub data: String,
    /// Forecast horizon h.
    pub horizon: usize,
    /// Lookback window length W.
    pub lookback: usize,
    /// Hidden-state count K.
    #[serde(default = "default_states")]
    pub states: usize,
    /// Step between consecutive window origins.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub scaler: ScalerKind,
    #[serde(default)]
    pub split: SplitPolicy,
    #[serde(default)]
    pub train: TrainConfig,
    /// Output directory.
    #[serde(default = "default_out")]
    pub out: String,
}

impl RunConfig {
    /// The model structure this run trains.
    pub fn model_config(&self, signal_channels: usize) -> ModelConfig {
        let mut config = ModelConfig::new(self.states, self.horizon, self.lookback)
            .with_signal(signal_channels);
        config.hidden = self.hidden.clone();
        config.scaler = self.scaler;
        config
    }
}

fn default_states() -> usize {
    2
}

fn default_stride() -> usize {
    1
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

fn default_out() -> String {
    "out".into()
}

/// Settings for one grid sweep: the dataset plus the swept search itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRunConfig {
    pub data: String,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(flatten)]
    pub search: GridSearch,
}

/// Parses a JSON config file, reporting the field path of any error.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    let mut deserializer = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut deserializer).map_err(|e| {
        Error::Config(format!("{}: `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

/// Resolves `relative` against the directory containing `base_file`.
pub fn resolve(base_file: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_file.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Hex SHA-256 of a file's bytes, for reproducibility stamps.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to reproduce a run: the resolved configuration, the
/// seed, and a digest of the exact input data.
#[derive(Debug, Serialize)]
pub struct Stamp<'a, C: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub data_sha256: &'a str,
    pub config: &'a C,
}

/// Writes a value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_run_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"data": "d.json", "horizon": 4, "lookback": 8}"#).unwrap();
        let config: RunConfig = load_json(&path).unwrap();
        assert_eq!(config.states, 2);
        assert_eq!(config.stride, 1);
        assert_eq!(config.hidden, vec![128, 128]);
        assert_eq!(config.train.batch_size, 2048);
        assert_eq!(config.out, "out");
    }

    #[test]
    fn config_errors_carry_the_field_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"data": "d.json", "horizon": 4, "lookback": 8, "train": {"learning_rate": "fast"}}"#,
        )
        .unwrap();
        let err = load_json::<RunConfig>(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.learning_rate"), "{msg}");
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn paths_resolve_against_the_config_directory() {
        let base = Path::new("/tmp/conf/run.json");
        assert_eq!(resolve(base, "data/m.json"), Path::new("/tmp/conf/data/m.json"));
        assert_eq!(resolve(base, "/abs/m.json"), Path::new("/abs/m.json"));
    }

    #[test]
    fn grid_config_flattens_the_search() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        fs::write(
            &path,
            r#"{
                "data": "d.json",
                "horizon": 4,
                "axes": {"learning_rates": [0.005, 0.0005]},
                "seeds": [1, 2]
            }"#,
        )
        .unwrap();
        let config: GridRunConfig = load_json(&path).unwrap();
        assert_eq!(config.search.horizon, 4);
        assert_eq!(config.search.axes.learning_rates, vec![5e-3, 5e-4]);
        assert_eq!(config.search.axes.batch_sizes, vec![2048]);
        assert_eq!(config.search.seeds, vec![1, 2]);
    }
}
