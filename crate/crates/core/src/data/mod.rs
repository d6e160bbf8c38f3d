//! Dataset ingestion, scaling, windowing, and synthetic data generation.

pub mod ingest;
pub mod scaler;
pub mod synthetic;
pub mod windows;

pub use ingest::{load_csv, CsvSchema, DatasetManifest};
pub use scaler::{ScalerKind, ScalerParams};
pub use synthetic::{generate, RegimeParams, SyntheticData, SyntheticSpec};
pub use windows::{make_windows, SplitPolicy, SplitWindows, WindowBatch};

use crate::error::{Error, Result};

/// One univariate series with an optional multichannel external signal.
#[derive(Debug, Clone)]
pub struct SeriesRecord {
    pub id: String,
    /// Observations, oldest first. No gaps, no missing values.
    pub y: Vec<f64>,
    /// External signal channels, each aligned 1:1 with `y`.
    pub w: Option<Vec<Vec<f64>>>,
    /// Seasonal period in steps (e.g. 52 for weekly data with yearly cycle).
    pub m: usize,
    /// Human-readable cadence label, e.g. "weekly".
    pub frequency: String,
}

impl SeriesRecord {
    /// Validates lengths, the seasonality bound, and finiteness.
    pub fn new(
        id: String,
        y: Vec<f64>,
        w: Option<Vec<Vec<f64>>>,
        m: usize,
        frequency: String,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Data(format!("series `{id}`: seasonality m must be positive")));
        }
        if y.len() <= m {
            return Err(Error::Data(format!(
                "series `{id}`: length {} must exceed seasonality m={m}",
                y.len()
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "series `{id}`: non-finite value at position {pos}"
            )));
        }
        if let Some(channels) = &w {
            for (c, channel) in channels.iter().enumerate() {
                if channel.len() != y.len() {
                    return Err(Error::Data(format!(
                        "series `{id}`: signal channel {c} has length {} but y has length {}",
                        channel.len(),
                        y.len()
                    )));
                }
                if let Some(pos) = channel.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "series `{id}`: non-finite signal value in channel {c} at position {pos}"
                    )));
                }
            }
        }
        Ok(SeriesRecord { id, y, w, m, frequency })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of external-signal channels (0 when absent).
    pub fn signal_channels(&self) -> usize {
        self.w.as_ref().map_or(0, |w| w.len())
    }
}
