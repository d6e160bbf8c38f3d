//! Per-window scaling fitted on past values only.
//!
//! Fitting never sees future values, so targets cannot leak into the
//! normalization statistics. A degenerate window (constant values) maps to
//! 0 and inverts back to the constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which normalization family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// Maps the fitted window into [0, 1].
    #[default]
    MinMax,
    /// Maps the fitted window to mean 0, unit variance.
    Standard,
}

/// Fitted statistics for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalerParams {
    MinMax { min: f64, max: f64 },
    Standard { mean: f64, std: f64 },
}

impl ScalerParams {
    pub fn fit(kind: ScalerKind, window: &[f64]) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::Data("cannot fit a scaler on an empty window".into()));
        }
        Ok(match kind {
            ScalerKind::MinMax => {
                let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ScalerParams::MinMax { min, max }
            }
            ScalerKind::Standard => {
                let n = window.len() as f64;
                let mean = window.iter().sum::<f64>() / n;
                let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                ScalerParams::Standard { mean, std: var.sqrt() }
            }
        })
    }

    pub fn kind(&self) -> ScalerKind {
        match self {
            ScalerParams::MinMax { .. } => ScalerKind::MinMax,
            ScalerParams::Standard { .. } => ScalerKind::Standard,
        }
    }

    /// True when the fitted window was constant.
    pub fn is_degenerate(&self) -> bool {
        match self {
            ScalerParams::MinMax { min, max } => max == min,
            ScalerParams::Standard { std, .. } => *std == 0.0,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ScalerParams::MinMax { min, max } => {
                if max == min {
                    0.0
                } else {
                    (x - min) / (max - min)
                }
            }
            ScalerParams::Standard { mean, std } => {
                if *std == 0.0 {
                    0.0
                } else {
                    (x - mean) / std
                }
            }
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        match self {
            ScalerParams::MinMax { min, max } => {
                if max == min {
                    *min
                } else {
                    z * (max - min) + min
                }
            }
            ScalerParams::Standard { mean, std } => {
                if *std == 0.0 {
                    *mean
                } else {
                    z * std + mean
                }
            }
        }
    }

    /// Multiplier taking scaled-space spreads back to original units.
    /// Zero for a degenerate fit, matching `invert`'s constant output.
    pub fn scale_factor(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        match self {
            ScalerParams::MinMax { min, max } => max - min,
            ScalerParams::Standard { std, .. } => *std,
        }
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.invert(z)).collect()
    }
}
