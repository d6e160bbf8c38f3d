//! Sliding-window construction and train/validation/test splitting.
//!
//! A window row at origin `t` pairs the lookback `y[t-W..t]` (plus the
//! aligned signal slice) with the target `y[t..t+h]`. Rows are scaled with
//! statistics fitted on the lookback only. Splitting keeps every test-region
//! value out of all training and validation targets.

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

use super::scaler::{ScalerKind, ScalerParams};
use super::SeriesRecord;

/// How forecast origins are assigned to the three splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Hold out the final `test_fraction` of each series; test windows
    /// forecast only into that region, train/validation targets end before
    /// it. `validation_fraction` of the remaining origins (the latest ones)
    /// form the validation set.
    FractionHoldout {
        test_fraction: f64,
        validation_fraction: f64,
    },
    /// One test window per series, forecasting the last `h` values.
    LastHorizon { validation_fraction: f64 },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::FractionHoldout {
            test_fraction: 0.2,
            validation_fraction: 0.1,
        }
    }
}

/// A set of scaled window rows, ready for batching.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// Scaled lookback values, `[B, W]`.
    pub past_y: Tensor,
    /// Scaled signal slices, `[B, W, E]`; absent when the data has none.
    pub past_w: Option<Tensor>,
    /// Scaled targets, `[B, h]`. Starts one step after `past_y` ends.
    pub future_y: Tensor,
    /// Per-row scaler fitted on the raw lookback; inverts forecasts.
    pub scalers: Vec<ScalerParams>,
    pub ids: Vec<String>,
    /// Per-row forecast origin: index of the first target value.
    pub origins: Vec<usize>,
}

impl WindowBatch {
    fn empty(lookback: usize, horizon: usize, channels: usize) -> Self {
        WindowBatch {
            past_y: Tensor::zeros(&[0, lookback]),
            past_w: (channels > 0).then(|| Tensor::zeros(&[0, lookback, channels])),
            future_y: Tensor::zeros(&[0, horizon]),
            scalers: Vec::new(),
            ids: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.past_y.shape()[1]
    }

    pub fn horizon(&self) -> usize {
        self.future_y.shape()[1]
    }

    pub fn signal_channels(&self) -> usize {
        self.past_w.as_ref().map_or(0, |w| w.shape()[2])
    }

    /// New batch holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> WindowBatch {
        let (w, h, e) = (self.lookback(), self.horizon(), self.signal_channels());
        let gather = |src: &Tensor, width: usize| {
            let mut data = Vec::with_capacity(rows.len() * width);
            for &r in rows {
                data.extend_from_slice(&src.data()[r * width..(r + 1) * width]);
            }
            data
        };
        WindowBatch {
            past_y: Tensor::new(vec![rows.len(), w], gather(&self.past_y, w)).unwrap(),
            past_w: self
                .past_w
                .as_ref()
                .map(|pw| Tensor::new(vec![rows.len(), w, e], gather(pw, w * e)).unwrap()),
            future_y: Tensor::new(vec![rows.len(), h], gather(&self.future_y, h)).unwrap(),
            scalers: rows.iter().map(|&r| self.scalers[r].clone()).collect(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            origins: rows.iter().map(|&r| self.origins[r]).collect(),
        }
    }
}

/// The three disjoint window sets produced by [`make_windows`].
#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: WindowBatch,
    pub validation: WindowBatch,
    pub test: WindowBatch,
}

struct RowPlan<'a> {
    record: &'a SeriesRecord,
    origin: usize,
}

/// Builds scaled train/validation/test windows from whole series.
///
/// Origins lie on the stride grid anchored at `lookback`; under
/// [`SplitPolicy::LastHorizon`] the single test origin is pinned to `T - h`
/// regardless of the grid.
pub fn make_windows(
    records: &[SeriesRecord],
    lookback: usize,
    horizon: usize,
    stride: usize,
    policy: &SplitPolicy,
    scaler: ScalerKind,
) -> Result<SplitWindows> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config(
            "lookback, horizon, and stride must all be positive".into(),
        ));
    }
    let offenders: Vec<&str> = records
        .iter()
        .filter(|r| lookback + horizon > r.len())
        .map(|r| r.id.as_str())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Data(format!(
            "lookback {lookback} + horizon {horizon} exceeds series length for: {}",
            offenders.join(", ")
        )));
    }
    let channels = records.first().map_or(0, |r| r.signal_channels());
    for r in records {
        if r.signal_channels() != channels {
            return Err(Error::Data(format!(
                "series `{}` has {} signal channels but `{}` has {}",
                r.id,
                r.signal_channels(),
                records[0].id,
                channels
            )));
        }
    }
    let ok_fraction = |f: f64, name: &str| -> Result<()> {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("{name} must lie in [0, 1), got {f}")));
        }
        Ok(())
    };

    let mut train: Vec<RowPlan> = Vec::new();
    let mut validation: Vec<RowPlan> = Vec::new();
    let mut test: Vec<RowPlan> = Vec::new();
    for record in records {
        let t_len = record.len();
        let grid = (lookback..=t_len - horizon).step_by(stride);
        let (test_origins, pool, val_fraction): (Vec<usize>, Vec<usize>, f64) = match policy {
            SplitPolicy::FractionHoldout { test_fraction, validation_fraction } => {
                ok_fraction(*test_fraction, "test_fraction")?;
                ok_fraction(*validation_fraction, "validation_fraction")?;
                // First index of the held-out region. Targets of train and
                // validation rows must end at or before it.
                let test_start = ((1.0 - test_fraction) * t_len as f64).ceil() as usize;
                let mut tests = Vec::new();
                let mut pool = Vec::new();
                for t in grid {
                    if t >= test_start {
                        tests.push(t);
                    } else if t + horizon <= test_start {
                        pool.push(t);
                    }
                    // Origins straddling the boundary are dropped entirely.
                }
                (tests, pool, *validation_fraction)
            }
            SplitPolicy::LastHorizon { validation_fraction } => {
                ok_fraction(*validation_fraction, "validation_fraction")?;
                let test_origin = t_len - horizon;
                let pool = grid.filter(|t| t + horizon <= test_origin).collect();
                (vec![test_origin], pool, *validation_fraction)
            }
        };
        let n_val = (val_fraction * pool.len() as f64).ceil() as usize;
        let split_at = pool.len() - n_val.min(pool.len());
        for (i, t) in pool.iter().enumerate() {
            let plan = RowPlan { record, origin: *t };
            if i < split_at {
                train.push(plan);
            } else {
                validation.push(plan);
            }
        }
        for t in test_origins {
            test.push(RowPlan { record, origin: t });
        }
    }

    Ok(SplitWindows {
        train: build_batch(&train, lookback, horizon, channels, scaler)?,
        validation: build_batch(&validation, lookback, horizon, channels, scaler)?,
        test: build_batch(&test, lookback, horizon, channels, scaler)?,
    })
}

fn build_batch(
    rows: &[RowPlan],
    lookback: usize,
    horizon: usize,
    channels: usize,
    scaler: ScalerKind,
) -> Result<WindowBatch> {
    if rows.is_empty() {
        return Ok(WindowBatch::empty(lookback, horizon, channels));
    }
    let b = rows.len();
    let mut past_y = Vec::with_capacity(b * lookback);
    let mut future_y = Vec::with_capacity(b * horizon);
    let mut past_w = Vec::with_capacity(b * lookback * channels);
    let mut scalers = Vec::with_capacity(b);
    let mut ids = Vec::with_capacity(b);
    let mut origins = Vec::with_capacity(b);
    for plan in rows {
        let t = plan.origin;
        let y = &plan.record.y;
        let window = &y[t - lookback..t];
        let params = ScalerParams::fit(scaler, window)?;
        past_y.extend(window.iter().map(|&v| params.apply(v)));
        future_y.extend(y[t..t + horizon].iter().map(|&v| params.apply(v)));
        if channels > 0 {
            let w = plan.record.w.as_ref().unwrap();
            // Each channel gets its own statistics, fitted on the same
            // lookback span as y.
            let channel_params: Vec<ScalerParams> = (0..channels)
                .map(|c| ScalerParams::fit(scaler, &w[c][t - lookback..t]))
                .collect::<Result<_>>()?;
            for u in t - lookback..t {
                for (c, cp) in channel_params.iter().enumerate() {
                    past_w.push(cp.apply(w[c][u]));
                }
            }
        }
        scalers.push(params);
        ids.push(plan.record.id.clone());
        origins.push(t);
    }
    Ok(WindowBatch {
        past_y: Tensor::new(vec![b, lookback], past_y)?,
        past_w: (channels > 0).then(|| Tensor::new(vec![b, lookback, channels], past_w).unwrap()),
        future_y: Tensor::new(vec![b, horizon], future_y)?,
        scalers,
        ids,
        origins,
    })
}
