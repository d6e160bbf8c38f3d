//! Regime-switching synthetic series with known hidden states.
//!
//! Each series follows a sticky Markov chain over regimes; a regime sets the
//! seasonal amplitude, the per-step drift, and the noise level. The optional
//! external signal is the regime indicator shifted `lead` steps earlier plus
//! noise, so a model that reads the signal can anticipate switches. The
//! generator returns the true hidden paths, which makes it the ground-truth
//! oracle for state-recovery checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SeriesRecord;

/// Generative parameters of one regime.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegimeParams {
    /// Seasonal amplitude of the shared sinusoid.
    pub amplitude: f64,
    /// Additive drift per step while the regime is active.
    pub trend: f64,
    /// Observation noise standard deviation.
    pub noise_std: f64,
}

/// Full description of a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_series: usize,
    /// Length T of every generated series.
    pub length: usize,
    /// Seasonal period m of the shared sinusoid.
    pub seasonality: usize,
    /// One entry per regime; the number of entries is the true state count.
    pub regimes: Vec<RegimeParams>,
    /// Probability of staying in the current regime at each step.
    pub stickiness: f64,
    /// When set, emit a signal channel equal to the regime indicator
    /// `lead` steps ahead, plus `signal_noise_std` Gaussian noise.
    #[serde(default)]
    pub signal_lead: Option<usize>,
    #[serde(default)]
    pub signal_noise_std: f64,
}

/// Generated corpus plus the regime sequence that produced each series.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub records: Vec<SeriesRecord>,
    /// `hidden_paths[i][t]` is the regime of series i at step t.
    pub hidden_paths: Vec<Vec<usize>>,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_series == 0 {
            return Err(Error::Config("n_series must be positive".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime is required".into()));
        }
        if self.length <= self.seasonality || self.seasonality == 0 {
            return Err(Error::Config(format!(
                "length {} must exceed seasonality {}",
                self.length, self.seasonality
            )));
        }
        if !(self.stickiness > 0.0 && self.stickiness <= 1.0) {
            return Err(Error::Config(format!(
                "stickiness must lie in (0, 1], got {}",
                self.stickiness
            )));
        }
        if self.regimes.iter().any(|r| r.noise_std < 0.0) || self.signal_noise_std < 0.0 {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }

    /// The transition matrix implied by `stickiness`: `rho` on the diagonal,
    /// the remainder spread uniformly over the other regimes.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.regimes.len();
        let off = if k > 1 {
            (1.0 - self.stickiness) / (k - 1) as f64
        } else {
            0.0
        };
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { self.stickiness } else { off })
                    .collect()
            })
            .collect()
    }
}

/// Generates the corpus. The same `(spec, seed)` pair always produces the
/// same bytes.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.regimes.len();
    let t_len = spec.length;
    let lead = spec.signal_lead.unwrap_or(0);
    let id_width = (spec.n_series.max(2) as f64).log10().ceil() as usize;

    let mut records = Vec::with_capacity(spec.n_series);
    let mut hidden_paths = Vec::with_capacity(spec.n_series);
    for i in 0..spec.n_series {
        // The chain runs `lead` steps past T so the signal can look ahead.
        let mut chain = Vec::with_capacity(t_len + lead);
        let mut state = rng.gen_range(0..k);
        chain.push(state);
        for _ in 1..t_len + lead {
            if k > 1 && rng.gen::<f64>() >= spec.stickiness {
                // Uniform choice among the other regimes.
                let mut next = rng.gen_range(0..k - 1);
                if next >= state {
                    next += 1;
                }
                state = next;
            }
            chain.push(state);
        }

        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let mut level = 0.0;
        let mut y = Vec::with_capacity(t_len);
        for (t, &regime) in chain.iter().take(t_len).enumerate() {
            let p = spec.regimes[regime];
            let season = p.amplitude
                * (std::f64::consts::TAU * t as f64 / spec.seasonality as f64 + phase).sin();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * p.noise_std;
            y.push(season + level + noise);
            level += p.trend;
        }

        let w = spec.signal_lead.map(|l| {
            let channel = (0..t_len)
                .map(|t| {
                    chain[t + l] as f64
                        + rng.sample::<f64, _>(StandardNormal) * spec.signal_noise_std
                })
                .collect();
            vec![channel]
        });

        records.push(SeriesRecord::new(
            format!("syn{i:0id_width$}"),
            y,
            w,
            spec.seasonality,
            "synthetic".into(),
        )?);
        hidden_paths.push(chain[..t_len].to_vec());
    }
    Ok(SyntheticData { records, hidden_paths })
}

/// Fraction of steps where the regime changed, over the whole corpus.
pub fn switch_frequency(paths: &[Vec<usize>]) -> f64 {
    let mut switches = 0usize;
    let mut transitions = 0usize;
    for path in paths {
        transitions += path.len().saturating_sub(1);
        switches += path.windows(2).filter(|p| p[0] != p[1]).count();
    }
    if transitions == 0 {
        0.0
    } else {
        switches as f64 / transitions as f64
    }
}
