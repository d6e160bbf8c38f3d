//! The neural hidden Markov forecaster: K Gaussian emission networks driven
//! by a discrete hidden chain whose initial law and transitions come from a
//! prior network, with a factorized variational posterior for training.

mod elbo;
mod forecast;
mod likelihood;

pub use elbo::{
    build_elbo, build_transition, ElboGraph, ElboTerms, PriorMode, Trainable, TransitionGraph,
};
pub use forecast::{forecast, ForecastResult};
pub use likelihood::{exact_log_likelihood, forward_log_likelihood, ENUMERATION_CAP};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ScalerKind, WindowBatch};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::networks::{EmissionNet, PosteriorNet, PriorNet};

/// Probabilities are clamped to this floor before every logarithm, in the
/// ELBO and in the likelihoods alike, so the bound between them is exact.
pub const PROB_FLOOR: f64 = 1e-6;

/// Structural description of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of hidden states K.
    pub states: usize,
    /// Forecast horizon h.
    pub horizon: usize,
    /// Lookback window length W.
    pub lookback: usize,
    /// External-signal channels E; 0 when the data carries none.
    pub signal_channels: usize,
    /// Hidden-layer widths shared by all networks.
    pub hidden: Vec<usize>,
    /// Emission states that receive the external signal. The prior and the
    /// posterior always receive it when channels are present.
    pub signal_states: Vec<usize>,
    pub scaler: ScalerKind,
}

impl ModelConfig {
    pub fn new(states: usize, horizon: usize, lookback: usize) -> Self {
        ModelConfig {
            states,
            horizon,
            lookback,
            signal_channels: 0,
            hidden: vec![128, 128],
            signal_states: Vec::new(),
            scaler: ScalerKind::MinMax,
        }
    }

    /// Enables `channels` signal channels, routed into the prior, the
    /// posterior, and the last emission state.
    pub fn with_signal(mut self, channels: usize) -> Self {
        self.signal_channels = channels;
        self.signal_states = if channels > 0 {
            vec![self.states - 1]
        } else {
            Vec::new()
        };
        self
    }

    fn validate(&self) -> Result<()> {
        if self.states == 0 || self.horizon == 0 || self.lookback == 0 {
            return Err(Error::Config(
                "states, horizon, and lookback must all be positive".into(),
            ));
        }
        if let Some(&s) = self.signal_states.iter().find(|&&s| s >= self.states) {
            return Err(Error::Config(format!(
                "signal_states entry {s} is out of range for {} states",
                self.states
            )));
        }
        if self.signal_channels == 0 && !self.signal_states.is_empty() {
            return Err(Error::Config(
                "signal_states configured but signal_channels is 0".into(),
            ));
        }
        Ok(())
    }
}

/// Which parameter family a named parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Emission,
    Prior,
    Posterior,
}

impl ParamGroup {
    /// Group of a canonical parameter name such as `emission0.layer1.weight`.
    pub fn of(name: &str) -> ParamGroup {
        if name.starts_with("emission") {
            ParamGroup::Emission
        } else if name.starts_with("prior") {
            ParamGroup::Prior
        } else {
            ParamGroup::Posterior
        }
    }
}

/// The assembled model. Parameters live in the three network families;
/// [`NhmmModel::params`] exposes them in a canonical order that training and
/// checkpointing both rely on.
#[derive(Debug, Clone)]
pub struct NhmmModel {
    config: ModelConfig,
    pub emissions: Vec<EmissionNet>,
    pub prior: PriorNet,
    pub posterior: PosteriorNet,
}

impl NhmmModel {
    /// Random initialization, reproducible from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal_dim = config.lookback * config.signal_channels;
        let emissions = (0..config.states)
            .map(|k| {
                EmissionNet::init(
                    config.lookback,
                    signal_dim,
                    config.horizon,
                    &config.hidden,
                    config.signal_states.contains(&k),
                    &mut rng,
                )
            })
            .collect();
        let prior = PriorNet::init(
            config.lookback,
            signal_dim,
            config.states,
            config.horizon,
            &config.hidden,
            &mut rng,
        );
        let posterior = PosteriorNet::init(
            config.lookback,
            signal_dim,
            config.states,
            config.horizon,
            &config.hidden,
            &mut rng,
        );
        Ok(NhmmModel { config, emissions, prior, posterior })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn states(&self) -> usize {
        self.config.states
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn lookback(&self) -> usize {
        self.config.lookback
    }

    /// All parameters in canonical order: emission nets by state, then the
    /// prior, then the posterior; within a net, weight before bias per layer.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, e) in self.emissions.iter().enumerate() {
            for (name, t) in e.mlp.params() {
                out.push((format!("emission{k}.{name}"), t));
            }
        }
        for (name, t) in self.prior.mlp.params() {
            out.push((format!("prior.{name}"), t));
        }
        for (name, t) in self.posterior.mlp.params() {
            out.push((format!("posterior.{name}"), t));
        }
        out
    }

    /// Mutable view in the same canonical order as [`NhmmModel::params`].
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (k, e) in self.emissions.iter_mut().enumerate() {
            for (name, t) in e.mlp.params_mut() {
                out.push((format!("emission{k}.{name}"), t));
            }
        }
        for (name, t) in self.prior.mlp.params_mut() {
            out.push((format!("prior.{name}"), t));
        }
        for (name, t) in self.posterior.mlp.params_mut() {
            out.push((format!("posterior.{name}"), t));
        }
        out
    }

    /// Checks a batch against the model's shape contract.
    pub(crate) fn check_batch(&self, batch: &WindowBatch) -> Result<()> {
        if batch.lookback() != self.config.lookback
            || batch.horizon() != self.config.horizon
            || batch.signal_channels() != self.config.signal_channels
        {
            return Err(Error::Config(format!(
                "batch shape (W={}, h={}, E={}) does not match model (W={}, h={}, E={})",
                batch.lookback(),
                batch.horizon(),
                batch.signal_channels(),
                self.config.lookback,
                self.config.horizon,
                self.config.signal_channels
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Builders for models with hand-chosen outputs: single linear layers
    //! with zero weights turn the bias into the network output, so softmax
    //! and softplus heads can be driven to exact target values.

    use super::*;
    use crate::data::ScalerParams;
    use crate::diffmath::Tensor;

    /// Inverse of `softplus(x) + floor`, used to pin sigma heads.
    pub fn sigma_raw(sigma: f64) -> f64 {
        ((sigma - crate::networks::SIGMA_FLOOR).exp() - 1.0).ln()
    }

    fn set_constant_head(mlp: &mut crate::networks::Mlp, head: &[f64]) {
        let last = mlp.layers_mut().last_mut().unwrap();
        last.weight = Tensor::zeros(last.weight.shape());
        last.bias = Tensor::from_slice(head);
    }

    /// Builds a model whose outputs are constants: `mu[s][k]`, `sigma[s][k]`,
    /// initial law `pi[k]`, shared transition rows `alpha[j][k]` for every
    /// step, and posterior rows `beta[s][k]`.
    pub fn constant_model(
        lookback: usize,
        mu: &[Vec<f64>],
        sigma: &[Vec<f64>],
        pi: &[f64],
        alpha: &[Vec<f64>],
        beta: &[Vec<f64>],
    ) -> NhmmModel {
        let h = mu.len();
        let k = pi.len();
        let mut config = ModelConfig::new(k, h, lookback);
        config.hidden = Vec::new();
        let mut model = NhmmModel::init(config, 0).unwrap();
        for (state, net) in model.emissions.iter_mut().enumerate() {
            let mut head = Vec::with_capacity(2 * h);
            head.extend((0..h).map(|s| mu[s][state]));
            head.extend((0..h).map(|s| sigma_raw(sigma[s][state])));
            set_constant_head(&mut net.mlp, &head);
        }
        let mut prior_head: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        for _ in 1..h {
            for row in alpha {
                prior_head.extend(row.iter().map(|p| p.ln()));
            }
        }
        set_constant_head(&mut model.prior.mlp, &prior_head);
        let posterior_head: Vec<f64> = beta.iter().flat_map(|row| row.iter().map(|p| p.ln())).collect();
        set_constant_head(&mut model.posterior.mlp, &posterior_head);
        model
    }

    /// A one-row batch with the given scaled past and future values.
    pub fn single_row_batch(past: &[f64], future: &[f64]) -> WindowBatch {
        WindowBatch {
            past_y: Tensor::new(vec![1, past.len()], past.to_vec()).unwrap(),
            past_w: None,
            future_y: Tensor::new(vec![1, future.len()], future.to_vec()).unwrap(),
            scalers: vec![ScalerParams::MinMax { min: 0.0, max: 1.0 }],
            ids: vec!["row0".into()],
            origins: vec![past.len()],
        }
    }
}
