//! Feed-forward networks behind the model: per-state emission heads, the
//! hidden-state prior head, and the variational posterior head.
//!
//! Each network is a plain multilayer perceptron (ReLU hidden layers, linear
//! output) whose head is reshaped and squashed into the quantities the model
//! needs: Gaussian means and floored standard deviations for emissions,
//! simplex rows for the prior and posterior. Networks own their parameters
//! as tensors; a forward pass first mirrors them onto a tape (`on_tape`),
//! so the same parameters can be trained, frozen, or merely evaluated.

use rand::Rng;

use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Standard-deviation floor added after softplus.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// One fully connected layer. `weight` is `[in, out]`, `bias` is `[out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Multilayer perceptron with ReLU hidden activations and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Initializes layers for the given `dims` chain (input, hidden...,
    /// output). Weights are uniform in ±1/sqrt(fan_in), biases zero.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output dim");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight = Tensor::new(
                    vec![fan_in, fan_out],
                    (0..fan_in * fan_out)
                        .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
                        .collect(),
                )
                .unwrap();
                Dense { weight, bias: Tensor::zeros(&[fan_out]) }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Parameter views in canonical order: `layer{i}.weight`, `layer{i}.bias`.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), &l.weight),
                    (format!("layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), &mut l.weight),
                    (format!("layer{i}.bias"), &mut l.bias),
                ]
            })
            .collect()
    }

    /// Mirrors the parameters onto `tape`; `trainable` controls whether
    /// gradients flow into them.
    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> TapedMlp<'t> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let push = |t: &Tensor| {
                    if trainable {
                        tape.param(t.clone())
                    } else {
                        tape.constant(t.clone())
                    }
                };
                (push(&l.weight), push(&l.bias))
            })
            .collect();
        TapedMlp { layers }
    }
}

/// An [`Mlp`]'s parameters as tape variables, ready for a forward pass.
pub struct TapedMlp<'t> {
    layers: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> TapedMlp<'t> {
    /// `[B, in] -> [B, out]`.
    pub fn forward(&self, input: Var<'t>) -> Result<Var<'t>> {
        let mut x = input;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            x = x.matmul(*w)?.add_row(*b)?;
            if i < last {
                x = x.relu()?;
            }
        }
        Ok(x)
    }

    /// Parameter vars in the same canonical order as [`Mlp::params`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }
}

/// Flattens `[B, W, E]` signal windows to `[B, W*E]` for concatenation.
fn flatten_signal<'t>(past_w: Var<'t>) -> Result<Var<'t>> {
    let shape = past_w.shape();
    past_w.reshape(vec![shape[0], shape[1] * shape[2]])
}

/// Gaussian emission head for one hidden state: h means and h floored
/// standard deviations per window.
#[derive(Debug, Clone)]
pub struct EmissionNet {
    pub mlp: Mlp,
    /// Whether this state's network also reads the external signal.
    pub signal_aware: bool,
    horizon: usize,
}

impl EmissionNet {
    /// `signal_dim` is `W*E` when the state is signal-aware, ignored otherwise.
    pub fn init(
        lookback: usize,
        signal_dim: usize,
        horizon: usize,
        hidden: &[usize],
        signal_aware: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let input = lookback + if signal_aware { signal_dim } else { 0 };
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(2 * horizon);
        EmissionNet {
            mlp: Mlp::init(&dims, rng),
            signal_aware,
            horizon,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> TapedEmission<'t> {
        TapedEmission {
            mlp: self.mlp.on_tape(tape, trainable),
            signal_aware: self.signal_aware,
            horizon: self.horizon,
        }
    }
}

pub struct TapedEmission<'t> {
    mlp: TapedMlp<'t>,
    signal_aware: bool,
    horizon: usize,
}

impl<'t> TapedEmission<'t> {
    /// `past_y: [B, W]`, `past_w: [B, W, E]` -> `(mu, sigma)` each `[B, h]`.
    ///
    /// A signal-unaware state never touches `past_w`, so perturbing the
    /// signal cannot change its output.
    pub fn forward(&self, past_y: Var<'t>, past_w: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        let input = if self.signal_aware {
            let w = past_w.ok_or_else(|| {
                Error::Config("emission state is signal-aware but the batch has no signal".into())
            })?;
            let tape_w = flatten_signal(w)?;
            past_y.tape().concat_cols(&[past_y, tape_w])?
        } else {
            past_y
        };
        let head = self.mlp.forward(input)?;
        let mu = head.slice_cols(0, self.horizon)?;
        let sigma = head
            .slice_cols(self.horizon, 2 * self.horizon)?
            .softplus()?
            .add_scalar(SIGMA_FLOOR)?;
        Ok((mu, sigma))
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.mlp.vars()
    }
}

/// Prior head: initial law over K states plus one K-by-K transition matrix
/// for each step after the first.
#[derive(Debug, Clone)]
pub struct PriorNet {
    pub mlp: Mlp,
    states: usize,
    horizon: usize,
    uses_signal: bool,
}

impl PriorNet {
    pub fn init(
        lookback: usize,
        signal_dim: usize,
        states: usize,
        horizon: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![lookback + signal_dim];
        dims.extend_from_slice(hidden);
        dims.push(states + (horizon - 1) * states * states);
        PriorNet {
            mlp: Mlp::init(&dims, rng),
            states,
            horizon,
            uses_signal: signal_dim > 0,
        }
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> TapedPrior<'t> {
        TapedPrior {
            mlp: self.mlp.on_tape(tape, trainable),
            states: self.states,
            horizon: self.horizon,
            uses_signal: self.uses_signal,
        }
    }
}

/// The prior's output: `pi` is `[B, K]`, `alpha` is `[B, h-1, K, K]` with
/// every row `alpha[b, s, j, ·]` in the simplex.
pub struct HiddenLaw<'t> {
    pub pi: Var<'t>,
    pub alpha: Var<'t>,
}

pub struct TapedPrior<'t> {
    mlp: TapedMlp<'t>,
    states: usize,
    horizon: usize,
    uses_signal: bool,
}

impl<'t> TapedPrior<'t> {
    pub fn forward(&self, past_y: Var<'t>, past_w: Option<Var<'t>>) -> Result<HiddenLaw<'t>> {
        let input = match (self.uses_signal, past_w) {
            (true, Some(w)) => past_y.tape().concat_cols(&[past_y, flatten_signal(w)?])?,
            (true, None) => {
                return Err(Error::Config(
                    "prior network expects an external signal but the batch has none".into(),
                ))
            }
            (false, _) => past_y,
        };
        let head = self.mlp.forward(input)?;
        let b = head.shape()[0];
        let (k, h) = (self.states, self.horizon);
        let pi = head.slice_cols(0, k)?.softmax_last()?;
        let alpha = head
            .slice_cols(k, k + (h - 1) * k * k)?
            .reshape(vec![b, h - 1, k, k])?
            .softmax_last()?;
        Ok(HiddenLaw { pi, alpha })
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.mlp.vars()
    }
}

/// Posterior head: one simplex row over states per forecast step.
#[derive(Debug, Clone)]
pub struct PosteriorNet {
    pub mlp: Mlp,
    states: usize,
    horizon: usize,
    uses_signal: bool,
}

impl PosteriorNet {
    pub fn init(
        lookback: usize,
        signal_dim: usize,
        states: usize,
        horizon: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        // The posterior conditions on the future it will have to explain.
        let mut dims = vec![lookback + signal_dim + horizon];
        dims.extend_from_slice(hidden);
        dims.push(horizon * states);
        PosteriorNet {
            mlp: Mlp::init(&dims, rng),
            states,
            horizon,
            uses_signal: signal_dim > 0,
        }
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> TapedPosterior<'t> {
        TapedPosterior {
            mlp: self.mlp.on_tape(tape, trainable),
            states: self.states,
            horizon: self.horizon,
            uses_signal: self.uses_signal,
        }
    }
}

pub struct TapedPosterior<'t> {
    mlp: TapedMlp<'t>,
    states: usize,
    horizon: usize,
    uses_signal: bool,
}

impl<'t> TapedPosterior<'t> {
    /// -> `beta: [B, h, K]`, each `beta[b, s, ·]` in the simplex.
    pub fn forward(
        &self,
        past_y: Var<'t>,
        past_w: Option<Var<'t>>,
        future_y: Var<'t>,
    ) -> Result<Var<'t>> {
        let tape = past_y.tape();
        let input = match (self.uses_signal, past_w) {
            (true, Some(w)) => tape.concat_cols(&[past_y, flatten_signal(w)?, future_y])?,
            (true, None) => {
                return Err(Error::Config(
                    "posterior network expects an external signal but the batch has none".into(),
                ))
            }
            (false, _) => tape.concat_cols(&[past_y, future_y])?,
        };
        let head = self.mlp.forward(input)?;
        let b = head.shape()[0];
        head.reshape(vec![b, self.horizon, self.states])?
            .softmax_last()
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.mlp.vars()
    }
}
