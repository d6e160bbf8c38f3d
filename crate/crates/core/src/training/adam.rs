//! Adaptive-moment gradient descent with global-norm clipping.

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Joint Euclidean norm above which gradients are rescaled before a step.
pub const CLIP_GLOBAL_NORM: f64 = 10.0;

/// Rescales `grads` in place so their joint Euclidean norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// First-moment / second-moment gradient descent (beta1 = 0.9,
/// beta2 = 0.999, epsilon = 1e-8) over a fixed parameter layout.
///
/// A parameter whose gradient is identically zero is left bit-identical:
/// its moments stay at zero, so the update term vanishes exactly.
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    steps: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: &[Vec<usize>]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Applies one update. `params` and `grads` must match the layout the
    /// optimizer was built with.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "optimizer step",
                format!("{} parameter tensors", self.m.len()),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (((name, param), grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if param.shape() != grad.shape() {
                return Err(Error::shape(
                    "optimizer step",
                    format!("{:?} for `{name}`", param.shape()),
                    format!("{:?}", grad.shape()),
                ));
            }
            let (p, g) = (param.data_mut(), grad.data());
            for i in 0..g.len() {
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g[i];
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g[i] * g[i];
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                p[i] -= self.learning_rate * (mi / bc1) / ((vi / bc2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
