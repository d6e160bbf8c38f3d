//! Finite-difference oracle for gradient verification.
//!
//! Central differences re-evaluate the full forward function at `x ± step`
//! per coordinate, so the oracle shares no code with the tape's backward
//! pass. Agreement between the two is therefore evidence that the recorded
//! adjoint rules are right.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Perturbation step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Relative tolerance between analytic and numeric gradients.
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Absolute floor below which coordinate differences always pass.
pub const DEFAULT_ABS_FLOOR: f64 = 1e-8;

/// Numeric gradient of a scalar function by central differences,
/// one tensor of partials per parameter tensor.
pub fn central_difference<F>(mut f: F, params: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape());
        for i in 0..params[p].len() {
            let x = params[p].data()[i];
            work[p].data_mut()[i] = x + step;
            let plus = f(&work)?;
            work[p].data_mut()[i] = x - step;
            let minus = f(&work)?;
            work[p].data_mut()[i] = x;
            g.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Worst-coordinate comparison between two gradient sets.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest absolute difference over all coordinates.
    pub max_abs_diff: f64,
    /// `(param index, coordinate)` of the worst difference.
    pub worst: (usize, usize),
    /// Whether every coordinate met the tolerance.
    pub ok: bool,
}

/// Checks `|a - n| <= max(abs_floor, rel_tol * max(|a|, |n|))` per coordinate.
pub fn compare_gradients(
    analytic: &[Tensor],
    numeric: &[Tensor],
    rel_tol: f64,
    abs_floor: f64,
) -> Result<GradCheck> {
    if analytic.len() != numeric.len() {
        return Err(Error::shape(
            "compare_gradients",
            format!("{} tensors", analytic.len()),
            format!("{} tensors", numeric.len()),
        ));
    }
    let mut report = GradCheck {
        max_abs_diff: 0.0,
        worst: (0, 0),
        ok: true,
    };
    for (p, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if a.shape() != n.shape() {
            return Err(Error::shape(
                "compare_gradients",
                format!("{:?}", a.shape()),
                format!("{:?}", n.shape()),
            ));
        }
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let diff = (av - nv).abs();
            if diff > report.max_abs_diff {
                report.max_abs_diff = diff;
                report.worst = (p, i);
            }
            if diff > abs_floor.max(rel_tol * av.abs().max(nv.abs())) {
                report.ok = false;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::tape::Tape;

    #[test]
    fn central_difference_recovers_quadratic_slope() {
        let params = [Tensor::scalar(3.0)];
        let fd = central_difference(|p| Ok(p[0].item() * p[0].item()), &params, DEFAULT_STEP)
            .unwrap();
        assert!((fd[0].item() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn tape_gradient_of_composed_function_matches_oracle() {
        // f(w, b) = sum(softmax(tanh(x·w + b))^2) exercised through the tape.
        let x = Tensor::from_rows(2, 3, vec![0.4, -1.0, 0.7, 0.2, 0.9, -0.3]).unwrap();
        let params = [
            Tensor::from_rows(3, 2, vec![0.1, -0.4, 0.25, 0.6, -0.7, 0.05]).unwrap(),
            Tensor::from_slice(&[0.3, -0.2]),
        ];
        let eval = |p: &[Tensor]| -> crate::error::Result<f64> {
            let tape = Tape::new();
            let xv = tape.constant(x.clone());
            let w = tape.param(p[0].clone());
            let b = tape.param(p[1].clone());
            let h = xv.matmul(w)?.add_row(b)?.tanh()?.softmax_last()?;
            Ok(h.mul(h)?.sum()?.item())
        };

        let tape = Tape::new();
        let xv = tape.constant(x.clone());
        let w = tape.param(params[0].clone());
        let b = tape.param(params[1].clone());
        let h = xv
            .matmul(w)
            .unwrap()
            .add_row(b)
            .unwrap()
            .tanh()
            .unwrap()
            .softmax_last()
            .unwrap();
        let y = h.mul(h).unwrap().sum().unwrap();
        let grads = tape.backward(y).unwrap();
        let analytic = [grads.wrt(w), grads.wrt(b)];

        let numeric = central_difference(eval, &params, DEFAULT_STEP).unwrap();
        let report =
            compare_gradients(&analytic, &numeric, DEFAULT_REL_TOL, DEFAULT_ABS_FLOOR).unwrap();
        assert!(report.ok, "worst diff {:?}", report);
    }

    #[test]
    fn comparison_flags_a_wrong_gradient() {
        let a = [Tensor::scalar(1.0)];
        let n = [Tensor::scalar(1.01)];
        let report = compare_gradients(&a, &n, DEFAULT_REL_TOL, DEFAULT_ABS_FLOOR).unwrap();
        assert!(!report.ok);
        assert!((report.max_abs_diff - 0.01).abs() < 1e-15);
    }
}
