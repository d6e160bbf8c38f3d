//! Dense row-major `f64` tensor and the elementwise / linear-algebra kernels
//! used by both the differentiation tape and the plain evaluation paths.
//!
//! Keeping the kernels here (rather than inside the tape) means a forward
//! pass recorded on the tape and a plain `eval` pass run the exact same
//! floating-point operations in the same order, so their outputs are
//! bit-identical.

use crate::error::{Error, Result};

/// Dense tensor: a shape plus a row-major `f64` buffer.
///
/// A scalar has the empty shape `[]` (one element).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Builds a tensor, validating that the buffer length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape_len(&shape) != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("{} values for shape {:?}", shape_len(&shape), shape),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape_len(shape)],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape_len(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// 2-D tensor from rows × cols and a row-major buffer.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a scalar (or 1-element) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape; element counts must agree.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if shape_len(&shape) != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{} values", self.data.len()),
                format!("shape {:?} ({} values)", shape, shape_len(&shape)),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Log-sum-exp reduction over `axis`, max-shifted for stability.
    /// The reduced axis is removed from the shape.
    pub fn logsumexp(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::shape(
                "logsumexp",
                format!("axis < {}", self.rank()),
                format!("axis {axis}"),
            ));
        }
        let n = self.shape[axis];
        if n == 0 {
            return Err(Error::shape("logsumexp", "non-empty axis", "axis of size 0"));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    max = max.max(self.data[base + j * inner]);
                }
                if max == f64::NEG_INFINITY {
                    out[o * inner + i] = f64::NEG_INFINITY;
                    continue;
                }
                let mut acc = 0.0;
                for j in 0..n {
                    acc += (self.data[base + j * inner] - max).exp();
                }
                out[o * inner + i] = max + acc.ln();
            }
        }
        Tensor::new(out_shape, out)
    }
}

/// Stable softplus: `ln(1 + e^x)` via `max(x, 0) + log1p(e^(-|x|))`.
pub fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, computed through the stable exponent branch.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(
            op,
            format!("{:?}", a.shape),
            format!("{:?}", b.shape),
        ));
    }
    Ok(())
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

pub(crate) fn zip(op: &str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    check_same_shape(op, a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    })
}

/// `[m×k] · [k×n] -> [m×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::shape(
            "matmul",
            "[m,k] x [k,n]",
            format!("{:?} x {:?}", a.shape, b.shape),
        ));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &a_il) in arow.iter().enumerate() {
            let brow = &b.data[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += a_il * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a · b^T` for `a: [m×k]`, `b: [n×k]` -> `[m×n]`.
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[0]);
    debug_assert_eq!(b.shape[1], k);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow.iter()).map(|(&x, &y)| x * y).sum();
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

/// `a^T · g` for `a: [m×k]`, `g: [m×n]` -> `[k×n]`.
pub(crate) fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape[0], a.shape[1], g.shape[1]);
    debug_assert_eq!(g.shape[0], m);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let grow = &g.data[i * n..(i + 1) * n];
        for (l, &a_il) in arow.iter().enumerate() {
            let orow = &mut out[l * n..(l + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow.iter()) {
                *o += a_il * gv;
            }
        }
    }
    Tensor {
        shape: vec![k, n],
        data: out,
    }
}

/// Adds a length-`c` row vector to every row of a `[r×c]` matrix.
pub fn add_row(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || bias.rank() != 1 || bias.shape[0] != a.shape[1] {
        return Err(Error::shape(
            "add_row",
            "[r,c] + [c]",
            format!("{:?} + {:?}", a.shape, bias.shape),
        ));
    }
    let (r, c) = (a.shape[0], a.shape[1]);
    let mut out = a.data.clone();
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] += bias.data[j];
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Softmax over the last axis, max-shifted. Rows of the last axis sum to 1.
pub fn softmax_last(a: &Tensor) -> Result<Tensor> {
    if a.rank() == 0 || *a.shape.last().unwrap() == 0 {
        return Err(Error::shape(
            "softmax_last",
            "rank >= 1 with non-empty last axis",
            format!("{:?}", a.shape),
        ));
    }
    let n = *a.shape.last().unwrap();
    let rows = a.data.len() / n;
    let mut out = vec![0.0; a.data.len()];
    for r in 0..rows {
        let x = &a.data[r * n..(r + 1) * n];
        let o = &mut out[r * n..(r + 1) * n];
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (oi, &xi) in o.iter_mut().zip(x.iter()) {
            *oi = (xi - max).exp();
            sum += *oi;
        }
        for oi in o.iter_mut() {
            *oi /= sum;
        }
    }
    Tensor::new(a.shape.clone(), out)
}

/// Column slice `[r, start..end)` of a 2-D tensor.
pub fn slice_cols(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if a.rank() != 2 || start > end || end > a.shape[1] {
        return Err(Error::shape(
            "slice_cols",
            format!("2-D with cols >= {end}"),
            format!("{:?} slice {start}..{end}", a.shape),
        ));
    }
    let (r, c) = (a.shape[0], a.shape[1]);
    let w = end - start;
    let mut out = Vec::with_capacity(r * w);
    for i in 0..r {
        out.extend_from_slice(&a.data[i * c + start..i * c + end]);
    }
    Tensor::new(vec![r, w], out)
}

/// Picks index `i` on axis 1, removing that axis (`rank >= 2`).
pub fn slice_axis1(a: &Tensor, i: usize) -> Result<Tensor> {
    if a.rank() < 2 || i >= a.shape[1] {
        return Err(Error::shape(
            "slice_axis1",
            format!("rank >= 2 with axis-1 size > {i}"),
            format!("{:?}", a.shape),
        ));
    }
    let d0 = a.shape[0];
    let d1 = a.shape[1];
    let inner: usize = a.shape[2..].iter().product();
    let mut out_shape = a.shape.clone();
    out_shape.remove(1);
    let mut out = Vec::with_capacity(d0 * inner);
    for b in 0..d0 {
        let base = (b * d1 + i) * inner;
        out.extend_from_slice(&a.data[base..base + inner]);
    }
    Tensor::new(out_shape, out)
}

/// Picks index `k` on the last axis, removing that axis (`rank >= 1`).
pub fn slice_last(a: &Tensor, k: usize) -> Result<Tensor> {
    if a.rank() < 1 || k >= *a.shape.last().unwrap() {
        return Err(Error::shape(
            "slice_last",
            format!("last axis size > {k}"),
            format!("{:?}", a.shape),
        ));
    }
    let n = *a.shape.last().unwrap();
    let rows = a.data.len() / n;
    let out_shape = a.shape[..a.rank() - 1].to_vec();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(a.data[r * n + k]);
    }
    Tensor::new(out_shape, out)
}

/// Per-row outer product: `[B,p] x [B,q] -> [B,p,q]`.
pub fn outer_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0] {
        return Err(Error::shape(
            "outer_rows",
            "[B,p] x [B,q]",
            format!("{:?} x {:?}", a.shape, b.shape),
        ));
    }
    let (bsz, p, q) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = Vec::with_capacity(bsz * p * q);
    for r in 0..bsz {
        for i in 0..p {
            let av = a.data[r * p + i];
            for j in 0..q {
                out.push(av * b.data[r * q + j]);
            }
        }
    }
    Tensor::new(vec![bsz, p, q], out)
}

/// Concatenates 2-D tensors with equal row counts along the column axis.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::shape("concat_cols", "at least one input", "none"));
    }
    let r = parts[0].shape.first().copied().unwrap_or(0);
    for t in parts {
        if t.rank() != 2 || t.shape[0] != r {
            return Err(Error::shape(
                "concat_cols",
                format!("2-D with {r} rows"),
                format!("{:?}", t.shape),
            ));
        }
    }
    let total: usize = parts.iter().map(|t| t.shape[1]).sum();
    let mut out = Vec::with_capacity(r * total);
    for i in 0..r {
        for t in parts {
            let c = t.shape[1];
            out.extend_from_slice(&t.data[i * c..(i + 1) * c]);
        }
    }
    Tensor::new(vec![r, total], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = 0.693_147_180_559_945_3;

    #[test]
    fn matmul_identity_maps_vector_to_itself() {
        let eye = Tensor::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = Tensor::from_rows(2, 1, vec![3.5, -1.25]).unwrap();
        let out = matmul(&eye, &v).unwrap();
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let t = Tensor::from_slice(&[0.0, 0.0, 0.0]);
        let s = softmax_last(&t).unwrap();
        for &p in s.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_at_zero_is_ln_two() {
        assert!((softplus_scalar(0.0) - LN2).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert!((softplus_scalar(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus_scalar(-800.0) >= 0.0);
        assert!(softplus_scalar(-800.0) < 1e-300);
    }

    #[test]
    fn logsumexp_singleton_is_identity() {
        let t = Tensor::from_slice(&[4.2]);
        assert_eq!(t.logsumexp(0).unwrap().item(), 4.2);
    }

    #[test]
    fn logsumexp_pair_of_zeros_is_ln_two() {
        let t = Tensor::from_slice(&[0.0, 0.0]);
        assert!((t.logsumexp(0).unwrap().item() - LN2).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_max_shift_avoids_overflow() {
        let t = Tensor::from_slice(&[1000.0, 1000.0]);
        let v = t.logsumexp(0).unwrap().item();
        assert!(v.is_finite());
        assert!((v - (1000.0 + LN2)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_of_one_two_three() {
        // ln(e^1 + e^2 + e^3), summed independently at high precision.
        let t = Tensor::from_slice(&[1.0, 2.0, 3.0]);
        assert!((t.logsumexp(0).unwrap().item() - 3.407_605_964_444_380_3).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_rejects_empty_axis() {
        let t = Tensor::new(vec![0], vec![]).unwrap();
        assert!(t.logsumexp(0).is_err());
    }

    #[test]
    fn logsumexp_middle_axis() {
        let t = Tensor::new(vec![2, 2, 1], vec![0.0, 0.0, 1.0, 3.0]).unwrap();
        let r = t.logsumexp(1).unwrap();
        assert_eq!(r.shape(), &[2, 1]);
        assert!((r.data()[0] - LN2).abs() < 1e-15);
        assert!((r.data()[1] - (3.0 + (1.0 + (-2.0f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_reports_op_and_shapes() {
        let a = Tensor::from_rows(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::from_rows(2, 3, vec![0.0; 6]).unwrap();
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"));
        assert!(msg.contains("[2, 3]"));
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor::from_rows(2, 2, vec![1.0, 2.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_rows(2, 1, vec![3.0, 7.0]).unwrap();
        let cat = concat_cols(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3]);
        assert_eq!(slice_cols(&cat, 0, 2).unwrap(), a);
        assert_eq!(slice_cols(&cat, 2, 3).unwrap(), b);
    }

    #[test]
    fn slice_axis1_picks_middle_index() {
        // shape [2,3,2]
        let t = Tensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let s = slice_axis1(&t, 1).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 8.0, 9.0]);
    }

    #[test]
    fn outer_rows_matches_manual_product() {
        let a = Tensor::from_rows(1, 2, vec![2.0, 3.0]).unwrap();
        let b = Tensor::from_rows(1, 2, vec![5.0, 7.0]).unwrap();
        let o = outer_rows(&a, &b).unwrap();
        assert_eq!(o.data(), &[10.0, 14.0, 15.0, 21.0]);
    }
}
