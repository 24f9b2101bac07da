//! Dense row-major tensors with explicit gradient buffers.
//!
//! Everything downstream (LSTM cell, model, classifier) runs on these plus a
//! handful of slice kernels. Storage is generic over [`Scalar`] so training
//! can run in `f32` while gradient checking runs the identical graph in
//! `f64`.

use std::fmt;

use num_traits::Float;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DlnError, Result};

/// Floating-point element type of every tensor in the crate.
pub trait Scalar:
    Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Dense row-major tensor with an optional same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, checking that the element count matches the shape and
    /// every value is finite.
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(DlnError::Argument(format!(
                "tensor shape must have positive dims, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(DlnError::Shape {
                op: "Tensor::new",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        let t = Tensor {
            shape,
            values,
            grad: None,
        };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![T::zero(); numel],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![value; numel],
            grad: None,
        }
    }

    pub fn vector(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Tensor::new(vec![n], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated lazily with zeros.
    pub fn grad_mut(&mut self) -> &mut [T] {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.values.len()]);
        }
        self.grad.as_deref_mut().unwrap()
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            for v in g {
                *v = T::zero();
            }
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn check_finite(&self, op: &str) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(DlnError::State(format!("non-finite value after {op}")));
        }
        Ok(())
    }
}

/// i.i.d. uniform values in `[-range_limit, +range_limit]`, reproducible from
/// the seed. Draws are made in `f64` and narrowed, so a given seed describes
/// the same underlying sample for both precisions.
pub fn uniform_init<T: Scalar>(shape: Vec<usize>, range_limit: f64, seed: u64) -> Result<Tensor<T>> {
    if range_limit <= 0.0 {
        return Err(DlnError::Argument(format!(
            "range_limit must be positive, got {range_limit}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    uniform_init_with(shape, range_limit, &mut rng)
}

/// Same as [`uniform_init`] but drawing from a caller-owned RNG stream.
pub fn uniform_init_with<T: Scalar, R: Rng>(
    shape: Vec<usize>,
    range_limit: f64,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if range_limit <= 0.0 {
        return Err(DlnError::Argument(format!(
            "range_limit must be positive, got {range_limit}"
        )));
    }
    let numel: usize = shape.iter().product();
    let values = (0..numel)
        .map(|_| T::from_f64(rng.gen_range(-range_limit..=range_limit)))
        .collect();
    Tensor::new(shape, values)
}

// ── slice kernels ───────────────────────────────────────────────────
// Row-major W[rows×cols]. These are the only inner loops in the crate.

/// out = W·x
pub fn matvec<T: Scalar>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (wv, xv) in row.iter().zip(x.iter()) {
            acc = acc + *wv * *xv;
        }
        out[r] = acc;
    }
}

/// out += W·x
pub fn matvec_acc<T: Scalar>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (wv, xv) in row.iter().zip(x.iter()) {
            acc = acc + *wv * *xv;
        }
        out[r] = out[r] + acc;
    }
}

/// out += Wᵀ·y, accumulated row by row so access stays sequential.
pub fn matvec_t_acc<T: Scalar>(w: &[T], rows: usize, cols: usize, y: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let yr = y[r];
        if yr == T::zero() {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row.iter()) {
            *o = *o + *wv * yr;
        }
    }
}

/// grad[r,c] += y[r]·x[c]
pub fn outer_acc<T: Scalar>(y: &[T], x: &[T], grad: &mut [T]) {
    debug_assert_eq!(grad.len(), y.len() * x.len());
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == T::zero() {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x.iter()) {
            *g = *g + yr * *xv;
        }
    }
}

pub fn axpy<T: Scalar>(alpha: T, x: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, xv) in out.iter_mut().zip(x.iter()) {
        *o = *o + alpha * *xv;
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

// ── affine ──────────────────────────────────────────────────────────

/// Cached operands for the backward pass of [`affine_cached`].
#[derive(Debug, Clone)]
pub struct AffineCtx<T: Scalar> {
    x: Vec<T>,
    w: Vec<T>,
    rows: usize,
    cols: usize,
    has_bias: bool,
}

/// y = W·x (+ b), W of shape `[m, n]`, x of length n.
pub fn affine<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (y, _) = affine_cached(x, w, b)?;
    Ok(y)
}

/// As [`affine`], also returning the context needed for an exact backward
/// pass.
pub fn affine_cached<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, AffineCtx<T>)> {
    if w.shape().len() != 2 || x.shape().len() != 1 || w.shape()[1] != x.shape()[0] {
        return Err(DlnError::Shape {
            op: "affine",
            lhs: w.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    if let Some(bias) = b {
        if bias.shape() != [rows] {
            return Err(DlnError::Shape {
                op: "affine bias",
                lhs: vec![rows],
                rhs: bias.shape().to_vec(),
            });
        }
    }
    let mut out = vec![T::zero(); rows];
    matvec(w.values(), rows, cols, x.values(), &mut out);
    if let Some(bias) = b {
        for (o, bv) in out.iter_mut().zip(bias.values()) {
            *o = *o + *bv;
        }
    }
    let y = Tensor::new(vec![rows], out)?;
    let ctx = AffineCtx {
        x: x.values().to_vec(),
        w: w.values().to_vec(),
        rows,
        cols,
        has_bias: b.is_some(),
    };
    Ok((y, ctx))
}

/// Gradients of `affine` w.r.t. x, W and (optionally) b.
pub fn affine_backward<T: Scalar>(
    ctx: &AffineCtx<T>,
    grad_y: &[T],
) -> Result<(Vec<T>, Vec<T>, Option<Vec<T>>)> {
    if grad_y.len() != ctx.rows {
        return Err(DlnError::Shape {
            op: "affine_backward",
            lhs: vec![ctx.rows],
            rhs: vec![grad_y.len()],
        });
    }
    let mut dx = vec![T::zero(); ctx.cols];
    matvec_t_acc(&ctx.w, ctx.rows, ctx.cols, grad_y, &mut dx);
    let mut dw = vec![T::zero(); ctx.rows * ctx.cols];
    outer_acc(grad_y, &ctx.x, &mut dw);
    let db = ctx.has_bias.then(|| grad_y.to_vec());
    Ok((dx, dw, db))
}

// ── softmax cross-entropy ───────────────────────────────────────────

/// Loss `-log softmax(logits)[target]` and its gradient
/// `softmax(logits) - onehot(target)`, computed with max-subtraction.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    if target >= logits.len() {
        return Err(DlnError::Index {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits
        .iter()
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
    let mut grad: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = grad.iter().fold(T::zero(), |a, &v| a + v);
    let loss = sum.ln() - (logits[target] - max);
    let inv = T::one() / sum;
    for g in grad.iter_mut() {
        *g = *g * inv;
    }
    grad[target] = grad[target] - T::one();
    Ok((loss, grad))
}

/// Numerically stable log-softmax (used by the decoders).
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
    let sum = logits
        .iter()
        .map(|&v| (v - max).exp())
        .fold(T::zero(), |a, v| a + v);
    let lse = max + sum.ln();
    logits.iter().map(|&v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn affine_identity() {
        let x = Tensor::vector(vec![1.0f64, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = affine(&x, &w, None).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_hand_product() {
        // W = ((2,3),(4,5)), x = (1,1) -> (5,9)
        let x = Tensor::vector(vec![1.0f64, 1.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = affine(&x, &w, None).unwrap();
        assert_eq!(y.values(), &[5.0, 9.0]);
    }

    #[test]
    fn affine_zero_input() {
        let x = Tensor::vector(vec![0.0f64, 0.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = affine(&x, &w, None).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let x = Tensor::vector(vec![1.0f64, 2.0, 3.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let err = affine(&x, &w, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn affine_backward_matches_finite_differences() {
        let x = Tensor::vector(vec![0.3f64, -0.7, 1.1]).unwrap();
        let w = Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.4, 0.9, 0.05, -0.6]).unwrap();
        let b = Tensor::vector(vec![0.2f64, -0.1]).unwrap();
        let (_, ctx) = affine_cached(&x, &w, Some(&b)).unwrap();
        // scalar loss = sum(y)
        let grad_y = vec![1.0f64; 2];
        let (dx, dw, db) = affine_backward(&ctx, &grad_y).unwrap();
        let h = 1e-6;
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            affine(x, w, Some(b)).unwrap().values().iter().sum()
        };
        for i in 0..3 {
            let mut xp = x.clone();
            xp.values_mut()[i] += h;
            let mut xm = x.clone();
            xm.values_mut()[i] -= h;
            let num = (loss(&xp, &w, &b) - loss(&xm, &w, &b)) / (2.0 * h);
            assert_relative_eq!(dx[i], num, max_relative = 1e-6);
        }
        for i in 0..6 {
            let mut wp = w.clone();
            wp.values_mut()[i] += h;
            let mut wm = w.clone();
            wm.values_mut()[i] -= h;
            let num = (loss(&x, &wp, &b) - loss(&x, &wm, &b)) / (2.0 * h);
            assert_relative_eq!(dw[i], num, max_relative = 1e-6);
        }
        assert_eq!(db.unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let (loss, _) = softmax_cross_entropy(&[0.0f64; 4], 2).unwrap();
        assert_relative_eq!(loss, (4.0f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn cross_entropy_confident_logit() {
        let (loss, _) = softmax_cross_entropy(&[10.0f64, 0.0], 0).unwrap();
        // -log sigmoid(10)
        assert_relative_eq!(loss, (1.0 + (-10.0f64).exp()).ln(), max_relative = 1e-10);
        assert!((loss - 4.54e-5).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0f64; 3], 3),
            Err(DlnError::Index { index: 3, len: 3 })
        ));
    }

    #[test]
    fn uniform_init_is_deterministic_and_bounded() {
        let a: Tensor<f64> = uniform_init(vec![4, 5], 0.08, 7).unwrap();
        let b: Tensor<f64> = uniform_init(vec![4, 5], 0.08, 7).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|v| v.abs() <= 0.08));
    }

    #[test]
    fn uniform_init_sample_mean_near_zero() {
        // mean of n draws from U(-r, r) has std r/sqrt(3n)
        let n = 1_000_000usize;
        let r = 0.08f64;
        let t: Tensor<f64> = uniform_init(vec![n], r, 99).unwrap();
        let mean = t.values().iter().sum::<f64>() / n as f64;
        let sigma = r / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3sigma {}", 3.0 * sigma);
    }

    #[test]
    fn tensor_rejects_nan() {
        assert!(Tensor::new(vec![2], vec![1.0f64, f64::NAN]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cross_entropy_grad_sums_to_zero(
            logits in proptest::collection::vec(-8.0f64..8.0, 2..20),
            target_frac in 0.0f64..1.0,
        ) {
            let target = ((logits.len() as f64 - 1.0) * target_frac) as usize;
            let (_, grad) = softmax_cross_entropy(&logits, target).unwrap();
            let s: f64 = grad.iter().sum();
            proptest::prop_assert!(s.abs() < 1e-10);
        }

        #[test]
        fn log_softmax_normalizes(
            logits in proptest::collection::vec(-8.0f64..8.0, 1..16),
        ) {
            let lp = log_softmax(&logits);
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
