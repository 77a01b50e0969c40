//! Weighted ridge regression via normal equations.
//!
//! All reward-model fits in the crate reduce to one primitive: minimize
//! `sum_i w_i (y_i - w·x_i - b)^2 + penalty * |w|^2` with the intercept left
//! unpenalized. The normal equations are solved with a Cholesky
//! factorization; when the penalty is positive and the factorization fails
//! for conditioning reasons, a diagonal jitter of `1e-12 * trace/dim` is
//! added and escalated at most three times. A zero-penalty singular system is
//! reported as an error instead of being silently regularized.
//!
//! Large designs never materialize dense matrices here: the sweep accumulates
//! sufficient statistics with [`GramAccumulator`] (sparse rows, upper
//! triangle only) and calls [`ridge_fit_gram`], which shares the solver with
//! the dense-entry [`ridge_fit`].

use crate::error::{Error, Result};
use crate::numerics::hashing::SparseVec;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// A fitted linear predictor with clipped evaluation helpers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub penalty: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Unclipped linear response for a dense input.
    pub fn raw(&self, z: ArrayView1<f64>) -> f64 {
        self.weights.dot(&z) + self.intercept
    }

    /// Unclipped linear response for a sparse input.
    pub fn raw_sparse(&self, z: &SparseVec) -> f64 {
        z.dot_dense(self.weights.as_slice().unwrap()) + self.intercept
    }
}

#[inline]
pub fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Clipped prediction `clip_[0,1](w·z + b)` with dimension checking.
pub fn predict_clip(model: &LinearModel, z: ArrayView1<f64>) -> Result<f64> {
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: z.len() });
    }
    Ok(clip01(model.raw(z)))
}

/// Sparse-input variant of [`predict_clip`].
pub fn predict_clip_sparse(model: &LinearModel, z: &SparseVec) -> Result<f64> {
    if z.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: z.dim() });
    }
    Ok(clip01(model.raw_sparse(z)))
}

/// In-place lower Cholesky factorization. Returns false on a non-positive
/// pivot (relative to the largest diagonal entry) instead of producing NaNs.
fn cholesky_in_place(a: &mut Array2<f64>) -> bool {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max).max(1.0);
    let tol = scale * 1e-14 * n as f64;
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > tol) {
            return false;
        }
        let dj = d.sqrt();
        a[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            let (row_i, row_j) = (a.row(i), a.row(j));
            // Dot over the already-factored prefix.
            let ri = &row_i.as_slice().unwrap()[..j];
            let rj = &row_j.as_slice().unwrap()[..j];
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            a[[i, j]] = s / dj;
        }
    }
    true
}

/// Solve `L L^T x = b` given the lower factor.
fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let row_i = l.row(i);
        let row = &row_i.as_slice().unwrap()[..i];
        let mut s = x[i];
        for k in 0..i {
            s -= row[k] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve a symmetric PSD system with jitter escalation, then verify the
/// relative residual of the *original* system stays below 1e-8.
///
/// `allow_jitter` is false for zero-penalty fits: there, a failed
/// factorization means a genuinely rank-deficient design.
fn solve_spd(a: &Array2<f64>, b: &Array1<f64>, allow_jitter: bool) -> Result<Array1<f64>> {
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
    let base_jitter = 1e-12 * trace.max(1e-300) / n as f64;

    let mut solution = None;
    for attempt in 0..4 {
        let mut work = a.clone();
        if attempt > 0 {
            if !allow_jitter {
                break;
            }
            let jitter = base_jitter * 10f64.powi(attempt - 1);
            for i in 0..n {
                work[[i, i]] += jitter;
            }
        }
        if cholesky_in_place(&mut work) {
            solution = Some(cholesky_solve(&work, b));
            break;
        }
    }
    let x = solution.ok_or(Error::RankDeficientDesign)?;

    // Residual check against the unjittered normal equations.
    let mut res = 0.0f64;
    let mut rhs_norm = 0.0f64;
    for i in 0..n {
        let mut ax = 0.0;
        let row = a.row(i);
        let rs = row.as_slice().unwrap();
        for k in 0..n {
            ax += rs[k] * x[k];
        }
        res += (ax - b[i]) * (ax - b[i]);
        rhs_norm += b[i] * b[i];
    }
    if res.sqrt() > 1e-8 * rhs_norm.sqrt().max(1e-30) {
        return Err(Error::RankDeficientDesign);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge solution"));
    }
    Ok(x)
}

/// Sufficient statistics of a weighted design: `X^T W X`, `X^T W y`, the
/// weighted column sums, total weight, and weighted target sum.
///
/// Rows are sparse; only the upper triangle of the Gram matrix is touched
/// during accumulation.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    dim: usize,
    xtx: Vec<f64>, // row-major dim x dim, upper triangle maintained
    xty: Vec<f64>,
    xsum: Vec<f64>,
    pub weight_sum: f64,
    pub target_sum: f64,
    pub rows: usize,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        GramAccumulator {
            dim,
            xtx: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
            xsum: vec![0.0; dim],
            weight_sum: 0.0,
            target_sum: 0.0,
            rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_row(&mut self, x: &SparseVec, y: f64, w: f64) {
        debug_assert_eq!(x.dim(), self.dim);
        if w == 0.0 {
            self.rows += 1;
            return;
        }
        let entries: Vec<(usize, f64)> = x.iter().collect();
        for (a, &(i, vi)) in entries.iter().enumerate() {
            let wvi = w * vi;
            self.xty[i] += wvi * y;
            self.xsum[i] += wvi;
            let row = &mut self.xtx[i * self.dim..(i + 1) * self.dim];
            for &(j, vj) in &entries[a..] {
                row[j] += wvi * vj;
            }
        }
        self.weight_sum += w;
        self.target_sum += w * y;
        self.rows += 1;
    }

    /// Dense-input variant of [`GramAccumulator::add_row`], for the
    /// low-dimensional proxy-space regressions whose rows have full support.
    pub fn add_dense_row(&mut self, x: &[f64], y: f64, w: f64) {
        debug_assert_eq!(x.len(), self.dim);
        if w == 0.0 {
            self.rows += 1;
            return;
        }
        for (i, &vi) in x.iter().enumerate() {
            let wvi = w * vi;
            self.xty[i] += wvi * y;
            self.xsum[i] += wvi;
            let row = &mut self.xtx[i * self.dim..(i + 1) * self.dim];
            for (j, &vj) in x.iter().enumerate().skip(i) {
                row[j] += wvi * vj;
            }
        }
        self.weight_sum += w;
        self.target_sum += w * y;
        self.rows += 1;
    }

    /// Merge another accumulator over the same space (used for fold splits:
    /// per-fold Grams sum to the full one).
    pub fn merge(&mut self, other: &GramAccumulator) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.xtx.iter_mut().zip(&other.xtx) {
            *a += b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            *a += b;
        }
        for (a, b) in self.xsum.iter_mut().zip(&other.xsum) {
            *a += b;
        }
        self.weight_sum += other.weight_sum;
        self.target_sum += other.target_sum;
        self.rows += other.rows;
    }

    /// Same-shape subtraction, clamping tiny negative weight sums to zero.
    pub fn subtract(&mut self, other: &GramAccumulator) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.xtx.iter_mut().zip(&other.xtx) {
            *a -= b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            *a -= b;
        }
        for (a, b) in self.xsum.iter_mut().zip(&other.xsum) {
            *a -= b;
        }
        self.weight_sum = (self.weight_sum - other.weight_sum).max(0.0);
        self.target_sum -= other.target_sum;
        self.rows = self.rows.saturating_sub(other.rows);
    }

    /// Multiply all statistics by a scalar (reweights every row at once).
    pub fn scaled(&self, c: f64) -> GramAccumulator {
        let mut out = self.clone();
        for v in &mut out.xtx {
            *v *= c;
        }
        for v in &mut out.xty {
            *v *= c;
        }
        for v in &mut out.xsum {
            *v *= c;
        }
        out.weight_sum *= c;
        out.target_sum *= c;
        out
    }

    pub fn xtx_entry(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.xtx[lo * self.dim + hi]
    }

    /// Weighted feature sums `Σ w_i x_i`.
    pub fn xsum(&self) -> &[f64] {
        &self.xsum
    }

    /// Materialize the full symmetric weighted second-moment matrix
    /// `Σ w_i x_i x_iᵀ` from the maintained upper triangle.
    pub fn second_moment(&self) -> Array2<f64> {
        let d = self.dim;
        let mut out = Array2::zeros((d, d));
        for i in 0..d {
            for j in i..d {
                let v = self.xtx[i * d + j];
                out[[i, j]] = v;
                out[[j, i]] = v;
            }
        }
        out
    }
}

/// Gram accumulation for several regression targets over one design. The
/// quadratic part is accumulated once — the dominant cost — and per-target
/// statistics are split out afterwards via [`MultiTargetGram::single`].
#[derive(Debug, Clone)]
pub struct MultiTargetGram {
    base: GramAccumulator,
    xty: Vec<f64>,
    target_sums: Vec<f64>,
    n_targets: usize,
}

impl MultiTargetGram {
    pub fn new(dim: usize, n_targets: usize) -> Self {
        assert!(n_targets >= 1);
        MultiTargetGram {
            base: GramAccumulator::new(dim),
            xty: vec![0.0; dim * n_targets],
            target_sums: vec![0.0; n_targets],
            n_targets,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn add_row(&mut self, x: &SparseVec, ys: &[f64], w: f64) {
        assert_eq!(ys.len(), self.n_targets);
        self.base.add_row(x, 0.0, w);
        if w == 0.0 {
            return;
        }
        for (i, vi) in x.iter() {
            let wvi = w * vi;
            let row = &mut self.xty[i * self.n_targets..(i + 1) * self.n_targets];
            for (t, &y) in ys.iter().enumerate() {
                row[t] += wvi * y;
            }
        }
        for (t, &y) in ys.iter().enumerate() {
            self.target_sums[t] += w * y;
        }
    }

    /// Dense-input variant of [`MultiTargetGram::add_row`].
    pub fn add_dense_row(&mut self, x: &[f64], ys: &[f64], w: f64) {
        assert_eq!(ys.len(), self.n_targets);
        self.base.add_dense_row(x, 0.0, w);
        if w == 0.0 {
            return;
        }
        for (i, &vi) in x.iter().enumerate() {
            let wvi = w * vi;
            let row = &mut self.xty[i * self.n_targets..(i + 1) * self.n_targets];
            for (t, &y) in ys.iter().enumerate() {
                row[t] += wvi * y;
            }
        }
        for (t, &y) in ys.iter().enumerate() {
            self.target_sums[t] += w * y;
        }
    }

    /// Extract the single-target accumulator for target `t`.
    pub fn single(&self, t: usize) -> GramAccumulator {
        assert!(t < self.n_targets);
        let d = self.base.dim;
        let mut out = self.base.clone();
        for i in 0..d {
            out.xty[i] = self.xty[i * self.n_targets + t];
        }
        out.target_sum = self.target_sums[t];
        out
    }
}

/// Fit from accumulated sufficient statistics. This is the solver behind
/// every raw-feature fit in the sweep; [`ridge_fit`] reduces to it.
pub fn ridge_fit_gram(gram: &GramAccumulator, penalty: f64, fit_intercept: bool) -> Result<LinearModel> {
    if !(penalty >= 0.0) {
        return Err(Error::NonFinite("penalty"));
    }
    let d = gram.dim;
    if gram.weight_sum <= 0.0 {
        return Err(Error::RankDeficientDesign);
    }
    let n = if fit_intercept { d + 1 } else { d };
    let mut a = Array2::zeros((n, n));
    let mut b = Array1::zeros(n);
    for i in 0..d {
        for j in i..d {
            let v = gram.xtx[i * d + j];
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
        a[[i, i]] += penalty;
        b[i] = gram.xty[i];
    }
    if fit_intercept {
        for i in 0..d {
            a[[i, d]] = gram.xsum[i];
            a[[d, i]] = gram.xsum[i];
        }
        a[[d, d]] = gram.weight_sum;
        b[d] = gram.target_sum;
    }
    let x = solve_spd(&a, &b, penalty > 0.0)?;
    let weights = Array1::from_iter(x.iter().take(d).copied());
    let intercept = if fit_intercept { x[d] } else { 0.0 };
    Ok(LinearModel { weights, intercept, penalty })
}

/// Weighted ridge fit from a dense design matrix.
///
/// `weights` are per-row nonnegative loss weights (None = all ones). The
/// penalty applies to the slope coefficients only.
pub fn ridge_fit(
    design: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    penalty: f64,
    weights: Option<ArrayView1<f64>>,
    fit_intercept: bool,
) -> Result<LinearModel> {
    let (n, d) = design.dim();
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.len() });
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::BadWeights("row weights"));
        }
    }
    if design.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design or targets"));
    }

    // Accumulate the (dense) normal equations directly; designs on this path
    // are small (proxy spaces, test fixtures).
    let nn = if fit_intercept { d + 1 } else { d };
    let mut a = Array2::zeros((nn, nn));
    let mut b = Array1::zeros(nn);
    let mut wsum = 0.0;
    for r in 0..n {
        let w = weights.map_or(1.0, |wv| wv[r]);
        if w == 0.0 {
            continue;
        }
        let row = design.row(r);
        let y = targets[r];
        for i in 0..d {
            let wv = w * row[i];
            b[i] += wv * y;
            for j in i..d {
                a[[i, j]] += wv * row[j];
            }
        }
        if fit_intercept {
            for i in 0..d {
                a[[i, nn - 1]] += w * row[i];
            }
            b[nn - 1] += w * y;
        }
        wsum += w;
    }
    if wsum <= 0.0 {
        return Err(Error::RankDeficientDesign);
    }
    for i in 0..d {
        a[[i, i]] += penalty;
        for j in i..nn {
            a[[j, i]] = a[[i, j]];
        }
    }
    if fit_intercept {
        a[[nn - 1, nn - 1]] = wsum;
    }
    if !(penalty >= 0.0) {
        return Err(Error::NonFinite("penalty"));
    }
    let x = solve_spd(&a, &b, penalty > 0.0)?;
    let weights_out = Array1::from_iter(x.iter().take(d).copied());
    let intercept = if fit_intercept { x[d] } else { 0.0 };
    Ok(LinearModel { weights: weights_out, intercept, penalty })
}
