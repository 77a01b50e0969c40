//! Truncated PCA and linear projection maps.
//!
//! `pca_fit` extracts the top principal directions of a set of rows by
//! eigendecomposing the centered scatter matrix: orthogonal subspace
//! iteration (deterministically seeded) reduces the problem to a small
//! symmetric matrix, which a cyclic Jacobi sweep then diagonalizes. That
//! route needs no external linear-algebra backend, handles the `d << dim`
//! case cheaply, and is exact for the captured subspace at convergence.
//!
//! A [`ProjectionMap`] bundles the component matrix with optional input
//! centering and per-output standardization, so the same type serves PCA,
//! the learned proxy directions, and their compressions.

use crate::error::{Error, Result};
use crate::numerics::hashing::{mix64, SparseVec};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Affine projection `z -> scale^{-1} * (M (z - center))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionMap {
    /// Component matrix, one output dimension per row.
    pub matrix: Array2<f64>,
    /// Input-space centering (subtracted before projecting), if any.
    pub centering: Option<Array1<f64>>,
    /// Per-output standard deviations (projected values are divided by
    /// these), if the map standardizes.
    pub scaling: Option<Array1<f64>>,
    /// Cached `M * center`, kept so sparse inputs never materialize the
    /// centered dense vector.
    projected_center: Array1<f64>,
}

impl ProjectionMap {
    pub fn new(matrix: Array2<f64>, centering: Option<Array1<f64>>, scaling: Option<Array1<f64>>) -> Self {
        let projected_center = match &centering {
            Some(c) => matrix.dot(c),
            None => Array1::zeros(matrix.nrows()),
        };
        ProjectionMap { matrix, centering, scaling, projected_center }
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn project(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: z.len() });
        }
        let mut out = self.matrix.dot(&z) - &self.projected_center;
        if let Some(s) = &self.scaling {
            out /= s;
        }
        Ok(out)
    }

    /// Project a sparse input by gathering matrix columns on its support.
    pub fn project_sparse(&self, z: &SparseVec) -> Result<Array1<f64>> {
        if z.dim() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: z.dim() });
        }
        let mut out = -self.projected_center.clone();
        for (i, v) in z.iter() {
            let col = self.matrix.column(i);
            out.iter_mut().zip(col.iter()).for_each(|(o, m)| *o += v * m);
        }
        if let Some(s) = &self.scaling {
            out /= s;
        }
        Ok(out)
    }

    /// Reconstruct an input-space point from projected coordinates
    /// (undoes scaling, applies `M^T`, re-adds the center).
    pub fn reconstruct(&self, coords: ArrayView1<f64>) -> Result<Array1<f64>> {
        if coords.len() != self.dim_out() {
            return Err(Error::DimensionMismatch { expected: self.dim_out(), got: coords.len() });
        }
        let unscaled = match &self.scaling {
            Some(s) => &coords.to_owned() * s,
            None => coords.to_owned(),
        };
        let mut out = self.matrix.t().dot(&unscaled);
        if let Some(c) = &self.centering {
            out += c;
        }
        Ok(out)
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns), unordered.
pub(crate) fn jacobi_eigh(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = Array2::eye(n);
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = Array1::from_iter((0..n).map(|i| a[[i, i]]));
    (vals, v)
}

/// Orthonormalize the columns of `q` in place (modified Gram–Schmidt with
/// re-orthogonalization). Near-zero columns are replaced by deterministic
/// pseudo-random directions and re-orthogonalized.
fn orthonormalize_columns(q: &mut Array2<f64>, salt: u64) {
    let (n, m) = q.dim();
    for j in 0..m {
        // A column that collapses under projection (rank-deficient input)
        // gets replaced by a deterministic pseudo-random direction and run
        // through the same orthogonalization.
        for attempt in 0..8u64 {
            if attempt > 0 {
                for i in 0..n {
                    let h = mix64(salt ^ (attempt << 48) ^ ((j as u64) << 32) ^ i as u64);
                    q[[i, j]] = (h as f64 / u64::MAX as f64) - 0.5;
                }
            }
            let before = q.column(j).dot(&q.column(j)).sqrt().max(1e-300);
            for _pass in 0..2 {
                for k in 0..j {
                    let dot = q.column(k).dot(&q.column(j));
                    let col_k = q.column(k).to_owned();
                    let mut col_j = q.column_mut(j);
                    col_j.zip_mut_with(&col_k, |a, b| *a -= dot * b);
                }
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm > 1e-10 * before {
                q.column_mut(j).mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
}

/// Top-k eigenpairs of a symmetric PSD matrix via subspace iteration with
/// oversampling and Rayleigh–Ritz extraction. Deterministic: the starting
/// block is filled from a fixed hash stream.
pub(crate) fn top_eigh(c: &Array2<f64>, k: usize) -> (Array1<f64>, Array2<f64>) {
    let n = c.nrows();
    let m = (k + 8).min(n);
    let mut q = Array2::zeros((n, m));
    for j in 0..m {
        for i in 0..n {
            let h = mix64(0x9C1A_77F0_u64 ^ ((j as u64) << 40) ^ i as u64);
            q[[i, j]] = (h as f64 / u64::MAX as f64) - 0.5;
        }
    }
    orthonormalize_columns(&mut q, 0x51EE_D001);

    let mut last = Array1::<f64>::zeros(m);
    let mut ritz_vals = Array1::<f64>::zeros(m);
    let mut ritz_vecs = q.clone();
    for iter in 0..500 {
        let z = c.dot(&q);
        q = z;
        orthonormalize_columns(&mut q, 0x51EE_D002 + iter as u64);
        let b = q.t().dot(&c.dot(&q));
        let bsym = (&b + &b.t()) * 0.5;
        let (vals, vecs) = jacobi_eigh(&bsym);
        // Sort descending and rotate the block.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        let mut sorted_vals = Array1::zeros(m);
        let mut w = Array2::zeros((m, m));
        for (pos, &idx) in order.iter().enumerate() {
            sorted_vals[pos] = vals[idx];
            w.column_mut(pos).assign(&vecs.column(idx));
        }
        ritz_vecs = q.dot(&w);
        ritz_vals = sorted_vals;
        let scale = ritz_vals[0].abs().max(1e-300);
        let delta = ritz_vals
            .iter()
            .take(k)
            .zip(last.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        last.assign(&ritz_vals);
        if iter > 2 && delta <= 1e-13 * scale {
            break;
        }
        q = ritz_vecs.clone();
    }
    let vals = Array1::from_iter(ritz_vals.iter().take(k).copied());
    let mut vecs = Array2::zeros((n, k));
    for j in 0..k {
        vecs.column_mut(j).assign(&ritz_vecs.column(j));
    }
    (vals, vecs)
}

/// Flip each component so its first loading of nontrivial magnitude is
/// positive. Rows of `matrix` are components.
fn apply_sign_convention(matrix: &mut Array2<f64>) {
    for mut row in matrix.rows_mut() {
        let maxabs = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if maxabs == 0.0 {
            continue;
        }
        let lead = row.iter().find(|v| v.abs() > 1e-9 * maxabs).copied().unwrap_or(0.0);
        if lead < 0.0 {
            row.mapv_inplace(|x| -x);
        }
    }
}

/// PCA of `rows` (observations in rows) truncated to `d` components.
///
/// Components are the top right singular vectors of the centered matrix,
/// each flipped so its first nontrivial loading is positive. With
/// `standardize`, projected outputs are divided by their standard deviation
/// over the fitting rows. Requesting more components than the centered rank
/// is an error.
pub fn pca_fit(rows: ArrayView2<f64>, d: usize, standardize: bool) -> Result<ProjectionMap> {
    let (n, dim) = rows.dim();
    if d == 0 || d > dim {
        return Err(Error::Config(format!("pca: d={d} out of range for {dim} input dims")));
    }
    if n < d.max(2) {
        return Err(Error::Config(format!("pca: {n} rows cannot support {d} components")));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca rows"));
    }
    let mean = rows.mean_axis(ndarray::Axis(0)).unwrap();
    let mut scatter = Array2::zeros((dim, dim));
    for r in rows.rows() {
        let c = &r - &mean;
        for i in 0..dim {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..dim {
                scatter[[i, j]] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            scatter[[j, i]] = scatter[[i, j]];
        }
    }
    pca_from_scatter(&scatter, mean, n, d, standardize)
}

/// PCA from a precomputed centered scatter matrix `sum (x-m)(x-m)^T`.
/// The sweep uses this to reuse Gram statistics it already has.
pub fn pca_from_scatter(
    scatter: &Array2<f64>,
    mean: Array1<f64>,
    n_rows: usize,
    d: usize,
    standardize: bool,
) -> Result<ProjectionMap> {
    let dim = scatter.nrows();
    let (vals, vecs) = top_eigh(scatter, d.min(dim));
    let tol = vals[0].abs().max(0.0) * 1e-12 + 1e-30;
    let rank = vals.iter().filter(|&&v| v > tol).count();
    if rank < d {
        return Err(Error::InsufficientRank { requested: d, rank });
    }
    let mut matrix = Array2::zeros((d, dim));
    for j in 0..d {
        matrix.row_mut(j).assign(&vecs.column(j));
    }
    apply_sign_convention(&mut matrix);
    let scaling = if standardize {
        // Variance of the projection along eigenvector v is its eigenvalue
        // over n (population convention).
        Some(Array1::from_iter(vals.iter().take(d).map(|&l| (l / n_rows as f64).sqrt().max(1e-150))))
    } else {
        None
    };
    Ok(ProjectionMap::new(matrix, Some(mean), scaling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rng_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        // Deterministic pseudo-gaussian fill via sums of uniforms.
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for r in 0..6 {
                    let h = mix64(seed ^ ((i as u64) << 40) ^ ((j as u64) << 20) ^ r);
                    acc += h as f64 / u64::MAX as f64;
                }
                out[[i, j]] = acc - 3.0;
            }
        }
        out
    }

    #[test]
    fn planted_two_component_data_is_recovered() {
        // Rows live on a 2D subspace (plus centering); rank is exactly 2.
        let n = 60;
        let coeffs = rng_matrix(n, 2, 11);
        let dir1 = array![1.0, 0.0, 2.0, 0.0, -1.0];
        let dir2 = array![0.0, 3.0, 0.0, 1.0, 1.0];
        let mut rows = Array2::zeros((n, 5));
        for i in 0..n {
            let p = &dir1 * coeffs[[i, 0]] + &dir2 * coeffs[[i, 1]];
            rows.row_mut(i).assign(&(&p + 0.5));
        }
        let map = pca_fit(rows.view(), 2, false).unwrap();
        // Reconstruction through the 2D map must reproduce the rows.
        for i in 0..n {
            let z = map.project(rows.row(i)).unwrap();
            let back = map.reconstruct(z.view()).unwrap();
            for j in 0..5 {
                assert!((back[j] - rows[[i, j]]).abs() < 1e-8);
            }
        }
        // And asking for a third component must fail: rank is 2.
        let err = pca_fit(rows.view(), 3, false).unwrap_err();
        assert!(matches!(err, Error::InsufficientRank { requested: 3, rank: 2 }));
    }

    #[test]
    fn orthonormal_rows_project_losslessly() {
        // An orthonormal frame (scaled identity block) is already d-dimensional:
        // projection then reconstruction is lossless even though the spectrum
        // is degenerate.
        let mut rows = Array2::zeros((4, 4));
        for i in 0..4 {
            rows[[i, i]] = 1.0;
        }
        let map = pca_fit(rows.view(), 3, false).unwrap();
        for i in 0..4 {
            let z = map.project(rows.row(i)).unwrap();
            let back = map.reconstruct(z.view()).unwrap();
            for j in 0..4 {
                assert!((back[j] - rows[[i, j]]).abs() < 1e-8, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn sign_convention_fixes_component_orientation() {
        let rows = rng_matrix(40, 6, 3);
        let map = pca_fit(rows.view(), 4, false).unwrap();
        for row in map.matrix.rows() {
            let maxabs = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let lead = row.iter().find(|v| v.abs() > 1e-9 * maxabs).copied().unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn standardized_outputs_have_unit_variance() {
        let rows = rng_matrix(200, 5, 17);
        let map = pca_fit(rows.view(), 3, true).unwrap();
        let mut projected = Array2::zeros((200, 3));
        for i in 0..200 {
            projected.row_mut(i).assign(&map.project(rows.row(i)).unwrap());
        }
        for j in 0..3 {
            let col = projected.column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 200.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_handles_sparse_inputs() {
        let rows = rng_matrix(50, 8, 29);
        let map = pca_fit(rows.view(), 3, true).unwrap();
        let sparse = SparseVec::from_pairs(8, vec![(1, 2.0), (5, -1.0)]);
        let dense = sparse.to_dense();
        let a = map.project(dense.view()).unwrap();
        let b = map.project_sparse(&sparse).unwrap();
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-12);
        }
    }
}
