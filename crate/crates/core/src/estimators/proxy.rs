//! OBS-side proxy representation `ψ(z)`.
//!
//! The observational log carries auxiliary quality labels that the randomized
//! sample lacks. The proxy map turns those labels into a low-dimensional,
//! standardized representation of the densified mediator features: ridge
//! heads predicting each auxiliary label are fit on OBS, the span of their
//! coefficient rows (the right singular vectors of the head matrix) gives the
//! leading proxy directions, and — when the label count is below the target
//! dimension — the remaining directions are filled with principal components
//! of the feature covariance taken orthogonal to the label span. The result
//! is an affine map fixed once per cell; every ψ-consuming family shares it.

use crate::error::{Error, Result};
use crate::numerics::hashing::SparseVec;
use crate::numerics::pca::{jacobi_eigh, pca_from_scatter, top_eigh, ProjectionMap};
use crate::numerics::ridge::{ridge_fit_gram, MultiTargetGram};
use crate::scm::ScmSample;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Fitted proxy map `ψ(z) = scale⁻¹ · D (z − μ_OBS)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyMap {
    /// Affine projection from densified features to standardized ψ.
    pub projector: ProjectionMap,
    /// How many leading directions came from auxiliary-label heads; the rest
    /// are covariance principal components orthogonal to that span.
    pub aux_rank: usize,
    /// Human-readable construction note kept for audit output.
    pub source: String,
}

impl ProxyMap {
    pub fn dim_in(&self) -> usize {
        self.projector.dim_in()
    }

    pub fn dim_psi(&self) -> usize {
        self.projector.dim_out()
    }

    /// Standardized proxy features for one densified input.
    pub fn apply(&self, dense: &SparseVec) -> Result<Array1<f64>> {
        self.projector.project_sparse(dense)
    }
}

/// Pin a direction's sign so the largest-magnitude entry is positive. The
/// eigen-solvers are deterministic, but the convention keeps fitted maps
/// stable under refactors of their internals.
fn pin_sign(v: &mut Array1<f64>) {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Learn the proxy map from OBS rows carrying auxiliary labels.
///
/// `aux_penalty` is the ridge level of the per-label heads under mean-squared
/// loss (row weights `1/n`).
pub fn learn_proxy(obs_rows: &[ScmSample], d_psi: usize, aux_penalty: f64) -> Result<ProxyMap> {
    if d_psi == 0 {
        return Err(Error::Config("proxy dimension must be positive".into()));
    }
    let n = obs_rows.len();
    if n < 10 * d_psi {
        return Err(Error::Config(format!(
            "proxy learning needs at least {} rows for a {d_psi}-dimensional map, got {n}",
            10 * d_psi
        )));
    }
    let first_aux = obs_rows[0].aux.as_ref().ok_or(Error::ProxyRequiresAux)?;
    let k_aux = first_aux.len();
    let dim = obs_rows[0].dense.dim();
    let w = 1.0 / n as f64;
    let mut gram = MultiTargetGram::new(dim, k_aux);
    let mut ys = vec![0.0; k_aux];
    for r in obs_rows {
        let aux = r.aux.as_ref().ok_or(Error::ProxyRequiresAux)?;
        if aux.len() != k_aux {
            return Err(Error::DimensionMismatch { expected: k_aux, got: aux.len() });
        }
        ys.copy_from_slice(aux.as_slice().expect("contiguous aux"));
        gram.add_row(&r.dense, &ys, w);
    }

    // Feature mean and covariance from the shared Gram (weights sum to 1).
    let base = gram.single(0);
    let mu = Array1::from_vec(base.xsum().to_vec());
    let mut cov = base.second_moment();
    for i in 0..dim {
        for j in 0..dim {
            cov[[i, j]] -= mu[i] * mu[j];
        }
    }

    // Per-label ridge heads; their row span carries the label-predictive
    // directions.
    let mut heads = Array2::zeros((k_aux, dim));
    for t in 0..k_aux {
        let m = ridge_fit_gram(&gram.single(t), aux_penalty, true)?;
        heads.row_mut(t).assign(&m.weights);
    }

    // Right singular vectors of the head matrix via the small k×k
    // eigenproblem of H Hᵀ.
    let hht = heads.dot(&heads.t());
    let (vals, vecs) = jacobi_eigh(&hht);
    let mut order: Vec<usize> = (0..k_aux).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite eigenvalues"));
    let top = vals[order[0]].max(0.0);
    let tol = top * 1e-12 + 1e-300;
    let mut directions: Vec<Array1<f64>> = Vec::with_capacity(d_psi);
    for &i in &order {
        if directions.len() == d_psi || vals[i] <= tol {
            break;
        }
        let mut v = heads.t().dot(&vecs.column(i)) / vals[i].sqrt();
        pin_sign(&mut v);
        directions.push(v);
    }
    let aux_rank = directions.len();

    // Fill any remaining dimensions with principal components of the feature
    // covariance deflated against the label span.
    if aux_rank < d_psi {
        let need = d_psi - aux_rank;
        let mut vmat = Array2::zeros((aux_rank, dim));
        for (r, v) in directions.iter().enumerate() {
            vmat.row_mut(r).assign(v);
        }
        // C' = (I − P) C (I − P) with P = VᵀV, computed via S = V C.
        let s = vmat.dot(&cov);
        let q = s.dot(&vmat.t());
        let mut deflated = cov.clone();
        deflated -= &vmat.t().dot(&s);
        deflated -= &s.t().dot(&vmat);
        deflated += &vmat.t().dot(&q).dot(&vmat);
        let (fvals, fvecs) = top_eigh(&deflated, need);
        let ftol = fvals[0].abs() * 1e-12 + 1e-300;
        let available = fvals.iter().filter(|&&v| v > ftol).count();
        if available < need {
            return Err(Error::InsufficientRank { requested: d_psi, rank: aux_rank + available });
        }
        for c in 0..need {
            let mut v = fvecs.column(c).to_owned();
            // One explicit re-orthogonalization pass against the label span
            // tightens the eigensolver's ~1e-12 residual.
            for u in &directions[..aux_rank] {
                let d = u.dot(&v);
                v.scaled_add(-d, u);
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-8 {
                return Err(Error::InsufficientRank { requested: d_psi, rank: aux_rank + c });
            }
            v /= norm;
            pin_sign(&mut v);
            directions.push(v);
        }
    }

    let mut dmat = Array2::zeros((d_psi, dim));
    for (r, v) in directions.iter().enumerate() {
        dmat.row_mut(r).assign(v);
    }
    // Standardize each output on OBS: var(dᵀx) = dᵀ C d.
    let scale = Array1::from_iter(
        directions.iter().map(|d| d.dot(&cov.dot(d)).max(0.0).sqrt().max(1e-150)),
    );
    let source = format!("{aux_rank} aux-label directions + {} covariance fill", d_psi - aux_rank);
    Ok(ProxyMap { projector: ProjectionMap::new(dmat, Some(mu), Some(scale)), aux_rank, source })
}

/// Standardized principal-component compression of ψ itself, fit on the same
/// OBS rows the proxy came from. Used by the rich correction class, whose
/// basis expansions want a smaller, decorrelated input.
pub fn compress_psi(obs_rows: &[ScmSample], proxy: &ProxyMap, dim: usize) -> Result<ProjectionMap> {
    if obs_rows.is_empty() {
        return Err(Error::Config("proxy compression needs OBS rows".into()));
    }
    let d = proxy.dim_psi();
    let keep = dim.min(d);
    let n = obs_rows.len();
    let mut sum = Array1::<f64>::zeros(d);
    let mut second = Array2::<f64>::zeros((d, d));
    for r in obs_rows {
        let psi = proxy.apply(&r.dense)?;
        for i in 0..d {
            sum[i] += psi[i];
            for j in i..d {
                second[[i, j]] += psi[i] * psi[j];
            }
        }
    }
    let mean = &sum / n as f64;
    let mut scatter = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let v = second[[i, j]] - n as f64 * mean[i] * mean[j];
            scatter[[i, j]] = v;
            scatter[[j, i]] = v;
        }
    }
    pca_from_scatter(&scatter, mean, n, keep, true)
}
