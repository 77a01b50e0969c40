//! Numerical oracles for the linear-correction risk identities.
//!
//! Each closed-form result about grounding an observational baseline with a
//! small randomized sample is restated here on a finite weighted support,
//! where both sides of every identity are computable exactly. The checks
//! evaluate both sides independently and report the largest gap; the estimator
//! tests and the `check` CLI subcommand treat these as ground truth.
//!
//! On a finite support the population objects become vectors: a point `i`
//! carries weight `w_i`, functions are value vectors, the inner product is
//! `⟨u, v⟩ = Σ w_i u_i v_i`, and the excess risk of a predictor `f` against
//! the target `r*` is `σ² + ‖f − r*‖²` with `σ²` the irreducible noise.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::mix_fields;
use crate::numerics::pca::jacobi_eigh;

/// Number of support points in randomly generated check instances.
pub const SUPPORT_POINTS: usize = 512;

/// A finite-support risk environment: weighted points with two feature
/// readouts (a correction representation `ψ` and a direct representation
/// `φ`), target values, a baseline predictor, and a noise floor.
#[derive(Debug, Clone)]
pub struct RiskInstance {
    /// `n × d_ψ` correction features, one row per support point.
    pub psi: Array2<f64>,
    /// `n × d_φ` direct-fit features.
    pub phi: Array2<f64>,
    /// Target values `r*` at each point.
    pub r_star: Array1<f64>,
    /// Baseline predictor values at each point.
    pub f_obs: Array1<f64>,
    /// Point weights; must form a probability vector.
    pub weights: Array1<f64>,
    /// Irreducible noise level `σ_E`.
    pub sigma_e: f64,
}

impl RiskInstance {
    pub fn new(
        psi: Array2<f64>,
        phi: Array2<f64>,
        r_star: Array1<f64>,
        f_obs: Array1<f64>,
        weights: Array1<f64>,
        sigma_e: f64,
    ) -> Result<Self> {
        let n = weights.len();
        if psi.nrows() != n || phi.nrows() != n || r_star.len() != n || f_obs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: psi.nrows() });
        }
        if weights.iter().any(|&w| w < 0.0) || (weights.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::BadWeights("support weights"));
        }
        let finite = psi.iter().chain(phi.iter()).chain(r_star.iter()).chain(f_obs.iter());
        if finite.into_iter().any(|v| !v.is_finite()) || !sigma_e.is_finite() || sigma_e < 0.0 {
            return Err(Error::NonFinite("risk instance"));
        }
        Ok(Self { psi, phi, r_star, f_obs, weights, sigma_e })
    }

    /// Uniform weights over the given points.
    pub fn uniform(
        psi: Array2<f64>,
        phi: Array2<f64>,
        r_star: Array1<f64>,
        f_obs: Array1<f64>,
        sigma_e: f64,
    ) -> Result<Self> {
        let n = psi.nrows();
        Self::new(psi, phi, r_star, f_obs, Array1::from_elem(n, 1.0 / n as f64), sigma_e)
    }

    /// A generic random instance: independent feature panels, a baseline
    /// that overlaps the ψ-span without lying in it, and a target mixing
    /// both panels with an off-span component.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0x7275]));
        let n = SUPPORT_POINTS;
        let (d_psi, d_phi) = (6, 4);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let psi = Array2::from_shape_fn((n, d_psi), |_| gauss());
        let phi = Array2::from_shape_fn((n, d_phi), |_| gauss());
        let a = Array1::from_shape_fn(d_psi, |_| gauss());
        let c = Array1::from_shape_fn(d_psi, |_| gauss());
        let d = Array1::from_shape_fn(d_phi, |_| gauss());
        let f_obs = psi.dot(&a) + &Array1::from_shape_fn(n, |_| 0.3 * gauss());
        let r_star = 0.4 * &psi.dot(&c)
            + 0.5 * &phi.dot(&d)
            + &Array1::from_shape_fn(n, |_| 0.3 * gauss());
        let sigma_e = 0.1 + 0.4 * rand::Rng::random::<f64>(&mut rng);
        Self::uniform(psi, phi, r_star, f_obs, sigma_e).expect("generated instance is valid")
    }

    /// Weighted inner product of two value vectors.
    pub fn inner(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
        u.iter().zip(v).zip(&self.weights).map(|((&a, &b), &w)| w * a * b).sum()
    }

    /// Weighted squared norm.
    pub fn norm_sq(&self, u: ArrayView1<f64>) -> f64 {
        self.inner(u, u)
    }

    /// Risk of a predictor's value vector: noise floor plus squared
    /// distance to the target.
    pub fn risk(&self, f: ArrayView1<f64>) -> f64 {
        let diff = &f.to_owned() - &self.r_star;
        self.sigma_e * self.sigma_e + self.norm_sq(diff.view())
    }

    /// Baseline bias values `b = f_OBS − r*`.
    pub fn bias(&self) -> Array1<f64> {
        &self.f_obs - &self.r_star
    }
}

/// Solve `m x = rhs` for a symmetric PSD matrix by eigendecomposition,
/// dropping directions whose eigenvalue is numerically zero (so the result
/// is a minimizer even when the system is rank-deficient).
fn eigh_solve(m: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let (ev, vecs) = jacobi_eigh(m);
    let floor = ev.iter().cloned().fold(0.0_f64, f64::max).max(0.0) * 1e-12;
    let mut out = Array1::zeros(rhs.len());
    for k in 0..ev.len() {
        if ev[k] > floor {
            let vk = vecs.column(k);
            let scale = vk.dot(rhs) / ev[k];
            out.scaled_add(scale, &vk);
        }
    }
    out
}

/// Ridge regression of `y` on `psi` recentred at `beta_obs`:
///
/// ```text
///   argmin_β ‖y − Ψβ‖² + λ‖β − β_OBS‖²  =  (ΨᵀΨ + λI)⁻¹(Ψᵀy + λ β_OBS)
/// ```
///
/// which is also the baseline-minus-correction form `β_OBS − δ̂` with `δ̂`
/// the plain ridge fit of the baseline's residual `Ψβ_OBS − y`.
pub fn centered_ridge(
    psi: &Array2<f64>,
    y: &Array1<f64>,
    penalty: f64,
    beta_obs: &Array1<f64>,
) -> Result<Array1<f64>> {
    if penalty <= 0.0 {
        return Err(Error::Config("centered ridge requires a positive penalty".into()));
    }
    let d = psi.ncols();
    if y.len() != psi.nrows() || beta_obs.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: beta_obs.len() });
    }
    let mut m = psi.t().dot(psi);
    for i in 0..d {
        m[[i, i]] += penalty;
    }
    let rhs = psi.t().dot(y) + &(penalty * beta_obs);
    Ok(eigh_solve(&m, &rhs))
}

/// Weighted least-squares projection of the value vector `b` onto the span
/// of `psi`'s columns. Returns the projection and the residual; the residual
/// is orthogonal to every column under the weighted inner product.
pub fn l2_project(
    b: &Array1<f64>,
    psi: &Array2<f64>,
    weights: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = b.len();
    if psi.nrows() != n || weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi.nrows() });
    }
    if weights.iter().any(|&w| w < 0.0) || (weights.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::BadWeights("projection weights"));
    }
    let d = psi.ncols();
    let mut m = Array2::zeros((d, d));
    let mut rhs = Array1::zeros(d);
    for i in 0..n {
        let row = psi.row(i);
        let w = weights[i];
        for p in 0..d {
            rhs[p] += w * row[p] * b[i];
            for q in p..d {
                m[[p, q]] += w * row[p] * row[q];
            }
        }
    }
    for p in 0..d {
        for q in 0..p {
            m[[p, q]] = m[[q, p]];
        }
    }
    let coef = eigh_solve(&m, &rhs);
    let h = psi.dot(&coef);
    let residual = b - &h;
    Ok((h, residual))
}

/// One theorem's worst observed violation against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheck {
    pub name: &'static str,
    pub max_violation: f64,
    pub tolerance: f64,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.max_violation.is_finite() && self.max_violation <= self.tolerance
    }

    /// The `check` subcommand's one-line rendering.
    pub fn line(&self) -> String {
        format!(
            "{:<26} max violation {:>12.3e}  tolerance {:>8.1e}  {}",
            self.name,
            self.max_violation,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

fn worse(acc: &mut f64, v: f64) {
    if v > *acc || v.is_nan() {
        *acc = if v.is_nan() { f64::INFINITY } else { v };
    }
}

/// Centered-ridge closed form: the solver satisfies its normal equations and
/// agrees with the independent baseline-minus-correction route.
pub fn check_centered_ridge(seed: u64) -> Result<TheoremCheck> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0xc7]));
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, d) = (40, 5);
    let psi = Array2::from_shape_fn((n, d), |_| gauss());
    let y = Array1::from_shape_fn(n, |_| gauss());
    let beta_obs = Array1::from_shape_fn(d, |_| gauss());
    let penalty = 0.7;

    let beta_g = centered_ridge(&psi, &y, penalty, &beta_obs)?;
    let mut violation = 0.0;

    // Normal equations: (ΨᵀΨ + λI) β̂ − Ψᵀy − λβ_OBS = 0.
    let lhs = psi.t().dot(&psi).dot(&beta_g) + &(penalty * &beta_g);
    let rhs = psi.t().dot(&y) + &(penalty * &beta_obs);
    for (a, b) in lhs.iter().zip(rhs.iter()) {
        worse(&mut violation, (a - b).abs());
    }

    // Equivalent correction route: δ̂ ridge-fit on the baseline residual.
    let resid = psi.dot(&beta_obs) - &y;
    let delta = centered_ridge(&psi, &resid, penalty, &Array1::zeros(d))?;
    let via_correction = &beta_obs - &delta;
    for (a, b) in beta_g.iter().zip(via_correction.iter()) {
        worse(&mut violation, (a - b).abs());
    }

    Ok(TheoremCheck { name: "centered_ridge", max_violation: violation, tolerance: 1e-10 })
}

/// Grounding-gain identity: correcting the baseline by `α` times the
/// projected bias lowers the risk by exactly `(2α − α²)‖h†‖²`, so the
/// corrected predictor is never worse on `α ∈ [0, 1]`.
pub fn check_oracle_grounding_gain(inst: &RiskInstance, alphas: &[f64]) -> Result<TheoremCheck> {
    let b = inst.bias();
    let (h_dag, _) = l2_project(&b, &inst.psi, &inst.weights)?;
    let h_norm_sq = inst.norm_sq(h_dag.view());
    let risk_obs = inst.risk(inst.f_obs.view());
    let mut violation = 0.0;
    for &alpha in alphas {
        let corrected = &inst.f_obs - &(alpha * &h_dag);
        let lhs = inst.risk(corrected.view());
        let rhs = risk_obs - (2.0 * alpha - alpha * alpha) * h_norm_sq;
        worse(&mut violation, (lhs - rhs).abs());
        if (0.0..=1.0).contains(&alpha) {
            worse(&mut violation, lhs - risk_obs);
        }
    }
    Ok(TheoremCheck { name: "oracle_grounding_gain", max_violation: violation, tolerance: 1e-10 })
}

/// Noisy-correction identity: for an arbitrary correction `h̃` (not just the
/// projected bias), the risk moves by `α²‖h̃‖² − 2α⟨b, h̃⟩` — negative only
/// when the correction is sufficiently aligned with the bias.
pub fn check_noisy_correction_identity(
    inst: &RiskInstance,
    h_tilde: &Array1<f64>,
    alphas: &[f64],
) -> Result<TheoremCheck> {
    if h_tilde.len() != inst.r_star.len() {
        return Err(Error::DimensionMismatch { expected: inst.r_star.len(), got: h_tilde.len() });
    }
    let b = inst.bias();
    let risk_obs = inst.risk(inst.f_obs.view());
    let cross = inst.inner(b.view(), h_tilde.view());
    let h_norm_sq = inst.norm_sq(h_tilde.view());
    let mut violation = 0.0;
    for &alpha in alphas {
        let moved = &inst.f_obs - &(alpha * h_tilde);
        let lhs = inst.risk(moved.view()) - risk_obs;
        let rhs = alpha * alpha * h_norm_sq - 2.0 * alpha * cross;
        worse(&mut violation, (lhs - rhs).abs());
    }
    Ok(TheoremCheck {
        name: "noisy_correction_identity",
        max_violation: violation,
        tolerance: 1e-10,
    })
}

/// Residualization-versus-pooling equivalence: correcting the baseline
/// within the ψ-span beats refitting within the φ-span exactly when the
/// target is closer to the shifted ψ-span than to the φ-span.
pub fn check_residual_vs_pooling(inst: &RiskInstance) -> Result<TheoremCheck> {
    let gap = &inst.r_star - &inst.f_obs;
    let (h_res, res_residual) = l2_project(&gap, &inst.psi, &inst.weights)?;
    let (f_pool, pool_residual) = l2_project(&inst.r_star, &inst.phi, &inst.weights)?;

    let risk_res = inst.risk((&inst.f_obs + &h_res).view());
    let risk_pool = inst.risk(f_pool.view());
    let dist_sq_res = inst.norm_sq(res_residual.view());
    let dist_sq_pool = inst.norm_sq(pool_residual.view());
    let noise = inst.sigma_e * inst.sigma_e;

    let mut violation = 0.0;
    // Both risks decompose into the noise floor plus the squared distance...
    worse(&mut violation, (risk_res - noise - dist_sq_res).abs());
    worse(&mut violation, (risk_pool - noise - dist_sq_pool).abs());
    // ...so the risk ordering must match the distance ordering whenever the
    // two comparisons are resolvable at all.
    let risk_gap = risk_res - risk_pool;
    let dist_gap = dist_sq_res - dist_sq_pool;
    if (risk_gap > 1e-10 && dist_gap < -1e-10) || (risk_gap < -1e-10 && dist_gap > 1e-10) {
        worse(&mut violation, f64::INFINITY);
    }
    Ok(TheoremCheck { name: "residual_vs_pooling", max_violation: violation, tolerance: 1e-10 })
}

/// Instance realizing the strict case: the baseline's error lies entirely in
/// the ψ-span while the target has a component outside the φ-span, so the
/// residual route is strictly better. Returns the instance and its margin.
pub fn strict_residual_instance(seed: u64) -> Result<(RiskInstance, f64)> {
    let base = RiskInstance::random(mix_fields(&[seed, 0x57]));
    // Target: baseline plus an in-ψ-span correction — the residual route can
    // be exact. Keep φ as an independent panel so the target stays outside
    // its span almost surely.
    let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0x58]));
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let c = Array1::from_shape_fn(base.psi.ncols(), |_| gauss());
    let r_star = &base.f_obs - &base.psi.dot(&c);
    let inst = RiskInstance::new(
        base.psi,
        base.phi,
        r_star,
        base.f_obs,
        base.weights,
        base.sigma_e,
    )?;
    let gap = &inst.r_star - &inst.f_obs;
    let (h_res, _) = l2_project(&gap, &inst.psi, &inst.weights)?;
    let (f_pool, _) = l2_project(&inst.r_star, &inst.phi, &inst.weights)?;
    let margin = inst.risk(f_pool.view()) - inst.risk((&inst.f_obs + &h_res).view());
    Ok((inst, margin))
}

/// Closed-form and Monte-Carlo outcome of the ridge-center comparison.
#[derive(Debug, Clone)]
pub struct CenterComparison {
    pub closed_grounded: f64,
    pub closed_exp: f64,
    pub mc_grounded: f64,
    pub mc_exp: f64,
    pub se_grounded: f64,
    pub se_exp: f64,
    /// The crossover condition: the centered estimator wins exactly when the
    /// center's bias quadratic form is at most the origin's.
    pub grounded_better: bool,
}

/// Ridge-center comparison: with targets linear in ψ, the centered-ridge
/// estimator's conditional `G`-risk is
/// `λ²(β* − β_OBS)ᵀ AGA (β* − β_OBS) + σ² tr(GASA)` against the plain ridge
/// (center 0) with `β*` in place of the bias vector. Both formulas are
/// recomputed by Monte Carlo over fresh noise draws.
pub fn check_obs_center_corollary(
    psi: &Array2<f64>,
    beta_star: &Array1<f64>,
    beta_obs: &Array1<f64>,
    sigma: f64,
    penalty: f64,
    g: &Array2<f64>,
    n_draws: usize,
    seed: u64,
) -> Result<CenterComparison> {
    let d = psi.ncols();
    if beta_star.len() != d || beta_obs.len() != d || g.nrows() != d || g.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: beta_star.len() });
    }
    if penalty <= 0.0 {
        return Err(Error::Config("the comparison needs a positive penalty".into()));
    }
    let s = psi.t().dot(psi);
    let mut s_pen = s.clone();
    for i in 0..d {
        s_pen[[i, i]] += penalty;
    }
    // A = (S + λI)⁻¹ column by column.
    let mut a = Array2::zeros((d, d));
    for j in 0..d {
        let mut e = Array1::zeros(d);
        e[j] = 1.0;
        a.column_mut(j).assign(&eigh_solve(&s_pen, &e));
    }
    let aga = a.t().dot(g).dot(&a);
    let quad = |v: &Array1<f64>| v.dot(&aga.dot(v));
    let trace_term = {
        let gasa = g.dot(&a).dot(&s).dot(&a);
        (0..d).map(|i| gasa[[i, i]]).sum::<f64>() * sigma * sigma
    };
    let bias_g = beta_star - beta_obs;
    let closed_grounded = penalty * penalty * quad(&bias_g) + trace_term;
    let closed_exp = penalty * penalty * quad(beta_star) + trace_term;

    // Monte Carlo over noise draws, paired across the two estimators.
    let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0x6c]));
    let n = psi.nrows();
    let mean_est = psi.dot(beta_star);
    let mut acc = [0.0; 2];
    let mut acc_sq = [0.0; 2];
    for _ in 0..n_draws {
        let eps = Array1::from_shape_fn(n, |_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sigma * g
        });
        let y = &mean_est + &eps;
        let xty = psi.t().dot(&y);
        let grounded = a.dot(&(&xty + &(penalty * beta_obs)));
        let plain = a.dot(&xty);
        for (slot, est) in [grounded, plain].into_iter().enumerate() {
            let err = &est - beta_star;
            let loss = err.dot(&g.dot(&err));
            acc[slot] += loss;
            acc_sq[slot] += loss * loss;
        }
    }
    let nf = n_draws as f64;
    let finalize = |sum: f64, sum_sq: f64| {
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        (mean, (var / nf).sqrt())
    };
    let (mc_grounded, se_grounded) = finalize(acc[0], acc_sq[0]);
    let (mc_exp, se_exp) = finalize(acc[1], acc_sq[1]);
    Ok(CenterComparison {
        closed_grounded,
        closed_exp,
        mc_grounded,
        mc_exp,
        se_grounded,
        se_exp,
        grounded_better: quad(&bias_g) <= quad(beta_star),
    })
}

/// Ridge-center corollary sweep. Violations are normalized ratios (exact
/// identities against 1e-10, Monte-Carlo agreement against 3 standard
/// errors), so the line's tolerance is 1.
pub fn check_center_corollary_suite(seed: u64, n_draws: usize) -> Result<TheoremCheck> {
    let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0x9a]));
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, d) = (48, 5);
    let psi = Array2::from_shape_fn((n, d), |_| gauss());
    let beta_star = Array1::from_shape_fn(d, |_| gauss());
    let (sigma, penalty) = (0.3, 0.9);

    // Identity and an anisotropic positive-definite weighting.
    let mut aniso = Array2::eye(d);
    for i in 0..d {
        aniso[[i, i]] = 0.25 + i as f64;
    }
    aniso[[0, 1]] = 0.2;
    aniso[[1, 0]] = 0.2;

    let mut violation = 0.0_f64;
    for g in [Array2::eye(d), aniso] {
        // Center at the target: bias term vanishes, so the centered side is
        // `σ² tr(GASA)` and can only tie or win.
        let at_star =
            check_obs_center_corollary(&psi, &beta_star, &beta_star, sigma, penalty, &g, 2, seed)?;
        worse(&mut violation, (at_star.closed_exp - at_star.closed_grounded).signum().min(0.0).abs());
        if !at_star.grounded_better {
            worse(&mut violation, f64::INFINITY);
        }

        // Center at 2β*: the two bias quadratic forms coincide, so the
        // closed-form risks tie exactly.
        let doubled = 2.0 * &beta_star;
        let at_double =
            check_obs_center_corollary(&psi, &beta_star, &doubled, sigma, penalty, &g, 2, seed)?;
        worse(
            &mut violation,
            (at_double.closed_grounded - at_double.closed_exp).abs() / 1e-10,
        );

        // Center at −β*: the bias vector doubles, the quadratic form
        // quadruples, and the centered estimator is strictly worse.
        let flipped = -1.0 * &beta_star;
        let at_flip = check_obs_center_corollary(
            &psi, &beta_star, &flipped, sigma, penalty, &g, n_draws, seed,
        )?;
        let bias_term = at_flip.closed_grounded - at_flip.closed_exp;
        let exp_bias = at_flip.closed_exp
            - check_obs_center_corollary(&psi, &beta_star, &beta_star, sigma, penalty, &g, 2, seed)?
                .closed_grounded;
        worse(&mut violation, (bias_term - 3.0 * exp_bias).abs() / (1e-10 * exp_bias.max(1.0)));
        if at_flip.grounded_better {
            worse(&mut violation, f64::INFINITY);
        }
        worse(
            &mut violation,
            (at_flip.closed_grounded - at_flip.mc_grounded).abs() / (3.0 * at_flip.se_grounded),
        );

        // A generic random center, compared against Monte Carlo on both arms.
        let random_center = Array1::from_shape_fn(d, |_| gauss());
        let generic = check_obs_center_corollary(
            &psi, &beta_star, &random_center, sigma, penalty, &g, n_draws, seed,
        )?;
        worse(
            &mut violation,
            (generic.closed_grounded - generic.mc_grounded).abs() / (3.0 * generic.se_grounded),
        );
        worse(
            &mut violation,
            (generic.closed_exp - generic.mc_exp).abs() / (3.0 * generic.se_exp),
        );
    }
    Ok(TheoremCheck { name: "obs_center_corollary", max_violation: violation, tolerance: 1.0 })
}

/// Run every check on `instances` seeded environments and fold each
/// theorem's violations into one line.
pub fn run_all(master_seed: u64, instances: usize) -> Result<Vec<TheoremCheck>> {
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, -0.5];
    let mut lines: Vec<TheoremCheck> = Vec::new();
    let fold = |line: TheoremCheck, lines: &mut Vec<TheoremCheck>| {
        if let Some(existing) = lines.iter_mut().find(|l| l.name == line.name) {
            worse(&mut existing.max_violation, line.max_violation);
        } else {
            lines.push(line);
        }
    };
    for i in 0..instances {
        let seed = mix_fields(&[master_seed, i as u64]);
        let inst = RiskInstance::random(seed);
        fold(check_centered_ridge(seed)?, &mut lines);
        fold(check_oracle_grounding_gain(&inst, &alphas)?, &mut lines);
        let mut rng = ChaCha12Rng::seed_from_u64(mix_fields(&[seed, 0x42]));
        let h_tilde = Array1::from_shape_fn(inst.r_star.len(), |_| -> f64 {
            StandardNormal.sample(&mut rng)
        });
        fold(check_noisy_correction_identity(&inst, &h_tilde, &alphas)?, &mut lines);
        // The anti-aligned correction must also satisfy the identity.
        let anti = -1.0 * &inst.bias();
        fold(check_noisy_correction_identity(&inst, &anti, &alphas)?, &mut lines);
        fold(check_residual_vs_pooling(&inst)?, &mut lines);
        let (strict, margin) = strict_residual_instance(seed)?;
        let mut strict_line = check_residual_vs_pooling(&strict)?;
        if margin <= 1e-6 {
            worse(&mut strict_line.max_violation, f64::INFINITY);
        }
        fold(strict_line, &mut lines);
        fold(check_center_corollary_suite(seed, 10_000)?, &mut lines);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_grounded_linear_at, Family};
    use crate::numerics::ridge::LinearModel;
    use crate::numerics::SparseVec;
    use crate::scm::Source;
    use ndarray::arr1;
    use ndarray::arr2;

    #[test]
    fn centered_ridge_reduces_to_plain_ridge_at_a_zero_center() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let psi = Array2::from_shape_fn((30, 4), |_| gauss());
        let y = Array1::from_shape_fn(30, |_| gauss());
        let centered = centered_ridge(&psi, &y, 0.5, &Array1::zeros(4)).unwrap();
        // Plain ridge by direct normal equations.
        let mut m = psi.t().dot(&psi);
        for i in 0..4 {
            m[[i, i]] += 0.5;
        }
        let plain = eigh_solve(&m, &psi.t().dot(&y));
        for (a, b) in centered.iter().zip(plain.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn an_overwhelming_penalty_pins_the_fit_to_its_center() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let psi = Array2::from_shape_fn((25, 3), |_| gauss());
        let y = Array1::from_shape_fn(25, |_| gauss());
        let center = arr1(&[1.5, -0.25, 0.75]);
        let beta = centered_ridge(&psi, &y, 1e12, &center).unwrap();
        for (b, c) in beta.iter().zip(center.iter()) {
            assert!((b - c).abs() / c.abs() < 1e-4, "{b} vs {c}");
        }
    }

    #[test]
    fn a_two_feature_instance_matches_the_hand_solution() {
        // Ψ = [[1, 0], [0, 2], [1, 1]], y = [1, 2, 3], λ = 1, β_OBS = [1, −1].
        // ΨᵀΨ = [[2, 1], [1, 5]]; Ψᵀy = [4, 7].
        // (ΨᵀΨ + I) β = Ψᵀy + λβ_OBS → [[3, 1], [1, 6]] β = [5, 6]
        // det = 17, β = ([30 − 6]/17, [18 − 5]/17) = (24/17, 13/17).
        let psi = arr2(&[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]);
        let y = arr1(&[1.0, 2.0, 3.0]);
        let beta = centered_ridge(&psi, &y, 1.0, &arr1(&[1.0, -1.0])).unwrap();
        assert!((beta[0] - 24.0 / 17.0).abs() < 1e-12);
        assert!((beta[1] - 13.0 / 17.0).abs() < 1e-12);
        assert!(centered_ridge(&psi, &y, 0.0, &arr1(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn projections_split_along_the_span() {
        let n = 64;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let psi = Array2::from_shape_fn((n, 3), |_| gauss());
        let w = Array1::from_elem(n, 1.0 / n as f64);

        // A vector already in the span projects to itself.
        let in_span = psi.dot(&arr1(&[0.5, -1.0, 2.0]));
        let (h, r) = l2_project(&in_span, &psi, &w).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10));
        assert!(h.iter().zip(in_span.iter()).all(|(a, b)| (a - b).abs() < 1e-10));

        // A constructed orthogonal vector projects to zero: take any vector
        // and keep only its residual.
        let probe = Array1::from_shape_fn(n, |_| gauss());
        let (_, orth) = l2_project(&probe, &psi, &w).unwrap();
        let (h0, _) = l2_project(&orth, &psi, &w).unwrap();
        assert!(h0.iter().all(|v| v.abs() < 1e-10));

        // Random vector: residual ⟂ every column, and Pythagoras holds.
        let b = Array1::from_shape_fn(n, |_| gauss());
        let (hb, rb) = l2_project(&b, &psi, &w).unwrap();
        for col in psi.t().rows() {
            let ip: f64 = col.iter().zip(&rb).zip(&w).map(|((&c, &r), &wi)| wi * c * r).sum();
            assert!(ip.abs() < 1e-10, "residual correlates with a column: {ip}");
        }
        let norm = |v: &Array1<f64>| v.iter().zip(&w).map(|(&x, &wi)| wi * x * x).sum::<f64>();
        assert!((norm(&b) - norm(&hb) - norm(&rb)).abs() < 1e-10);
    }

    #[test]
    fn grounding_gain_holds_at_its_endpoints() {
        let inst = RiskInstance::random(6);
        let b = inst.bias();
        let (h, _) = l2_project(&b, &inst.psi, &inst.weights).unwrap();
        let risk_obs = inst.risk(inst.f_obs.view());
        // α = 0 leaves the baseline untouched.
        assert_eq!(inst.risk(inst.f_obs.view()), risk_obs);
        // α = 1 claims the full projected-bias norm.
        let full = &inst.f_obs - &h;
        let gain = risk_obs - inst.risk(full.view());
        assert!((gain - inst.norm_sq(h.view())).abs() < 1e-10);
        let check = check_oracle_grounding_gain(&inst, &[0.0, 0.5, 1.0]).unwrap();
        assert!(check.passed(), "{}", check.line());
    }

    #[test]
    fn misaligned_corrections_obey_the_identity_and_hurt() {
        let inst = RiskInstance::random(7);
        let b = inst.bias();
        let risk_obs = inst.risk(inst.f_obs.view());

        // h̃ = b at α = 1 removes the bias exactly: risk falls to the floor.
        let fixed = &inst.f_obs - &b;
        assert!((inst.risk(fixed.view()) - inst.sigma_e * inst.sigma_e).abs() < 1e-12);

        // h̃ = −b at α = 1 triples the bias cost.
        let anti = -1.0 * &b;
        let hurt = &inst.f_obs - &(1.0 * &anti);
        let delta = inst.risk(hurt.view()) - risk_obs;
        assert!((delta - 3.0 * inst.norm_sq(b.view())).abs() < 1e-10);
        assert!(delta > 0.0);

        let check = check_noisy_correction_identity(&inst, &anti, &[0.25, 1.0]).unwrap();
        assert!(check.passed(), "{}", check.line());
    }

    #[test]
    fn pooling_comparison_covers_exact_strict_and_nested_cases() {
        // Baseline equal to the target: the residual route is already exact.
        let base = RiskInstance::random(8);
        let exact = RiskInstance::new(
            base.psi.clone(),
            base.phi.clone(),
            base.f_obs.clone(),
            base.f_obs.clone(),
            base.weights.clone(),
            base.sigma_e,
        )
        .unwrap();
        let gap = &exact.r_star - &exact.f_obs;
        let (h, r) = l2_project(&gap, &exact.psi, &exact.weights).unwrap();
        assert!(exact.norm_sq(r.view()) < 1e-20);
        let risk = exact.risk((&exact.f_obs + &h).view());
        assert!((risk - exact.sigma_e * exact.sigma_e).abs() < 1e-12);
        assert!(check_residual_vs_pooling(&exact).unwrap().passed());

        // The strict construction keeps a real margin.
        let (strict, margin) = strict_residual_instance(8).unwrap();
        assert!(margin > 1e-6, "strict margin {margin}");
        assert!(check_residual_vs_pooling(&strict).unwrap().passed());

        // Nested spans: φ ⊇ ψ and the baseline lives in φ, so pooling can
        // only be closer.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let n = 128;
        let psi = Array2::from_shape_fn((n, 3), |_| gauss());
        let mut phi = Array2::zeros((n, 5));
        phi.slice_mut(ndarray::s![.., ..3]).assign(&psi);
        for i in 0..n {
            for j in 3..5 {
                phi[[i, j]] = gauss();
            }
        }
        let f_obs = phi.dot(&arr1(&[0.3, -0.2, 0.8, 1.1, -0.4]));
        let r_star = Array1::from_shape_fn(n, |_| gauss());
        let inst = RiskInstance::uniform(psi, phi, r_star, f_obs, 0.2).unwrap();
        let gap = &inst.r_star - &inst.f_obs;
        let (_, res_r) = l2_project(&gap, &inst.psi, &inst.weights).unwrap();
        let (_, pool_r) = l2_project(&inst.r_star, &inst.phi, &inst.weights).unwrap();
        assert!(inst.norm_sq(pool_r.view()) <= inst.norm_sq(res_r.view()) + 1e-12);
        assert!(check_residual_vs_pooling(&inst).unwrap().passed());
    }

    #[test]
    fn center_comparison_matches_monte_carlo_and_its_special_cases() {
        let check = check_center_corollary_suite(11, 10_000).unwrap();
        assert!(check.passed(), "{}", check.line());

        // Direct read of the three centers with the identity weighting.
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let psi = Array2::from_shape_fn((40, 4), |_| gauss());
        let beta_star = Array1::from_shape_fn(4, |_| gauss());
        let g = Array2::eye(4);
        let run = |center: &Array1<f64>, draws: usize, seed: u64| {
            check_obs_center_corollary(&psi, &beta_star, center, 0.25, 0.8, &g, draws, seed)
                .unwrap()
        };
        let at_star = run(&beta_star, 2, 13);
        assert!(at_star.grounded_better);
        assert!(at_star.closed_grounded <= at_star.closed_exp);
        let at_double = run(&(2.0 * &beta_star), 2, 13);
        assert!((at_double.closed_grounded - at_double.closed_exp).abs() < 1e-10);
        let at_flip = run(&(-1.0 * &beta_star), 20_000, 13);
        assert!(!at_flip.grounded_better);
        let bias_grounded = at_flip.closed_grounded - at_star.closed_grounded;
        let bias_exp = at_flip.closed_exp - at_star.closed_grounded;
        assert!((bias_grounded - 4.0 * bias_exp).abs() < 1e-10 * bias_exp.max(1.0));
        assert!((at_flip.mc_grounded - at_flip.closed_grounded).abs() < 3.0 * at_flip.se_grounded);
    }

    #[test]
    fn every_line_passes_and_reports_its_tolerance() {
        let lines = run_all(2024, 3).unwrap();
        assert_eq!(lines.len(), 5);
        for l in &lines {
            assert!(l.passed(), "{}", l.line());
            assert!(l.line().contains("ok"));
        }
        let names: Vec<&str> = lines.iter().map(|l| l.name).collect();
        assert!(names.contains(&"centered_ridge"));
        assert!(names.contains(&"oracle_grounding_gain"));
        assert!(names.contains(&"noisy_correction_identity"));
        assert!(names.contains(&"residual_vs_pooling"));
        assert!(names.contains(&"obs_center_corollary"));
    }

    /// The estimator module's linear correction at full strength is the
    /// centered-ridge estimator on the same design.
    #[test]
    fn the_grounded_fit_is_centered_ridge_on_its_design() {
        let d = 4;
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let proxy = std::sync::Arc::new(crate::estimators::testutil::axis_proxy(d, d));

        // Baseline linear in the readout coordinates; symmetric rows make the
        // unpenalized intercept vanish so both objectives coincide.
        let beta_obs = arr1(&[0.3, -0.2, 0.45, 0.1]);
        let baseline = LinearModel { weights: beta_obs.clone(), intercept: 0.0, penalty: 0.0 };
        let mut rows = Vec::new();
        let mut psi_mat = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..12 {
            let x: Vec<f64> = (0..d).map(|_| gauss()).collect();
            let y = gauss() * 0.2;
            for sign in [1.0, -1.0] {
                let coords: Vec<f64> = x.iter().map(|&v| sign * v).collect();
                psi_mat.push(coords.clone());
                ys.push(sign * y);
                rows.push(crate::scm::ScmSample {
                    context_id: 0,
                    segment: 0,
                    latent: Array1::zeros(1),
                    action: 0,
                    phi: SparseVec::from_pairs(d, vec![]),
                    dense: SparseVec::from_pairs(
                        d,
                        coords.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect(),
                    ),
                    hidden: Array1::zeros(1),
                    outcomes: vec![sign * y],
                    aux: None,
                    source: Source::Exp,
                });
            }
        }
        let n = rows.len();
        let mean_penalty = 0.05;
        let model = fit_grounded_linear_at(&baseline, &rows, 0, &proxy, 1.0, mean_penalty).unwrap();
        assert_eq!(model.family, Family::GroundedLin);
        assert!(model.head.intercept.abs() < 1e-12, "symmetry should kill the intercept");

        // Mean-loss penalty p equals sum-loss penalty n·p on the same design.
        let psi = Array2::from_shape_vec((n, d), psi_mat.into_iter().flatten().collect()).unwrap();
        let y = Array1::from(ys);
        let beta_g =
            centered_ridge(&psi, &y, n as f64 * mean_penalty, &beta_obs).unwrap();
        let implemented = &beta_obs - &model.head.weights;
        for (a, b) in implemented.iter().zip(beta_g.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
