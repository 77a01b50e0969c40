//! The fitted reward-model container shared by every estimator family.
//!
//! All families predict through one rule shape: an optional observational
//! baseline `f_OBS`, an optional proxy-space correction or residual head, and
//! a final clip to `[0,1]`. Keeping them in a single struct means the value
//! estimators, tuning loops, and the sweep runner can treat every family
//! uniformly — `predict` on a densified mediator representation — while the
//! family tag records which algebraic form the fields encode.

use crate::error::{Error, Result};
use crate::numerics::hashing::SparseVec;
use crate::numerics::pca::ProjectionMap;
use crate::numerics::ridge::{clip01, LinearModel};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::proxy::ProxyMap;

/// Estimator family tags. The serialized names double as the method labels
/// in emitted CSV reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "EXP_ONLY")]
    ExpOnly,
    #[serde(rename = "OBS_ONLY")]
    ObsOnly,
    #[serde(rename = "PROXY_EXP")]
    ProxyExp,
    #[serde(rename = "GROUNDED_LIN")]
    GroundedLin,
    #[serde(rename = "GROUNDED_RICH")]
    GroundedRich,
    #[serde(rename = "GROUNDED_ANCHOR")]
    GroundedAnchor,
    #[serde(rename = "CVCI")]
    Cvci,
    #[serde(rename = "CVCI_RES")]
    CvciRes,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::ExpOnly,
        Family::ObsOnly,
        Family::ProxyExp,
        Family::GroundedLin,
        Family::GroundedRich,
        Family::GroundedAnchor,
        Family::Cvci,
        Family::CvciRes,
    ];

    /// Stable label used in CSV output and log lines.
    pub fn label(&self) -> &'static str {
        match self {
            Family::ExpOnly => "EXP_ONLY",
            Family::ObsOnly => "OBS_ONLY",
            Family::ProxyExp => "PROXY_EXP",
            Family::GroundedLin => "GROUNDED_LIN",
            Family::GroundedRich => "GROUNDED_RICH",
            Family::GroundedAnchor => "GROUNDED_ANCHOR",
            Family::Cvci => "CVCI",
            Family::CvciRes => "CVCI_RES",
        }
    }

    pub fn parse_label(s: &str) -> Result<Family> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator family `{s}`")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Correction basis for the rich grounded variants: identity features or the
/// degree-2 expansion `[u, u ⊙ u]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Id,
    Poly2,
}

impl BasisKind {
    pub fn expanded_dim(&self, d: usize) -> usize {
        match self {
            BasisKind::Id => d,
            BasisKind::Poly2 => 2 * d,
        }
    }

    /// Expand a compressed proxy vector into basis features.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        match self {
            BasisKind::Id => u.to_vec(),
            BasisKind::Poly2 => {
                let mut out = Vec::with_capacity(2 * u.len());
                out.extend_from_slice(u);
                out.extend(u.iter().map(|v| v * v));
                out
            }
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisKind::Id => "id",
            BasisKind::Poly2 => "poly2",
        })
    }
}

/// A fitted reward model. Exactly the fields used by the family's prediction
/// form are populated; the rest stay `None`.
///
/// Prediction forms (everything finally clipped to `[0,1]`; `f` is the raw,
/// unclipped baseline score and `ψ` the standardized proxy features):
///
/// * `EXP_ONLY`, `OBS_ONLY`, `CVCI` — `clip(head(z))` on densified features.
/// * `PROXY_EXP` — `clip(head(ψ(z)))`.
/// * `GROUNDED_LIN` — `clip(f(z) − α·head(ψ(z)))`.
/// * `GROUNDED_RICH` — `clip(f(z) − α·head(B(ψ̃(z))))` with compressed `ψ̃`.
/// * `GROUNDED_ANCHOR` — `clip(b·f(z) − a·head(B(ψ̃(z))))` with pooled `(b,a)`.
/// * `CVCI_RES` — `clip(f(z) + head(ψ(z)))`.
///
/// The proxy map and compression are shared between models of one cell via
/// `Arc` and are excluded from the serialized audit record (the coefficient
/// vectors and hyperparameters are what reviews need; the maps are emitted
/// once per cell by the harness if requested).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardModel {
    pub family: Family,
    /// Head coefficients: the main regression for the pooled/raw families,
    /// the correction (or residual) regression for baseline-carrying ones.
    pub head: LinearModel,
    /// Raw observational baseline score `f_OBS`; clipping happens only at
    /// prediction time so corrections act on the unclipped scale.
    pub baseline: Option<LinearModel>,
    pub basis: Option<BasisKind>,
    /// Correction shrinkage α ∈ [0,1] for the grounded lin/rich forms.
    pub alpha_corr: Option<f64>,
    /// OBS pooling weight λ ∈ [0,1] for the pooled families and the anchor.
    pub lambda_pool: Option<f64>,
    /// Anchored calibration coefficients `(b, a)` for the pooled-anchor form.
    pub anchor: Option<(f64, f64)>,
    #[serde(skip)]
    pub proxy: Option<Arc<ProxyMap>>,
    #[serde(skip)]
    pub compression: Option<Arc<ProjectionMap>>,
}

impl RewardModel {
    /// Minimal constructor for the families that are a bare clipped head.
    pub fn plain(family: Family, head: LinearModel) -> Self {
        RewardModel {
            family,
            head,
            baseline: None,
            basis: None,
            alpha_corr: None,
            lambda_pool: None,
            anchor: None,
            proxy: None,
            compression: None,
        }
    }

    fn proxy_features(&self, dense: &SparseVec) -> Result<ndarray::Array1<f64>> {
        let proxy = self.proxy.as_ref().ok_or(Error::ProxyRequiresAux)?;
        proxy.apply(dense)
    }

    fn correction_input(&self, dense: &SparseVec) -> Result<Vec<f64>> {
        let psi = self.proxy_features(dense)?;
        let coords = match &self.compression {
            Some(c) => c.project(psi.view())?,
            None => psi,
        };
        let basis = self.basis.unwrap_or(BasisKind::Id);
        Ok(basis.expand(coords.as_slice().expect("contiguous proxy coords")))
    }

    fn baseline_raw(&self, dense: &SparseVec) -> Result<f64> {
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} model is missing its baseline", self.family)))?;
        Ok(b.raw_sparse(dense))
    }

    /// Raw correction value `head(B(ψ̃(z)))` of a grounded model — the
    /// learned direction the anchored variant recalibrates.
    pub fn correction_value(&self, dense: &SparseVec) -> Result<f64> {
        let psi = self.proxy_features(dense)?;
        let coords = match &self.compression {
            Some(c) => c.project(psi.view())?,
            None => psi,
        };
        Ok(self.correction_from_coords(coords.as_slice().expect("contiguous proxy coords")))
    }

    /// [`Self::correction_value`] with the proxy/compression stage already
    /// applied. Fitting loops that sweep many corrections over the same rows
    /// cache the projected coordinates and enter here.
    pub fn correction_from_coords(&self, coords: &[f64]) -> f64 {
        let basis = self.basis.unwrap_or(BasisKind::Id);
        let b = basis.expand(coords);
        self.head.weights.dot(&ndarray::aview1(&b)) + self.head.intercept
    }

    /// Clipped reward prediction on a densified mediator representation.
    pub fn predict(&self, dense: &SparseVec) -> Result<f64> {
        let raw = match self.family {
            Family::ExpOnly | Family::ObsOnly | Family::Cvci => self.head.raw_sparse(dense),
            Family::ProxyExp => {
                let psi = self.proxy_features(dense)?;
                self.head.raw(psi.view())
            }
            Family::GroundedLin | Family::GroundedRich => {
                let alpha = self.alpha_corr.unwrap_or(0.0);
                let f = self.baseline_raw(dense)?;
                if alpha == 0.0 {
                    // Correction entirely off: identical to the clipped
                    // baseline, without touching the proxy path.
                    f
                } else {
                    let b = self.correction_input(dense)?;
                    f - alpha * (self.head.weights.dot(&ndarray::aview1(&b)) + self.head.intercept)
                }
            }
            Family::GroundedAnchor => {
                let (b_cal, a_cal) = self
                    .anchor
                    .ok_or_else(|| Error::Config("anchor model is missing (b, a)".into()))?;
                let f = self.baseline_raw(dense)?;
                let b = self.correction_input(dense)?;
                b_cal * f - a_cal * (self.head.weights.dot(&ndarray::aview1(&b)) + self.head.intercept)
            }
            Family::CvciRes => {
                let f = self.baseline_raw(dense)?;
                let psi = self.proxy_features(dense)?;
                f + self.head.raw(psi.view())
            }
        };
        Ok(clip01(raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn head(w: Vec<f64>, b: f64) -> LinearModel {
        LinearModel { weights: Array1::from_vec(w), intercept: b, penalty: 1.0 }
    }

    #[test]
    fn family_labels_round_trip_serde_and_parse() {
        for f in Family::ALL {
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.label()));
            let back: Family = serde_json::from_str(&json).unwrap();
            assert_eq!(back, f);
            assert_eq!(Family::parse_label(f.label()).unwrap(), f);
        }
        assert!(Family::parse_label("MYSTERY").is_err());
    }

    #[test]
    fn poly2_basis_appends_squares() {
        let u = [1.5, -2.0];
        assert_eq!(BasisKind::Id.expand(&u), vec![1.5, -2.0]);
        assert_eq!(BasisKind::Poly2.expand(&u), vec![1.5, -2.0, 2.25, 4.0]);
        assert_eq!(BasisKind::Poly2.expanded_dim(2), 4);
    }

    #[test]
    fn plain_prediction_is_clipped() {
        let m = RewardModel::plain(Family::ExpOnly, head(vec![10.0, 0.0], 0.0));
        let hi = SparseVec::from_pairs(2, vec![(0, 1.0)]);
        let lo = SparseVec::from_pairs(2, vec![(0, -1.0)]);
        assert_eq!(m.predict(&hi).unwrap(), 1.0);
        assert_eq!(m.predict(&lo).unwrap(), 0.0);
        let mid = SparseVec::from_pairs(2, vec![(0, 0.03)]);
        assert!((m.predict(&mid).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn model_json_keeps_coefficients_and_hyperparameters() {
        let mut m = RewardModel::plain(Family::GroundedLin, head(vec![0.25], -0.1));
        m.baseline = Some(head(vec![1.0], 0.2));
        m.alpha_corr = Some(0.75);
        m.basis = Some(BasisKind::Poly2);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["family"], "GROUNDED_LIN");
        assert_eq!(json["alpha_corr"], 0.75);
        assert_eq!(json["basis"], "poly2");
        assert_eq!(json["head"]["weights"]["data"].as_array().unwrap().len(), 1);
        let back: RewardModel = serde_json::from_value(json).unwrap();
        assert_eq!(back.family, Family::GroundedLin);
        assert!(back.proxy.is_none());
        assert!((back.head.intercept + 0.1).abs() < 1e-15);
    }
}
