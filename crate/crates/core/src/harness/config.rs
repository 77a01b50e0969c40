//! Sweep configuration: the one file that determines every output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Family, FitOptions};
use crate::scm::outcome::RewardMode;
use crate::scm::params::GeneratorConfig;
use crate::scm::RouterKind;

/// Knobs for the value-estimation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuesOptions {
    /// Fresh simulator draws per (evaluation context, agent) behind the
    /// direct-method table.
    pub dm_draws: usize,
    /// Cross-fitting folds for the doubly robust residual correction.
    pub dr_folds: usize,
}

impl Default for ValuesOptions {
    fn default() -> Self {
        ValuesOptions { dm_draws: 5, dr_folds: 5 }
    }
}

/// Full sweep specification. The default value is the standard comparison
/// grid: a β sweep crossed with two log sizes and two randomized budgets,
/// scalar rewards, mixture routing, all eight families, thirty paired seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub master_seed: u64,
    /// Paired replications per cell.
    pub seeds: u64,
    pub router: RouterKind,
    pub betas: Vec<f64>,
    pub n_obs: Vec<usize>,
    pub n_exp: Vec<usize>,
    /// Reward maps scored in every cell. All maps share the same generated
    /// draws, so comparisons across maps are paired sample-for-sample.
    pub modes: Vec<RewardMode>,
    pub methods: Vec<Family>,
    pub generator: GeneratorConfig,
    pub fit: FitOptions,
    pub values: ValuesOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            master_seed: 2024,
            seeds: 30,
            router: RouterKind::Mixture,
            betas: vec![0.0, 0.2, 0.5, 0.8, 0.9, 0.99],
            n_obs: vec![2000, 20_000],
            n_exp: vec![20, 100],
            modes: vec![RewardMode::Scalar],
            methods: Family::ALL.to_vec(),
            generator: GeneratorConfig::default(),
            fit: FitOptions::default(),
            values: ValuesOptions::default(),
        }
    }
}

impl SweepConfig {
    /// The coding-reward crossover grid: a 5×5 sweep of the fix-weight and
    /// weak-component mixtures at one fixed data regime, softmax routing.
    pub fn coding_preset() -> Self {
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut modes = Vec::new();
        for &alpha_fix in &levels {
            for &omega_weak in &levels {
                modes.push(RewardMode::Coding { alpha_fix, omega_weak });
            }
        }
        SweepConfig {
            seeds: 10,
            router: RouterKind::Softmax,
            betas: vec![0.5],
            n_obs: vec![2000],
            n_exp: vec![100],
            modes,
            ..SweepConfig::default()
        }
    }

    /// Smooth-versus-sharpened rubric comparison at the same fixed regime,
    /// both maps scored on identical draws.
    pub fn rubric_preset() -> Self {
        SweepConfig {
            seeds: 10,
            router: RouterKind::Softmax,
            betas: vec![0.5],
            n_obs: vec![2000],
            n_exp: vec![100],
            modes: vec![RewardMode::RubricSmooth, RewardMode::RubricSharp],
            ..SweepConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config render: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no estimator families selected".into()));
        }
        if self.betas.is_empty() || self.n_obs.is_empty() || self.n_exp.is_empty() {
            return Err(Error::Config("every sweep axis needs at least one level".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one reward map is required".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !self.betas.iter().all(|b| (0.0..=1.0).contains(b)) {
            return Err(Error::Config("beta levels must lie in [0, 1]".into()));
        }
        if self.n_obs.iter().any(|&n| n < 2) || self.n_exp.iter().any(|&n| n < 2) {
            return Err(Error::Config("sample-size levels must be at least 2".into()));
        }
        for m in &self.methods {
            if self.methods.iter().filter(|x| *x == m).count() > 1 {
                return Err(Error::Config(format!("family {m} listed twice")));
            }
        }
        if self.values.dm_draws == 0 {
            return Err(Error::Config("dm_draws must be positive".into()));
        }
        if self.values.dr_folds < 2 {
            return Err(Error::Config("dr_folds must be at least 2".into()));
        }
        for mode in &self.modes {
            if let RewardMode::Coding { alpha_fix, omega_weak } = mode {
                if !(0.0..=1.0).contains(alpha_fix) || !(0.0..=1.0).contains(omega_weak) {
                    return Err(Error::Config("coding mixture weights must lie in [0, 1]".into()));
                }
            }
        }
        self.generator.validate()
    }

    /// Every (β, n_obs, n_exp, mode) cell of the grid, in deterministic
    /// sweep order.
    pub fn cells(&self) -> Vec<crate::metrics::CellKey> {
        let mut out = Vec::new();
        for &beta in &self.betas {
            for &n_obs in &self.n_obs {
                for &n_exp in &self.n_exp {
                    for mode in &self.modes {
                        out.push(crate::metrics::CellKey {
                            beta,
                            n_obs,
                            n_exp,
                            mode: mode.label(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_default_grid_has_twenty_four_cells() {
        let cfg = SweepConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.cells().len(), 24);
        assert_eq!(cfg.methods.len(), 8);
        assert_eq!(cfg.seeds, 30);
    }

    #[test]
    fn the_coding_preset_is_a_five_by_five_mixture_grid() {
        let cfg = SweepConfig::coding_preset();
        cfg.validate().unwrap();
        assert_eq!(cfg.cells().len(), 25);
        assert_eq!(cfg.router, RouterKind::Softmax);
        assert_eq!((cfg.betas[0], cfg.n_obs[0], cfg.n_exp[0]), (0.5, 2000, 100));
    }

    #[test]
    fn configs_round_trip_through_toml() {
        for cfg in [SweepConfig::default(), SweepConfig::coding_preset(), SweepConfig::rubric_preset()]
        {
            let text = cfg.to_toml().unwrap();
            let back = SweepConfig::from_toml(&text).unwrap();
            assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
        }
    }

    #[test]
    fn partial_files_inherit_defaults() {
        let cfg = SweepConfig::from_toml(
            "seeds = 3\nbetas = [0.5]\n[[modes]]\nkind = \"rubric_sharp\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.betas, vec![0.5]);
        assert_eq!(cfg.modes, vec![RewardMode::RubricSharp]);
        assert_eq!(cfg.n_obs, vec![2000, 20_000]);
        assert_eq!(cfg.master_seed, 2024);
    }

    #[test]
    fn bad_configs_are_rejected_with_reasons() {
        let mut empty_methods = SweepConfig::default();
        empty_methods.methods.clear();
        assert!(empty_methods.validate().is_err());

        let mut bad_beta = SweepConfig::default();
        bad_beta.betas = vec![1.5];
        assert!(bad_beta.validate().is_err());

        let mut dup = SweepConfig::default();
        dup.methods = vec![Family::Cvci, Family::Cvci];
        assert!(dup.validate().is_err());

        assert!(SweepConfig::from_toml("not_a_field = 1").is_err());
    }
}
