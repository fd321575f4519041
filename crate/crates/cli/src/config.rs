//! Run configuration. One TOML file; every section is optional and defaults
//! to the reference estimates, and unknown keys are rejected.

use std::path::Path;

use prospectus_core::estimation::synthetic::{ChoiceDesign, LotteryDesign};
use prospectus_core::estimation::{CptBounds, MixedLogitSpec, ProbabilityBand};
use prospectus_core::experiments::{ExperimentSetup, TariffGrid};
use prospectus_core::prospect::{ContinuousProspect, CptParams, Reference, UtilityCoefficients};
use prospectus_core::quadrature::QuadratureConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub utility: UtilityCoefficients,
    pub cpt: CptParams,
    pub reference: Reference,
    pub quadrature: QuadratureConfig,
    pub experiments: ExperimentsConfig,
    pub estimation: EstimationConfig,
    pub detection: DetectionConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            utility: UtilityCoefficients::table1_means(),
            cpt: CptParams::estimated_means(),
            reference: Reference::Static { value: 0.0 },
            quadrature: QuadratureConfig::default(),
            experiments: ExperimentsConfig::default(),
            estimation: EstimationConfig::default(),
            detection: DetectionConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsConfig {
    pub setup: ExperimentSetup,
    pub mixed: MixedConfig,
    pub lambda_star: LambdaStarConfig,
    pub selfref: SelfReferenceConfig,
    pub monotonicity: MonotonicityConfig,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        Self {
            setup: ExperimentSetup::paper_defaults(),
            mixed: MixedConfig::default(),
            lambda_star: LambdaStarConfig::default(),
            selfref: SelfReferenceConfig::default(),
            monotonicity: MonotonicityConfig::default(),
        }
    }
}

/// The mixed prospect and the number of tariffs on `[γ_lower, γ_upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixedConfig {
    pub distribution: ContinuousProspect,
    pub n_points: usize,
}

impl Default for MixedConfig {
    fn default() -> Self {
        Self {
            distribution: ContinuousProspect::normal_truncated(-7.0, 4.0 / 12.0, -9.0, -5.0)
                .expect("default normal prospect is valid"),
            n_points: 50,
        }
    }
}

/// `λ*` on the two-point prospect with mass `p_lo` on `x̲`, and the `λ`
/// values at which `U^s_Ū < 0` is confirmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaStarConfig {
    pub p_lo: f64,
    pub bracket: [f64; 2],
    pub tol: f64,
    pub check_lambdas: Vec<f64>,
}

impl Default for LambdaStarConfig {
    fn default() -> Self {
        Self { p_lo: 0.5, bracket: [1e-9, 1e6], tol: 1e-12, check_lambdas: vec![2.0, 5.0, 20.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfReferenceConfig {
    pub tariff_grid: TariffGrid,
}

impl Default for SelfReferenceConfig {
    fn default() -> Self {
        Self { tariff_grid: TariffGrid { gamma_min: -40.0, gamma_max: 40.0, n_points: 200 } }
    }
}

/// References checked for a strictly decreasing acceptance probability on
/// the two-point prospect with mass `p_lo` on `x̲`. An empty list means a
/// static reference at 0 and a tariff-linked reference at the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotonicityConfig {
    pub p_lo: f64,
    pub references: Vec<Reference>,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        Self { p_lo: 0.5, references: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub seed: u64,
    pub n_draws: usize,
    pub random: Vec<String>,
    pub n_starts: usize,
    pub cpt_init: CptParams,
    pub cpt_bounds: CptBounds,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_draws: 500,
            random: MixedLogitSpec::all_random().random,
            n_starts: 8,
            cpt_init: CptParams::risk_neutral().with_lambda(2.0),
            cpt_bounds: CptBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub reflection_margin: f64,
    pub weighting_margin: f64,
    pub bands: Vec<ProbabilityBand>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { reflection_margin: 0.05, weighting_margin: 0.05, bands: ProbabilityBand::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub seed: u64,
    pub choice: ChoiceSimulation,
    pub ce: CeSimulation,
    pub lottery: LotterySimulation,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            choice: ChoiceSimulation::default(),
            ce: CeSimulation::default(),
            lottery: LotterySimulation::default(),
        }
    }
}

/// Respondents draw coefficients around `[utility]` with these standard
/// deviations on the coefficients listed in `random`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChoiceSimulation {
    pub design: ChoiceDesign,
    pub sd: UtilityCoefficients,
    pub random: Vec<String>,
}

impl Default for ChoiceSimulation {
    fn default() -> Self {
        Self {
            design: ChoiceDesign { n_respondents: 2000, tasks_per_respondent: 12 },
            sd: UtilityCoefficients::table1_sds(),
            random: MixedLogitSpec::all_random().random,
        }
    }
}

/// Certainty equivalents of the `[cpt]` agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeSimulation {
    pub n: usize,
    pub noise: f64,
}

impl Default for CeSimulation {
    fn default() -> Self {
        Self { n: 150, noise: 0.0 }
    }
}

/// Agents drawn around `mean` with `sd`; a zero `sd` gives identical agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LotterySimulation {
    pub design: LotteryDesign,
    pub mean: CptParams,
    pub sd: CptParams,
    pub n_agents: usize,
    pub noise: f64,
}

impl Default for LotterySimulation {
    fn default() -> Self {
        Self {
            design: LotteryDesign::default(),
            mean: CptParams::estimated_means(),
            sd: CptParams::estimated_sds(),
            n_agents: 300,
            noise: 0.01,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text, &p.display().to_string())
            }
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.estimation.seed = s;
            self.simulate.seed = s;
        }
        self
    }

    /// Checks every nested invariant before any computation runs.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.utility.validate()?;
        self.cpt.validate()?;
        self.reference.resolve(Some(prospectus_core::prospect::TariffContext { b: self.utility.b, gamma: 0.0 }))?;
        let ex = &self.experiments;
        ex.setup.validate()?;
        if ex.mixed.n_points < 2 {
            return Err(CliError::Config("experiments.mixed.n_points must be at least 2".into()));
        }
        let ls = &ex.lambda_star;
        if !(ls.p_lo > 0.0 && ls.p_lo < 1.0) {
            return Err(CliError::Config("experiments.lambda_star.p_lo must lie in (0, 1)".into()));
        }
        if !(ls.bracket[0] > 0.0 && ls.bracket[1] > ls.bracket[0] && ls.bracket[1].is_finite()) {
            return Err(CliError::Config("experiments.lambda_star.bracket needs 0 < lower < upper < inf".into()));
        }
        if !(ls.tol > 0.0) {
            return Err(CliError::Config("experiments.lambda_star.tol must be positive".into()));
        }
        if ls.check_lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(CliError::Config("experiments.lambda_star.check_lambdas must be positive".into()));
        }
        ex.selfref.tariff_grid.validate()?;
        if !(ex.monotonicity.p_lo > 0.0 && ex.monotonicity.p_lo < 1.0) {
            return Err(CliError::Config("experiments.monotonicity.p_lo must lie in (0, 1)".into()));
        }

        let est = &self.estimation;
        MixedLogitSpec { random: est.random.clone() }.validate()?;
        if est.n_draws < 100 {
            return Err(CliError::Config("estimation.n_draws must be at least 100".into()));
        }
        if est.n_starts == 0 {
            return Err(CliError::Config("estimation.n_starts must be at least 1".into()));
        }
        est.cpt_init.validate()?;
        est.cpt_bounds.validate()?;

        let det = &self.detection;
        if !(0.0..1.0).contains(&det.reflection_margin) || !(det.weighting_margin >= 0.0 && det.weighting_margin.is_finite()) {
            return Err(CliError::Config(
                "detection margins need 0 <= reflection_margin < 1 and weighting_margin >= 0".into(),
            ));
        }
        if det.bands.is_empty() {
            return Err(CliError::Config("detection.bands must name at least one band".into()));
        }

        let sim = &self.simulate;
        MixedLogitSpec { random: sim.choice.random.clone() }.validate()?;
        if sim.choice.design.n_respondents == 0 || sim.choice.design.tasks_per_respondent == 0 {
            return Err(CliError::Config("simulate.choice.design needs respondents and tasks".into()));
        }
        for (name, noise) in [("simulate.ce.noise", sim.ce.noise), ("simulate.lottery.noise", sim.lottery.noise)] {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(CliError::Config(format!("{name} must be finite and non-negative")));
            }
        }
        sim.lottery.mean.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("", "inline").unwrap(), RunConfig::default());
    }

    #[test]
    fn committed_defaults_match_built_in_defaults() {
        let text = include_str!("../../../configs/paper-defaults.toml");
        assert_eq!(RunConfig::from_toml(text, "paper-defaults.toml").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[cpt]\nalpha_gain = 0.5\ngamma = 1\n", "inline").unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }), "{err}");
        let err = RunConfig::from_toml("[experiments.setup]\nsurprise = 1\n", "inline").unwrap_err();
        assert!(err.to_string().contains("surprise"), "{err}");
    }

    #[test]
    fn nested_invariants_are_checked() {
        let text = "[experiments.setup]\nx_hi = -5.0\nx_lo = -4.0\na_o = -7.0\nb = -0.05\n\
                    [experiments.setup.cpt]\nalpha_gain = 0.5\nalpha_loss = 0.5\nbeta_gain = 0.5\nbeta_loss = 0.5\nlambda = 2.0\n\
                    [experiments.setup.tariff_grid]\ngamma_min = 0.0\ngamma_max = 1.0\nn_points = 5\n";
        assert!(RunConfig::from_toml(text, "inline").is_err());
        assert!(RunConfig::from_toml("[estimation]\nn_draws = 10\n", "inline").is_err());
        assert!(RunConfig::from_toml("[estimation]\nrandom = [\"gamma\"]\n", "inline").is_err());
        assert!(RunConfig::from_toml("schema_version = 2\n", "inline").is_err());
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let c = RunConfig::default().with_seed(Some(9));
        assert_eq!((c.estimation.seed, c.simulate.seed), (9, 9));
    }
}
