//! Parameter estimation: mixed logit by maximum simulated likelihood,
//! CPT parameters by nonlinear least squares on certainty equivalents, and
//! detectors for CPT effects in lottery responses.

pub mod cpt_nls;
pub mod detectors;
pub mod halton;
pub mod mixed_logit;
pub mod optim;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use cpt_nls::{fit_cpt_nls, CertaintyEquivalentObservation, CptBounds, Frame};
pub use detectors::{
    detect_probability_weighting, detect_reflection_effect, loss_aversion_ratio, EffectRate, LossAversionReport,
    LotteryFrame, LotteryResponse, ProbabilityBand, WeightingReport,
};
pub use mixed_logit::{fit_mixed_logit_msl, ChoiceObservation, MixedLogitSpec, COEFFICIENT_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LogLikelihood,
    SumSquaredResiduals,
}

/// Outcome of a fit. `std_devs` lists the random-coefficient standard
/// deviations (mixed logit only); standard errors are absent whenever the
/// curvature matrix could not be inverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub method: String,
    pub means: Vec<ParameterEstimate>,
    pub std_devs: Vec<ParameterEstimate>,
    pub objective: f64,
    pub objective_kind: ObjectiveKind,
    pub converged: bool,
    pub iterations: usize,
    pub n_observations: usize,
    pub seed: Option<u64>,
    /// Objective after each accepted iteration.
    pub trace: Vec<f64>,
    pub message: Option<String>,
}

impl EstimationResult {
    pub fn mean(&self, name: &str) -> Option<&ParameterEstimate> {
        self.means.iter().find(|p| p.name == name)
    }

    pub fn std_dev(&self, name: &str) -> Option<&ParameterEstimate> {
        self.std_devs.iter().find(|p| p.name == name)
    }
}
