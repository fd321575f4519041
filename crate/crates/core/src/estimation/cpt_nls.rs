//! CPT parameters from elicited certainty equivalents by bounded nonlinear
//! least squares.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::halton::radical_inverse;
use super::optim::{levenberg_marquardt_box, LmOptions, LmOutcome};
use super::{EstimationResult, ObjectiveKind, ParameterEstimate};
use crate::cpt::{inverse_value_function, subjective_utility_at};
use crate::error::{ensure_finite, Error, Result};
use crate::prospect::{CptParams, DiscreteProspect};

fn zero() -> f64 {
    0.0
}

/// A two-outcome prospect (`u_lo` with probability `p_lo`, else `u_hi`),
/// the sure amounts offered against it, and the elicited certainty
/// equivalent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertaintyEquivalentObservation {
    pub u_lo: f64,
    pub u_hi: f64,
    pub p_lo: f64,
    #[serde(default = "zero")]
    pub reference: f64,
    #[serde(default)]
    pub offered: Vec<f64>,
    pub ce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Gain,
    Loss,
    Mixed,
}

impl CertaintyEquivalentObservation {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("u_lo", self.u_lo), ("u_hi", self.u_hi), ("reference", self.reference), ("ce", self.ce)] {
            ensure_finite(name, v)?;
        }
        if !(self.u_lo < self.u_hi) {
            return Err(Error::InvalidProspect(format!("u_lo = {} must be below u_hi = {}", self.u_lo, self.u_hi)));
        }
        if !(self.p_lo > 0.0 && self.p_lo < 1.0) {
            return Err(Error::InvalidParameter { name: "p_lo", value: self.p_lo, reason: "must lie in (0, 1)" });
        }
        if self.ce < self.u_lo || self.ce > self.u_hi {
            return Err(Error::Domain(format!(
                "certainty equivalent {} outside [{}, {}]",
                self.ce, self.u_lo, self.u_hi
            )));
        }
        Ok(())
    }

    pub fn frame(&self) -> Frame {
        if self.u_lo >= self.reference {
            Frame::Gain
        } else if self.u_hi <= self.reference {
            Frame::Loss
        } else {
            Frame::Mixed
        }
    }

    fn prospect(&self) -> Result<DiscreteProspect> {
        DiscreteProspect::new(vec![(self.u_lo, self.p_lo), (self.u_hi, 1.0 - self.p_lo)])
    }
}

/// Certainty equivalent implied by `params`: the sure utility whose value
/// equals the prospect's subjective utility.
pub fn predicted_ce(obs: &CertaintyEquivalentObservation, params: &CptParams) -> Result<f64> {
    let u = subjective_utility_at(&obs.prospect()?, obs.reference, params);
    Ok(inverse_value_function(u, obs.reference, params))
}

/// Box on the five CPT parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptBounds {
    pub lower: CptParams,
    pub upper: CptParams,
}

impl Default for CptBounds {
    fn default() -> Self {
        Self {
            lower: CptParams::from_array([0.05, 0.05, 0.05, 0.05, 0.05]),
            upper: CptParams::from_array([1.0, 1.0, 1.0, 1.0, 100.0]),
        }
    }
}

impl CptBounds {
    pub fn validate(&self) -> Result<()> {
        let lo = self.lower.as_array();
        let hi = self.upper.as_array();
        for i in 0..5 {
            if !(lo[i] > 0.0 && hi[i] > lo[i] && hi[i].is_finite()) {
                return Err(Error::InvalidParameter {
                    name: CptParams::NAMES[i],
                    value: lo[i],
                    reason: "bounds need 0 < lower < upper < inf",
                });
            }
            if i < 4 && hi[i] > 1.0 {
                return Err(Error::InvalidParameter {
                    name: CptParams::NAMES[i],
                    value: hi[i],
                    reason: "exponent upper bound must not exceed 1",
                });
            }
        }
        Ok(())
    }

    fn to_params(&self, z: &[f64]) -> CptParams {
        let lo = self.lower.as_array();
        let hi = self.upper.as_array();
        let mut v = [0.0; 5];
        for i in 0..5 {
            v[i] = lo[i] + z[i].clamp(0.0, 1.0) * (hi[i] - lo[i]);
        }
        CptParams::from_array(v)
    }

    fn to_unit(&self, params: &CptParams) -> Vec<f64> {
        let lo = self.lower.as_array();
        let hi = self.upper.as_array();
        params.as_array().iter().enumerate().map(|(i, v)| (v - lo[i]) / (hi[i] - lo[i])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptNlsOptions {
    pub n_starts: usize,
    pub lm: LmOptions,
}

impl Default for CptNlsOptions {
    fn default() -> Self {
        Self { n_starts: 8, lm: LmOptions::default() }
    }
}

fn check_coverage(observations: &[CertaintyEquivalentObservation]) -> Result<()> {
    let has = |f: Frame| observations.iter().any(|o| o.frame() == f);
    let mut missing = Vec::new();
    if !has(Frame::Gain) {
        missing.push("gain-frame prospects (alpha_gain, beta_gain)");
    }
    if !has(Frame::Loss) {
        missing.push("loss-frame prospects (alpha_loss, beta_loss)");
    }
    if !has(Frame::Mixed) {
        missing.push("mixed prospects (lambda cancels from pure gain or loss certainty equivalents)");
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Unidentifiable(format!("no {}", missing.join(", no "))))
    }
}

/// Minimizes `Σ (ce − predicted_ce)²` over the box from `init` and from
/// `n_starts − 1` further starts spread over the box by a Halton sequence;
/// the best fit is returned.
pub fn fit_cpt_nls(
    observations: &[CertaintyEquivalentObservation],
    init: &CptParams,
    bounds: &CptBounds,
) -> Result<EstimationResult> {
    fit_cpt_nls_with(observations, init, bounds, &CptNlsOptions::default())
}

pub fn fit_cpt_nls_with(
    observations: &[CertaintyEquivalentObservation],
    init: &CptParams,
    bounds: &CptBounds,
    opts: &CptNlsOptions,
) -> Result<EstimationResult> {
    if observations.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} certainty equivalents; at least 5 are needed",
            observations.len()
        )));
    }
    observations.iter().try_for_each(CertaintyEquivalentObservation::validate)?;
    bounds.validate()?;
    check_coverage(observations)?;
    let z_init = bounds.to_unit(init);
    if z_init.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::Domain(format!("initial parameters {init:?} lie outside the bounds")));
    }

    let prospects: Vec<DiscreteProspect> = observations.iter().map(|o| o.prospect()).collect::<Result<_>>()?;
    let residuals = |z: &[f64], out: &mut [f64]| -> Result<()> {
        let params = bounds.to_params(z);
        for (i, (o, p)) in observations.iter().zip(&prospects).enumerate() {
            let u = subjective_utility_at(p, o.reference, &params);
            out[i] = o.ce - inverse_value_function(u, o.reference, &params);
        }
        Ok(())
    };

    let m = observations.len();
    let mut starts = vec![z_init.clone()];
    for k in 1..opts.n_starts.max(1) {
        starts.push([2, 3, 5, 7, 11].iter().map(|&b| radical_inverse(k as u64, b)).collect());
    }
    let mut best: Option<LmOutcome> = None;
    for start in &starts {
        let out = levenberg_marquardt_box(residuals, m, start, &opts.lm)?;
        if best.as_ref().map_or(true, |b| out.ssr < b.ssr) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");
    let params = bounds.to_params(&best.z);

    // Standard errors from σ²(JᵀJ)⁻¹, with J rescaled from the unit box.
    let scale: Vec<f64> = {
        let lo = bounds.lower.as_array();
        let hi = bounds.upper.as_array();
        (0..5).map(|i| hi[i] - lo[i]).collect()
    };
    let mut jac = best.jacobian.clone();
    for j in 0..5 {
        for i in 0..m {
            jac[(i, j)] /= scale[j];
        }
    }
    let dof = m.saturating_sub(5).max(1) as f64;
    let sigma2 = best.ssr / dof;
    let jtj: DMatrix<f64> = jac.transpose() * &jac;
    let std_errors = jtj.cholesky().map(|c| {
        let inv = c.inverse();
        (0..5).map(|i| (sigma2 * inv[(i, i)]).max(0.0).sqrt()).collect::<Vec<f64>>()
    });

    let values = params.as_array();
    let means = (0..5)
        .map(|i| ParameterEstimate {
            name: CptParams::NAMES[i].into(),
            estimate: values[i],
            std_error: std_errors.as_ref().map(|s| s[i]),
        })
        .collect();
    Ok(EstimationResult {
        method: "cpt_nls".into(),
        means,
        std_devs: Vec::new(),
        objective: best.ssr,
        objective_kind: ObjectiveKind::SumSquaredResiduals,
        converged: best.converged,
        iterations: best.iterations,
        n_observations: m,
        seed: None,
        trace: best.trace.clone(),
        message: Some(best.message.clone()),
    })
}

/// Parameters of a fit returned by [`fit_cpt_nls`].
pub fn fitted_params(result: &EstimationResult) -> Result<CptParams> {
    let mut v = [0.0; 5];
    for (i, name) in CptParams::NAMES.iter().enumerate() {
        v[i] = result
            .mean(name)
            .ok_or_else(|| Error::Domain(format!("result has no `{name}` estimate")))?
            .estimate;
    }
    Ok(CptParams::from_array(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::synthetic::simulate_ce_observations;
    use proptest::prelude::*;

    fn sum_sq(obs: &[CertaintyEquivalentObservation], p: &CptParams) -> f64 {
        obs.iter().map(|o| (o.ce - predicted_ce(o, p).unwrap()).powi(2)).sum()
    }

    #[test]
    fn predicted_ce_inverts_value_function() {
        let p = CptParams::estimated_means();
        let gain = CertaintyEquivalentObservation { u_lo: 0.0, u_hi: 10.0, p_lo: 0.5, reference: 0.0, offered: vec![], ce: 1.0 };
        let ce = predicted_ce(&gain, &p).unwrap();
        let w = crate::cpt::weighting_function(0.5, p.alpha_gain).unwrap();
        assert!((ce - w.powf(1.0 / p.beta_gain) * 10.0).abs() < 1e-12);
        let rational = CptParams::risk_neutral();
        assert!((predicted_ce(&gain, &rational).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn frames() {
        let o = |lo: f64, hi: f64| CertaintyEquivalentObservation { u_lo: lo, u_hi: hi, p_lo: 0.5, reference: 0.0, offered: vec![], ce: lo };
        assert_eq!(o(0.0, 1.0).frame(), Frame::Gain);
        assert_eq!(o(-1.0, 0.0).frame(), Frame::Loss);
        assert_eq!(o(-1.0, 1.0).frame(), Frame::Mixed);
    }

    #[test]
    fn noiseless_recovery_of_estimated_means() {
        let truth = CptParams::estimated_means();
        let obs = simulate_ce_observations(&truth, 150, 0.0, 3).unwrap();
        let fit = fit_cpt_nls(&obs, &CptParams::from_array([0.5, 0.5, 0.5, 0.5, 1.0]), &CptBounds::default()).unwrap();
        let got = fitted_params(&fit).unwrap();
        for (i, (g, t)) in got.as_array().iter().zip(truth.as_array()).enumerate() {
            assert!((g - t).abs() < 1e-3, "{}: {g} vs {t}", CptParams::NAMES[i]);
        }
        assert!(fit.converged);
    }

    #[test]
    fn identity_agent_lands_on_identity() {
        let truth = CptParams::risk_neutral();
        let obs = simulate_ce_observations(&truth, 60, 0.0, 4).unwrap();
        let fit = fit_cpt_nls(&obs, &CptParams::from_array([0.5, 0.5, 0.5, 0.5, 2.0]), &CptBounds::default()).unwrap();
        for v in fitted_params(&fit).unwrap().as_array() {
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn single_frame_is_unidentifiable() {
        let obs: Vec<_> = simulate_ce_observations(&CptParams::estimated_means(), 60, 0.0, 5)
            .unwrap()
            .into_iter()
            .filter(|o| o.frame() == Frame::Gain)
            .collect();
        let err = fit_cpt_nls(&obs, &CptParams::risk_neutral(), &CptBounds::default()).unwrap_err();
        assert!(matches!(&err, Error::Unidentifiable(m) if m.contains("lambda")), "{err}");
    }

    #[test]
    fn too_few_observations() {
        let obs = simulate_ce_observations(&CptParams::estimated_means(), 4, 0.0, 5).unwrap();
        assert!(matches!(fit_cpt_nls(&obs, &CptParams::risk_neutral(), &CptBounds::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn residual_never_worse_than_init() {
        let obs = simulate_ce_observations(&CptParams::estimated_medians(), 45, 0.05, 6).unwrap();
        let init = CptParams::from_array([0.7, 0.3, 0.4, 0.4, 5.0]);
        let fit = fit_cpt_nls(&obs, &init, &CptBounds::default()).unwrap();
        assert!(fit.objective <= sum_sq(&obs, &init));
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]
        #[test]
        fn noiseless_round_trip(
            ag in 0.1f64..1.0, al in 0.1f64..1.0, bg in 0.1f64..1.0, bl in 0.1f64..1.0, lambda in 0.2f64..50.0,
            seed in 0u64..1000,
        ) {
            let truth = CptParams::new(ag, al, bg, bl, lambda).unwrap();
            let obs = simulate_ce_observations(&truth, 60, 0.0, seed).unwrap();
            let fit = fit_cpt_nls(&obs, &CptParams::from_array([0.5, 0.5, 0.5, 0.5, 1.0]), &CptBounds::default()).unwrap();
            prop_assert!(fit.objective < 1e-8, "ssr {} for {:?}", fit.objective, truth);
        }
    }
}
