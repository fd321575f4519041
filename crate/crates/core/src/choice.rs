//! Objective trip utilities, logit choice probabilities and value of time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::prospect::{DiscreteProspect, TripTimes, UtilityCoefficients};

/// Travel modes in the choice set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeId {
    Transit,
    UberX,
    Srs,
}

impl ModeId {
    pub const ALL: [ModeId; 3] = [ModeId::Transit, ModeId::UberX, ModeId::Srs];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeId::Transit => "transit",
            ModeId::UberX => "uberx",
            ModeId::Srs => "srs",
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transit" => Ok(ModeId::Transit),
            "uberx" => Ok(ModeId::UberX),
            "srs" => Ok(ModeId::Srs),
            other => Err(Error::Domain(format!(
                "unknown mode `{other}` (expected transit, uberx or srs)"
            ))),
        }
    }
}

/// A travel alternative offered for a trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripOption {
    pub mode: ModeId,
    pub times: TripTimes,
    /// Tariff in dollars.
    pub tariff: f64,
}

impl TripOption {
    pub fn new(mode: ModeId, times: TripTimes, tariff: f64) -> Result<Self> {
        let option = Self { mode, times, tariff };
        option.validate()?;
        Ok(option)
    }

    pub fn validate(&self) -> Result<()> {
        self.times.validate()?;
        if !self.tariff.is_finite() || self.tariff < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tariff",
                value: self.tariff,
                reason: "tariff must be finite and non-negative",
            });
        }
        Ok(())
    }
}

fn time_utility(times: &TripTimes, mode: ModeId, coeffs: &UtilityCoefficients) -> f64 {
    coeffs.a_walk * times.walk + coeffs.a_wait * times.wait + coeffs.a_ride.get(mode) * times.ride
}

/// Objective utility `a·t + b·γ + c_mode` of a trip option.
pub fn trip_utility(option: &TripOption, coeffs: &UtilityCoefficients) -> f64 {
    time_utility(&option.times, option.mode, coeffs) + coeffs.b * option.tariff + coeffs.c.get(option.mode)
}

/// Utilities `(u_lo, u_hi)` of the shared ride's two travel-time outcomes:
/// the longer times `t_hi` give the lower utility.
pub fn srs_two_point_utilities(
    t_hi: &TripTimes,
    t_lo: &TripTimes,
    tariff: f64,
    coeffs: &UtilityCoefficients,
) -> Result<(f64, f64)> {
    t_hi.validate()?;
    t_lo.validate()?;
    ensure_finite("tariff", tariff)?;
    if !t_lo.le_componentwise(t_hi) {
        return Err(Error::Domain(format!(
            "shorter outcome {t_lo:?} must not exceed longer outcome {t_hi:?} in any component"
        )));
    }
    let fixed = coeffs.b * tariff + coeffs.c.get(ModeId::Srs);
    let u_lo = time_utility(t_hi, ModeId::Srs, coeffs) + fixed;
    let u_hi = time_utility(t_lo, ModeId::Srs, coeffs) + fixed;
    Ok((u_lo, u_hi))
}

/// Multinomial logit probabilities `exp(U_l) / Σ_j exp(U_j)`.
pub fn logit_probabilities(utilities: &[f64]) -> Result<Vec<f64>> {
    if utilities.len() < 2 {
        return Err(Error::Domain(format!(
            "logit needs at least two alternatives, got {}",
            utilities.len()
        )));
    }
    if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(Error::Domain(format!("non-finite utility {u}")));
    }
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Binary logit `1 / (1 + exp(-ΔU))`.
pub fn binary_choice_probability(delta_u: f64) -> f64 {
    if delta_u >= 0.0 {
        1.0 / (1.0 + (-delta_u).exp())
    } else {
        let e = delta_u.exp();
        e / (1.0 + e)
    }
}

/// Expected utility of a discrete prospect.
pub fn expected_utility(prospect: &DiscreteProspect) -> f64 {
    prospect.mean()
}

/// Probability that option 1 is accepted over option 2 under utility theory.
pub fn objective_acceptance_probability(u1: f64, u2: f64) -> f64 {
    binary_choice_probability(u1 - u2)
}

/// Value of time in dollars per hour from a per-minute time weight and a
/// per-dollar tariff weight.
pub fn value_of_time(a_component: f64, b: f64) -> Result<f64> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::Domain(format!("tariff weight b = {b} cannot scale value of time")));
    }
    ensure_finite("a", a_component)?;
    Ok(a_component / b * 60.0)
}
