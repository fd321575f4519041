//! Cumulative prospect theory: subjective values, Prelec probability
//! distortion, rank-dependent decision weights and subjective utilities of
//! discrete and continuous prospects.

use serde::{Deserialize, Serialize};

use crate::choice::binary_choice_probability;
use crate::error::{Error, Result};
use crate::prospect::{CertainProspect, ContinuousProspect, CptParams, DiscreteProspect, Prospect, Reference, TariffContext};
use crate::quadrature::{integrate_with_breaks, QuadratureConfig};

/// Subjective utility of a prospect and the reference it was framed against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveUtility {
    pub value: f64,
    pub reference_used: f64,
}

/// Value function: `(u - R)^β⁺` for `u >= R`, `-λ (R - u)^β⁻` below `R`.
pub fn value_function(u: f64, reference: f64, params: &CptParams) -> f64 {
    if u >= reference {
        (u - reference).powf(params.beta_gain)
    } else {
        -params.lambda * (reference - u).powf(params.beta_loss)
    }
}

/// Inverse of [`value_function`].
pub fn inverse_value_function(v: f64, reference: f64, params: &CptParams) -> f64 {
    if v >= 0.0 {
        reference + v.powf(1.0 / params.beta_gain)
    } else {
        reference - (-v / params.lambda).powf(1.0 / params.beta_loss)
    }
}

/// Prelec weighting `exp(-(-ln p)^α)` with the end points fixed at 0 and 1.
pub fn weighting_function(p: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must lie in (0, 1]",
        });
    }
    Ok(prelec(p, alpha))
}

#[inline]
pub(crate) fn prelec(p: f64, alpha: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        (-(-p.ln()).powf(alpha)).exp()
    }
}

/// `π(p)` given `p` and its complement `q = 1 - p`, each summed on its own.
/// Above one half `-ln p` is taken as `-ln(1 - q)`, since `1 - π(1 - q)`
/// behaves like `q^α` and rounding in `p` would dominate it.
#[inline]
pub(crate) fn prelec_split(p: f64, q: f64, alpha: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if q <= 0.0 {
        1.0
    } else if p <= 0.5 {
        (-(-p.ln()).powf(alpha)).exp()
    } else {
        (-(-(-q).ln_1p()).powf(alpha)).exp()
    }
}

/// Rank-dependent decision weights. Outcomes strictly below `reference`
/// are losses and weigh increments of `π⁻(F)`; the rest are gains and weigh
/// increments of `π⁺(1 - F)`.
pub fn decision_weights(prospect: &DiscreteProspect, reference: f64, params: &CptParams) -> Vec<f64> {
    let outcomes = prospect.outcomes();
    let n = outcomes.len();
    // below[i] sums the masses of outcomes 0..i, above[i] those of i..n.
    let mut below = vec![0.0; n + 1];
    let mut above = vec![0.0; n + 1];
    for i in 0..n {
        below[i + 1] = below[i] + outcomes[i].1;
        above[n - 1 - i] = above[n - i] + outcomes[n - 1 - i].1;
    }
    let first_gain = outcomes.iter().position(|&(u, _)| u >= reference).unwrap_or(n);

    let mut weights = vec![0.0; n];
    let mut prev = 0.0;
    for i in 0..first_gain {
        let cur = prelec_split(below[i + 1], above[i + 1], params.alpha_loss);
        weights[i] = cur - prev;
        prev = cur;
    }
    let mut prev = 0.0;
    for i in (first_gain..n).rev() {
        let cur = prelec_split(above[i], below[i], params.alpha_gain);
        weights[i] = cur - prev;
        prev = cur;
    }
    weights
}

/// `Σ w_i V(u_i)` for a resolved reference point.
pub fn subjective_utility_at(prospect: &DiscreteProspect, reference: f64, params: &CptParams) -> f64 {
    decision_weights(prospect, reference, params)
        .iter()
        .zip(prospect.utilities())
        .map(|(w, u)| w * value_function(u, reference, params))
        .sum()
}

pub fn subjective_utility_discrete(
    prospect: &DiscreteProspect,
    reference: &Reference,
    params: &CptParams,
    tariff: Option<TariffContext>,
) -> Result<SubjectiveUtility> {
    let r = reference.resolve(tariff)?;
    Ok(SubjectiveUtility {
        value: subjective_utility_at(prospect, r, params),
        reference_used: r,
    })
}

/// Subjective utility of a prospect given by its CDF, for a resolved reference.
///
/// The Stieltjes integral `∫ V dπ(F)` is evaluated after integrating by
/// parts and substituting `s = |u - R|^β`, which leaves
///
/// ```text
/// U = ∫_0^{(hi-R)^β⁺} π⁺(P(U > R + t^{1/β⁺})) dt − λ ∫_0^{(R-lo)^β⁻} π⁻(P(U ≤ R − s^{1/β⁻})) ds
/// ```
///
/// Both integrands are bounded by 1, so the unbounded slope of the Prelec
/// weights at 0 and 1 never enters the quadrature. Atoms and support edges
/// inside either range become break points.
pub fn continuous_subjective_utility_at(
    prospect: &ContinuousProspect,
    reference: f64,
    params: &CptParams,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let (lo, hi) = prospect.support();
    let atoms = prospect.atoms();
    let cdf = |u: f64| match &atoms {
        Some(d) => d.cdf(u),
        None => prospect.cdf_unchecked(u),
    };
    let sf = |u: f64| match &atoms {
        Some(d) => d.sf(u),
        None => prospect.sf_unchecked(u),
    };
    let atom_points: Vec<f64> = atoms.as_ref().map(|d| d.utilities().collect()).unwrap_or_default();

    let mut gain = 0.0;
    if hi > reference {
        let inv = 1.0 / params.beta_gain;
        let mut breaks = vec![0.0];
        breaks.extend(
            std::iter::once(lo)
                .chain(atom_points.iter().copied())
                .filter(|&u| u > reference && u < hi)
                .map(|u| (u - reference).powf(params.beta_gain)),
        );
        breaks.push((hi - reference).powf(params.beta_gain));
        let integrand = |t: f64| {
            let u = reference + t.powf(inv);
            prelec_split(sf(u), cdf(u), params.alpha_gain)
        };
        gain = integrate_with_breaks(integrand, &breaks, quad)?.value;
    }

    let mut loss = 0.0;
    if lo < reference {
        let inv = 1.0 / params.beta_loss;
        let mut breaks = vec![0.0];
        breaks.extend(
            std::iter::once(hi)
                .chain(atom_points.iter().rev().copied())
                .filter(|&u| u < reference && u > lo)
                .map(|u| (reference - u).powf(params.beta_loss)),
        );
        breaks.push((reference - lo).powf(params.beta_loss));
        let integrand = |s: f64| {
            let u = reference - s.powf(inv);
            prelec_split(cdf(u), sf(u), params.alpha_loss)
        };
        loss = integrate_with_breaks(integrand, &breaks, quad)?.value;
    }

    Ok(gain - params.lambda * loss)
}

pub fn subjective_utility_continuous(
    prospect: &ContinuousProspect,
    reference: &Reference,
    params: &CptParams,
    tariff: Option<TariffContext>,
    quad: &QuadratureConfig,
) -> Result<SubjectiveUtility> {
    let r = reference.resolve(tariff)?;
    Ok(SubjectiveUtility {
        value: continuous_subjective_utility_at(prospect, r, params, quad)?,
        reference_used: r,
    })
}

/// Dispatches to the discrete or continuous evaluation.
pub fn prospect_subjective_utility(
    prospect: &Prospect,
    reference: f64,
    params: &CptParams,
    quad: &QuadratureConfig,
) -> Result<f64> {
    match prospect {
        Prospect::Discrete(d) => Ok(subjective_utility_at(d, reference, params)),
        Prospect::Continuous(c) => continuous_subjective_utility_at(c, reference, params, quad),
    }
}

/// Logit acceptance probability of option 1 over option 2 on subjective utilities.
pub fn subjective_acceptance_probability(u1s: &SubjectiveUtility, u2s: &SubjectiveUtility) -> f64 {
    binary_choice_probability(u1s.value - u2s.value)
}

/// Subjective value of a sure outcome; no probability weighting applies.
pub fn certain_prospect_subjective_value(certain: &CertainProspect, reference: f64, params: &CptParams) -> f64 {
    value_function(certain.utility(), reference, params)
}
