//! Domain types shared by the choice, CPT, estimation and experiment modules.
//!
//! Utilities are dimensionless utils, times are in minutes and tariffs in
//! dollars. Every type validates its invariants at construction and is
//! immutable afterwards.

use serde::{Deserialize, Serialize};
use libm::{erfc, lgamma};

use crate::choice::ModeId;
use crate::error::{ensure_finite, Error, Result};

/// Tolerance on the total probability mass of a [`DiscreteProspect`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Number of standard deviations used when a normal prospect is given no
/// explicit truncation bounds.
pub const DEFAULT_NORMAL_TRUNCATION: f64 = 6.0;

/// Walking, waiting and riding times of a trip, in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripTimes {
    pub walk: f64,
    pub wait: f64,
    pub ride: f64,
}

impl TripTimes {
    pub fn new(walk: f64, wait: f64, ride: f64) -> Result<Self> {
        let times = Self { walk, wait, ride };
        times.validate()?;
        Ok(times)
    }

    pub fn zero() -> Self {
        Self {
            walk: 0.0,
            wait: 0.0,
            ride: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("walk", self.walk), ("wait", self.wait), ("ride", self.ride)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "trip times must be finite and non-negative",
                });
            }
        }
        Ok(())
    }

    /// True when every component of `self` is at most the matching component of `other`.
    pub fn le_componentwise(&self, other: &TripTimes) -> bool {
        self.walk <= other.walk && self.wait <= other.wait && self.ride <= other.ride
    }
}

/// One value per travel mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeMap {
    pub transit: f64,
    pub uberx: f64,
    pub srs: f64,
}

impl ModeMap {
    pub fn get(&self, mode: ModeId) -> f64 {
        match mode {
            ModeId::Transit => self.transit,
            ModeId::UberX => self.uberx,
            ModeId::Srs => self.srs,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeId, f64)> + '_ {
        ModeId::ALL.into_iter().map(|m| (m, self.get(m)))
    }
}

/// Coefficients of the linear trip utility `a·t + b·γ + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityCoefficients {
    pub a_walk: f64,
    pub a_wait: f64,
    /// Per-minute riding weight, per mode.
    pub a_ride: ModeMap,
    /// Per-dollar tariff weight.
    pub b: f64,
    /// Alternative-specific constants; transit is the baseline and must be 0.
    pub c: ModeMap,
}

impl UtilityCoefficients {
    /// Reference mean coefficients of the random-parameters logit.
    pub fn table1_means() -> Self {
        Self {
            a_walk: -0.0586,
            a_wait: -0.0113,
            a_ride: ModeMap {
                transit: -0.0105,
                uberx: -0.0086,
                srs: -0.0186,
            },
            b: -0.0518,
            c: ModeMap {
                transit: 0.0,
                uberx: -2.5926,
                srs: -2.2230,
            },
        }
    }

    /// Standard-deviation column of the same estimates.
    pub fn table1_sds() -> Self {
        Self {
            a_walk: 0.1412,
            a_wait: 0.1491,
            a_ride: ModeMap {
                transit: 0.0284,
                uberx: 0.0058,
                srs: 0.0095,
            },
            b: 0.0597,
            c: ModeMap {
                transit: 0.0,
                uberx: 2.3034,
                srs: 1.8175,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let negatives = [
            ("a_walk", self.a_walk),
            ("a_wait", self.a_wait),
            ("a_ride.transit", self.a_ride.transit),
            ("a_ride.uberx", self.a_ride.uberx),
            ("a_ride.srs", self.a_ride.srs),
            ("b", self.b),
        ];
        for (name, value) in negatives {
            if !value.is_finite() || value >= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "time and tariff weights are disutilities and must be strictly negative",
                });
            }
        }
        ensure_finite("c.uberx", self.c.uberx)?;
        ensure_finite("c.srs", self.c.srs)?;
        if self.c.transit != 0.0 {
            return Err(Error::InvalidParameter {
                name: "c.transit",
                value: self.c.transit,
                reason: "transit is the baseline alternative and its constant is fixed at 0",
            });
        }
        Ok(())
    }
}

/// Risk-preference parameters of the value and weighting functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptParams {
    /// Probability-distortion exponent applied to gains.
    pub alpha_gain: f64,
    /// Probability-distortion exponent applied to losses.
    pub alpha_loss: f64,
    /// Diminishing sensitivity over gains.
    pub beta_gain: f64,
    /// Diminishing sensitivity over losses.
    pub beta_loss: f64,
    /// Loss aversion.
    pub lambda: f64,
}

impl CptParams {
    pub fn new(
        alpha_gain: f64,
        alpha_loss: f64,
        beta_gain: f64,
        beta_loss: f64,
        lambda: f64,
    ) -> Result<Self> {
        let params = Self {
            alpha_gain,
            alpha_loss,
            beta_gain,
            beta_loss,
            lambda,
        };
        params.validate()?;
        Ok(params)
    }

    /// Reference mean CPT parameters.
    pub fn estimated_means() -> Self {
        Self {
            alpha_gain: 0.4456,
            alpha_loss: 0.1315,
            beta_gain: 0.2166,
            beta_loss: 0.3550,
            lambda: 20.0494,
        }
    }

    /// Reference median CPT parameters.
    pub fn estimated_medians() -> Self {
        Self {
            alpha_gain: 0.4124,
            alpha_loss: 0.1320,
            beta_gain: 0.2188,
            beta_loss: 0.3649,
            lambda: 11.8715,
        }
    }

    /// Reference standard deviations of the CPT parameters.
    pub fn estimated_sds() -> Self {
        Self {
            alpha_gain: 0.1828,
            alpha_loss: 0.0448,
            beta_gain: 0.0985,
            beta_loss: 0.1906,
            lambda: 25.8554,
        }
    }

    /// The expected-utility agent: no distortion, linear value, loss neutral.
    pub fn risk_neutral() -> Self {
        Self {
            alpha_gain: 1.0,
            alpha_loss: 1.0,
            beta_gain: 1.0,
            beta_loss: 1.0,
            lambda: 1.0,
        }
    }

    /// Same parameters with one distortion exponent shared by gains and losses.
    pub fn with_single_alpha(self, alpha: f64) -> Self {
        Self {
            alpha_gain: alpha,
            alpha_loss: alpha,
            ..self
        }
    }

    /// Keeps probability distortion and removes the value function's
    /// curvature and loss aversion (`β⁺ = β⁻ = λ = 1`).
    pub fn distortion_only(self) -> Self {
        Self {
            beta_gain: 1.0,
            beta_loss: 1.0,
            lambda: 1.0,
            ..self
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.alpha_gain,
            self.alpha_loss,
            self.beta_gain,
            self.beta_loss,
            self.lambda,
        ]
    }

    pub fn from_array(values: [f64; 5]) -> Self {
        Self {
            alpha_gain: values[0],
            alpha_loss: values[1],
            beta_gain: values[2],
            beta_loss: values[3],
            lambda: values[4],
        }
    }

    pub const NAMES: [&'static str; 5] = ["alpha_gain", "alpha_loss", "beta_gain", "beta_loss", "lambda"];

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("alpha_gain", self.alpha_gain),
            ("alpha_loss", self.alpha_loss),
            ("beta_gain", self.beta_gain),
            ("beta_loss", self.beta_loss),
        ];
        for (name, value) in unit {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
                reason: "loss aversion must be finite and > 0",
            });
        }
        Ok(())
    }
}

/// Tariff information needed to resolve a tariff-linked reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffContext {
    /// Per-dollar tariff weight.
    pub b: f64,
    /// Tariff in dollars.
    pub gamma: f64,
}

/// Reference point against which outcomes are framed as gains or losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    /// Fixed reference `R`.
    Static { value: f64 },
    /// Reference that moves with the tariff: `R = x̃ + b·γ`.
    TariffLinked { x_tilde: f64 },
}

impl Reference {
    pub fn resolve(&self, tariff: Option<TariffContext>) -> Result<f64> {
        let r = match (*self, tariff) {
            (Reference::Static { value }, _) => value,
            (Reference::TariffLinked { x_tilde }, Some(ctx)) => x_tilde + ctx.b * ctx.gamma,
            (Reference::TariffLinked { .. }, None) => return Err(Error::UnresolvedReference),
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Domain(format!("resolved reference {r} is not finite")))
        }
    }
}

/// A prospect with finitely many outcomes, strictly ascending in utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteProspect {
    outcomes: Vec<(f64, f64)>,
}

impl DiscreteProspect {
    /// Builds a prospect from `(utility, probability)` pairs that are already
    /// strictly ascending. Zero-probability outcomes are dropped; unsorted or
    /// repeated utilities and masses that do not sum to one are rejected.
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        let mut kept = Vec::with_capacity(outcomes.len());
        for (i, &(u, p)) in outcomes.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::InvalidProspect(format!("outcome {i} has non-finite utility {u}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProspect(format!(
                    "outcome {i} has probability {p} outside [0, 1]"
                )));
            }
            if p > 0.0 {
                kept.push((u, p));
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidProspect("no outcome with positive probability".into()));
        }
        for pair in kept.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidProspect(format!(
                    "utilities must be strictly ascending, found {} then {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        let total: f64 = kept.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidProspect(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { outcomes: kept })
    }

    /// Builds a prospect from outcomes in any order: sorts by utility, merges
    /// equal utilities by summing their probabilities and drops zero masses.
    pub fn from_unsorted(mut outcomes: Vec<(f64, f64)>) -> Result<Self> {
        if outcomes.iter().any(|&(u, p)| !u.is_finite() || !p.is_finite()) {
            return Err(Error::InvalidProspect("non-finite outcome or probability".into()));
        }
        outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(outcomes.len());
        for (u, p) in outcomes {
            match merged.last_mut() {
                Some(last) if last.0 == u => last.1 += p,
                _ => merged.push((u, p)),
            }
        }
        Self::new(merged)
    }

    /// Builds a prospect from positive weights, normalising them to sum to one.
    pub fn from_weights(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = outcomes.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidProspect(format!("total weight {total} is not positive")));
        }
        Self::from_unsorted(outcomes.into_iter().map(|(u, w)| (u, w / total)).collect())
    }

    /// A certain outcome.
    pub fn degenerate(u: f64) -> Result<Self> {
        Self::new(vec![(u, 1.0)])
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn utilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().map(|&(u, _)| u)
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().map(|&(_, p)| p)
    }

    pub fn min_utility(&self) -> f64 {
        self.outcomes[0].0
    }

    pub fn max_utility(&self) -> f64 {
        self.outcomes[self.outcomes.len() - 1].0
    }

    /// Expected utility `Σ p_i u_i`.
    pub fn mean(&self) -> f64 {
        self.outcomes.iter().map(|&(u, p)| p * u).sum()
    }

    /// `P(U <= u)`.
    pub fn cdf(&self, u: f64) -> f64 {
        self.outcomes
            .iter()
            .take_while(|&&(x, _)| x <= u)
            .map(|&(_, p)| p)
            .sum::<f64>()
            .min(1.0)
    }

    /// `P(U > u)`, summed over the upper tail so that it is exactly 0 above
    /// the largest outcome.
    pub fn sf(&self, u: f64) -> f64 {
        self.outcomes
            .iter()
            .rev()
            .take_while(|&&(x, _)| x > u)
            .map(|&(_, p)| p)
            .sum::<f64>()
            .min(1.0)
    }

    /// Same probabilities with every utility shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        Self::from_unsorted(self.outcomes.iter().map(|&(u, p)| (u + delta, p)).collect())
    }
}

/// Distribution families for prospects described by a CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// Two outcomes: `u_lo` with probability `p_lo`, `u_hi` otherwise.
    BernoulliTwoPoint { u_lo: f64, u_hi: f64, p_lo: f64 },
    /// At most `k_max` equally spaced delays between the best outcome `x_hi`
    /// and the worst outcome `x_lo`, each with truncated Poisson mass; every
    /// outcome is shifted by `tariff_term` (`b·γ`).
    TruncatedPoisson {
        lambda_p: f64,
        k_max: u32,
        x_hi: f64,
        x_lo: f64,
        #[serde(default)]
        tariff_term: f64,
    },
    /// Normal distribution truncated to `[lower, upper]`; bounds default to
    /// six standard deviations either side of the mean.
    Normal {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    Uniform { lo: f64, hi: f64 },
}

/// A prospect given by its distribution over utilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Distribution", into = "Distribution")]
pub struct ContinuousProspect {
    dist: Distribution,
    // Truncation bounds and normaliser, cached for the normal family.
    lo: f64,
    hi: f64,
    norm: f64,
}

impl TryFrom<Distribution> for ContinuousProspect {
    type Error = Error;

    fn try_from(dist: Distribution) -> Result<Self> {
        Self::from_distribution(dist)
    }
}

impl From<ContinuousProspect> for Distribution {
    fn from(p: ContinuousProspect) -> Self {
        p.dist
    }
}

impl ContinuousProspect {
    pub fn from_distribution(dist: Distribution) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidProspect(msg));
        match dist {
            Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo } => {
                if !(u_lo.is_finite() && u_hi.is_finite()) || u_lo > u_hi {
                    return invalid(format!("two-point outcomes must satisfy u_lo <= u_hi, got {u_lo}, {u_hi}"));
                }
                if !(0.0..=1.0).contains(&p_lo) {
                    return invalid(format!("p_lo = {p_lo} outside [0, 1]"));
                }
                Ok(Self { dist, lo: u_lo, hi: u_hi, norm: 1.0 })
            }
            Distribution::TruncatedPoisson { lambda_p, k_max, x_hi, x_lo, tariff_term } => {
                if !(lambda_p > 0.0 && lambda_p.is_finite()) {
                    return invalid(format!("Poisson rate {lambda_p} must be > 0"));
                }
                if k_max == 0 {
                    return invalid("truncated Poisson needs K >= 1".into());
                }
                if !(x_lo.is_finite() && x_hi.is_finite() && tariff_term.is_finite()) || x_lo >= x_hi {
                    return invalid(format!("truncated Poisson needs x_lo < x_hi, got {x_lo}, {x_hi}"));
                }
                Ok(Self { dist, lo: x_lo + tariff_term, hi: x_hi + tariff_term, norm: 1.0 })
            }
            Distribution::Normal { mu, sigma, lower, upper } => {
                if !(mu.is_finite() && sigma > 0.0 && sigma.is_finite()) {
                    return invalid(format!("normal needs finite mu and sigma > 0, got {mu}, {sigma}"));
                }
                let lo = lower.unwrap_or(mu - DEFAULT_NORMAL_TRUNCATION * sigma);
                let hi = upper.unwrap_or(mu + DEFAULT_NORMAL_TRUNCATION * sigma);
                if !(lo.is_finite() && hi.is_finite()) {
                    return invalid("normal prospect needs a bounded support".into());
                }
                if lo >= hi {
                    return invalid(format!("empty truncation interval [{lo}, {hi}]"));
                }
                let norm = std_normal_cdf((hi - mu) / sigma) - std_normal_cdf((lo - mu) / sigma);
                if !(norm > 0.0) {
                    return invalid(format!("truncation interval [{lo}, {hi}] carries no mass"));
                }
                Ok(Self { dist, lo, hi, norm })
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    return invalid(format!("uniform needs lo < hi, got {lo}, {hi}"));
                }
                Ok(Self { dist, lo, hi, norm: 1.0 })
            }
        }
    }

    pub fn bernoulli(u_lo: f64, u_hi: f64, p_lo: f64) -> Result<Self> {
        Self::from_distribution(Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo })
    }

    pub fn truncated_poisson(lambda_p: f64, k_max: u32, x_hi: f64, x_lo: f64, tariff_term: f64) -> Result<Self> {
        Self::from_distribution(Distribution::TruncatedPoisson {
            lambda_p,
            k_max,
            x_hi,
            x_lo,
            tariff_term,
        })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::from_distribution(Distribution::Normal {
            mu,
            sigma,
            lower: None,
            upper: None,
        })
    }

    pub fn normal_truncated(mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::from_distribution(Distribution::Normal {
            mu,
            sigma,
            lower: Some(lower),
            upper: Some(upper),
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::from_distribution(Distribution::Uniform { lo, hi })
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    /// Short family name used in reports.
    pub fn family(&self) -> &'static str {
        match self.dist {
            Distribution::BernoulliTwoPoint { .. } => "bernoulli",
            Distribution::TruncatedPoisson { .. } => "truncated_poisson",
            Distribution::Normal { .. } => "normal",
            Distribution::Uniform { .. } => "uniform",
        }
    }

    /// Bounded support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Atoms of the two families that have no density.
    pub fn atoms(&self) -> Option<DiscreteProspect> {
        match self.dist {
            Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo } => Some(
                DiscreteProspect::from_unsorted(vec![(u_lo, p_lo), (u_hi, 1.0 - p_lo)])
                    .expect("validated two-point prospect"),
            ),
            Distribution::TruncatedPoisson { lambda_p, k_max, x_hi, x_lo, tariff_term } => Some(
                truncated_poisson_pmf(lambda_p, k_max, x_hi, x_lo)
                    .and_then(|p| p.shifted(tariff_term))
                    .expect("validated truncated Poisson prospect"),
            ),
            Distribution::Normal { .. } | Distribution::Uniform { .. } => None,
        }
    }

    /// `P(U <= u)`.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("cdf evaluated at non-finite utility {u}")));
        }
        Ok(self.cdf_unchecked(u))
    }

    /// `P(U > u)`, computed without cancellation in the upper tail.
    pub fn sf(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Domain(format!("survival function evaluated at non-finite utility {u}")));
        }
        Ok(self.sf_unchecked(u))
    }

    pub(crate) fn cdf_unchecked(&self, u: f64) -> f64 {
        match self.dist {
            Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo } => {
                if u < u_lo {
                    0.0
                } else if u < u_hi {
                    p_lo
                } else {
                    1.0
                }
            }
            Distribution::TruncatedPoisson { .. } => {
                self.atoms().map(|a| a.cdf(u)).unwrap_or(0.0)
            }
            Distribution::Normal { mu, sigma, .. } => {
                if u <= self.lo {
                    0.0
                } else if u >= self.hi {
                    1.0
                } else {
                    let num = std_normal_cdf((u - mu) / sigma) - std_normal_cdf((self.lo - mu) / sigma);
                    (num / self.norm).clamp(0.0, 1.0)
                }
            }
            Distribution::Uniform { lo, hi } => ((u - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub(crate) fn sf_unchecked(&self, u: f64) -> f64 {
        match self.dist {
            Distribution::Normal { mu, sigma, .. } => {
                if u <= self.lo {
                    1.0
                } else if u >= self.hi {
                    0.0
                } else {
                    let num = std_normal_sf((u - mu) / sigma) - std_normal_sf((self.hi - mu) / sigma);
                    (num / self.norm).clamp(0.0, 1.0)
                }
            }
            Distribution::Uniform { lo, hi } => ((hi - u) / (hi - lo)).clamp(0.0, 1.0),
            Distribution::BernoulliTwoPoint { .. } | Distribution::TruncatedPoisson { .. } => {
                let atoms = self.atoms().expect("atomic family");
                atoms
                    .outcomes()
                    .iter()
                    .rev()
                    .take_while(|&&(x, _)| x > u)
                    .map(|&(_, p)| p)
                    .sum::<f64>()
                    .min(1.0)
            }
        }
    }

    /// Expected utility of the prospect.
    pub fn mean(&self) -> f64 {
        match self.dist {
            Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo } => p_lo * u_lo + (1.0 - p_lo) * u_hi,
            Distribution::TruncatedPoisson { .. } => self.atoms().expect("atomic family").mean(),
            Distribution::Normal { mu, sigma, .. } => {
                let a = (self.lo - mu) / sigma;
                let b = (self.hi - mu) / sigma;
                mu + sigma * (std_normal_pdf(a) - std_normal_pdf(b)) / self.norm
            }
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Same distribution with every utility shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        ensure_finite("shift", delta)?;
        let dist = match self.dist {
            Distribution::BernoulliTwoPoint { u_lo, u_hi, p_lo } => Distribution::BernoulliTwoPoint {
                u_lo: u_lo + delta,
                u_hi: u_hi + delta,
                p_lo,
            },
            Distribution::TruncatedPoisson { lambda_p, k_max, x_hi, x_lo, tariff_term } => {
                Distribution::TruncatedPoisson {
                    lambda_p,
                    k_max,
                    x_hi,
                    x_lo,
                    tariff_term: tariff_term + delta,
                }
            }
            Distribution::Normal { mu, sigma, .. } => Distribution::Normal {
                mu: mu + delta,
                sigma,
                lower: Some(self.lo + delta),
                upper: Some(self.hi + delta),
            },
            Distribution::Uniform { lo, hi } => Distribution::Uniform {
                lo: lo + delta,
                hi: hi + delta,
            },
        };
        Self::from_distribution(dist)
    }
}

/// A prospect with a single sure outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertainProspect(f64);

impl CertainProspect {
    pub fn new(utility: f64) -> Result<Self> {
        ensure_finite("certain utility", utility)?;
        Ok(Self(utility))
    }

    pub fn utility(&self) -> f64 {
        self.0
    }
}

/// Either kind of uncertain prospect.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Prospect {
    Discrete(DiscreteProspect),
    Continuous(ContinuousProspect),
}

impl Prospect {
    pub fn mean(&self) -> f64 {
        match self {
            Prospect::Discrete(p) => p.mean(),
            Prospect::Continuous(p) => p.mean(),
        }
    }

    /// Same prospect with every utility shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        Ok(match self {
            Prospect::Discrete(p) => Prospect::Discrete(p.shifted(delta)?),
            Prospect::Continuous(p) => Prospect::Continuous(p.shifted(delta)?),
        })
    }

    /// True when the prospect has more than one possible outcome.
    pub fn is_uncertain(&self) -> bool {
        match self {
            Prospect::Discrete(p) => p.len() >= 2,
            Prospect::Continuous(p) => p.atoms().map_or(true, |a| a.len() >= 2),
        }
    }
}

impl From<DiscreteProspect> for Prospect {
    fn from(p: DiscreteProspect) -> Self {
        Prospect::Discrete(p)
    }
}

impl From<ContinuousProspect> for Prospect {
    fn from(p: ContinuousProspect) -> Self {
        Prospect::Continuous(p)
    }
}

/// CDF of a two-point prospect.
pub fn bernoulli_cdf(prospect: &ContinuousProspect, u: f64) -> Result<f64> {
    match prospect.distribution() {
        Distribution::BernoulliTwoPoint { .. } => prospect.cdf(u),
        _ => Err(Error::InvalidProspect(format!(
            "expected a two-point prospect, got {}",
            prospect.family()
        ))),
    }
}

/// Truncated Poisson masses over the `K + 1` delay outcomes
/// `x_hi - k (x_hi - x_lo) / K`, `k = 0..=K`.
pub fn truncated_poisson_pmf(lambda_p: f64, k_max: u32, x_hi: f64, x_lo: f64) -> Result<DiscreteProspect> {
    if k_max == 0 {
        return Err(Error::InvalidProspect("truncated Poisson needs K >= 1".into()));
    }
    if !(x_lo < x_hi) {
        return Err(Error::InvalidProspect(format!(
            "truncated Poisson needs x_lo < x_hi, got {x_lo}, {x_hi}"
        )));
    }
    if !(lambda_p > 0.0 && lambda_p.is_finite()) {
        return Err(Error::InvalidProspect(format!("Poisson rate {lambda_p} must be > 0")));
    }
    // log of λ^k e^{-λ} / k!; the e^{-λ} factor cancels in the normaliser.
    let log_terms: Vec<f64> = (0..=k_max)
        .map(|k| k as f64 * lambda_p.ln() - lgamma(k as f64 + 1.0))
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = log_terms.iter().map(|l| (l - max).exp()).collect();
    let step = (x_hi - x_lo) / k_max as f64;
    let weights = (0..=k_max)
        .map(|k| {
            let x = if k == k_max { x_lo } else { x_hi - k as f64 * step };
            (x, terms[k as usize])
        })
        .collect();
    DiscreteProspect::from_weights(weights)
}

/// Approximates a prospect by a discrete one on `n_points` equal cells of its
/// support, with each cell's mass placed at the cell midpoint. Atomic
/// families are returned exactly.
pub fn discretize(prospect: &ContinuousProspect, n_points: usize) -> Result<DiscreteProspect> {
    if n_points < 2 {
        return Err(Error::Domain(format!("discretisation needs n_points >= 2, got {n_points}")));
    }
    if let Some(atoms) = prospect.atoms() {
        return Ok(atoms);
    }
    let (lo, hi) = prospect.support();
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidProspect("cannot discretise an unbounded support".into()));
    }
    let width = (hi - lo) / n_points as f64;
    let edge = |j: usize| if j == n_points { hi } else { lo + j as f64 * width };
    let mid_mass = prospect.cdf_unchecked(0.5 * (lo + hi));
    let mut cells = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let (a, b) = (edge(j), edge(j + 1));
        // Differences of the CDF below the median and of the survival
        // function above it keep tail masses accurate.
        let mass = if prospect.cdf_unchecked(b) <= mid_mass {
            prospect.cdf_unchecked(b) - prospect.cdf_unchecked(a)
        } else {
            prospect.sf_unchecked(a) - prospect.sf_unchecked(b)
        };
        cells.push((0.5 * (a + b), mass.max(0.0)));
    }
    DiscreteProspect::from_weights(cells)
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> ContinuousProspect {
        ContinuousProspect::bernoulli(-3.0, -1.0, 0.25).unwrap()
    }

    #[test]
    fn bernoulli_cdf_cases() {
        let p = two_point();
        assert_eq!(bernoulli_cdf(&p, -4.0).unwrap(), 0.0);
        assert_eq!(bernoulli_cdf(&p, -2.0).unwrap(), 0.25);
        assert_eq!(bernoulli_cdf(&p, -3.0).unwrap(), 0.25);
        assert_eq!(bernoulli_cdf(&p, -1.0).unwrap(), 1.0);
        assert!(matches!(bernoulli_cdf(&p, f64::NAN), Err(Error::Domain(_))));
        assert!(bernoulli_cdf(&ContinuousProspect::uniform(0.0, 1.0).unwrap(), 0.5).is_err());
    }

    #[test]
    fn poisson_single_delay_closed_form() {
        let pmf = truncated_poisson_pmf(19.0, 1, -5.0, -9.0).unwrap();
        assert_eq!(pmf.outcomes().len(), 2);
        let (x_lo, p_lo) = pmf.outcomes()[0];
        let (x_hi, p_hi) = pmf.outcomes()[1];
        assert_eq!((x_lo, x_hi), (-9.0, -5.0));
        assert!((p_hi - 0.05).abs() < 1e-15);
        assert!((p_lo - 0.95).abs() < 1e-15);

        let sym = truncated_poisson_pmf(1.0, 1, 1.0, 0.0).unwrap();
        assert!((sym.outcomes()[0].1 - 0.5).abs() < 1e-15);
        assert!((sym.outcomes()[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn poisson_rejects_bad_inputs() {
        assert!(matches!(truncated_poisson_pmf(4.0, 0, 1.0, 0.0), Err(Error::InvalidProspect(_))));
        assert!(matches!(truncated_poisson_pmf(4.0, 5, 0.0, 0.0), Err(Error::InvalidProspect(_))));
        assert!(matches!(truncated_poisson_pmf(4.0, 5, -1.0, 0.0), Err(Error::InvalidProspect(_))));
    }

    #[test]
    fn poisson_outcome_grid() {
        let pmf = truncated_poisson_pmf(4.0, 5, -5.0, -9.0).unwrap();
        let xs: Vec<f64> = pmf.utilities().collect();
        let expected = [-9.0, -8.2, -7.4, -6.6, -5.8, -5.0];
        for (x, e) in xs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12, "{x} vs {e}");
        }
    }

    #[test]
    fn discrete_prospect_validation() {
        assert!(DiscreteProspect::new(vec![(-1.0, 0.5), (-2.0, 0.5)]).is_err());
        assert!(DiscreteProspect::new(vec![(-1.0, 0.5), (-1.0, 0.5)]).is_err());
        assert!(DiscreteProspect::new(vec![(-2.0, 0.5), (-1.0, 0.4)]).is_err());
        assert!(DiscreteProspect::new(vec![(-2.0, 1.5), (-1.0, -0.5)]).is_err());
        assert!(DiscreteProspect::new(vec![]).is_err());
        let dropped = DiscreteProspect::new(vec![(-3.0, 0.0), (-2.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn unsorted_outcomes_are_merged() {
        let p = DiscreteProspect::from_unsorted(vec![(1.0, 0.25), (-1.0, 0.25), (1.0, 0.5)]).unwrap();
        assert_eq!(p.outcomes(), &[(-1.0, 0.25), (1.0, 0.75)]);
        assert!((p.mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn discretize_atomic_families_exactly() {
        let d = discretize(&two_point(), 17).unwrap();
        assert_eq!(d.outcomes(), &[(-3.0, 0.25), (-1.0, 0.75)]);
        let tp = ContinuousProspect::truncated_poisson(4.0, 5, -5.0, -9.0, 0.0).unwrap();
        assert_eq!(discretize(&tp, 3).unwrap(), truncated_poisson_pmf(4.0, 5, -5.0, -9.0).unwrap());
    }

    #[test]
    fn discretize_uniform_cells() {
        let d = discretize(&ContinuousProspect::uniform(0.0, 1.0).unwrap(), 4).unwrap();
        let expected = [(0.125, 0.25), (0.375, 0.25), (0.625, 0.25), (0.875, 0.25)];
        for (got, want) in d.outcomes().iter().zip(expected) {
            assert!((got.0 - want.0).abs() < 1e-15 && (got.1 - want.1).abs() < 1e-15);
        }
        assert!(discretize(&ContinuousProspect::uniform(0.0, 1.0).unwrap(), 1).is_err());
    }

    #[test]
    fn discretize_normal_mean() {
        let n = ContinuousProspect::normal(0.0, 1.0).unwrap();
        let d = discretize(&n, 10_000).unwrap();
        assert!(d.mean().abs() < 1e-4);
        let total: f64 = d.probabilities().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncated_normal_mean_and_tails() {
        let n = ContinuousProspect::normal_truncated(0.0, 1.0, -1.0, 3.0).unwrap();
        // E[Z | -1 < Z < 3] = (φ(-1) - φ(3)) / (Φ(3) - Φ(-1))
        let expected = (0.241_970_724_519_143_37 - 0.004_431_848_411_938_008) / (0.998_650_101_968_369_9 - 0.158_655_253_931_457_07);
        assert!((n.mean() - expected).abs() < 1e-12, "{} vs {expected}", n.mean());
        assert_eq!(n.cdf(-1.0).unwrap(), 0.0);
        assert_eq!(n.sf(3.0).unwrap(), 0.0);
        let u = 2.9;
        assert!((n.cdf(u).unwrap() + n.sf(u).unwrap() - 1.0).abs() < 1e-14);
        assert!(n.sf(2.999_999).unwrap() > 0.0);
    }

    #[test]
    fn tariff_linked_reference() {
        let r = Reference::TariffLinked { x_tilde: -5.0 };
        assert!(matches!(r.resolve(None), Err(Error::UnresolvedReference)));
        let ctx = TariffContext { b: -0.0518, gamma: 10.0 };
        assert!((r.resolve(Some(ctx)).unwrap() - (-5.518)).abs() < 1e-12);
        assert_eq!(Reference::Static { value: 2.0 }.resolve(None).unwrap(), 2.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(CptParams::estimated_means().validate().is_ok());
        assert!(CptParams::new(0.0, 0.5, 0.5, 0.5, 1.0).is_err());
        assert!(CptParams::new(0.5, 0.5, 1.1, 0.5, 1.0).is_err());
        assert!(CptParams::new(0.5, 0.5, 0.5, 0.5, 0.0).is_err());
        assert!(UtilityCoefficients::table1_means().validate().is_ok());
        let mut c = UtilityCoefficients::table1_means();
        c.b = 0.0;
        assert!(c.validate().is_err());
        let mut c = UtilityCoefficients::table1_means();
        c.c.transit = 1.0;
        assert!(c.validate().is_err());
        assert!(TripTimes::new(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn shifted_normal_keeps_truncation() {
        let n = ContinuousProspect::normal(-7.0, 1.0 / 3.0).unwrap();
        let s = n.shifted(-1.0).unwrap();
        let (lo, hi) = s.support();
        assert!((lo + 10.0).abs() < 1e-12 && (hi + 6.0).abs() < 1e-12);
        assert!((s.mean() - (n.mean() - 1.0)).abs() < 1e-12);
    }
}
