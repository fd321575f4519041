//! Computational experiments on a shared-ride prospect against a certain
//! alternative: the fourfold pattern of risk attitudes, strong aversion to
//! mixed prospects, the comparison of self-referenced evaluations, and
//! monotonicity of the subjective acceptance probability in the tariff.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::choice::binary_choice_probability;
use crate::cpt::{prospect_subjective_utility, value_function};
use crate::error::{ensure_finite, Error, Result};
use crate::prospect::{
    truncated_poisson_pmf, ContinuousProspect, CptParams, DiscreteProspect, Prospect, Reference, TariffContext,
};
use crate::quadrature::QuadratureConfig;
use crate::roots::{bisect, bisect_expanding, Bracket};

/// Evenly spaced tariff grid, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffGrid {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub n_points: usize,
}

impl TariffGrid {
    pub fn new(gamma_min: f64, gamma_max: f64, n_points: usize) -> Result<Self> {
        let grid = Self { gamma_min, gamma_max, n_points };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("gamma_min", self.gamma_min)?;
        ensure_finite("gamma_max", self.gamma_max)?;
        if self.n_points < 2 {
            return Err(Error::InvalidParameter {
                name: "n_points",
                value: self.n_points as f64,
                reason: "a tariff grid needs at least two points",
            });
        }
        if !(self.gamma_max > self.gamma_min) {
            return Err(Error::InvalidParameter {
                name: "gamma_max",
                value: self.gamma_max,
                reason: "must exceed gamma_min",
            });
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.gamma_min, self.gamma_max, self.n_points, true)
    }
}

fn linspace(lo: f64, hi: f64, n: usize, include_end: bool) -> Vec<f64> {
    let intervals = if include_end { n - 1 } else { n };
    let step = (hi - lo) / intervals as f64;
    (0..n)
        .map(|i| if include_end && i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

fn default_p_nr() -> f64 {
    0.95
}

/// Numeric setup shared by the experiments. `x_lo` and `x_hi` bound the
/// shared ride's utility before the tariff term `b·γ`; `a_o` is the
/// utility of the certain alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSetup {
    pub x_hi: f64,
    pub x_lo: f64,
    pub a_o: f64,
    pub b: f64,
    pub cpt: CptParams,
    pub tariff_grid: TariffGrid,
    #[serde(default = "default_p_nr")]
    pub p_nr: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl ExperimentSetup {
    pub fn new(
        x_hi: f64,
        x_lo: f64,
        a_o: f64,
        b: f64,
        cpt: CptParams,
        tariff_grid: TariffGrid,
        p_nr: f64,
    ) -> Result<Self> {
        let setup = Self {
            x_hi,
            x_lo,
            a_o,
            b,
            cpt,
            tariff_grid,
            p_nr,
            quadrature: QuadratureConfig::default(),
        };
        setup.validate()?;
        Ok(setup)
    }

    /// `x̄ = -5`, `x̲ = -9`, `A^o = -7`, `b = -0.0518`, estimated mean
    /// parameters with the gain distortion exponent for both signs,
    /// 200 tariffs on `[0, 60]`, `p_NR = 0.95`.
    pub fn paper_defaults() -> Self {
        let means = CptParams::estimated_means();
        Self {
            x_hi: -5.0,
            x_lo: -9.0,
            a_o: -7.0,
            b: -0.0518,
            cpt: means.with_single_alpha(means.alpha_gain),
            tariff_grid: TariffGrid { gamma_min: 0.0, gamma_max: 60.0, n_points: 200 },
            p_nr: 0.95,
            quadrature: QuadratureConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x_hi", self.x_hi), ("x_lo", self.x_lo), ("a_o", self.a_o), ("b", self.b)] {
            ensure_finite(name, v)?;
        }
        if !(self.x_lo < self.x_hi) {
            return Err(Error::InvalidParameter {
                name: "x_lo",
                value: self.x_lo,
                reason: "must be below x_hi",
            });
        }
        if !(self.b < 0.0) {
            return Err(Error::InvalidParameter {
                name: "b",
                value: self.b,
                reason: "tariff coefficient must be negative",
            });
        }
        if !(self.p_nr > 0.5 && self.p_nr < 1.0) {
            return Err(Error::InvalidParameter {
                name: "p_nr",
                value: self.p_nr,
                reason: "must lie in (0.5, 1)",
            });
        }
        self.cpt.validate()?;
        self.tariff_grid.validate()
    }

    pub fn with_grid(self, tariff_grid: TariffGrid) -> Self {
        Self { tariff_grid, ..self }
    }

    pub fn with_cpt(self, cpt: CptParams) -> Self {
        Self { cpt, ..self }
    }

    /// Two-point prospect on `{x̲, x̄}` with mass `p_lo` on `x̲`.
    pub fn two_point_prospect(&self, p_lo: f64) -> Result<DiscreteProspect> {
        DiscreteProspect::new(vec![(self.x_lo, p_lo), (self.x_hi, 1.0 - p_lo)])
    }

    fn context(&self, gamma: f64) -> TariffContext {
        TariffContext { b: self.b, gamma }
    }
}

/// One tariff point of an experiment. `reference` is the resolved `R`;
/// `ra = (u_objective - a_objective) - (u_subjective - a_subjective)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub gamma: f64,
    pub reference: f64,
    pub u_objective: f64,
    pub u_subjective: f64,
    pub a_objective: f64,
    pub a_subjective: f64,
    pub ra: f64,
    pub p_objective: f64,
    pub p_subjective: f64,
}

impl SeriesRecord {
    fn new(gamma: f64, reference: f64, u_o: f64, u_s: f64, a_o: f64, a_s: f64) -> Self {
        Self {
            gamma,
            reference,
            u_objective: u_o,
            u_subjective: u_s,
            a_objective: a_o,
            a_subjective: a_s,
            ra: (u_o - a_o) - (u_s - a_s),
            p_objective: binary_choice_probability(u_o - a_o),
            p_subjective: binary_choice_probability(u_s - a_s),
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.gamma,
            self.reference,
            self.u_objective,
            self.u_subjective,
            self.a_objective,
            self.a_subjective,
            self.ra,
            self.p_objective,
            self.p_subjective,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub experiment: String,
    pub quadrant: Option<Quadrant>,
    pub variant: Option<Variant>,
    pub reference_mode: String,
    pub distribution: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSeries {
    pub metadata: SeriesMetadata,
    pub records: Vec<SeriesRecord>,
}

impl ExperimentSeries {
    fn finish(metadata: SeriesMetadata, records: Vec<SeriesRecord>) -> Result<Self> {
        if let Some(bad) = records.iter().find(|r| !r.is_finite()) {
            return Err(Error::Domain(format!(
                "{} produced a non-finite record at gamma = {}",
                metadata.experiment, bad.gamma
            )));
        }
        Ok(Self { metadata, records })
    }

    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.gamma)
    }

    pub fn ra_signs(&self) -> SignSummary {
        let mut summary = SignSummary { positive: 0, negative: 0, zero: 0, sign_changes: 0, first_change: None };
        let mut last = 0.0;
        for r in &self.records {
            let sign = if r.ra > 0.0 {
                summary.positive += 1;
                1.0
            } else if r.ra < 0.0 {
                summary.negative += 1;
                -1.0
            } else {
                summary.zero += 1;
                continue;
            };
            if last != 0.0 && sign != last {
                summary.sign_changes += 1;
                summary.first_change.get_or_insert(r.gamma);
            }
            last = sign;
        }
        summary
    }
}

/// Signs of the risk attitude `ra` along a series. Zeros are counted but do
/// not break a run of equal signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignSummary {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    pub sign_changes: usize,
    /// First tariff whose sign differs from the preceding non-zero sign.
    pub first_change: Option<f64>,
}

impl SignSummary {
    /// Every point is non-zero with sign `sign`.
    pub fn uniformly(&self, sign: f64) -> bool {
        self.zero == 0 && if sign > 0.0 { self.negative == 0 && self.positive > 0 } else { self.positive == 0 && self.negative > 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    HpGain,
    HpLoss,
    LpGain,
    LpLoss,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::HpGain, Quadrant::HpLoss, Quadrant::LpGain, Quadrant::LpLoss];

    pub fn as_str(&self) -> &'static str {
        match self {
            Quadrant::HpGain => "hp-gain",
            Quadrant::HpLoss => "hp-loss",
            Quadrant::LpGain => "lp-gain",
            Quadrant::LpLoss => "lp-loss",
        }
    }

    pub fn is_gain(&self) -> bool {
        matches!(self, Quadrant::HpGain | Quadrant::LpGain)
    }

    /// Sign of `ra` under probability distortion alone: risk averse (`+1`)
    /// for high-probability gains and low-probability losses, risk seeking
    /// (`-1`) otherwise.
    pub fn fourfold_sign(&self) -> f64 {
        match self {
            Quadrant::HpGain | Quadrant::LpLoss => 1.0,
            Quadrant::HpLoss | Quadrant::LpGain => -1.0,
        }
    }

    /// Truncated Poisson rate with `K = 1` giving the non-reference outcome
    /// probability `p_nr` (high) or `1 - p_nr` (low). The mass on `x̄` is
    /// `1 / (λ^P + 1)`.
    pub fn poisson_rate(&self, p_nr: f64) -> f64 {
        match self {
            Quadrant::HpGain | Quadrant::LpLoss => (1.0 - p_nr) / p_nr,
            Quadrant::LpGain | Quadrant::HpLoss => p_nr / (1.0 - p_nr),
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    GeneralCpt,
    DistortionOnly,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::GeneralCpt => "general-cpt",
            Variant::DistortionOnly => "distortion-only",
        }
    }
}

/// Relative attractiveness of the two-point shared ride against the
/// certain alternative over the admissible part of the tariff grid.
///
/// Gain quadrants take `R = x̲ + bγ` and keep only tariffs with
/// `x̲ + bγ < A^o`; loss quadrants take `R = x̄ + bγ` and keep tariffs with
/// `x̄ + bγ > A^o`.
pub fn fourfold_experiment(setup: &ExperimentSetup, quadrant: Quadrant, variant: Variant) -> Result<ExperimentSeries> {
    setup.validate()?;
    let params = match variant {
        Variant::GeneralCpt => setup.cpt,
        Variant::DistortionOnly => setup.cpt.distortion_only(),
    };
    let lambda_p = quadrant.poisson_rate(setup.p_nr);
    let anchor = if quadrant.is_gain() { setup.x_lo } else { setup.x_hi };

    let mut records = Vec::new();
    for gamma in setup.tariff_grid.points() {
        let reference = anchor + setup.b * gamma;
        let admissible = if quadrant.is_gain() { reference < setup.a_o } else { reference > setup.a_o };
        if !admissible {
            continue;
        }
        let shift = setup.b * gamma;
        let prospect = truncated_poisson_pmf(lambda_p, 1, setup.x_hi + shift, setup.x_lo + shift)?;
        let u_s = crate::cpt::subjective_utility_at(&prospect, reference, &params);
        let a_s = value_function(setup.a_o, reference, &params);
        records.push(SeriesRecord::new(gamma, reference, prospect.mean(), u_s, setup.a_o, a_s));
    }
    if records.is_empty() {
        let violated = if quadrant.is_gain() { "x_lo + b*gamma < a_o" } else { "x_hi + b*gamma > a_o" };
        return Err(Error::EmptyTariffRange(format!(
            "{quadrant}: no tariff in [{}, {}] satisfies {violated}",
            setup.tariff_grid.gamma_min, setup.tariff_grid.gamma_max
        )));
    }
    ExperimentSeries::finish(
        SeriesMetadata {
            experiment: "fourfold".into(),
            quadrant: Some(quadrant),
            variant: Some(variant),
            reference_mode: if quadrant.is_gain() { "x_lo+b*gamma" } else { "x_hi+b*gamma" }.into(),
            distribution: format!("truncated_poisson(lambda_p={lambda_p}, k_max=1)"),
        },
        records,
    )
}

/// Loss-aversion threshold above which a prospect evaluated against its own
/// expectation is subjectively negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub lower: f64,
    pub upper: f64,
    /// `U^s_Ū` at `lower` (non-negative) and `upper` (negative).
    pub residual_lower: f64,
    pub residual_upper: f64,
    pub iterations: usize,
}

/// Bisection on `λ` of `U^s_Ū`, which falls linearly in `λ` with every other
/// parameter of `base` held fixed.
pub fn lambda_star_search(
    prospect: &Prospect,
    base: &CptParams,
    lambda_range: (f64, f64),
    tol: f64,
    quad: &QuadratureConfig,
) -> Result<LambdaStar> {
    if !prospect.is_uncertain() {
        return Err(Error::InvalidProspect(
            "a single-outcome prospect has U^s = 0 against its mean for every lambda".into(),
        ));
    }
    base.validate()?;
    let (lo, hi) = lambda_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda_range",
            value: lo,
            reason: "need 0 < lower < upper < inf",
        });
    }
    let mean = prospect.mean();
    let f = |lambda: f64| prospect_subjective_utility(prospect, mean, &base.with_lambda(lambda), quad);
    let Bracket { root, lower, upper, f_lower, f_upper, iterations } = bisect(f, lo, hi, tol)?;
    Ok(LambdaStar {
        lambda_star: root,
        lower,
        upper,
        residual_lower: f_lower,
        residual_upper: f_upper,
        iterations,
    })
}

/// Tariff interval on which a mixed prospect is strictly less attractive
/// subjectively than objectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffBounds {
    pub gamma_lower: f64,
    /// `+inf` when `β⁺ = 1`.
    pub gamma_upper: f64,
    /// `U^s_Ū`, which does not depend on the tariff.
    pub subjective_at_mean: f64,
    /// Root `d*` of `d^β⁺ - d = U^s_Ū` with `d = A^o - Ū`, if finite.
    pub d_star: Option<f64>,
}

impl TariffBounds {
    /// `n` tariffs on `[γ_lower, γ_upper)`; when the upper bound is infinite
    /// the grid runs to `fallback_max` inclusive.
    pub fn grid(&self, n: usize, fallback_max: f64) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "n_points",
                value: n as f64,
                reason: "a tariff grid needs at least two points",
            });
        }
        if self.gamma_upper.is_finite() {
            Ok(linspace(self.gamma_lower, self.gamma_upper, n, false))
        } else if fallback_max > self.gamma_lower {
            Ok(linspace(self.gamma_lower, fallback_max, n, true))
        } else {
            Err(Error::EmptyTariffRange(format!(
                "grid maximum {fallback_max} does not exceed gamma_lower = {}",
                self.gamma_lower
            )))
        }
    }
}

pub fn mixed_prospect_tariff_bounds(setup: &ExperimentSetup, distribution: &ContinuousProspect) -> Result<TariffBounds> {
    setup.validate()?;
    let x_bar = distribution.mean();
    let centred = Prospect::Continuous(distribution.shifted(-x_bar)?);
    let s = prospect_subjective_utility(&centred, 0.0, &setup.cpt, &setup.quadrature)?;
    if !(s < 0.0) {
        return Err(Error::Domain(format!(
            "mixed prospect is not subjectively negative against its mean (U^s = {s}); lambda is below lambda*"
        )));
    }
    let gamma_lower = (setup.a_o - x_bar) / setup.b + 0.0;
    let beta = setup.cpt.beta_gain;
    if beta == 1.0 {
        return Ok(TariffBounds { gamma_lower, gamma_upper: f64::INFINITY, subjective_at_mean: s, d_star: None });
    }
    let h = |d: f64| Ok(d.powf(beta) - d - s);
    let root = bisect_expanding(h, 0.0, 1.0, 1e15, 1e-12)?;
    let d_star = root.root;
    Ok(TariffBounds {
        gamma_lower,
        gamma_upper: (setup.a_o - x_bar - d_star) / setup.b,
        subjective_at_mean: s,
        d_star: Some(d_star),
    })
}

/// `p^o` and `p^s_Ū` over `setup.tariff_grid.n_points` tariffs in
/// `[γ_lower, γ_upper)`, with `Ū` recomputed at every tariff.
pub fn mixed_prospect_experiment(setup: &ExperimentSetup, distribution: &ContinuousProspect) -> Result<ExperimentSeries> {
    let bounds = mixed_prospect_tariff_bounds(setup, distribution)?;
    let grid = bounds.grid(setup.tariff_grid.n_points, setup.tariff_grid.gamma_max)?;
    let mut records = Vec::with_capacity(grid.len());
    for gamma in grid {
        let shifted = Prospect::Continuous(distribution.shifted(setup.b * gamma)?);
        let mean = shifted.mean();
        let u_s = prospect_subjective_utility(&shifted, mean, &setup.cpt, &setup.quadrature)?;
        // A^o - Ū written so that it vanishes exactly at γ_lower.
        let d = setup.b * (bounds.gamma_lower - gamma);
        let a_s = value_function(d, 0.0, &setup.cpt);
        records.push(SeriesRecord::new(gamma, mean, mean, u_s, setup.a_o, a_s));
    }
    ExperimentSeries::finish(
        SeriesMetadata {
            experiment: "mixed".into(),
            quadrant: None,
            variant: None,
            reference_mode: "expected".into(),
            distribution: distribution.family().into(),
        },
        records,
    )
}

/// Four families on `[x̲, x̄]`: two-point with `p_lo = 0.5`, truncated
/// Poisson with `λ^P = 4` and `K = 5`, a normal centred on the interval
/// with `±6σ` filling it, and uniform.
pub fn self_reference_families(setup: &ExperimentSetup) -> Result<Vec<ContinuousProspect>> {
    let mid = 0.5 * (setup.x_lo + setup.x_hi);
    let sigma = (setup.x_hi - setup.x_lo) / 12.0;
    Ok(vec![
        ContinuousProspect::bernoulli(setup.x_lo, setup.x_hi, 0.5)?,
        ContinuousProspect::truncated_poisson(4.0, 5, setup.x_hi, setup.x_lo, 0.0)?,
        ContinuousProspect::normal_truncated(mid, sigma, setup.x_lo, setup.x_hi)?,
        ContinuousProspect::uniform(setup.x_lo, setup.x_hi)?,
    ])
}

/// Same prospect evaluated against its own expectation and against the
/// certain alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfReferenceComparison {
    pub distribution: String,
    pub gamma_star: f64,
    pub mean_reference: ExperimentSeries,
    pub certain_reference: ExperimentSeries,
    /// `|p^s_Ū - p^s_{A^o}|` at `γ*`.
    pub equality_gap: f64,
    /// Smallest `p^s_Ū - p^s_{A^o}` over the grid.
    pub min_margin: f64,
}

/// Evaluates each distribution over the setup grid with `γ* = (A^o - X̄)/b`
/// inserted. Utilities are taken relative to `Ū`, which leaves the
/// subjective values unchanged and makes `Ū = A^o` hold exactly at `γ*`.
pub fn self_reference_experiment(
    setup: &ExperimentSetup,
    distributions: &[ContinuousProspect],
) -> Result<Vec<SelfReferenceComparison>> {
    setup.validate()?;
    let params = &setup.cpt;
    let quad = &setup.quadrature;
    let mut out = Vec::with_capacity(distributions.len());
    for dist in distributions {
        let x_bar = dist.mean();
        let gamma_star = (setup.a_o - x_bar) / setup.b + 0.0;
        let mut grid = setup.tariff_grid.points();
        if gamma_star >= setup.tariff_grid.gamma_min
            && gamma_star <= setup.tariff_grid.gamma_max
            && !grid.contains(&gamma_star)
        {
            let at = grid.partition_point(|&g| g < gamma_star);
            grid.insert(at, gamma_star);
        }

        let centred = Prospect::Continuous(dist.shifted(-x_bar)?);
        let s = prospect_subjective_utility(&centred, 0.0, params, quad)?;
        let mut at_mean = Vec::with_capacity(grid.len());
        let mut at_certain = Vec::with_capacity(grid.len());
        let mut equality_gap = f64::NAN;
        let mut min_margin = f64::INFINITY;
        for &gamma in &grid {
            let mean = x_bar + setup.b * gamma;
            let d = setup.b * (gamma_star - gamma);
            let a_s = value_function(d, 0.0, params);
            let u_certain = prospect_subjective_utility(&centred, d, params, quad)?;
            let m = SeriesRecord::new(gamma, mean, mean, s, setup.a_o, a_s);
            let c = SeriesRecord::new(gamma, setup.a_o, mean, u_certain, setup.a_o, 0.0);
            let margin = m.p_subjective - c.p_subjective;
            min_margin = min_margin.min(margin);
            if gamma == gamma_star {
                equality_gap = margin.abs();
            }
            at_mean.push(m);
            at_certain.push(c);
        }
        let meta = |mode: &str| SeriesMetadata {
            experiment: "selfref".into(),
            quadrant: None,
            variant: None,
            reference_mode: mode.into(),
            distribution: dist.family().into(),
        };
        out.push(SelfReferenceComparison {
            distribution: dist.family().into(),
            gamma_star,
            mean_reference: ExperimentSeries::finish(meta("expected"), at_mean)?,
            certain_reference: ExperimentSeries::finish(meta("certain"), at_certain)?,
            equality_gap,
            min_margin,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub index: usize,
    pub gamma: f64,
    pub previous: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub reference: Reference,
    pub gammas: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub strictly_decreasing: bool,
    pub first_violation: Option<MonotonicityViolation>,
}

/// Subjective acceptance probability of `prospect + bγ` against the certain
/// alternative at every grid tariff, and whether it strictly decreases.
pub fn verify_monotonicity(
    setup: &ExperimentSetup,
    prospect: &Prospect,
    reference: &Reference,
    grid: &TariffGrid,
) -> Result<MonotonicityReport> {
    setup.validate()?;
    grid.validate()?;
    let gammas = grid.points();
    let mut probabilities = Vec::with_capacity(gammas.len());
    for &gamma in &gammas {
        let r = reference.resolve(Some(setup.context(gamma)))?;
        let shifted = prospect.shifted(setup.b * gamma)?;
        let u_s = prospect_subjective_utility(&shifted, r, &setup.cpt, &setup.quadrature)?;
        let a_s = value_function(setup.a_o, r, &setup.cpt);
        probabilities.push(binary_choice_probability(u_s - a_s));
    }
    let first_violation = probabilities.windows(2).enumerate().find_map(|(i, w)| {
        (w[1] >= w[0]).then(|| MonotonicityViolation {
            index: i + 1,
            gamma: gammas[i + 1],
            previous: w[0],
            current: w[1],
        })
    });
    Ok(MonotonicityReport {
        reference: *reference,
        gammas,
        probabilities,
        strictly_decreasing: first_violation.is_none(),
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpt::weighting_function;

    fn setup() -> ExperimentSetup {
        ExperimentSetup::paper_defaults()
    }

    #[test]
    fn setup_validation() {
        assert!(setup().validate().is_ok());
        let mut s = setup();
        s.b = 0.0;
        assert!(s.validate().is_err());
        let mut s = setup();
        s.x_lo = -4.0;
        assert!(s.validate().is_err());
        let mut s = setup();
        s.p_nr = 0.5;
        assert!(s.validate().is_err());
        assert!(TariffGrid::new(0.0, 1.0, 1).is_err());
        let g = TariffGrid::new(0.0, 60.0, 200).unwrap().points();
        assert_eq!((g.len(), g[0], g[199]), (200, 0.0, 60.0));
    }

    #[test]
    fn quadrant_rates_put_p_nr_on_the_non_reference_outcome() {
        let s = setup();
        for q in Quadrant::ALL {
            let d = truncated_poisson_pmf(q.poisson_rate(0.95), 1, s.x_hi, s.x_lo).unwrap();
            let p_hi = d.outcomes()[1].1;
            let p_nr = if q.is_gain() { p_hi } else { 1.0 - p_hi };
            let want = if matches!(q, Quadrant::HpGain | Quadrant::HpLoss) { 0.95 } else { 0.05 };
            assert!((p_nr - want).abs() < 1e-14, "{q}");
        }
    }

    #[test]
    fn distortion_only_pattern_matches_closed_form() {
        let s = setup();
        let alpha = s.cpt.alpha_gain;
        let delta = s.x_hi - s.x_lo;
        for (q, sign) in [(Quadrant::HpGain, 1.0), (Quadrant::HpLoss, -1.0), (Quadrant::LpGain, -1.0), (Quadrant::LpLoss, 1.0)] {
            let series = fourfold_experiment(&s, q, Variant::DistortionOnly).unwrap();
            let q_nr = if matches!(q, Quadrant::HpGain | Quadrant::HpLoss) { 0.95 } else { 0.05 };
            let pi = weighting_function(q_nr, alpha).unwrap();
            let want = if q.is_gain() { delta * (q_nr - pi) } else { delta * (pi - q_nr) };
            for r in &series.records {
                assert!(r.ra * sign > 0.0, "{q} at {}", r.gamma);
                assert!((r.ra - want).abs() < 1e-12, "{q}: {} vs {want}", r.ra);
            }
        }
    }

    #[test]
    fn loss_quadrants_respect_admissibility() {
        let s = setup();
        let series = fourfold_experiment(&s, Quadrant::HpLoss, Variant::GeneralCpt).unwrap();
        let limit = (s.a_o - s.x_hi) / s.b;
        assert!(series.gammas().all(|g| g < limit));
        assert!(series.records.len() < 200);
        let high = s.with_grid(TariffGrid::new(40.0, 60.0, 10).unwrap());
        let err = fourfold_experiment(&high, Quadrant::LpLoss, Variant::GeneralCpt).unwrap_err();
        assert!(matches!(&err, Error::EmptyTariffRange(m) if m.contains("x_hi + b*gamma > a_o")));
    }

    #[test]
    fn rational_agent_has_zero_ra() {
        let s = setup().with_cpt(CptParams::risk_neutral());
        for q in Quadrant::ALL {
            for v in [Variant::GeneralCpt, Variant::DistortionOnly] {
                for r in fourfold_experiment(&s, q, v).unwrap().records {
                    assert!(r.ra.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn general_cpt_changes_sign_in_hp_gain() {
        let series = fourfold_experiment(&setup(), Quadrant::HpGain, Variant::GeneralCpt).unwrap();
        let first = series.records.first().unwrap().ra;
        let last = series.records.last().unwrap().ra;
        assert!(first > 0.0 && last < 0.0, "{first} {last}");
    }

    #[test]
    fn sign_summary_counts_changes() {
        let mut series = fourfold_experiment(&setup(), Quadrant::HpGain, Variant::GeneralCpt).unwrap();
        let summary = series.ra_signs();
        assert!(summary.sign_changes >= 1 && summary.first_change.is_some());
        for (r, ra) in series.records.iter_mut().zip([1.0, 0.0, 2.0, -1.0, 0.0, -3.0, 4.0]) {
            r.ra = ra;
        }
        series.records.truncate(7);
        let summary = series.ra_signs();
        assert_eq!((summary.positive, summary.negative, summary.zero, summary.sign_changes), (3, 2, 2, 2));
        assert_eq!(summary.first_change, Some(series.records[3].gamma));
        assert!(!summary.uniformly(1.0));
    }

    #[test]
    fn distortion_only_signs_follow_the_fourfold_pattern() {
        for q in Quadrant::ALL {
            let series = fourfold_experiment(&setup(), q, Variant::DistortionOnly).unwrap();
            assert!(series.ra_signs().uniformly(q.fourfold_sign()), "{q}");
        }
    }

    #[test]
    fn lambda_star_symmetric_is_one() {
        let p: Prospect = DiscreteProspect::new(vec![(-3.0, 0.5), (-1.0, 0.5)]).unwrap().into();
        let base = CptParams::new(1.0, 1.0, 0.6, 0.6, 1.0).unwrap();
        let ls = lambda_star_search(&p, &base, (1e-9, 1e6), 1e-12, &QuadratureConfig::default()).unwrap();
        assert!((ls.lambda_star - 1.0).abs() < 1e-10, "{}", ls.lambda_star);
        assert!(ls.residual_lower >= 0.0 && ls.residual_upper < 0.0);
    }

    #[test]
    fn lambda_star_rejects_degenerate() {
        let p: Prospect = DiscreteProspect::degenerate(-2.0).unwrap().into();
        assert!(lambda_star_search(&p, &CptParams::estimated_means(), (1e-9, 1e6), 1e-12, &QuadratureConfig::default()).is_err());
    }

    #[test]
    fn lambda_star_matches_gain_loss_ratio() {
        let s = setup();
        let d = s.two_point_prospect(0.5).unwrap();
        let p: Prospect = d.clone().into();
        let ls = lambda_star_search(&p, &s.cpt, (1e-9, 1e6), 1e-12, &s.quadrature).unwrap();
        // U^s_Ū = π(0.5)·2^β⁺ − λ π(0.5)·2^β⁻
        let ratio = 2f64.powf(s.cpt.beta_gain) / 2f64.powf(s.cpt.beta_loss);
        assert!((ls.lambda_star - ratio).abs() < 1e-9, "{} vs {ratio}", ls.lambda_star);
    }

    #[test]
    fn tariff_bounds_residuals() {
        let s = setup();
        let normal = ContinuousProspect::normal_truncated(-7.0, 4.0 / 12.0, -9.0, -5.0).unwrap();
        let b = mixed_prospect_tariff_bounds(&s, &normal).unwrap();
        assert!((normal.mean() + s.b * b.gamma_lower - s.a_o).abs() < 1e-10);
        let d = b.d_star.unwrap();
        assert!((d.powf(s.cpt.beta_gain) - d - b.subjective_at_mean).abs() < 1e-9);
        assert!(b.gamma_upper > b.gamma_lower);

        let linear_gain = s.with_cpt(CptParams { beta_gain: 1.0, ..s.cpt });
        let b = mixed_prospect_tariff_bounds(&linear_gain, &normal).unwrap();
        assert!(b.gamma_upper.is_infinite());
    }

    #[test]
    fn mixed_experiment_inequality_and_monotonicity() {
        let s = setup().with_grid(TariffGrid::new(0.0, 60.0, 50).unwrap());
        let normal = ContinuousProspect::normal_truncated(-7.0, 4.0 / 12.0, -9.0, -5.0).unwrap();
        let series = mixed_prospect_experiment(&s, &normal).unwrap();
        assert_eq!(series.records.len(), 50);
        for w in series.records.windows(2) {
            assert!(w[1].p_objective < w[0].p_objective);
            assert!(w[1].p_subjective < w[0].p_subjective);
        }
        assert!(series.records.iter().all(|r| r.p_subjective < r.p_objective));
    }

    #[test]
    fn mixed_experiment_rational_curves_coincide() {
        let s = setup()
            .with_grid(TariffGrid::new(0.0, 60.0, 20).unwrap())
            .with_cpt(CptParams::risk_neutral().with_lambda(1.0 + 1e-9));
        let normal = ContinuousProspect::normal_truncated(-7.0, 4.0 / 12.0, -9.0, -5.0).unwrap();
        // λ slightly above 1 keeps U^s_Ū negative so the bounds exist.
        for r in mixed_prospect_experiment(&s, &normal).unwrap().records {
            assert!((r.p_subjective - r.p_objective).abs() < 1e-8);
        }
    }

    fn margins(cmp: &SelfReferenceComparison) -> impl Iterator<Item = (f64, f64)> + '_ {
        cmp.mean_reference
            .records
            .iter()
            .zip(&cmp.certain_reference.records)
            .map(|(m, c)| (m.gamma, m.p_subjective - c.p_subjective))
    }

    #[test]
    fn self_reference_equality_point_and_loss_side() {
        let s = setup().with_grid(TariffGrid::new(-40.0, 40.0, 41).unwrap());
        let fams = self_reference_families(&s).unwrap();
        for cmp in self_reference_experiment(&s, &fams).unwrap() {
            assert!(cmp.equality_gap < 1e-8, "{}: {}", cmp.distribution, cmp.equality_gap);
            assert_eq!(cmp.mean_reference.records.len(), cmp.certain_reference.records.len());
            for (gamma, margin) in margins(&cmp) {
                if gamma <= cmp.gamma_star {
                    assert!(margin >= 0.0, "{} at {gamma}: {margin}", cmp.distribution);
                }
            }
        }
    }

    #[test]
    fn self_reference_holds_everywhere_with_linear_gains() {
        let s = setup().with_grid(TariffGrid::new(-40.0, 40.0, 41).unwrap());
        let s = s.with_cpt(CptParams { beta_gain: 1.0, ..s.cpt });
        let fams = self_reference_families(&s).unwrap();
        for cmp in self_reference_experiment(&s, &fams).unwrap() {
            assert!(cmp.min_margin >= 0.0, "{}: {}", cmp.distribution, cmp.min_margin);
        }
    }

    #[test]
    fn self_reference_fails_just_above_gamma_star_when_gains_are_concave() {
        // V(d) = d^β⁺ has unbounded slope at d = 0 while U^s_{A^o} moves
        // linearly in d, so the ordering flips on a neighbourhood above γ*.
        let s = setup().with_grid(TariffGrid::new(0.0, 2.0, 5).unwrap());
        let fams = self_reference_families(&s).unwrap();
        let cmp = &self_reference_experiment(&s, &fams[..1]).unwrap()[0];
        assert!(cmp.min_margin < 0.0);
    }

    #[test]
    fn monotonicity_for_both_reference_modes() {
        let s = setup();
        let p: Prospect = s.two_point_prospect(0.5).unwrap().into();
        let x_bar = p.mean();
        for r in [Reference::Static { value: 0.0 }, Reference::TariffLinked { x_tilde: x_bar }] {
            let rep = verify_monotonicity(&s, &p, &r, &s.tariff_grid).unwrap();
            assert!(rep.strictly_decreasing, "{r:?}: {:?}", rep.first_violation);
            assert_eq!(rep.probabilities.len(), 200);
        }
    }

    #[test]
    fn monotonicity_rejects_zero_tariff_weight() {
        let mut s = setup();
        s.b = 0.0;
        let p: Prospect = DiscreteProspect::new(vec![(-9.0, 0.5), (-5.0, 0.5)]).unwrap().into();
        let r = Reference::Static { value: 0.0 };
        assert!(matches!(
            verify_monotonicity(&s, &p, &r, &s.tariff_grid),
            Err(Error::InvalidParameter { name: "b", .. })
        ));
    }
}
