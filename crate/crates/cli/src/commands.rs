//! Subcommands. Each returns the text for stdout and an exit code; all
//! numbers come from library calls.

use std::path::Path;

use prospectus_core::choice::{expected_utility, logit_probabilities, trip_utility};
use prospectus_core::cpt::{inverse_value_function, prospect_subjective_utility};
use prospectus_core::estimation::cpt_nls::{fit_cpt_nls_with, CptNlsOptions};
use prospectus_core::estimation::synthetic::{
    cpt_population, simulate_ce_observations, simulate_lottery_responses, simulate_mode_choices,
};
use prospectus_core::estimation::{
    detect_probability_weighting, detect_reflection_effect, fit_mixed_logit_msl, loss_aversion_ratio, EffectRate,
    EstimationResult, MixedLogitSpec, ProbabilityBand,
};
use prospectus_core::experiments::{
    fourfold_experiment, lambda_star_search, mixed_prospect_experiment, mixed_prospect_tariff_bounds,
    self_reference_experiment, self_reference_families, verify_monotonicity, ExperimentSeries, Quadrant,
    SeriesRecord, TariffGrid, Variant,
};
use prospectus_core::prospect::{
    ContinuousProspect, DiscreteProspect, Distribution, Prospect, Reference, TariffContext,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{exit, CliError, CliResult};
use crate::io::{
    ce_rows, choice_rows, csv_text, envelope, fmt_num, lottery_rows, number, read_ce, read_choices, read_lotteries,
    read_options, round12, to_json_text, Output,
};

/// Tolerance on `|p^s_Ū − p^s_{A^o}|` at `γ*`.
pub const EQUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub exit_code: i32,
}

impl Report {
    fn ok(stdout: String) -> Self {
        Self { stdout, exit_code: exit::SUCCESS }
    }
}

pub fn choice_prob(config: &RunConfig, options: &Path, out: &Output) -> CliResult<Report> {
    let options = read_options(options)?;
    if options.len() < 2 {
        return Err(CliError::Usage(format!("{} option(s) given; a choice needs at least two", options.len())));
    }
    let utilities: Vec<f64> = options.iter().map(|o| trip_utility(o, &config.utility)).collect();
    let probabilities = logit_probabilities(&utilities)?;
    let rows: Vec<Value> = options
        .iter()
        .zip(utilities.iter().zip(&probabilities))
        .enumerate()
        .map(|(i, (o, (u, p)))| json!({ "index": i, "mode": o.mode, "utility": u, "probability": p }))
        .collect();
    let doc = envelope("choice-prob", &json!({ "options": rows }))?;
    out.write_json("choice_prob.json", &doc)?;
    Ok(Report::ok(to_json_text(&doc)))
}

/// Prospect input: exactly one of `discrete` (pairs of utility and
/// probability, merged and sorted on read) or `continuous`, plus the tariff
/// needed by a tariff-linked reference.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProspectFile {
    #[serde(default)]
    pub discrete: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub continuous: Option<Distribution>,
    #[serde(default)]
    pub tariff: Option<TariffContext>,
}

impl ProspectFile {
    pub fn prospect(&self) -> CliResult<Prospect> {
        match (&self.discrete, &self.continuous) {
            (Some(d), None) => Ok(Prospect::Discrete(DiscreteProspect::from_unsorted(d.clone())?)),
            (None, Some(c)) => Ok(Prospect::Continuous(ContinuousProspect::from_distribution(*c)?)),
            _ => Err(CliError::Usage("prospect file needs exactly one of `discrete` or `continuous`".into())),
        }
    }
}

pub fn cpt_utility(config: &RunConfig, prospect: &Path, out: &Output) -> CliResult<Report> {
    let text = std::fs::read_to_string(prospect).map_err(|e| CliError::io(prospect, e))?;
    let file: ProspectFile =
        serde_json::from_str(&text).map_err(|e| CliError::parse(prospect.display().to_string(), e.to_string()))?;
    let p = file.prospect()?;
    let r = config.reference.resolve(file.tariff)?;
    let u_s = prospect_subjective_utility(&p, r, &config.cpt, &config.quadrature)?;
    let kind = match &p {
        Prospect::Discrete(_) => "discrete",
        Prospect::Continuous(c) => c.family(),
    };
    let expected = match &p {
        Prospect::Discrete(d) => expected_utility(d),
        Prospect::Continuous(c) => c.mean(),
    };
    let doc = envelope(
        "cpt-utility",
        &json!({
            "kind": kind,
            "reference": r,
            "subjective_utility": u_s,
            "expected_utility": expected,
            "certainty_equivalent": inverse_value_function(u_s, r, &config.cpt),
        }),
    )?;
    out.write_json("cpt_utility.json", &doc)?;
    Ok(Report::ok(to_json_text(&doc)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fourfold,
    Mixed,
    SelfReference,
    Monotonicity,
}

/// One asserted or reported property of an experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub property: String,
    /// `None` for properties that are reported but not asserted.
    pub passed: Option<bool>,
    pub detail: String,
    pub counterexample_gamma: Option<f64>,
}

impl Verdict {
    fn line(&self) -> String {
        let status = match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        let mut s = format!("{}: {status} ({})", self.property, self.detail);
        if let Some(g) = self.counterexample_gamma {
            s.push_str(&format!("; first counterexample at gamma = {}", fmt_num(g)));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SeriesRow {
    gamma: f64,
    reference: f64,
    u_objective: f64,
    u_subjective: f64,
    a_objective: f64,
    a_subjective: f64,
    ra: f64,
    p_objective: f64,
    p_subjective: f64,
}

impl From<&SeriesRecord> for SeriesRow {
    fn from(r: &SeriesRecord) -> Self {
        Self {
            gamma: round12(r.gamma),
            reference: round12(r.reference),
            u_objective: round12(r.u_objective),
            u_subjective: round12(r.u_subjective),
            a_objective: round12(r.a_objective),
            a_subjective: round12(r.a_subjective),
            ra: round12(r.ra),
            p_objective: round12(r.p_objective),
            p_subjective: round12(r.p_subjective),
        }
    }
}

fn write_series(out: &Output, name: &str, series: &ExperimentSeries) -> CliResult<()> {
    let rows: Vec<SeriesRow> = series.records.iter().map(SeriesRow::from).collect();
    out.write_text(&format!("{name}.csv"), &csv_text("series", &rows)?)?;
    Ok(())
}

pub fn experiment(config: &RunConfig, which: Experiment, out: &Output) -> CliResult<Report> {
    let (name, verdicts, extra) = match which {
        Experiment::Fourfold => ("fourfold", fourfold(config, out)?, Value::Null),
        Experiment::Mixed => {
            let (v, extra) = mixed(config, out)?;
            ("mixed", v, extra)
        }
        Experiment::SelfReference => ("selfref", selfref(config, out)?, Value::Null),
        Experiment::Monotonicity => ("monotonicity", monotonicity(config, out)?, Value::Null),
    };
    let all_pass = verdicts.iter().all(|v| v.passed != Some(false));
    let mut body = json!({ "experiment": name, "all_pass": all_pass, "verdicts": verdicts });
    if !extra.is_null() {
        body["details"] = extra;
    }
    let doc = envelope("experiment", &body)?;
    out.write_json(&format!("{name}_summary.json"), &doc)?;
    let mut stdout: String = verdicts.iter().map(|v| v.line() + "\n").collect();
    stdout.push_str(if all_pass { "all asserted properties hold\n" } else { "property violated\n" });
    Ok(Report { stdout, exit_code: if all_pass { exit::SUCCESS } else { exit::PROPERTY_VIOLATION } })
}

fn sign_char(s: f64) -> char {
    if s > 0.0 {
        '+'
    } else {
        '-'
    }
}

fn fourfold(config: &RunConfig, out: &Output) -> CliResult<Vec<Verdict>> {
    let setup = &config.experiments.setup;
    let mut verdicts = Vec::new();
    let mut all_series = Vec::new();
    let expected: String = Quadrant::ALL.iter().map(|q| sign_char(q.fourfold_sign())).collect();
    let mut observed = String::new();
    let mut counterexample = None;
    let mut changes = Vec::new();
    for variant in [Variant::DistortionOnly, Variant::GeneralCpt] {
        for q in Quadrant::ALL {
            let series = fourfold_experiment(setup, q, variant)?;
            write_series(out, &format!("fourfold_{}_{}", q.as_str(), variant.as_str()), &series)?;
            let signs = series.ra_signs();
            match variant {
                Variant::DistortionOnly => {
                    let sign = q.fourfold_sign();
                    if signs.uniformly(sign) {
                        observed.push(sign_char(sign));
                    } else {
                        observed.push('?');
                        if counterexample.is_none() {
                            counterexample = series
                                .records
                                .iter()
                                .find(|r| !(r.ra * sign > 0.0))
                                .map(|r| r.gamma);
                        }
                    }
                }
                Variant::GeneralCpt => changes.push(format!("{} {}", q.as_str(), signs.sign_changes)),
            }
            all_series.push(series);
        }
    }
    verdicts.push(Verdict {
        property: format!("distortion-only sign pattern ({expected})"),
        passed: Some(counterexample.is_none() && observed == expected),
        detail: format!("observed {observed} across hp-gain, hp-loss, lp-gain, lp-loss"),
        counterexample_gamma: counterexample,
    });
    let total: usize = all_series[4..].iter().map(|s| s.ra_signs().sign_changes).sum();
    verdicts.push(Verdict {
        property: "general-cpt sign changes in gamma".into(),
        passed: None,
        detail: format!("{}; pattern {}", changes.join(", "), if total > 0 { "violated" } else { "kept" }),
        counterexample_gamma: None,
    });
    out.write_json("fourfold.json", &envelope("experiment", &json!({ "series": all_series }))?)?;
    Ok(verdicts)
}

fn mixed(config: &RunConfig, out: &Output) -> CliResult<(Vec<Verdict>, Value)> {
    let ex = &config.experiments;
    let g = ex.setup.tariff_grid;
    let setup = ex.setup.with_grid(TariffGrid::new(g.gamma_min, g.gamma_max, ex.mixed.n_points)?);
    let dist = &ex.mixed.distribution;
    let bounds = mixed_prospect_tariff_bounds(&setup, dist)?;
    let series = mixed_prospect_experiment(&setup, dist)?;
    write_series(out, &format!("mixed_{}", dist.family()), &series)?;
    out.write_json("mixed.json", &envelope("experiment", &json!({ "series": [series] }))?)?;

    let mut verdicts = Vec::new();
    let bad = series.records.iter().find(|r| !(r.p_subjective < r.p_objective));
    verdicts.push(Verdict {
        property: "p^s_U < p^o on [gamma_lower, gamma_upper)".into(),
        passed: Some(bad.is_none()),
        detail: format!(
            "{} tariffs in [{}, {}), {} distribution",
            series.records.len(),
            fmt_num(bounds.gamma_lower),
            fmt_num(bounds.gamma_upper),
            dist.family()
        ),
        counterexample_gamma: bad.map(|r| r.gamma),
    });

    let ls = &ex.lambda_star;
    let two_point: Prospect = setup.two_point_prospect(ls.p_lo)?.into();
    let star = lambda_star_search(&two_point, &setup.cpt, (ls.bracket[0], ls.bracket[1]), ls.tol, &setup.quadrature)?;
    verdicts.push(Verdict {
        property: "lambda* bracketed by residuals of opposite sign".into(),
        passed: Some(star.residual_lower * star.residual_upper < 0.0),
        detail: format!(
            "lambda* = {} in [{}, {}], residuals {} and {}",
            fmt_num(star.lambda_star),
            fmt_num(star.lower),
            fmt_num(star.upper),
            fmt_num(star.residual_lower),
            fmt_num(star.residual_upper)
        ),
        counterexample_gamma: None,
    });
    let centred = two_point.shifted(-two_point.mean())?;
    let mut checks = Vec::new();
    let mut all_negative = true;
    for &lambda in &ls.check_lambdas {
        let u = prospect_subjective_utility(&centred, 0.0, &setup.cpt.with_lambda(lambda), &setup.quadrature)?;
        all_negative &= u < 0.0;
        checks.push(json!({ "lambda": lambda, "subjective_at_mean": u }));
    }
    verdicts.push(Verdict {
        property: "U^s_U < 0 on the two-point prospect".into(),
        passed: Some(all_negative),
        detail: format!("lambda in {:?}", ls.check_lambdas),
        counterexample_gamma: None,
    });
    let details = json!({
        "bounds": {
            "gamma_lower": number(bounds.gamma_lower),
            "gamma_upper": number(bounds.gamma_upper),
            "subjective_at_mean": number(bounds.subjective_at_mean),
            "d_star": bounds.d_star.map(number),
        },
        "lambda_star": star,
        "lambda_checks": checks,
    });
    Ok((verdicts, details))
}

fn selfref(config: &RunConfig, out: &Output) -> CliResult<Vec<Verdict>> {
    let ex = &config.experiments;
    let setup = ex.setup.with_grid(ex.selfref.tariff_grid);
    let families = self_reference_families(&setup)?;
    let comparisons = self_reference_experiment(&setup, &families)?;
    let n = comparisons.len();
    let mut holding = 0;
    let mut equal = 0;
    let mut first_bad: Option<(String, f64)> = None;
    let mut worst_gap: f64 = 0.0;
    for c in &comparisons {
        write_series(out, &format!("selfref_{}_expected", c.distribution), &c.mean_reference)?;
        write_series(out, &format!("selfref_{}_certain", c.distribution), &c.certain_reference)?;
        if c.min_margin >= 0.0 {
            holding += 1;
        } else if first_bad.is_none() {
            let g = c
                .mean_reference
                .records
                .iter()
                .zip(&c.certain_reference.records)
                .find(|(m, k)| m.p_subjective < k.p_subjective)
                .map(|(m, _)| m.gamma);
            first_bad = g.map(|g| (c.distribution.clone(), g));
        }
        if c.equality_gap <= EQUALITY_TOLERANCE {
            equal += 1;
        }
        worst_gap = worst_gap.max(c.equality_gap);
    }
    let summary: Vec<Value> = comparisons
        .iter()
        .map(|c| {
            json!({
                "distribution": c.distribution,
                "gamma_star": c.gamma_star,
                "equality_gap": c.equality_gap,
                "min_margin": c.min_margin,
            })
        })
        .collect();
    out.write_json(
        "selfref.json",
        &envelope("experiment", &json!({ "comparisons": summary, "series": comparisons }))?,
    )?;
    Ok(vec![
        Verdict {
            property: "p^s_U >= p^s_{A^o}".into(),
            passed: Some(holding == n),
            detail: match &first_bad {
                None => format!("{holding}/{n} distributions"),
                Some((d, _)) => format!("{holding}/{n} distributions; fails for {d}"),
            },
            counterexample_gamma: first_bad.map(|(_, g)| g),
        },
        Verdict {
            property: "equality at gamma*".into(),
            passed: Some(equal == n),
            detail: format!("{equal}/{n} distributions, largest gap {}", fmt_num(worst_gap)),
            counterexample_gamma: None,
        },
    ])
}

fn monotonicity(config: &RunConfig, out: &Output) -> CliResult<Vec<Verdict>> {
    let ex = &config.experiments;
    let setup = &ex.setup;
    let prospect: Prospect = setup.two_point_prospect(ex.monotonicity.p_lo)?.into();
    let references = if ex.monotonicity.references.is_empty() {
        vec![Reference::Static { value: 0.0 }, Reference::TariffLinked { x_tilde: prospect.mean() }]
    } else {
        ex.monotonicity.references.clone()
    };
    let mut verdicts = Vec::new();
    let mut reports = Vec::new();
    for (i, r) in references.iter().enumerate() {
        let rep = verify_monotonicity(setup, &prospect, r, &setup.tariff_grid)?;
        let kind = match r {
            Reference::Static { .. } => "static",
            Reference::TariffLinked { .. } => "tariff_linked",
        };
        #[derive(Serialize)]
        struct Row {
            gamma: f64,
            p_subjective: f64,
        }
        let rows: Vec<Row> = rep
            .gammas
            .iter()
            .zip(&rep.probabilities)
            .map(|(g, p)| Row { gamma: round12(*g), p_subjective: round12(*p) })
            .collect();
        out.write_text(&format!("monotonicity_{i}_{kind}.csv"), &csv_text("monotonicity", &rows)?)?;
        verdicts.push(Verdict {
            property: format!("p^s strictly decreasing in gamma ({kind} reference)"),
            passed: Some(rep.strictly_decreasing),
            detail: format!("{} tariffs", rep.gammas.len()),
            counterexample_gamma: rep.first_violation.map(|v| v.gamma),
        });
        reports.push(rep);
    }
    out.write_json("monotonicity.json", &envelope("experiment", &json!({ "reports": reports }))?)?;
    Ok(verdicts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Logit,
    Cpt,
}

pub fn estimate(config: &RunConfig, which: Estimator, data: &Path, out: &Output) -> CliResult<Report> {
    let est = &config.estimation;
    let (name, result): (&str, EstimationResult) = match which {
        Estimator::Logit => {
            let obs = read_choices(data)?;
            let spec = MixedLogitSpec { random: est.random.clone() };
            ("logit", fit_mixed_logit_msl(&obs, &spec, est.n_draws, est.seed)?)
        }
        Estimator::Cpt => {
            let obs = read_ce(data)?;
            let opts = CptNlsOptions { n_starts: est.n_starts, ..CptNlsOptions::default() };
            ("cpt", fit_cpt_nls_with(&obs, &est.cpt_init, &est.cpt_bounds, &opts)?)
        }
    };
    let doc = envelope("estimate", &json!({ "estimator": name, "result": result }))?;
    out.write_json(&format!("estimate_{name}.json"), &doc)?;
    let code = if result.converged { exit::SUCCESS } else { exit::NON_CONVERGENCE };
    Ok(Report { stdout: to_json_text(&doc), exit_code: code })
}

/// One row of the effect table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub effect: String,
    pub statistic: String,
    pub value: Option<f64>,
    pub n_included: usize,
    pub n_excluded: usize,
    pub error: Option<String>,
}

impl EffectRow {
    fn rate(effect: String, rate: &EffectRate) -> Self {
        Self {
            effect,
            statistic: "rate".into(),
            value: rate.rate.map(round12),
            n_included: rate.n_included,
            n_excluded: rate.n_excluded,
            error: None,
        }
    }

    fn failed(effect: String, statistic: &str, error: String) -> Self {
        Self { effect, statistic: statistic.into(), value: None, n_included: 0, n_excluded: 0, error: Some(error) }
    }
}

/// Effect rows in table order: reflection, overweighting per band and in
/// any band, then the mean and median gain/loss ratio. A detector that
/// cannot run reports its error in place.
pub fn effect_table(config: &RunConfig, responses: &[prospectus_core::estimation::LotteryResponse]) -> CliResult<(Vec<EffectRow>, Vec<String>)> {
    let det = &config.detection;
    let mut rows = Vec::new();
    match detect_reflection_effect(responses, det.reflection_margin) {
        Ok(r) => rows.push(EffectRow::rate("reflection".into(), &r)),
        Err(e) => rows.push(EffectRow::failed("reflection".into(), "rate", e.to_string())),
    }
    let mut usable: Vec<ProbabilityBand> = Vec::new();
    for &band in &det.bands {
        let effect = format!("overweighting {}", band.as_str());
        match detect_probability_weighting(responses, &[band], det.weighting_margin) {
            Ok(w) => {
                usable.push(band);
                rows.push(EffectRow::rate(effect, &w.bands[0].rate));
            }
            Err(e) => rows.push(EffectRow::failed(effect, "rate", e.to_string())),
        }
    }
    if usable.is_empty() {
        rows.push(EffectRow::failed("overweighting any".into(), "rate", "no band could be evaluated".into()));
    } else {
        let w = detect_probability_weighting(responses, &usable, det.weighting_margin)?;
        rows.push(EffectRow::rate("overweighting any".into(), &w.any));
    }
    let mut diagnostics = Vec::new();
    match loss_aversion_ratio(responses) {
        Ok(l) => {
            for (stat, v) in [("mean", l.mean), ("median", l.median)] {
                rows.push(EffectRow {
                    effect: "gain/loss ratio".into(),
                    statistic: stat.into(),
                    value: v.map(round12),
                    n_included: l.per_respondent.len(),
                    n_excluded: l.n_excluded_zero_loss,
                    error: None,
                });
            }
            diagnostics = l.diagnostics;
        }
        Err(e) => {
            rows.push(EffectRow::failed("gain/loss ratio".into(), "mean", e.to_string()));
            rows.push(EffectRow::failed("gain/loss ratio".into(), "median", e.to_string()));
        }
    }
    Ok((rows, diagnostics))
}

pub fn detect_effects(config: &RunConfig, data: &Path, out: &Output) -> CliResult<Report> {
    let responses = read_lotteries(data)?;
    let (rows, diagnostics) = effect_table(config, &responses)?;
    let failed = rows.iter().any(|r| r.error.is_some());
    out.write_text("effects.csv", &csv_text("effects", &rows)?)?;
    let doc = envelope("detect-effects", &json!({ "effects": rows, "diagnostics": diagnostics }))?;
    out.write_json("effects.json", &doc)?;
    Ok(Report { stdout: to_json_text(&doc), exit_code: if failed { exit::USAGE } else { exit::SUCCESS } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Choice,
    Ce,
    Lottery,
}

/// Synthetic data in the input schemas; written to `<out>/<name>.csv` or,
/// without an output directory, to stdout.
pub fn simulate(config: &RunConfig, which: Dataset, out: &Output) -> CliResult<Report> {
    let sim = &config.simulate;
    let (name, text, n) = match which {
        Dataset::Choice => {
            let spec = MixedLogitSpec { random: sim.choice.random.clone() };
            let obs = simulate_mode_choices(&sim.choice.design, &config.utility, &sim.choice.sd, &spec, sim.seed)?;
            let rows = choice_rows(&obs);
            ("choice", csv_text("choice", &rows)?, rows.len())
        }
        Dataset::Ce => {
            let obs = simulate_ce_observations(&config.cpt, sim.ce.n, sim.ce.noise, sim.seed)?;
            let rows = ce_rows(&obs);
            ("ce", csv_text("ce", &rows)?, rows.len())
        }
        Dataset::Lottery => {
            let l = &sim.lottery;
            let agents = cpt_population(&l.mean, &l.sd, l.n_agents, sim.seed);
            let answers = simulate_lottery_responses(&agents, &l.design, l.noise, sim.seed.wrapping_add(1))?;
            let rows = lottery_rows(&answers);
            ("lottery", csv_text("lottery", &rows)?, rows.len())
        }
    };
    match out.write_text(&format!("{name}.csv"), &text)? {
        Some(path) => Ok(Report::ok(format!("wrote {n} rows to {}\n", path.display()))),
        None => Ok(Report::ok(text)),
    }
}
