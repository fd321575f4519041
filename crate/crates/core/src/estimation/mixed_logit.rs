//! Panel mixed logit estimated by maximum simulated likelihood.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::halton::NormalDraws;
use super::optim::{bfgs, BfgsOptions};
use super::{EstimationResult, ObjectiveKind, ParameterEstimate};
use crate::choice::{ModeId, TripOption};
use crate::error::{Error, Result};
use crate::prospect::{ModeMap, UtilityCoefficients};

pub const N_COEFFICIENTS: usize = 8;

pub const COEFFICIENT_NAMES: [&str; N_COEFFICIENTS] = [
    "a_walk",
    "a_wait",
    "a_ride_transit",
    "a_ride_uberx",
    "a_ride_srs",
    "b",
    "c_uberx",
    "c_srs",
];

/// One stated choice among the offered trip options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObservation {
    pub respondent_id: String,
    pub options: Vec<TripOption>,
    pub chosen: usize,
}

impl ChoiceObservation {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "respondent {}: a choice needs at least two options",
                self.respondent_id
            )));
        }
        if self.chosen >= self.options.len() {
            return Err(Error::Domain(format!(
                "respondent {}: chosen index {} out of {} options",
                self.respondent_id,
                self.chosen,
                self.options.len()
            )));
        }
        self.options.iter().try_for_each(TripOption::validate)
    }
}

/// Which coefficients are normally distributed across respondents; the
/// rest are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedLogitSpec {
    pub random: Vec<String>,
}

impl MixedLogitSpec {
    pub fn fixed() -> Self {
        Self { random: Vec::new() }
    }

    pub fn all_random() -> Self {
        Self { random: COEFFICIENT_NAMES.iter().map(|s| s.to_string()).collect() }
    }

    /// Every name is a known coefficient.
    pub fn validate(&self) -> Result<()> {
        self.random_indices().map(|_| ())
    }

    fn random_indices(&self) -> Result<Vec<usize>> {
        let mut idx = Vec::new();
        for name in &self.random {
            let i = COEFFICIENT_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Domain(format!("unknown coefficient `{name}`")))?;
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        idx.sort_unstable();
        Ok(idx)
    }
}

pub fn coefficients_to_array(c: &UtilityCoefficients) -> [f64; N_COEFFICIENTS] {
    [c.a_walk, c.a_wait, c.a_ride.transit, c.a_ride.uberx, c.a_ride.srs, c.b, c.c.uberx, c.c.srs]
}

pub fn coefficients_from_array(v: &[f64; N_COEFFICIENTS]) -> UtilityCoefficients {
    UtilityCoefficients {
        a_walk: v[0],
        a_wait: v[1],
        a_ride: ModeMap { transit: v[2], uberx: v[3], srs: v[4] },
        b: v[5],
        c: ModeMap { transit: 0.0, uberx: v[6], srs: v[7] },
    }
}

/// Attribute vector whose inner product with the coefficient array is the
/// option's utility.
pub fn features(option: &TripOption) -> [f64; N_COEFFICIENTS] {
    let t = &option.times;
    let is = |m: ModeId| if option.mode == m { 1.0 } else { 0.0 };
    [
        t.walk,
        t.wait,
        t.ride * is(ModeId::Transit),
        t.ride * is(ModeId::UberX),
        t.ride * is(ModeId::Srs),
        option.tariff,
        is(ModeId::UberX),
        is(ModeId::Srs),
    ]
}

struct Task {
    start: usize,
    n_alt: usize,
    chosen: usize,
}

struct Panel {
    feats: Vec<[f64; N_COEFFICIENTS]>,
    tasks: Vec<Task>,
    /// Task index ranges per respondent.
    respondents: Vec<std::ops::Range<usize>>,
    random: Vec<usize>,
    draws: Option<NormalDraws>,
}

impl Panel {
    fn n_params(&self) -> usize {
        N_COEFFICIENTS + self.random.len()
    }

    fn n_draws(&self) -> usize {
        self.draws.as_ref().map_or(1, |d| d.n_draws)
    }

    /// Negative simulated log-likelihood and its gradient.
    fn neg_loglik(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.n_params();
        let n_draws = self.n_draws();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut log_l = vec![0.0; n_draws];
        let mut grads = vec![0.0; n_draws * p];
        let mut beta = [0.0; N_COEFFICIENTS];
        let mut g_beta = [0.0; N_COEFFICIENTS];
        let mut expv: Vec<f64> = Vec::new();

        for (r, range) in self.respondents.iter().enumerate() {
            for d in 0..n_draws {
                beta.copy_from_slice(&theta[..N_COEFFICIENTS]);
                let z = self.draws.as_ref().map(|dr| dr.get(r, d));
                if let Some(z) = z {
                    for (q, &j) in self.random.iter().enumerate() {
                        beta[j] += theta[N_COEFFICIENTS + q] * z[q];
                    }
                }
                g_beta.iter_mut().for_each(|g| *g = 0.0);
                let mut ll = 0.0;
                for task in &self.tasks[range.clone()] {
                    let rows = &self.feats[task.start..task.start + task.n_alt];
                    expv.clear();
                    let mut vmax = f64::NEG_INFINITY;
                    for x in rows {
                        let v: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
                        vmax = vmax.max(v);
                        expv.push(v);
                    }
                    let v_chosen = expv[task.chosen];
                    let mut denom = 0.0;
                    for v in expv.iter_mut() {
                        *v = (*v - vmax).exp();
                        denom += *v;
                    }
                    ll += v_chosen - vmax - denom.ln();
                    for (a, x) in rows.iter().enumerate() {
                        let w = expv[a] / denom;
                        for j in 0..N_COEFFICIENTS {
                            g_beta[j] -= w * x[j];
                        }
                    }
                    for j in 0..N_COEFFICIENTS {
                        g_beta[j] += rows[task.chosen][j];
                    }
                }
                log_l[d] = ll;
                let gd = &mut grads[d * p..(d + 1) * p];
                gd[..N_COEFFICIENTS].copy_from_slice(&g_beta);
                if let Some(z) = z {
                    for (q, &j) in self.random.iter().enumerate() {
                        gd[N_COEFFICIENTS + q] = g_beta[j] * z[q];
                    }
                }
            }
            let m = log_l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in log_l.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            total += m + (sum / n_draws as f64).ln();
            for d in 0..n_draws {
                let w = log_l[d] / sum;
                for k in 0..p {
                    grad[k] -= w * grads[d * p + k];
                }
            }
        }
        -total
    }
}

fn build_panel(observations: &[ChoiceObservation], random: Vec<usize>) -> Result<Panel> {
    let mut by_respondent: BTreeMap<&str, Vec<&ChoiceObservation>> = BTreeMap::new();
    for obs in observations {
        obs.validate()?;
        by_respondent.entry(obs.respondent_id.as_str()).or_default().push(obs);
    }
    let mut feats = Vec::new();
    let mut tasks = Vec::new();
    let mut respondents = Vec::new();
    for group in by_respondent.values() {
        let first = tasks.len();
        for obs in group {
            tasks.push(Task { start: feats.len(), n_alt: obs.options.len(), chosen: obs.chosen });
            feats.extend(obs.options.iter().map(features));
        }
        respondents.push(first..tasks.len());
    }
    Ok(Panel { feats, tasks, respondents, random, draws: None })
}

/// Rejects data on which some coefficient has no information or a mode
/// constant diverges.
fn check_identification(observations: &[ChoiceObservation], panel: &Panel) -> Result<()> {
    for (j, name) in COEFFICIENT_NAMES.iter().enumerate() {
        let varies = panel.tasks.iter().any(|t| {
            let rows = &panel.feats[t.start..t.start + t.n_alt];
            rows.iter().any(|x| x[j] != rows[0][j])
        });
        if !varies {
            return Err(Error::Unidentifiable(format!(
                "attribute for `{name}` never varies across the options of a choice"
            )));
        }
    }
    for mode in [ModeId::UberX, ModeId::Srs] {
        let offered = observations.iter().filter(|o| o.options.iter().any(|x| x.mode == mode)).count();
        let chosen = observations.iter().filter(|o| o.options[o.chosen].mode == mode).count();
        if chosen == 0 {
            return Err(Error::Separation(format!("{mode} is offered {offered} times and never chosen")));
        }
        if chosen == offered {
            return Err(Error::Separation(format!("{mode} is chosen every time it is offered ({offered} times)")));
        }
    }
    Ok(())
}

/// Maximum simulated likelihood with the coefficients named in `spec`
/// normally distributed across respondents and constant within a
/// respondent's panel of choices. With no random coefficients this is the
/// multinomial logit MLE and `n_draws` is ignored.
pub fn fit_mixed_logit_msl(
    observations: &[ChoiceObservation],
    spec: &MixedLogitSpec,
    n_draws: usize,
    seed: u64,
) -> Result<EstimationResult> {
    fit_mixed_logit_msl_with(observations, spec, n_draws, seed, &BfgsOptions { max_iter: 1000, grad_tol: 1e-6 })
}

pub fn fit_mixed_logit_msl_with(
    observations: &[ChoiceObservation],
    spec: &MixedLogitSpec,
    n_draws: usize,
    seed: u64,
    opts: &BfgsOptions,
) -> Result<EstimationResult> {
    let random = spec.random_indices()?;
    let mut panel = build_panel(observations, Vec::new())?;
    let n_obs = panel.tasks.len();
    let n_params = N_COEFFICIENTS + random.len();
    if n_obs < n_params {
        return Err(Error::InsufficientData(format!("{n_obs} choices for {n_params} parameters")));
    }
    if !random.is_empty() && n_draws < 100 {
        return Err(Error::InvalidParameter {
            name: "n_draws",
            value: n_draws as f64,
            reason: "simulation needs at least 100 draws per respondent",
        });
    }
    check_identification(observations, &panel)?;
    let scale = 1.0 / n_obs as f64;

    // Fixed-coefficient logit, which also seeds the random-coefficient fit.
    let fixed = bfgs(
        |theta: &[f64], g: &mut [f64]| {
            let f = panel.neg_loglik(theta, g);
            g.iter_mut().for_each(|v| *v *= scale);
            Ok(f * scale)
        },
        &[0.0; N_COEFFICIENTS],
        opts,
    )?;

    let outcome = if random.is_empty() {
        fixed
    } else {
        panel.random = random.clone();
        panel.draws = Some(NormalDraws::new(panel.respondents.len(), n_draws, random.len(), seed)?);
        let mut x0 = fixed.x.clone();
        x0.extend(random.iter().map(|&j| 0.5 * fixed.x[j].abs() + 1e-3));
        // Trace of the simulated stage only.
        let mut out = bfgs(
            |theta: &[f64], g: &mut [f64]| {
                let f = panel.neg_loglik(theta, g);
                g.iter_mut().for_each(|v| *v *= scale);
                Ok(f * scale)
            },
            &x0,
            opts,
        )?;
        out.iterations += fixed.iterations;
        out
    };

    let loglik = -outcome.f / scale;
    if loglik / n_obs as f64 > -1e-6 {
        return Err(Error::Separation(format!(
            "log-likelihood per choice is {:.3e}; the data are perfectly predicted",
            loglik / n_obs as f64
        )));
    }

    let hessian = numerical_hessian(&panel, &outcome.x);
    let std_errors = hessian.cholesky().map(|c| {
        let inv = c.inverse();
        (0..n_params).map(|i| inv[(i, i)].max(0.0).sqrt()).collect::<Vec<f64>>()
    });
    let mut message = outcome.message.clone();
    if std_errors.is_none() {
        message = format!("{message}; Hessian of the negative log-likelihood is not positive definite, standard errors withheld");
    }
    let se = |i: usize| std_errors.as_ref().map(|s| s[i]);
    let means = (0..N_COEFFICIENTS)
        .map(|j| ParameterEstimate { name: COEFFICIENT_NAMES[j].into(), estimate: outcome.x[j], std_error: se(j) })
        .collect();
    let std_devs = random
        .iter()
        .enumerate()
        .map(|(q, &j)| ParameterEstimate {
            name: COEFFICIENT_NAMES[j].into(),
            estimate: outcome.x[N_COEFFICIENTS + q].abs(),
            std_error: se(N_COEFFICIENTS + q),
        })
        .collect();

    Ok(EstimationResult {
        method: if random.is_empty() { "multinomial_logit_mle" } else { "mixed_logit_msl" }.into(),
        means,
        std_devs,
        objective: loglik,
        objective_kind: ObjectiveKind::LogLikelihood,
        converged: outcome.converged && std_errors.is_some(),
        iterations: outcome.iterations,
        n_observations: n_obs,
        seed: if random.is_empty() { None } else { Some(seed) },
        trace: outcome.trace.iter().map(|f| -f / scale).collect(),
        message: Some(message),
    })
}

/// Central differences of the analytic gradient of the total negative
/// log-likelihood, symmetrized.
fn numerical_hessian(panel: &Panel, theta: &[f64]) -> DMatrix<f64> {
    let p = theta.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut gp = vec![0.0; p];
    let mut gm = vec![0.0; p];
    let mut x = theta.to_vec();
    for j in 0..p {
        let step = 1e-5 * theta[j].abs().max(1.0);
        x[j] = theta[j] + step;
        panel.neg_loglik(&x, &mut gp);
        x[j] = theta[j] - step;
        panel.neg_loglik(&x, &mut gm);
        x[j] = theta[j];
        for i in 0..p {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}
