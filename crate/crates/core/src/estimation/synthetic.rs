//! Synthetic respondents for the estimators: mode choices from a mixed
//! logit, certainty equivalents and lottery answers from CPT agents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cpt_nls::{predicted_ce, CertaintyEquivalentObservation};
use super::detectors::{LotteryFrame, LotteryResponse};
use super::mixed_logit::{coefficients_from_array, coefficients_to_array, ChoiceObservation, MixedLogitSpec, COEFFICIENT_NAMES};
use crate::choice::{trip_utility, ModeId, TripOption};
use crate::cpt::{inverse_value_function, subjective_utility_at, weighting_function};
use crate::error::{Error, Result};
use crate::prospect::{CptParams, DiscreteProspect, TripTimes, UtilityCoefficients};

/// Independent stream `stream` of the generator seeded by `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceDesign {
    pub n_respondents: usize,
    pub tasks_per_respondent: usize,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_option(rng: &mut ChaCha8Rng, mode: ModeId) -> Result<TripOption> {
    let (walk, wait, ride, tariff) = match mode {
        ModeId::Transit => ((0.0, 20.0), (0.0, 20.0), (10.0, 60.0), (1.0, 5.0)),
        ModeId::UberX => ((0.0, 5.0), (0.0, 15.0), (5.0, 45.0), (5.0, 45.0)),
        ModeId::Srs => ((0.0, 10.0), (0.0, 15.0), (5.0, 55.0), (3.0, 30.0)),
    };
    let times = TripTimes::new(uniform(rng, walk.0, walk.1), uniform(rng, wait.0, wait.1), uniform(rng, ride.0, ride.1))?;
    TripOption::new(mode, times, uniform(rng, tariff.0, tariff.1))
}

/// Each respondent draws coefficients once (normal around `mean` with the
/// `sd` of every coefficient named in `spec`), then answers
/// `tasks_per_respondent` choices among transit, UberX and SRS with
/// Gumbel taste shocks. Respondent `r` uses RNG stream `r`.
pub fn simulate_mode_choices(
    design: &ChoiceDesign,
    mean: &UtilityCoefficients,
    sd: &UtilityCoefficients,
    spec: &MixedLogitSpec,
    seed: u64,
) -> Result<Vec<ChoiceObservation>> {
    let mu = coefficients_to_array(mean);
    let sigma = coefficients_to_array(sd);
    let random: Vec<bool> = COEFFICIENT_NAMES.iter().map(|n| spec.random.iter().any(|r| r == n)).collect();
    let mut out = Vec::with_capacity(design.n_respondents * design.tasks_per_respondent);
    for r in 0..design.n_respondents {
        let mut rng = stream_rng(seed, r as u64);
        let mut beta = mu;
        for j in 0..beta.len() {
            if random[j] {
                let z: f64 = rng.sample(StandardNormal);
                beta[j] += sigma[j] * z;
            }
        }
        let coeffs = coefficients_from_array(&beta);
        for _ in 0..design.tasks_per_respondent {
            let options = ModeId::ALL.iter().map(|&m| random_option(&mut rng, m)).collect::<Result<Vec<_>>>()?;
            let mut chosen = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, o) in options.iter().enumerate() {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let v = trip_utility(o, &coeffs) - (-u.ln()).ln();
                if v > best {
                    best = v;
                    chosen = i;
                }
            }
            out.push(ChoiceObservation { respondent_id: format!("r{r:05}"), options, chosen });
        }
    }
    Ok(out)
}

/// Certainty equivalents of `params` on `n` two-outcome prospects cycling
/// through gain, loss and mixed frames (reference 0). Mixed prospects pair
/// small losses with large gains so that loss aversion is identified.
/// `noise` scales a multiplicative normal error; answers are clipped to the
/// prospect's range. Each prospect lists 21 evenly spaced sure amounts.
pub fn simulate_ce_observations(
    params: &CptParams,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<CertaintyEquivalentObservation>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (u_lo, u_hi) = match i % 3 {
            0 => {
                let lo = uniform(&mut rng, 0.0, 20.0);
                (lo, lo + uniform(&mut rng, 5.0, 100.0))
            }
            1 => {
                let hi = -uniform(&mut rng, 0.0, 20.0);
                (hi - uniform(&mut rng, 5.0, 100.0), hi)
            }
            _ => (-uniform(&mut rng, 0.5, 10.0), uniform(&mut rng, 5.0, 200.0)),
        };
        let p_lo = uniform(&mut rng, 0.05, 0.95);
        let offered = (0..21).map(|k| u_lo + (u_hi - u_lo) * k as f64 / 20.0).collect();
        let mut obs = CertaintyEquivalentObservation { u_lo, u_hi, p_lo, reference: 0.0, offered, ce: 0.0 };
        let ce = predicted_ce(&obs, params)?;
        let eps: f64 = rng.sample(StandardNormal);
        obs.ce = (ce * (1.0 + noise * eps)).clamp(u_lo, u_hi);
        out.push(obs);
    }
    Ok(out)
}

/// Lottery menu answered by every simulated agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryDesign {
    /// Probabilities of the non-zero outcome in gain and loss lotteries.
    pub probabilities: Vec<f64>,
    pub amounts: Vec<f64>,
    /// Losses of the mixed lotteries; the gain has probability `mixed_p`.
    pub mixed_losses: Vec<f64>,
    pub mixed_p: f64,
}

impl Default for LotteryDesign {
    fn default() -> Self {
        Self {
            probabilities: vec![0.1, 0.6, 0.9],
            amounts: vec![20.0, 100.0],
            mixed_losses: vec![10.0, 50.0],
            mixed_p: 0.5,
        }
    }
}

/// Answers of CPT agents with reference 0. Gain and loss lotteries report
/// the signed certainty equivalent; mixed lotteries report the smallest gain
/// that makes the lottery acceptable, `π⁺(p)G^β⁺ = λπ⁻(1−p)L^β⁻`. Answers
/// carry a log-normal error with standard deviation `noise`; agent `k` uses
/// RNG stream `k` and respondent id `a{k}`.
pub fn simulate_lottery_responses(
    agents: &[CptParams],
    design: &LotteryDesign,
    noise: f64,
    seed: u64,
) -> Result<Vec<LotteryResponse>> {
    if !(design.mixed_p > 0.0 && design.mixed_p < 1.0) {
        return Err(Error::InvalidParameter { name: "mixed_p", value: design.mixed_p, reason: "must lie in (0, 1)" });
    }
    let mut out = Vec::new();
    for (k, params) in agents.iter().enumerate() {
        params.validate()?;
        let mut rng = stream_rng(seed, k as u64);
        let jitter = |rng: &mut ChaCha8Rng| -> f64 {
            let e: f64 = rng.sample(StandardNormal);
            (noise * e).exp()
        };
        let id = format!("a{k:05}");
        for &x in &design.amounts {
            for &p in &design.probabilities {
                let gain = DiscreteProspect::from_unsorted(vec![(0.0, 1.0 - p), (x, p)])?;
                let ce = inverse_value_function(subjective_utility_at(&gain, 0.0, params), 0.0, params);
                out.push(LotteryResponse {
                    respondent_id: id.clone(),
                    lottery_id: format!("gain-p{p}-x{x}"),
                    frame: LotteryFrame::Gain,
                    p,
                    gain: x,
                    loss: 0.0,
                    response: ce * jitter(&mut rng),
                });
                let loss = DiscreteProspect::from_unsorted(vec![(-x, p), (0.0, 1.0 - p)])?;
                let ce = inverse_value_function(subjective_utility_at(&loss, 0.0, params), 0.0, params);
                out.push(LotteryResponse {
                    respondent_id: id.clone(),
                    lottery_id: format!("loss-p{p}-x{x}"),
                    frame: LotteryFrame::Loss,
                    p,
                    gain: 0.0,
                    loss: x,
                    response: ce * jitter(&mut rng),
                });
            }
        }
        let p = design.mixed_p;
        let w_gain = weighting_function(p, params.alpha_gain)?;
        let w_loss = weighting_function(1.0 - p, params.alpha_loss)?;
        for &l in &design.mixed_losses {
            let g = (params.lambda * w_loss * l.powf(params.beta_loss) / w_gain).powf(1.0 / params.beta_gain);
            out.push(LotteryResponse {
                respondent_id: id.clone(),
                lottery_id: format!("mixed-p{p}-l{l}"),
                frame: LotteryFrame::Mixed,
                p,
                gain: 0.0,
                loss: l,
                response: g * jitter(&mut rng),
            });
        }
    }
    Ok(out)
}

/// `n` agents drawn normally around `mean` with per-parameter `sd`, clipped
/// to `[0.05, 1]` for exponents and `[0.05, 100]` for `λ`.
pub fn cpt_population(mean: &CptParams, sd: &CptParams, n: usize, seed: u64) -> Vec<CptParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = mean.as_array();
    let s = sd.as_array();
    (0..n)
        .map(|_| {
            let mut v = [0.0; 5];
            for i in 0..5 {
                let z: f64 = rng.sample(StandardNormal);
                let hi = if i < 4 { 1.0 } else { 100.0 };
                v[i] = (m[i] + s[i] * z).clamp(0.05, hi);
            }
            CptParams::from_array(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choices_are_deterministic_per_seed() {
        let d = ChoiceDesign { n_respondents: 20, tasks_per_respondent: 3 };
        let m = UtilityCoefficients::table1_means();
        let s = UtilityCoefficients::table1_sds();
        let a = simulate_mode_choices(&d, &m, &s, &MixedLogitSpec::all_random(), 9).unwrap();
        let b = simulate_mode_choices(&d, &m, &s, &MixedLogitSpec::all_random(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert!(a.iter().all(|o| o.options.len() == 3 && o.chosen < 3));
    }

    #[test]
    fn ce_observations_are_valid() {
        let obs = simulate_ce_observations(&CptParams::estimated_means(), 30, 0.05, 1).unwrap();
        for o in &obs {
            o.validate().unwrap();
            assert_eq!(o.offered.len(), 21);
        }
    }

    #[test]
    fn loss_neutral_linear_agent_answers_twice_the_loss() {
        let agent = CptParams::risk_neutral().with_lambda(2.0);
        let r = simulate_lottery_responses(&[agent], &LotteryDesign::default(), 0.0, 1).unwrap();
        for m in r.iter().filter(|x| x.frame == LotteryFrame::Mixed) {
            assert!((m.response / m.loss - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn population_respects_box() {
        for p in cpt_population(&CptParams::estimated_means(), &CptParams::estimated_sds(), 200, 3) {
            p.validate().unwrap();
            assert!(p.lambda <= 100.0);
        }
    }
}
