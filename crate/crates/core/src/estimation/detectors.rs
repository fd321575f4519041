//! Detectors for CPT effects in lottery answers: reflection of risk
//! attitudes, overweighting of small probabilities, and loss aversion.
//!
//! Gain and loss lotteries pay `gain` (or lose `loss`) with probability `p`
//! and nothing otherwise; their `response` is the stated certainty
//! equivalent, signed. Mixed lotteries lose `loss` with probability `1 − p`;
//! their `response` is the smallest gain, received with probability `p`,
//! that makes the lottery acceptable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LotteryFrame {
    Gain,
    Loss,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryResponse {
    pub respondent_id: String,
    pub lottery_id: String,
    pub frame: LotteryFrame,
    pub p: f64,
    pub gain: f64,
    pub loss: f64,
    pub response: f64,
}

impl LotteryResponse {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::Domain(format!(
                "respondent {} lottery {}: {what}",
                self.respondent_id, self.lottery_id
            )))
        };
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p must lie in (0, 1)");
        }
        if !(self.gain >= 0.0 && self.loss >= 0.0 && self.gain.is_finite() && self.loss.is_finite()) {
            return bad("gain and loss are non-negative magnitudes");
        }
        if !self.response.is_finite() {
            return bad("response must be finite");
        }
        match self.frame {
            LotteryFrame::Gain if !(self.gain > 0.0 && self.loss == 0.0) => bad("gain frame needs gain > 0 and loss = 0"),
            LotteryFrame::Loss if !(self.loss > 0.0 && self.gain == 0.0) => bad("loss frame needs loss > 0 and gain = 0"),
            _ => Ok(()),
        }
    }
}

type Answers<'a> = BTreeMap<&'a str, BTreeMap<&'a str, &'a LotteryResponse>>;

/// Answers per respondent keyed by lottery id. Exact duplicates collapse;
/// conflicting answers to one lottery are an error.
fn aggregate(responses: &[LotteryResponse]) -> Result<Answers<'_>> {
    let mut out: Answers<'_> = BTreeMap::new();
    for r in responses {
        r.validate()?;
        let entry = out.entry(r.respondent_id.as_str()).or_default();
        match entry.get(r.lottery_id.as_str()) {
            Some(prev) if *prev != r => {
                return Err(Error::Domain(format!(
                    "respondent {} answered lottery {} twice with different records",
                    r.respondent_id, r.lottery_id
                )))
            }
            Some(_) => {}
            None => {
                entry.insert(r.lottery_id.as_str(), r);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentFlag {
    pub respondent_id: String,
    pub flagged: bool,
    /// Number of lottery pairs the verdict rests on.
    pub evidence: usize,
}

/// Per-respondent verdicts; `rate` is `None` when nobody qualified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRate {
    pub flags: Vec<RespondentFlag>,
    pub n_included: usize,
    pub n_excluded: usize,
    pub rate: Option<f64>,
}

impl EffectRate {
    fn from_flags(flags: Vec<RespondentFlag>, n_excluded: usize) -> Self {
        let n = flags.len();
        let hits = flags.iter().filter(|f| f.flagged).count();
        Self {
            rate: (n > 0).then(|| hits as f64 / n as f64),
            n_included: n,
            n_excluded,
            flags,
        }
    }
}

pub const DEFAULT_MARGIN: f64 = 0.05;

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// A respondent reflects on a matched pair `(p, X)` when the gain
/// certainty equivalent is below `(1 − margin)·pX` and the loss certainty
/// equivalent is above `−(1 − margin)·pX`. Flagged when a strict majority of
/// matched pairs reflect; respondents without a matched pair are excluded.
pub fn detect_reflection_effect(responses: &[LotteryResponse], margin: f64) -> Result<EffectRate> {
    let answers = aggregate(responses)?;
    let mut flags = Vec::new();
    let mut excluded = 0;
    for (id, lotteries) in &answers {
        let gains: Vec<&LotteryResponse> = lotteries.values().copied().filter(|r| r.frame == LotteryFrame::Gain).collect();
        let losses: Vec<&LotteryResponse> = lotteries.values().copied().filter(|r| r.frame == LotteryFrame::Loss).collect();
        let mut matched = 0;
        let mut reflecting = 0;
        for g in &gains {
            let Some(l) = losses.iter().find(|l| same(l.p, g.p) && same(l.loss, g.gain)) else { continue };
            matched += 1;
            let ev = g.p * g.gain;
            if g.response < (1.0 - margin) * ev && l.response > -(1.0 - margin) * ev {
                reflecting += 1;
            }
        }
        if matched == 0 {
            excluded += 1;
        } else {
            flags.push(RespondentFlag { respondent_id: id.to_string(), flagged: 2 * reflecting > matched, evidence: matched });
        }
    }
    Ok(EffectRate::from_flags(flags, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbabilityBand {
    #[serde(rename = "10-60")]
    Low,
    #[serde(rename = "60-90")]
    High,
    #[serde(rename = "10-90")]
    Wide,
}

impl ProbabilityBand {
    pub const ALL: [ProbabilityBand; 3] = [ProbabilityBand::Low, ProbabilityBand::High, ProbabilityBand::Wide];

    pub fn levels(&self) -> (f64, f64) {
        match self {
            ProbabilityBand::Low => (0.1, 0.6),
            ProbabilityBand::High => (0.6, 0.9),
            ProbabilityBand::Wide => (0.1, 0.9),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProbabilityBand::Low => "10-60",
            ProbabilityBand::High => "60-90",
            ProbabilityBand::Wide => "10-90",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRate {
    pub band: ProbabilityBand,
    pub rate: EffectRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingReport {
    pub bands: Vec<BandRate>,
    /// Flagged in at least one band.
    pub any: EffectRate,
}

/// Overweighting verdict for one amount answered at both band levels, or
/// `None` when the answers do not support a log ratio.
///
/// With `CE_p = π(p)^{1/β}·X` and `π(p) = exp(−(−ln p)^α)`, the ratio of
/// `y_p = ln(X / CE_p)` at the two levels gives `α` free of `β`. The pair is
/// flagged when `π̂(p₁)/π̂(p₂)` exceeds `(1 + delta)·p₁/p₂`.
fn overweights(x: f64, (p1, ce1): (f64, f64), (p2, ce2): (f64, f64), delta: f64) -> Option<bool> {
    if !(ce1 > 0.0 && ce1 < x && ce2 > 0.0 && ce2 < x) {
        return None;
    }
    let (y1, y2) = ((x / ce1).ln(), (x / ce2).ln());
    let alpha = (y1 / y2).ln() / (p1.ln() / p2.ln()).ln();
    if !alpha.is_finite() || alpha <= 0.0 {
        return None;
    }
    let pi = |p: f64| (-(-p.ln()).powf(alpha)).exp();
    Some(pi(p1) / pi(p2) > (1.0 + delta) * p1 / p2)
}

pub fn detect_probability_weighting(
    responses: &[LotteryResponse],
    bands: &[ProbabilityBand],
    delta: f64,
) -> Result<WeightingReport> {
    let answers = aggregate(responses)?;
    let gain_levels: Vec<f64> = responses.iter().filter(|r| r.frame == LotteryFrame::Gain).map(|r| r.p).collect();
    let mut out = Vec::new();
    let mut any: BTreeMap<String, (bool, usize)> = BTreeMap::new();
    for &band in bands {
        let (p1, p2) = band.levels();
        let missing: Vec<String> = [p1, p2]
            .iter()
            .filter(|&&p| !gain_levels.iter().any(|&q| same(p, q)))
            .map(|p| format!("p = {p}"))
            .collect();
        if !missing.is_empty() {
            return Err(Error::InsufficientData(format!(
                "band {} needs gain lotteries at {}",
                band.as_str(),
                missing.join(" and ")
            )));
        }
        let mut flags = Vec::new();
        let mut excluded = 0;
        for (id, lotteries) in &answers {
            let gains: Vec<&LotteryResponse> = lotteries.values().copied().filter(|r| r.frame == LotteryFrame::Gain).collect();
            let mut valid = 0;
            let mut hits = 0;
            for a in gains.iter().filter(|r| same(r.p, p1)) {
                let Some(b) = gains.iter().find(|r| same(r.p, p2) && same(r.gain, a.gain)) else { continue };
                if let Some(flag) = overweights(a.gain, (p1, a.response), (p2, b.response), delta) {
                    valid += 1;
                    hits += flag as usize;
                }
            }
            if valid == 0 {
                excluded += 1;
                continue;
            }
            let flagged = 2 * hits > valid;
            let e = any.entry(id.to_string()).or_insert((false, 0));
            e.0 |= flagged;
            e.1 += valid;
            flags.push(RespondentFlag { respondent_id: id.to_string(), flagged, evidence: valid });
        }
        if flags.is_empty() && !answers.is_empty() {
            return Err(Error::InsufficientData(format!(
                "band {}: no respondent answered p = {p1} and p = {p2} for a common amount",
                band.as_str()
            )));
        }
        out.push(BandRate { band, rate: EffectRate::from_flags(flags, excluded) });
    }
    let any_flags: Vec<RespondentFlag> = any
        .into_iter()
        .map(|(respondent_id, (flagged, evidence))| RespondentFlag { respondent_id, flagged, evidence })
        .collect();
    let excluded = answers.len() - any_flags.len();
    Ok(WeightingReport { bands: out, any: EffectRate::from_flags(any_flags, excluded) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAversionReport {
    /// Mean gain/loss ratio per respondent.
    pub per_respondent: Vec<(String, f64)>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub n_excluded_zero_loss: usize,
    pub diagnostics: Vec<String>,
}

/// Ratio of the smallest acceptable gain to the loss on mixed lotteries;
/// a ratio above 1 signals loss aversion. Zero-loss lotteries are skipped
/// with a diagnostic.
pub fn loss_aversion_ratio(responses: &[LotteryResponse]) -> Result<LossAversionReport> {
    let answers = aggregate(responses)?;
    let mut per_respondent = Vec::new();
    let mut excluded = 0;
    let mut diagnostics = Vec::new();
    for (id, lotteries) in &answers {
        let mut ratios = Vec::new();
        for r in lotteries.values().filter(|r| r.frame == LotteryFrame::Mixed) {
            if r.loss == 0.0 {
                excluded += 1;
                diagnostics.push(format!("respondent {id} lottery {}: zero loss, excluded", r.lottery_id));
                continue;
            }
            ratios.push(r.response / r.loss);
        }
        if !ratios.is_empty() {
            per_respondent.push((id.to_string(), ratios.iter().sum::<f64>() / ratios.len() as f64));
        }
    }
    let mut sorted: Vec<f64> = per_respondent.iter().map(|(_, r)| *r).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = (n > 0).then(|| sorted.iter().sum::<f64>() / n as f64);
    let median = (n > 0).then(|| if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) });
    Ok(LossAversionReport { per_respondent, mean, median, n_excluded_zero_loss: excluded, diagnostics })
}
