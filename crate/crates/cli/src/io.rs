//! File formats. Inputs are UTF-8 CSV with a header row (lines starting
//! with `#` are ignored) or JSON; outputs carry a schema version and print
//! floats with at most 12 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use prospectus_core::choice::{ModeId, TripOption};
use prospectus_core::estimation::{CertaintyEquivalentObservation, ChoiceObservation, LotteryResponse};
use prospectus_core::prospect::TripTimes;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};

pub const OPTION_COLUMNS: [&str; 5] = ["mode", "walk", "wait", "ride", "tariff"];
pub const CHOICE_COLUMNS: [&str; 8] = ["respondent_id", "task_id", "mode", "walk", "wait", "ride", "tariff", "chosen"];
pub const CE_COLUMNS: [&str; 6] = ["u_lo", "u_hi", "p_lo", "reference", "ce", "offered"];
pub const LOTTERY_COLUMNS: [&str; 7] = ["respondent_id", "lottery_id", "frame", "p", "gain", "loss", "response"];

/// `x` rounded to 12 significant digits; non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// `x` at 12 significant digits for messages: plain notation between 1e-4
/// and 1e12, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 || !r.is_finite() || (1e-4..1e12).contains(&r.abs()) {
        format!("{}", r + 0.0)
    } else {
        format!("{r:e}")
    }
}

/// A JSON number, or `"inf"`, `"-inf"` or `"nan"` for non-finite values.
pub fn number(x: f64) -> Value {
    match serde_json::Number::from_f64(round12(x)) {
        Some(n) => Value::Number(n),
        None if x.is_nan() => Value::String("nan".into()),
        None if x > 0.0 => Value::String("inf".into()),
        None => Value::String("-inf".into()),
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = number(x);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `body` with rounded floats and stamps the schema version and
/// command name. `body` must serialize to a JSON object.
pub fn envelope<T: Serialize>(command: &str, body: &T) -> CliResult<Value> {
    let mut value = serde_json::to_value(body).map_err(|e| CliError::Usage(format!("cannot serialize output: {e}")))?;
    round_value(&mut value);
    let mut map = match value {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    map.insert("command".into(), Value::from(command));
    Ok(Value::Object(map))
}

pub fn to_json_text(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    text
}

/// Optional output directory; without one nothing is written to disk.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    fn path(&self, name: &str) -> CliResult<Option<PathBuf>> {
        match &self.dir {
            None => Ok(None),
            Some(d) => {
                fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
                Ok(Some(d.join(name)))
            }
        }
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<Option<PathBuf>> {
        let Some(path) = self.path(name)? else { return Ok(None) };
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(Some(path))
    }

    pub fn write_json(&self, name: &str, value: &Value) -> CliResult<Option<PathBuf>> {
        self.write_text(name, &to_json_text(value))
    }
}

/// CSV text with a `# prospectus <schema> v<version>` line, a header and
/// one row per record. Floats are rounded to 12 significant digits by the
/// caller.
pub fn csv_text<T: Serialize>(schema: &str, rows: &[T]) -> CliResult<String> {
    let mut writer = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::Usage(format!("cannot write {schema}: {e}")))?;
    }
    let body = writer.into_inner().map_err(|e| CliError::Usage(format!("cannot write {schema}: {e}")))?;
    let mut text = format!("# prospectus {schema} v{SCHEMA_VERSION}\n");
    text.push_str(&String::from_utf8(body).expect("CSV output is UTF-8"));
    Ok(text)
}

fn read_rows<T: DeserializeOwned>(path: &Path, columns: &[&str], optional: &[&str]) -> CliResult<Vec<T>> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_rows(&text, &origin, columns, optional)
}

/// Parses CSV `text`, checking that every column not in `optional` is
/// present; errors name the file and line.
pub fn parse_rows<T: DeserializeOwned>(text: &str, origin: &str, columns: &[&str], optional: &[&str]) -> CliResult<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CliError::parse(origin, e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(CliError::parse(origin, format!("empty file; expected a header with columns {}", columns.join(", "))));
    }
    for col in columns.iter().filter(|c| !optional.contains(c)) {
        if !headers.iter().any(|h| h == *col) {
            return Err(CliError::parse(format!("{origin}:header"), format!("missing column `{col}`")));
        }
    }
    if let Some(extra) = headers.iter().find(|h| !columns.contains(h)) {
        return Err(CliError::parse(format!("{origin}:header"), format!("unknown column `{extra}`")));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<T>() {
        let row = record.map_err(|e| {
            let at = e.position().map(|p| format!("{origin}:{}", p.line())).unwrap_or_else(|| origin.to_string());
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                    Some(i) => format!("column `{}`: {}", headers.get(i as usize).unwrap_or("?"), err.kind()),
                    None => err.to_string(),
                },
                _ => e.to_string(),
            };
            CliError::parse(at, message)
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(origin, "no data rows"));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionRow {
    pub mode: ModeId,
    pub walk: f64,
    pub wait: f64,
    pub ride: f64,
    pub tariff: f64,
}

impl OptionRow {
    fn from_option(o: &TripOption) -> Self {
        Self {
            mode: o.mode,
            walk: round12(o.times.walk),
            wait: round12(o.times.wait),
            ride: round12(o.times.ride),
            tariff: round12(o.tariff),
        }
    }

    fn to_option(&self) -> prospectus_core::Result<TripOption> {
        TripOption::new(self.mode, TripTimes::new(self.walk, self.wait, self.ride)?, self.tariff)
    }
}

pub fn read_options(path: &Path) -> CliResult<Vec<TripOption>> {
    let rows: Vec<OptionRow> = read_rows(path, &OPTION_COLUMNS, &[])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| r.to_option().map_err(|e| CliError::parse(format!("{}:{}", path.display(), i + 2), e.to_string())))
        .collect()
}

/// One alternative of one choice task; rows sharing `(respondent_id,
/// task_id)` form a task and exactly one of them has `chosen = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub respondent_id: String,
    pub task_id: String,
    pub mode: ModeId,
    pub walk: f64,
    pub wait: f64,
    pub ride: f64,
    pub tariff: f64,
    pub chosen: u8,
}

pub fn choices_from_rows(rows: &[ChoiceRow], origin: &str) -> CliResult<Vec<ChoiceObservation>> {
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut tasks: BTreeMap<(&str, &str), (Vec<TripOption>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let at = || format!("{origin}:{}", i + 2);
        if r.chosen > 1 {
            return Err(CliError::parse(at(), "column `chosen` must be 0 or 1"));
        }
        let option = OptionRow { mode: r.mode, walk: r.walk, wait: r.wait, ride: r.ride, tariff: r.tariff }
            .to_option()
            .map_err(|e| CliError::parse(at(), e.to_string()))?;
        let key = (r.respondent_id.as_str(), r.task_id.as_str());
        let entry = tasks.entry(key).or_insert_with(|| {
            order.push(key);
            (Vec::new(), Vec::new())
        });
        if r.chosen == 1 {
            entry.1.push(entry.0.len());
        }
        entry.0.push(option);
    }
    order
        .into_iter()
        .map(|key| {
            let (options, chosen) = tasks.remove(&key).expect("every key was inserted");
            match chosen.as_slice() {
                [c] => Ok(ChoiceObservation { respondent_id: key.0.to_string(), options, chosen: *c }),
                _ => Err(CliError::parse(
                    origin,
                    format!("respondent {} task {}: {} rows marked chosen, expected 1", key.0, key.1, chosen.len()),
                )),
            }
        })
        .collect()
}

pub fn read_choices(path: &Path) -> CliResult<Vec<ChoiceObservation>> {
    let rows: Vec<ChoiceRow> = read_rows(path, &CHOICE_COLUMNS, &[])?;
    choices_from_rows(&rows, &path.display().to_string())
}

pub fn choice_rows(observations: &[ChoiceObservation]) -> Vec<ChoiceRow> {
    let mut rows = Vec::new();
    let mut task: BTreeMap<&str, usize> = BTreeMap::new();
    for obs in observations {
        let t = task.entry(obs.respondent_id.as_str()).or_insert(0);
        for (i, o) in obs.options.iter().enumerate() {
            let r = OptionRow::from_option(o);
            rows.push(ChoiceRow {
                respondent_id: obs.respondent_id.clone(),
                task_id: format!("t{:03}", *t),
                mode: r.mode,
                walk: r.walk,
                wait: r.wait,
                ride: r.ride,
                tariff: r.tariff,
                chosen: (i == obs.chosen) as u8,
            });
        }
        *t += 1;
    }
    rows
}

/// One certainty equivalent; `offered` lists the sure amounts shown,
/// separated by `;`, and may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeRow {
    pub u_lo: f64,
    pub u_hi: f64,
    pub p_lo: f64,
    #[serde(default)]
    pub reference: Option<f64>,
    pub ce: f64,
    #[serde(default)]
    pub offered: Option<String>,
}

impl CeRow {
    fn to_observation(&self) -> Result<CertaintyEquivalentObservation, String> {
        let offered = match self.offered.as_deref().map(str::trim) {
            None | Some("") => Vec::new(),
            Some(s) => s
                .split(';')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("column `offered`: `{x}`: {e}")))
                .collect::<Result<_, _>>()?,
        };
        Ok(CertaintyEquivalentObservation {
            u_lo: self.u_lo,
            u_hi: self.u_hi,
            p_lo: self.p_lo,
            reference: self.reference.unwrap_or(0.0),
            offered,
            ce: self.ce,
        })
    }

    fn from_observation(o: &CertaintyEquivalentObservation) -> Self {
        let offered: Vec<String> = o.offered.iter().map(|x| round12(*x).to_string()).collect();
        Self {
            u_lo: round12(o.u_lo),
            u_hi: round12(o.u_hi),
            p_lo: round12(o.p_lo),
            reference: Some(round12(o.reference)),
            ce: round12(o.ce),
            offered: Some(offered.join(";")),
        }
    }
}

pub fn read_ce(path: &Path) -> CliResult<Vec<CertaintyEquivalentObservation>> {
    let rows: Vec<CeRow> = read_rows(path, &CE_COLUMNS, &["reference", "offered"])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| r.to_observation().map_err(|m| CliError::parse(format!("{}:{}", path.display(), i + 2), m)))
        .collect()
}

pub fn ce_rows(observations: &[CertaintyEquivalentObservation]) -> Vec<CeRow> {
    observations.iter().map(CeRow::from_observation).collect()
}

pub fn read_lotteries(path: &Path) -> CliResult<Vec<LotteryResponse>> {
    read_rows(path, &LOTTERY_COLUMNS, &[])
}

pub fn lottery_rows(responses: &[LotteryResponse]) -> Vec<LotteryResponse> {
    responses
        .iter()
        .map(|r| LotteryResponse {
            p: round12(r.p),
            gain: round12(r.gain),
            loss: round12(r.loss),
            response: round12(r.response),
            ..r.clone()
        })
        .collect()
}
