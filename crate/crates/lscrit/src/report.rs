//! Report rows and their CSV / JSON forms.
//!
//! Non-finite floats are written as `NaN`, `inf` and `-inf` (strings in
//! JSON) so every row survives a round trip.

use lscrit_core::criteria::{CriterionName, LambdaSource};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "candidate",
    "criterion",
    "value",
    "lambda",
    "lambda_source",
    "beta0",
    "seed",
    "ess_min",
    "rhat_max",
    "selected",
];

/// R-hat above this on the likelihood summaries flags a row.
pub const RHAT_WARNING: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub candidate: usize,
    pub criterion: CriterionName,
    pub value: f64,
    pub lambda: Option<f64>,
    pub lambda_source: Option<LambdaSource>,
    /// The β₀ group of the row. LS and sBIC rows repeat across groups.
    pub beta0: f64,
    pub seed: u64,
    pub ess_min: Option<f64>,
    pub rhat_max: Option<f64>,
    pub selected: bool,
}

impl ReportRow {
    /// True when the chain behind the row did not mix.
    pub fn rhat_warning(&self) -> bool {
        self.rhat_max.is_some_and(|r| !(r <= RHAT_WARNING))
    }

    /// Bitwise equality, so NaN fields compare equal to themselves.
    pub fn same_bits(&self, other: &ReportRow) -> bool {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        self.candidate == other.candidate
            && self.criterion == other.criterion
            && self.value.to_bits() == other.value.to_bits()
            && bits(self.lambda) == bits(other.lambda)
            && self.lambda_source == other.lambda_source
            && self.beta0.to_bits() == other.beta0.to_bits()
            && self.seed == other.seed
            && bits(self.ess_min) == bits(other.ess_min)
            && bits(self.rhat_max) == bits(other.rhat_max)
            && self.selected == other.selected
    }
}

fn float_text(x: f64) -> String {
    // Display already gives the shortest round-tripping form, NaN and inf
    x.to_string()
}

fn opt_text(x: Option<f64>) -> String {
    x.map(float_text).unwrap_or_default()
}

fn parse_float(s: &str, field: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{field}: cannot parse {s:?} as a number")))
}

fn parse_opt(s: &str, field: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_float(s, field).map(Some)
    }
}

fn parse_criterion(s: &str) -> Result<CriterionName> {
    CriterionName::parse(s).ok_or_else(|| Error::Format(format!("unknown criterion {s:?}")))
}

fn parse_source(s: &str) -> Result<Option<LambdaSource>> {
    if s.is_empty() {
        return Ok(None);
    }
    LambdaSource::parse(s)
        .map(Some)
        .ok_or_else(|| Error::Format(format!("unknown lambda_source {s:?}")))
}

/// Serializes rows. Empty input is rejected since a header-only report
/// would hide a failed run.
pub fn emit_report(rows: &[ReportRow], format: Format) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Format("no report rows to emit".into()));
    }
    match format {
        Format::Csv => emit_csv(rows),
        Format::Json => {
            let array: Vec<Value> = rows.iter().map(row_to_json).collect();
            Ok(serde_json::to_string_pretty(&array)? + "\n")
        }
    }
}

fn emit_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.candidate.to_string(),
            r.criterion.as_str().to_string(),
            float_text(r.value),
            opt_text(r.lambda),
            r.lambda_source.map(|s| s.as_str().to_string()).unwrap_or_default(),
            float_text(r.beta0),
            r.seed.to_string(),
            opt_text(r.ess_min),
            opt_text(r.rhat_max),
            r.selected.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a report in either format back into rows.
pub fn parse_report(text: &str, format: Format) -> Result<Vec<ReportRow>> {
    match format {
        Format::Csv => parse_csv(text),
        Format::Json => {
            let value: Value = serde_json::from_str(text)?;
            let Value::Array(items) = value else {
                return Err(Error::Format("report JSON must be an array".into()));
            };
            items.iter().map(row_from_json).collect()
        }
    }
}

fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!(
            "report header is {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let f = record?;
        let selected = match &f[9] {
            "true" => true,
            "false" => false,
            other => return Err(Error::Format(format!("selected: expected true/false, got {other:?}"))),
        };
        rows.push(ReportRow {
            candidate: f[0]
                .parse()
                .map_err(|_| Error::Format(format!("candidate: bad value {:?}", &f[0])))?,
            criterion: parse_criterion(&f[1])?,
            value: parse_float(&f[2], "value")?,
            lambda: parse_opt(&f[3], "lambda")?,
            lambda_source: parse_source(&f[4])?,
            beta0: parse_float(&f[5], "beta0")?,
            seed: f[6]
                .parse()
                .map_err(|_| Error::Format(format!("seed: bad value {:?}", &f[6])))?,
            ess_min: parse_opt(&f[7], "ess_min")?,
            rhat_max: parse_opt(&f[8], "rhat_max")?,
            selected,
        });
    }
    Ok(rows)
}

fn float_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(float_text(x))
    }
}

fn opt_json(x: Option<f64>) -> Value {
    x.map(float_json).unwrap_or(Value::Null)
}

fn row_to_json(r: &ReportRow) -> Value {
    json!({
        "candidate": r.candidate,
        "criterion": r.criterion.as_str(),
        "value": float_json(r.value),
        "lambda": opt_json(r.lambda),
        "lambda_source": r.lambda_source.map(LambdaSource::as_str),
        "beta0": float_json(r.beta0),
        "seed": r.seed,
        "ess_min": opt_json(r.ess_min),
        "rhat_max": opt_json(r.rhat_max),
        "selected": r.selected,
    })
}

fn json_float(v: &Value, field: &str) -> Result<Option<f64>> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Format(format!("{field}: not representable as f64"))),
        Value::String(s) => parse_float(s, field).map(Some),
        _ => Err(Error::Format(format!("{field}: expected a number"))),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Format(format!("row is missing field {name:?}")))
}

fn required_float(obj: &Map<String, Value>, name: &str) -> Result<f64> {
    json_float(field(obj, name)?, name)?.ok_or_else(|| Error::Format(format!("{name} must not be null")))
}

fn row_from_json(v: &Value) -> Result<ReportRow> {
    let Value::Object(obj) = v else {
        return Err(Error::Format("report row must be an object".into()));
    };
    let extra: Vec<&String> = obj.keys().filter(|k| !CSV_HEADER.contains(&k.as_str())).collect();
    if !extra.is_empty() {
        return Err(Error::Format(format!("unexpected row fields: {extra:?}")));
    }
    let uint = |name: &str| -> Result<u64> {
        field(obj, name)?
            .as_u64()
            .ok_or_else(|| Error::Format(format!("{name} must be a non-negative integer")))
    };
    let text = |name: &str| -> Result<Option<&str>> {
        match field(obj, name)? {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s.as_str())),
            _ => Err(Error::Format(format!("{name} must be a string"))),
        }
    };
    Ok(ReportRow {
        candidate: uint("candidate")? as usize,
        criterion: parse_criterion(text("criterion")?.unwrap_or(""))?,
        value: required_float(obj, "value")?,
        lambda: json_float(field(obj, "lambda")?, "lambda")?,
        lambda_source: parse_source(text("lambda_source")?.unwrap_or(""))?,
        beta0: required_float(obj, "beta0")?,
        seed: uint("seed")?,
        ess_min: json_float(field(obj, "ess_min")?, "ess_min")?,
        rhat_max: json_float(field(obj, "rhat_max")?, "rhat_max")?,
        selected: field(obj, "selected")?
            .as_bool()
            .ok_or_else(|| Error::Format("selected must be a boolean".into()))?,
    })
}

/// Single-model criterion report object. `beta0` is only set for WBIC.
pub fn criterion_json(row: &ReportRow, n: usize) -> Value {
    let beta0 = match row.criterion {
        CriterionName::Wbic => float_json(row.beta0),
        _ => Value::Null,
    };
    json!({
        "criterion": row.criterion.as_str(),
        "value": float_json(row.value),
        "lambda": opt_json(row.lambda),
        "lambda_source": row.lambda_source.map(LambdaSource::as_str),
        "beta0": beta0,
        "n": n,
        "candidate": row.candidate,
        "ess_min": opt_json(row.ess_min),
        "rhat_max": opt_json(row.rhat_max),
        "seed": row.seed,
    })
}
