//! Byte-stable report output.
//!
//! Reals are written with 6 significant digits (C `%g` style); JSON objects
//! have sorted keys; missing values are `null` in JSON and empty in CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub trait Report {
    fn to_json(&self) -> Value;
    fn write_csv(&self, w: &mut dyn Write) -> Result<()>;
}

/// `%g` with precision 6: `1/3` → `0.333333`, `1234567` → `1.23457e+06`.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// JSON number rounded to 6 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let v: f64 = fmt_g6(x).parse().unwrap();
    // Whole numbers keep a float representation so the schema type is stable.
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// CSV cell for an optional real: empty when missing.
pub fn opt_cell(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(fmt_g6).unwrap_or_default()
}

/// Builds a sorted-key object from pairs.
pub fn object<K: Into<String>>(pairs: impl IntoIterator<Item = (K, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect::<Map<_, _>>())
}

pub fn json_string(report: &dyn Report) -> String {
    let mut s = serde_json::to_string_pretty(&report.to_json()).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn csv_string(report: &dyn Report) -> Result<String> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("reports emit UTF-8"))
}

pub fn write_report(report: &dyn Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Json => json_string(report),
        ReportFormat::Csv => csv_string(report)?,
    };
    let mut f = File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes one CSV record; fields are quoted only when needed.
pub fn csv_row(w: &mut dyn Write, fields: &[String]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record(fields)?;
    let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    w.write_all(&bytes).map_err(|e| Error::io("<report>", e))
}
