//! JSON reports and CSV tables.
//!
//! Floats are written with 17 significant digits so that reloading gives
//! the same bits.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use serde_json::{Map, Number, Value};

/// A finite float as a 17-significant-digit JSON number; non-finite values
/// become the strings `"NaN"`, `"inf"`, `"-inf"`.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(Number::from_str(&format!("{v:.16e}")).expect("valid JSON number"))
    } else {
        Value::from(v.to_string())
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&a| num(a)).collect())
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Map<String, Value>,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, v: Value) -> Self {
        self.detail.insert(key.into(), v);
        self
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("name".into(), Value::from(self.name.as_str()));
        m.insert("passed".into(), Value::from(self.passed));
        for (k, v) in &self.detail {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub config: Map<String, Value>,
    pub results: Vec<Value>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("config".into(), Value::Object(self.config.clone()));
        m.insert("results".into(), Value::Array(self.results.clone()));
        m.insert(
            "checks".into(),
            Value::Array(self.checks.iter().map(Check::to_json).collect()),
        );
        Value::Object(m)
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        s.push('\n');
        s
    }

    /// Results as CSV: one row per result, columns from the first result's
    /// keys. Non-scalar cells hold their JSON text.
    pub fn render_csv(&self) -> Result<String> {
        table_csv(&self.results)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn table_csv(rows: &[Value]) -> Result<String> {
    let header: Vec<String> = match rows.first() {
        Some(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    };
    columns_csv(&header, rows)
}

/// CSV with an explicit column order.
pub fn columns_csv<S: AsRef<str>>(header: &[S], rows: &[Value]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
    if !header.is_empty() {
        w.write_record(&header)?;
    }
    for row in rows {
        let rec: Vec<String> = header
            .iter()
            .map(|k| row.get(*k).map(cell).unwrap_or_default())
            .collect();
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    Ok(String::from_utf8(bytes)?)
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
