//! Run configuration: command-line flags merged over an optional
//! `key = value` file, with every resolved value echoed back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rpclab_core::{AtomicMeasure, CovarianceFunction, GridSpec};
use serde_json::{Map, Value};

use crate::output::num;

/// Reads a config file. Blank lines and `#` comments are skipped; keys use
/// the long flag names (`n-h`, `half-width`, ...).
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("config line {}: duplicate key {key}", n + 1);
        }
    }
    Ok(map)
}

/// Values that can be echoed in the `config` block.
pub trait Echo {
    fn echo(&self) -> Value;
}

impl Echo for f64 {
    fn echo(&self) -> Value {
        num(*self)
    }
}

impl Echo for usize {
    fn echo(&self) -> Value {
        Value::from(*self)
    }
}

impl Echo for u64 {
    fn echo(&self) -> Value {
        Value::from(*self)
    }
}

impl Echo for String {
    fn echo(&self) -> Value {
        Value::from(self.as_str())
    }
}

impl Echo for PathBuf {
    fn echo(&self) -> Value {
        Value::from(self.display().to_string())
    }
}

impl Echo for AtomicMeasure {
    fn echo(&self) -> Value {
        Value::from(self.to_string())
    }
}

impl Echo for GSelector {
    fn echo(&self) -> Value {
        Value::from(self.name())
    }
}

impl Echo for Format {
    fn echo(&self) -> Value {
        Value::from(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

impl<T: Echo> Echo for Vec<T> {
    fn echo(&self) -> Value {
        Value::Array(self.iter().map(Echo::echo).collect())
    }
}

/// Merges flags over file values over defaults and records the result.
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: Map<String, Value>,
}

impl Resolver {
    pub fn new(command: &str, file: BTreeMap<String, String>) -> Self {
        let mut echo = Map::new();
        echo.insert("command".into(), Value::from(command));
        Self {
            file,
            used: BTreeSet::new(),
            echo,
        }
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key} = {s:?}: {e}")),
        }
    }

    /// Flag, else file, else `default`.
    pub fn get<T: FromStr + Echo>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.echo.insert(key.into(), v.echo());
        Ok(v)
    }

    /// Flag, else file; `null` in the echo when neither is given.
    pub fn optional<T: FromStr + Echo>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        self.echo
            .insert(key.into(), v.as_ref().map_or(Value::Null, Echo::echo));
        Ok(v)
    }

    pub fn required<T: FromStr + Echo>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| anyhow!("--{key} is required (flag or config key)"))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Echo>(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &str,
    ) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let raw = match flag {
            Some(v) => v,
            None => self
                .from_file::<String>(key)?
                .unwrap_or_else(|| default.to_string()),
        };
        let v = raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|e| anyhow!("--{key}: {s:?}: {e}"))
            })
            .collect::<Result<Vec<T>>>()?;
        self.echo.insert(key.into(), v.echo());
        Ok(v)
    }

    /// Fails on file keys that no option consumed.
    pub fn finish(self) -> Result<Map<String, Value>> {
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {unknown:?}");
        }
        Ok(self.echo)
    }
}

/// Covariance selector accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GSelector {
    Linear,
    HalfSquare,
}

impl GSelector {
    pub fn name(&self) -> &'static str {
        match self {
            GSelector::Linear => "linear",
            GSelector::HalfSquare => "half-square",
        }
    }

    pub fn covariance(&self) -> CovarianceFunction {
        match self {
            GSelector::Linear => CovarianceFunction::Linear,
            GSelector::HalfSquare => CovarianceFunction::HalfSquare,
        }
    }
}

impl FromStr for GSelector {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(GSelector::Linear),
            "half-square" => Ok(GSelector::HalfSquare),
            _ => Err(format!("unknown g {s:?} (linear | half-square)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?} (json | csv)")),
        }
    }
}

/// Quadrature controls shared by every command that solves for `ψ`.
pub fn resolve_grid(
    r: &mut Resolver,
    n_h: Option<usize>,
    n_y: Option<usize>,
    half_width: Option<f64>,
) -> Result<GridSpec> {
    let d = GridSpec::default();
    let spec = GridSpec {
        n_h: r.get("n-h", n_h, d.n_h)?,
        n_y: r.get("n-y", n_y, d.n_y)?,
        half_width: r.optional("half-width", half_width)?,
    };
    if spec.n_h == 0 || spec.n_y < 16 {
        bail!("need n-h >= 1 and n-y >= 16");
    }
    if let Some(y) = spec.half_width {
        if !(y > 0.0 && y.is_finite()) {
            bail!("half-width must be positive");
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = parse_config("beta = 2\n# comment\nh=0.25 # trailing\n").unwrap();
        let mut r = Resolver::new("eval", file);
        assert_eq!(r.get("beta", Some(1.5), 1.0).unwrap(), 1.5);
        assert_eq!(r.get("h", None, 0.0).unwrap(), 0.25);
        assert_eq!(r.get("seed", None, 3u64).unwrap(), 3);
        let echo = r.finish().unwrap();
        assert_eq!(echo["seed"], Value::from(3u64));
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        let r = Resolver::new("eval", parse_config("bogus = 1").unwrap());
        assert!(r.finish().is_err());
        assert!(parse_config("beta 2").is_err());
        assert!(parse_config("beta = 1\nbeta = 2").is_err());
        let mut r = Resolver::new("eval", parse_config("beta = hot").unwrap());
        assert!(r.get("beta", None, 1.0).is_err());
    }

    #[test]
    fn lists() {
        let mut r = Resolver::new("at-line", BTreeMap::new());
        let v: Vec<f64> = r.list("h-values", None, "0, 0.5,1").unwrap();
        assert_eq!(v, [0.0, 0.5, 1.0]);
        assert!(r.list::<f64>("bracket", Some("1,x".into()), "").is_err());
    }
}
