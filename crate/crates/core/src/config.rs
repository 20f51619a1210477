//! Run configuration: a flat `key = value` file overlaid with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::DATE_FORMAT;
use crate::solver::Backend;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("missing required setting {0:?}")]
    Missing(&'static str),
    #[error("invalid value {value:?} for {key:?}: {reason}")]
    Invalid {
        key: &'static str,
        value: String,
        reason: String,
    },
}

/// Every key accepted in config files; flags use the same names with `-` for `_`.
pub const KEYS: &[&str] = &[
    "input",
    "benchmark",
    "baseline_start",
    "baseline_end",
    "alpha",
    "bits",
    "window",
    "stride",
    "eta",
    "rho_step",
    "max_iters",
    "backend",
    "seed",
    "reads",
    "sweeps",
    "out",
    "penalty_budget",
    "penalty_return",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub benchmark: String,
    pub baseline_start: Option<NaiveDate>,
    pub baseline_end: Option<NaiveDate>,
    pub alpha: f64,
    pub bits: usize,
    pub window: usize,
    pub stride: usize,
    pub eta: f64,
    pub rho_step: f64,
    pub max_iters: usize,
    pub backend: Backend,
    pub seed: u64,
    pub reads: usize,
    pub sweeps: usize,
    pub out: PathBuf,
    pub penalty_budget: Option<f64>,
    pub penalty_return: Option<f64>,
}

/// Raw settings before typing; later inserts override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Self::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                text: raw.to_string(),
            })?;
            settings.set(key.trim(), value.trim())?;
        }
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        self.0.insert(key, value.to_string());
        Ok(())
    }

    pub fn merge(&mut self, other: Settings) {
        self.0.extend(other.0);
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parsed<T: FromStr>(&self, key: &'static str, default: Option<T>) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Invalid {
                key,
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    fn date(&self, key: &'static str) -> Result<Option<NaiveDate>, ConfigError> {
        self.get(key)
            .map(|v| {
                NaiveDate::parse_from_str(v, DATE_FORMAT).map_err(|e| ConfigError::Invalid {
                    key,
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        let required = |key: &'static str| self.get(key).map(str::to_string).ok_or(ConfigError::Missing(key));
        let cfg = RunConfig {
            input: PathBuf::from(required("input")?),
            benchmark: required("benchmark")?,
            baseline_start: self.date("baseline_start")?,
            baseline_end: self.date("baseline_end")?,
            alpha: self.parsed("alpha", Some(0.01))?.unwrap(),
            bits: self.parsed("bits", Some(4))?.unwrap(),
            window: self.parsed("window", Some(252))?.unwrap(),
            stride: self.parsed("stride", Some(21))?.unwrap(),
            eta: self.parsed("eta", Some(0.05))?.unwrap(),
            rho_step: self.parsed("rho_step", Some(0.05))?.unwrap(),
            max_iters: self.parsed("max_iters", Some(60))?.unwrap(),
            backend: self.parsed("backend", Some(Backend::Auto))?.unwrap(),
            seed: self.parsed("seed", Some(42))?.unwrap(),
            reads: self.parsed("reads", Some(20))?.unwrap(),
            sweeps: self.parsed("sweeps", Some(200))?.unwrap(),
            out: PathBuf::from(self.get("out").unwrap_or("results")),
            penalty_budget: self.parsed("penalty_budget", None)?,
            penalty_return: self.parsed("penalty_return", None)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid(key: &'static str, value: impl ToString, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Settings::parse(text)?.into_config()
    }

    /// Range checks that do not need the data file.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", self.alpha, "must be in (0, 1)"));
        }
        if self.bits == 0 || self.bits > crate::encoding::MAX_BITS_PER_WEIGHT {
            return Err(invalid("bits", self.bits, "must be in 1..=30"));
        }
        if self.window < 2 {
            return Err(invalid("window", self.window, "must be >= 2"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", self.stride, "must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid("eta", self.eta, "must be in (0, 1)"));
        }
        if !(self.rho_step > 0.0 && self.rho_step < 1.0) {
            return Err(invalid("rho_step", self.rho_step, "must be in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", self.max_iters, "must be >= 1"));
        }
        if self.reads == 0 {
            return Err(invalid("reads", self.reads, "must be >= 1"));
        }
        if self.sweeps == 0 {
            return Err(invalid("sweeps", self.sweeps, "must be >= 1"));
        }
        for (key, value) in [("penalty_budget", self.penalty_budget), ("penalty_return", self.penalty_return)] {
            if let Some(v) = value {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(key, v, "must be finite and >= 0"));
                }
            }
        }
        if let (Some(s), Some(e)) = (self.baseline_start, self.baseline_end) {
            if s > e {
                return Err(invalid("baseline_start", s, "baseline start is after baseline end"));
            }
        }
        Ok(())
    }

    /// `key = value` text that [`RunConfig::parse`] maps back to `self`.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("input", self.input.display().to_string());
        line("benchmark", self.benchmark.clone());
        if let Some(d) = self.baseline_start {
            line("baseline_start", d.format(DATE_FORMAT).to_string());
        }
        if let Some(d) = self.baseline_end {
            line("baseline_end", d.format(DATE_FORMAT).to_string());
        }
        line("alpha", self.alpha.to_string());
        line("bits", self.bits.to_string());
        line("window", self.window.to_string());
        line("stride", self.stride.to_string());
        line("eta", self.eta.to_string());
        line("rho_step", self.rho_step.to_string());
        line("max_iters", self.max_iters.to_string());
        line("backend", self.backend.to_string());
        line("seed", self.seed.to_string());
        line("reads", self.reads.to_string());
        line("sweeps", self.sweeps.to_string());
        line("out", self.out.display().to_string());
        if let Some(v) = self.penalty_budget {
            line("penalty_budget", v.to_string());
        }
        if let Some(v) = self.penalty_return {
            line("penalty_return", v.to_string());
        }
        s
    }

    pub fn penalties(&self) -> Option<(f64, f64)> {
        match (self.penalty_budget, self.penalty_return) {
            (None, None) => None,
            (b, r) => {
                let b = b.or(r).unwrap();
                Some((b, r.unwrap_or(b)))
            }
        }
    }
}
