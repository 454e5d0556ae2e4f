//! Parameter resolution: config file first, then command-line flags on top.
//!
//! Every value a command reads is recorded so the manifest lists exactly the
//! resolved parameters, defaults included.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dfbm_core::{HurstParam, RngSeed};

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Params {
    given: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

impl Params {
    /// Parse a config file: either `key = value` lines (INI style; `#`/`;`
    /// comments and `[section]` headers ignored) or a manifest written by a
    /// previous run, whose `params` object is taken verbatim.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let params = manifest
                .get("params")
                .and_then(|p| p.as_object())
                .ok_or_else(|| CliError::Validation(format!("{} has no params object", path.display())))?;
            let mut given = BTreeMap::new();
            for (k, v) in params {
                let value = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                given.insert(normalize_key(k), value);
            }
            if let Some(cmd) = manifest.get("command").and_then(|c| c.as_str()) {
                given.insert("command".into(), cmd.to_string());
            }
            return Ok(Params { given, used: RefCell::default() });
        }
        let mut given = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{}:{}: expected key = value", path.display(), lineno + 1))
            })?;
            given.insert(normalize_key(k), v.trim().to_string());
        }
        Ok(Params { given, used: RefCell::default() })
    }

    /// Override with a flag value when present.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.given.insert(normalize_key(key), v);
        }
    }

    /// Remove a key that steers the run but is not an experiment parameter.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.given.remove(key)
    }

    fn raw(&self, key: &str) -> Option<String> {
        self.given.get(key).cloned()
    }

    fn record(&self, key: &str, value: String) {
        self.used.borrow_mut().insert(key.to_string(), value);
    }

    fn parse<T>(&self, key: &str, text: &str) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = text.trim().parse::<T>().map_err(|e| CliError::Validation(format!("--{key} {text:?}: {e}")))?;
        self.record(key, value.to_string());
        Ok(value)
    }

    pub fn get<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.raw(key) {
            Some(s) => self.parse(key, &s),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    pub fn optional<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.raw(key).map(|s| self.parse(key, &s)).transpose()
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        let value = self.raw(key).unwrap_or_else(|| default.to_string());
        self.record(key, value.clone());
        value
    }

    pub fn hurst(&self, default: f64) -> Result<HurstParam, CliError> {
        Ok(HurstParam::new(self.get("h", default)?)?)
    }

    /// `seed` or `seed:stream`.
    pub fn seed(&self, default: u64) -> Result<RngSeed, CliError> {
        let text = self.raw("seed").unwrap_or_else(|| default.to_string());
        let bad = || CliError::Validation(format!("--seed {text:?}: expected SEED or SEED:STREAM"));
        let seed = match text.split_once(':') {
            Some((s, t)) => {
                RngSeed::with_stream(s.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?)
            }
            None => RngSeed::new(text.trim().parse().map_err(|_| bad())?),
        };
        self.record("seed", format!("{}:{}", seed.seed, seed.stream));
        Ok(seed)
    }

    /// A strictly increasing grid written as `a,b,c` or as the doubling range `2^i..2^j`.
    pub fn grid(&self, key: &str, default: &str) -> Result<Vec<u64>, CliError> {
        let text = self.string(key, default);
        let grid = parse_grid(&text).map_err(|e| CliError::Validation(format!("--{key} {text:?}: {e}")))?;
        Ok(grid)
    }

    pub fn list(&self, key: &str, default: &str) -> Vec<String> {
        self.string(key, default).split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }
}

fn parse_power(s: &str) -> Result<u64, String> {
    let s = s.trim();
    match s.split_once('^') {
        Some((base, exp)) => {
            let base: u64 = base.trim().parse().map_err(|_| format!("bad base in {s}"))?;
            let exp: u32 = exp.trim().parse().map_err(|_| format!("bad exponent in {s}"))?;
            base.checked_pow(exp).ok_or_else(|| format!("{s} overflows"))
        }
        None => s.parse().map_err(|_| format!("{s} is not a positive integer")),
    }
}

pub fn parse_grid(text: &str) -> Result<Vec<u64>, String> {
    let grid: Vec<u64> = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse_power(lo)?, parse_power(hi)?);
        if lo == 0 || hi < lo {
            return Err("range needs 0 < start <= end".into());
        }
        std::iter::successors(Some(lo), |&x| x.checked_mul(2)).take_while(|&x| x <= hi).collect()
    } else {
        text.split(',').map(parse_power).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("grid must be nonempty, positive and strictly increasing".into());
    }
    Ok(grid)
}
