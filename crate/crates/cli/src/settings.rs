//! `key = value` config files and flag/file/default resolution.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Directory used for outputs when `--out` is not given.
pub const OUT_DIR_ENV: &str = "COLORPA_OUT_DIR";

pub fn default_output(name: &str) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(name)
}

/// Parsed config file. Keys are flag names without the leading dashes; `#` starts a comment.
#[derive(Debug, Default)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            values.insert(key.trim().replace('_', "-"), value.trim().to_string());
        }
        Ok(Self { path: Some(path.to_path_buf()), values, used: RefCell::default() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    /// Flag if given, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let from_file = self.raw(key);
        if flag.is_some() {
            return Ok(flag);
        }
        from_file.map(|v| parse_value(key, v)).transpose()
    }

    /// Comma-separated list.
    pub fn pick_list<T: FromStr>(&self, flag: Vec<T>, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let from_file = self.raw(key);
        if !flag.is_empty() {
            return Ok(flag);
        }
        match from_file {
            Some(v) => v.split(',').map(|item| parse_value(key, item.trim())).collect(),
            None => Ok(default),
        }
    }

    pub fn pick_flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        let from_file = self.raw(key);
        if flag {
            return Ok(true);
        }
        from_file.map(|v| parse_value(key, v)).transpose().map(|v| v.unwrap_or(false))
    }

    /// Errors on keys no option asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            let path = self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            Err(CliError::Usage(format!("unknown keys in {path}: {unknown:?}")))
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::Usage(format!("config key {key}: '{value}': {e}")))
}

/// An error probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability(pub f64);

impl FromStr for Probability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(format!("probability {p} outside [0, 1]"))
        }
    }
}
