//! Flat `key = value` experiment configs. Flags override file entries,
//! file entries override defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Clone, Copy, Debug)]
pub struct Param {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn p(key: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { key, default, help }
}

/// Fully resolved settings of one run, in parameter-table order.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub subcommand: String,
    pub entries: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn resolve(
        subcommand: &str,
        params: &[Param],
        flags: &BTreeMap<String, String>,
        file: Option<&Path>,
    ) -> Result<Self, CliError> {
        let from_file = match file {
            Some(path) => parse_file(path, subcommand, params)?,
            None => BTreeMap::new(),
        };
        let entries = params
            .iter()
            .map(|p| {
                let v = flags
                    .get(p.key)
                    .or_else(|| from_file.get(p.key))
                    .cloned()
                    .unwrap_or_else(|| p.default.to_string());
                (p.key.to_string(), v)
            })
            .collect();
        Ok(Self {
            subcommand: subcommand.to_string(),
            entries,
        })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("parameter {key} not declared"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, self.raw(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.raw(key)
            .trim()
            .parse()
            .map_err(|_| invalid(key, self.raw(key)))
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.raw(key)
            .trim()
            .parse()
            .map_err(|_| invalid(key, self.raw(key)))
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key).trim() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(invalid(key, v)),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        parse_list(key, self.raw(key))
    }

    /// Semicolon-separated points of comma-separated coordinates.
    pub fn points(&self, key: &str) -> Result<Vec<Vec<f64>>, CliError> {
        self.raw(key)
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_list(key, s))
            .collect()
    }

    /// `auto` (or empty) maps to `None`.
    pub fn optional(&self, key: &str) -> Option<&str> {
        match self.raw(key).trim() {
            "" | "auto" | "none" => None,
            v => Some(v),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "# logsig experiment config\nsubcommand = {}\n",
            self.subcommand
        );
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn invalid(key: &str, value: &str) -> CliError {
    CliError::Usage(format!("invalid value for {key}: {value:?}"))
}

fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| invalid(key, s))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, s))
    }
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| parse_f64(key, x))
        .collect()
}

fn parse_file(
    path: &Path,
    subcommand: &str,
    params: &[Param],
) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            ))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "subcommand" {
            if v != subcommand {
                return Err(CliError::Usage(format!(
                    "config is for '{v}', not '{subcommand}'"
                )));
            }
            continue;
        }
        if !params.iter().any(|p| p.key == k) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown key {k}",
                path.display(),
                lineno + 1
            )));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}
