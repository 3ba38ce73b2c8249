//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, no nesting. Every value a
//! command reads is recorded, defaults included, so the `run.cfg` written
//! next to the outputs reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::User(format!("config line {}: expected key = value", n + 1)));
            };
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(CliError::User(format!("config line {}: bad key '{key}'", n + 1)));
            }
            if cfg.entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::User(format!("config line {}: duplicate key '{key}'", n + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Command-line flags override file entries.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// The value for `key`, or `default` (which is then recorded).
    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        match self.entries.get(key) {
            Some(v) => v.parse().map_err(|_| CliError::User(format!("bad value '{v}' for {key}"))),
            None => {
                self.set(key, &default);
                Ok(default)
            }
        }
    }

    pub fn get_str(&mut self, key: &str, default: &str) -> String {
        self.entries.entry(key.to_string()).or_insert_with(|| default.to_string()).clone()
    }

    pub fn require(&self, key: &str) -> Result<String, CliError> {
        self.raw(key).map(str::to_string).ok_or_else(|| CliError::User(format!("missing required setting '{key}'")))
    }

    /// Comma-separated list.
    pub fn get_list<T>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
    {
        let raw = self.get_str(key, default);
        raw.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|_| CliError::User(format!("bad entry '{t}' in {key}"))))
            .collect()
    }

    pub fn get_bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get_str(key, if default { "true" } else { "false" }).as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::User(format!("bad boolean '{other}' for {key}"))),
        }
    }

    /// `command` and `seed` first, then the rest sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in ["command", "seed"] {
            if let Some(v) = self.entries.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        for (k, v) in &self.entries {
            if k != "command" && k != "seed" {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
