//! Layered run configuration: flag > config file > preset > built-in default.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use farm_core::FarmError;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<FarmError> for CliError {
    fn from(e: FarmError) -> Self {
        CliError::runtime(error_chain(&e))
    }
}

/// The error and its sources joined with ": ".
pub fn error_chain(e: &dyn std::error::Error) -> String {
    let mut text = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        let next = s.to_string();
        if !text.contains(&next) {
            text.push_str(": ");
            text.push_str(&next);
        }
        source = s.source();
    }
    text
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    preset: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let mut r = Resolver::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            r.file = parse_config(&text).map_err(|m| CliError::config(format!("{}: {m}", path.display())))?;
        }
        Ok(r)
    }

    pub fn set_preset(&mut self, values: &[(&str, &str)]) {
        self.preset = values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    }

    /// Whether `key` was given by flag, file or preset rather than defaulted.
    pub fn is_set(&self, key: &str, flag: &Option<String>) -> bool {
        flag.is_some() || self.file.contains_key(key) || self.preset.contains_key(key)
    }

    /// Resolve `key` as text and record it for the echo.
    pub fn raw(&mut self, key: &str, flag: Option<String>, default: &str) -> String {
        self.used.insert(key.to_string());
        let value = flag
            .or_else(|| self.file.get(key).cloned())
            .or_else(|| self.preset.get(key).cloned())
            .unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), value.clone());
        value
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<String>, default: &str) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let text = self.raw(key, flag, default);
        text.trim()
            .parse()
            .map_err(|e| CliError::config(format!("invalid {key} = {text:?}: {e}")))
    }

    /// `auto` (or empty) resolves to `None`.
    pub fn optional<T>(&mut self, key: &str, flag: Option<String>) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let text = self.raw(key, flag, "auto");
        match text.trim() {
            "" | "auto" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::config(format!("invalid {key} = {text:?}: {e}"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T>(&mut self, key: &str, flag: Option<String>, default: &str) -> CliResult<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let text = self.raw(key, flag, default);
        let items: Vec<T> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::config(format!("invalid {key} entry {s:?}: {e}")))
            })
            .collect::<CliResult<_>>()?;
        if items.is_empty() {
            return Err(CliError::config(format!("{key} is empty")));
        }
        Ok(items)
    }

    pub fn flag_bool(&mut self, key: &str, flag: Option<bool>, default: bool) -> CliResult<bool> {
        self.get(key, flag.map(|b| b.to_string()), if default { "true" } else { "false" })
    }

    /// Fails on config-file keys that no part of the command consumed.
    pub fn finish(&self) -> CliResult<()> {
        match self.file.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(CliError::config(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    /// Settings that can change results: everything except the output
    /// directory and the thread count.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        self.resolved
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "out" | "threads"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// `key = value` lines, sorted by key.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// `key = value` per line; `#` starts a comment; blank lines ignored.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", no + 1));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", no + 1));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_unknown_keys() {
        let mut r = Resolver::default();
        r.file = parse_config("reps = 10 # comment\nseed=3\n\nwindow_size = 5\n").unwrap();
        r.set_preset(&[("reps", "99"), ("t", "100")]);
        assert_eq!(r.get::<usize>("reps", None, "1").unwrap(), 10);
        assert_eq!(r.get::<usize>("reps", Some("7".into()), "1").unwrap(), 7);
        assert_eq!(r.get::<usize>("t", None, "1").unwrap(), 100);
        assert_eq!(r.get::<u64>("seed", None, "0").unwrap(), 3);
        assert!(r.finish().is_err());
        r.raw("window-size", None, "");
        assert!(r.finish().is_ok());
        assert!(r.echo().contains("reps = 7\n"));
    }

    #[test]
    fn malformed_config_lines() {
        assert!(parse_config("just words").is_err());
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config(" = 1").is_err());
    }
}
