//! Resolved run settings: `key = value` file entries, overridden by flags,
//! completed with per-command defaults. Unknown keys are an error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// A known key and its default; `None` means optional or required.
pub type KeySpec = (&'static str, Option<String>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    command: &'static str,
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`, got {line:?}", i + 1))?;
        let key = normalize(k);
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", i + 1));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl Settings {
    /// Later sources win: file, then flags. Defaults fill whatever is left.
    pub fn resolve(
        command: &'static str,
        keys: &[KeySpec],
        file: BTreeMap<String, String>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self, String> {
        let known = |k: &str| keys.iter().any(|(name, _)| *name == k);
        if let Some(bad) = file.keys().find(|k| !known(k)) {
            let names: Vec<&str> = keys.iter().map(|(k, _)| *k).collect();
            return Err(format!(
                "unknown configuration key {bad:?} for `{command}` (known: {})",
                names.join(", ")
            ));
        }
        let mut values = file;
        for (k, v) in flags {
            debug_assert!(known(k), "flag {k} missing from the key table");
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        for (k, default) in keys {
            if let Some(d) = default {
                values.entry(k.to_string()).or_insert_with(|| d.clone());
            }
        }
        Ok(Self { command, values })
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("{key} = {v:?}: {e}")))
            .transpose()
    }

    pub fn require<T>(&self, key: &str) -> Result<T, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| format!("`{}` needs {key} (flag --{} or config key)", self.command, key.replace('_', "-")))
    }

    /// Comma-separated list.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(raw) = self.raw(key) else {
            return Ok(Vec::new());
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| format!("{key}: {s:?}: {e}")))
            .collect()
    }

    pub fn flag(&self, key: &str) -> Result<bool, String> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(other) => Err(format!("{key} = {other:?}: expected true or false")),
        }
    }

    /// The same `key = value` format the loader accepts, keys sorted.
    pub fn render(&self) -> String {
        let mut out = format!("# resolved configuration for `{}`\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
