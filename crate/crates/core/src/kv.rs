//! Flat `key = value` text used by run configs and checkpoint headers.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Result, SneError};

/// Parsed key/value pairs. Blank lines and `#` comments are ignored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SneError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(SneError::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(SneError::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => {
                v.parse::<T>().map(Some).map_err(|_| SneError::Config(format!("invalid value '{v}' for '{key}'")))
            }
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Rejects keys outside `known`, so typos do not silently fall back to defaults.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(SneError::Config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
