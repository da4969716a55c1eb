//! Flat `key=value` configuration files.
//!
//! One entry per line, `#` starts a comment, arrays are written `key=[a,b,c]`.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    Array(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Value>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, String> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", lineno + 1));
            }
            let value = value.trim();
            let parsed = if let Some(inner) = value.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated array", lineno + 1))?;
                let items: Vec<String> = inner
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                Value::Array(items)
            } else {
                Value::Scalar(value.to_string())
            };
            if entries.insert(key.to_string(), parsed).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", lineno + 1));
            }
        }
        Ok(Config { entries })
    }

    /// Reject keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), String> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(format!("unknown key '{k}'")),
            None => Ok(()),
        }
    }

    pub fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| format!("cannot parse '{s}' for key '{key}'")),
            Some(Value::Array(_)) => Err(format!("key '{key}' expects a scalar")),
        }
    }

    pub fn array<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, String> {
        let items = match self.entries.get(key) {
            None => return Ok(None),
            Some(Value::Array(items)) => items.clone(),
            Some(Value::Scalar(s)) if s.is_empty() => Vec::new(),
            Some(Value::Scalar(s)) => vec![s.clone()],
        };
        items
            .iter()
            .map(|s| s.parse().map_err(|_| format!("cannot parse '{s}' in key '{key}'")))
            .collect::<Result<Vec<T>, String>>()
            .map(Some)
    }
}
