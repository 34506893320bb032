//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat;
//! [`KeyValues::get`] returns the last occurrence and [`KeyValues::get_all`]
//! every one in file order.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}")))
            })
            .transpose()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Comma-separated list of floats, e.g. `0.05, 0.1`.
pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("not a number: {s:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_repeats_and_values() {
        let kv = KeyValues::parse("# comment\n\nseed = 3\ncyst = 0,16,5,0\ncyst=1,2,3,0\nseed=4\n").unwrap();
        assert_eq!(kv.get("seed"), Some("4"));
        assert_eq!(kv.get_all("cyst").count(), 2);
        assert_eq!(kv.parse_value::<u64>("seed").unwrap(), Some(4));
        assert_eq!(kv.parse_value::<u64>("missing").unwrap(), None);
        assert!(kv.parse_value::<u64>("cyst").is_err());
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(KeyValues::parse("just words").is_err());
        assert!(KeyValues::parse(" = 3").is_err());
    }

    #[test]
    fn float_lists() {
        assert_eq!(parse_floats("0.05, 0.1,0.2").unwrap(), vec![0.05, 0.1, 0.2]);
        assert!(parse_floats("0.1,x").is_err());
    }
}
