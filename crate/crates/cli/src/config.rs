//! Flat `key = value` run configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment            (also allowed after a value)
//! key = value
//! list_key = 1.0, 0.5, 0
//! ```
//!
//! Keys are `[a-z0-9_]+`, values are trimmed, repeated keys are an error and
//! so is any key the command does not read.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct KvConfig {
    source: String,
    entries: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}:{line_no}: expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                bail!("{source}:{line_no}: invalid key {key:?}");
            }
            if entries.insert(key.to_string(), (value.trim().to_string(), line_no)).is_some() {
                bail!("{source}:{line_no}: duplicate key {key:?}");
            }
        }
        Ok(Self {
            source: source.to_string(),
            entries,
            used: RefCell::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn raw(&self, key: &str) -> Option<&(String, usize)> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("{}:{line}: bad value for `{key}`: {e}", self.source)),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some((v, line)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| anyhow!("{}:{line}: bad item {s:?} in `{key}`: {e}", self.source))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Path value, resolved against `base` when relative.
    pub fn path(&self, key: &str, base: &Path) -> Result<Option<PathBuf>> {
        Ok(self.get::<PathBuf>(key)?.map(|p| if p.is_absolute() { p } else { base.join(p) }))
    }

    /// Fails on keys nobody asked for, which are almost always typos.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, (_, line))| format!("`{k}` (line {line})"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            bail!("{}: unknown keys {}", self.source, unknown.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_lists_and_comments() {
        let c = KvConfig::parse("# top\narchitecture = seqmo  # trailing\nb_w_values = 1, 0.5,0\n\nhidden=16\n", "t").unwrap();
        assert_eq!(c.get::<String>("architecture").unwrap().unwrap(), "seqmo");
        assert_eq!(c.list::<f64>("b_w_values").unwrap().unwrap(), vec![1.0, 0.5, 0.0]);
        assert_eq!(c.get_or("hidden", 64usize).unwrap(), 16);
        assert_eq!(c.get_or("layers", 2usize).unwrap(), 2);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(KvConfig::parse("novalue\n", "t").is_err());
        assert!(KvConfig::parse("a = 1\na = 2\n", "t").is_err());
        assert!(KvConfig::parse("Bad-Key = 1\n", "t").is_err());
        let c = KvConfig::parse("hidden = many\n", "t").unwrap();
        assert!(c.get::<usize>("hidden").is_err());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let c = KvConfig::parse("hiden = 3\n", "t").unwrap();
        let err = c.finish().unwrap_err().to_string();
        assert!(err.contains("hiden"), "{err}");
    }
}
