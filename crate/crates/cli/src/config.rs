//! `key = value` configuration files. Blank lines and `#` comments are
//! skipped; command-line flags take precedence over file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvFile {
    values: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got {raw:?}", i + 1))?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                bail!("line {}: empty key", i + 1);
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(KvFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Flag value if given, else the file's value for `key` (with `_` and
    /// `-` interchangeable), else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(&key.replace('_', "-")) {
            Some(s) => s.parse().map_err(|e| anyhow!("config key {key}: {e}")),
            None => Ok(default),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(&key.replace('_', "-")).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let kv = KvFile::parse("# sweep\ncores = 4\nsets_per_point=20\n\n").unwrap();
        assert_eq!(kv.pick(None, "cores", 8usize).unwrap(), 4);
        assert_eq!(kv.pick(Some(2), "cores", 8usize).unwrap(), 2);
        assert_eq!(kv.pick(None, "sets-per-point", 500usize).unwrap(), 20);
        assert_eq!(kv.pick(None, "tasks", 160usize).unwrap(), 160);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(KvFile::parse("cores 4").is_err());
        assert!(KvFile::parse("=4").is_err());
        let kv = KvFile::parse("cores = four").unwrap();
        assert!(kv.pick(None, "cores", 1usize).is_err());
    }
}
