//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are case
//! sensitive. Lists are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ChannelParams;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: n + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line: n + 1,
                    reason: "empty key".into(),
                });
            }
            if entries.insert(key.to_string(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line: n + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| Error::Config {
                line: *line,
                reason: format!("cannot parse value `{v}` for `{key}`"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|_| Error::Config {
                        line: *line,
                        reason: format!("cannot parse list item `{s}` for `{key}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Canonical `key=value` rendering (sorted keys) used for cache keys.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, (_, v)) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// Channel parameters from keys `k0`, `k1`, `L`, `beta` or `Lambda`,
    /// `hbar`, `mass`. Unit defaults: `L = hbar = mass = 1`, `k1 = 0`.
    pub fn channel_params(&self) -> Result<ChannelParams> {
        let k0: f64 = self.get("k0")?.ok_or_else(|| Error::Config {
            line: 0,
            reason: "missing key `k0`".into(),
        })?;
        let k1 = self.get_or("k1", 0.0)?;
        let period = self.get_or("L", 1.0)?;
        let hbar = self.get_or("hbar", 1.0)?;
        let mass = self.get_or("mass", 1.0)?;
        match (self.get::<f64>("beta")?, self.get::<f64>("Lambda")?) {
            (Some(_), Some(_)) => Err(Error::Config {
                line: 0,
                reason: "give either `beta` or `Lambda`, not both".into(),
            }),
            (Some(beta), None) => ChannelParams::new(k0, k1, period, beta, hbar, mass),
            (None, Some(lambda)) => ChannelParams::from_lambda(k0, k1, period, lambda, hbar, mass),
            (None, None) => Err(Error::Config {
                line: 0,
                reason: "missing `beta` or `Lambda`".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_channel() {
        let kv = KeyValues::parse("# channel\nk0 = 4\nk1=0.3\n\nLambda = 0.05 # comment\n").unwrap();
        let p = kv.channel_params().unwrap();
        assert_eq!(p.k0, 4.0);
        assert_eq!(p.k1, 0.3);
        assert_relative_eq!(p.scales().lambda, 0.05, epsilon = 1e-14);
    }

    #[test]
    fn rejects_both_temperatures() {
        let kv = KeyValues::parse("k0=1\nbeta=1\nLambda=0.1").unwrap();
        assert!(kv.channel_params().is_err());
    }

    #[test]
    fn reports_line_numbers() {
        match KeyValues::parse("k0=1\nnot a pair") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let kv = KeyValues::parse("a = 1, 2, x").unwrap();
        assert!(kv.list::<f64>("a").is_err());
        assert!(KeyValues::parse("a=1\na=2").is_err());
    }

    #[test]
    fn canonical_is_sorted() {
        let a = KeyValues::parse("b=2\na=1").unwrap();
        let b = KeyValues::parse("a=1\nb=2").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
