//! Flat key-value config files. Keys are namespaced by module
//! (`attack.epsilon`, `zoo.seeds`, ...); `#` starts a comment; every CLI
//! flag has an equivalent key here. Unknown keys are rejected, never
//! silently ignored.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const KNOWN_KEYS: &[&str] = &[
    "campaign.seed",
    "campaign.source",
    "campaign.eval_count",
    "campaign.split_k",
    "campaign.methods",
    "dataset.seed",
    "dataset.train",
    "dataset.test",
    "zoo.archs",
    "zoo.seeds",
    "zoo.train_fraction",
    "attack.norm",
    "attack.epsilon",
    "attack.alpha",
    "attack.iterations",
    "attack.samples",
    "attack.strategy",
    "attack.runs",
    "attack.linbp_relus",
    "refine.iterations",
    "refine.alpha",
    "refine.objective",
    "refine.start_from_baseline",
    "guide.lambda",
    "guide.lambda1",
    "guide.lambda2",
    "guide.c",
    "guide.e",
    "guide.sigma_in",
    "guide.sigma_feat",
    "out.dir",
    "out.store_x",
];

/// Parsed flat config: ordered key -> value map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Reject keys outside the known set.
    pub fn validate_keys(&self) -> Result<()> {
        for key in self.map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str()).filter(|s| !s.is_empty())
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn parse_num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| {
                Error::InvalidConfig(format!("key `{key}`: cannot parse `{s}`"))
            }),
        }
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("key `{key}`: cannot parse `{s}`"))),
        }
    }

    pub fn parse_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => Err(Error::InvalidConfig(format!(
                "key `{key}`: expected true/false, got `{other}`"
            ))),
        }
    }

    pub fn parse_list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: std::str::FromStr + Clone,
    {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|part| {
                    part.trim().parse().map_err(|_| {
                        Error::InvalidConfig(format!("key `{key}`: cannot parse `{part}`"))
                    })
                })
                .collect(),
        }
    }

    /// Canonical serialization: sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> u64 {
        crate::rng::fnv1a(self.canonical().as_bytes())
    }

    /// Overlay `other` (CLI overrides) on top of this config.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }
}
