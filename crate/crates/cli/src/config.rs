//! Run configuration: defaults, then a `key=value` file, then flags.
//!
//! Keys carry the section they belong to: `filter.w_p`, `match.beta`,
//! `search.tau`, `benchmark.seed`, plus the top-level `workers`. Values are
//! JSON when they parse as JSON and plain strings otherwise; a list may also
//! be written comma-separated (`filter.order=pingpong,backward,drifting`).

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use celltraj_core::ingest::FilterConfig;
use celltraj_core::mapmatch::MatchConfig;
use celltraj_core::simsearch::SearchConfig;
use celltraj_core::simulate::BenchmarkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub filter: FilterConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub search: SearchConfig,
    pub benchmark: BenchmarkConfig,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            matching: MatchConfig::default(),
            search: SearchConfig::default(),
            benchmark: BenchmarkConfig::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

fn parse_value(raw: &str, current: &Value) -> Value {
    let raw = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if current.is_array() {
        let items = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
            .collect();
        return Value::Array(items);
    }
    Value::String(raw.to_string())
}

impl RunConfig {
    /// Sets one dotted key. Unknown keys and ill-typed values are errors.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut tree = serde_json::to_value(&*self)?;
        let mut slot = &mut tree;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
        }
        if slot.is_object() {
            bail!("config key `{key}` names a section, not a value");
        }
        *slot = parse_value(raw, slot);
        *self = serde_json::from_value(tree).with_context(|| format!("bad value `{raw}` for `{key}`"))?;
        Ok(())
    }

    /// Applies a `key=value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key=value", n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.matching.validate().map_err(|e| anyhow!("match config: {e}"))?;
        self.search.validate().map_err(|e| anyhow!("search config: {e}"))?;
        self.benchmark.validate().map_err(|e| anyhow!("benchmark config: {e}"))?;
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.filter.speed_cap_kmh.is_nan() || self.filter.speed_cap_kmh <= 0.0 {
            bail!("filter.speed_cap_kmh must be > 0");
        }
        Ok(())
    }

    /// Every key with its current value, one `key=value` per line, sorted.
    pub fn to_text(&self) -> String {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
            match v {
                Value::Object(o) => {
                    for (k, v) in o {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                other => out.push(format!("{prefix}={other}")),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out.sort();
        out.join("\n") + "\n"
    }

    /// SHA-256 of the canonical `key=value` listing.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
