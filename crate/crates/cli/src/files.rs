//! Loading inputs, writing outputs and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use celltraj_core::geometry::{Point, Projection};
use celltraj_core::ingest::{parse_records, parse_timestamp, parse_tower_csv, CellRecord, TowerMap};
use celltraj_core::roadnet::{load_network, RoadNetwork};

use crate::config::{hex, RunConfig};
use crate::Inputs;

impl Inputs {
    fn pick(&self, own: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf> {
        own.clone()
            .or_else(|| self.world.as_ref().map(|w| w.join(name)))
            .ok_or_else(|| anyhow!("missing input: pass --{flag} or --world"))
    }
    pub fn network_path(&self) -> Result<PathBuf> {
        self.pick(&self.network, "network.json", "network")
    }
    pub fn towers_path(&self) -> Result<PathBuf> {
        self.pick(&self.towers, "towers.csv", "towers")
    }
    pub fn records_path(&self) -> Result<PathBuf> {
        self.pick(&self.records, "records.csv", "records")
    }
}

/// Tracks the files a run read, for the manifest.
#[derive(Default)]
pub struct Reads(Vec<(PathBuf, String)>);

impl Reads {
    pub fn bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        let b = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.0.push((path.to_path_buf(), hex(&Sha256::digest(&b))));
        Ok(b)
    }

    pub fn text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.bytes(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn network(&mut self, path: &Path) -> Result<RoadNetwork> {
        self.bytes(path)?;
        let (net, report) = load_network(path).with_context(|| format!("loading {}", path.display()))?;
        if !report.ignored_keys.is_empty() {
            log::warn!("{}: ignored keys {:?}", path.display(), report.ignored_keys);
        }
        Ok(net)
    }

    pub fn towers(&mut self, path: &Path, net: &RoadNetwork) -> Result<TowerMap> {
        let text = self.text(path)?;
        parse_tower_csv(&text, &projection(net)).with_context(|| format!("loading {}", path.display()))
    }

    pub fn records(&mut self, path: &Path) -> Result<Vec<CellRecord>> {
        let bytes = self.bytes(path)?;
        let parsed = parse_records(bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?;
        if parsed.skipped > 0 {
            log::warn!("{}: skipped {} malformed lines", path.display(), parsed.skipped);
        }
        Ok(parsed.records)
    }

    /// `time,lon,lat` lines; time is `YYYYMMDDHHMMSS` or Unix seconds. A
    /// header line is allowed.
    pub fn gps(&mut self, path: &Path, net: &RoadNetwork) -> Result<Vec<(i64, Point)>> {
        let text = self.text(path)?;
        let proj = projection(net);
        let mut fixes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                continue;
            }
            let bad = || anyhow!("{}:{}: expected time,lon,lat", path.display(), n + 1);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let t = parse_timestamp(f[0]).or_else(|| f[0].parse().ok()).ok_or_else(bad)?;
            let (lon, lat): (f64, f64) = (f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?);
            fixes.push((t, proj.to_plane(lon, lat)));
        }
        if fixes.is_empty() {
            bail!("{}: no fixes", path.display());
        }
        fixes.sort_by_key(|f| f.0);
        Ok(fixes)
    }
}

pub fn projection(net: &RoadNetwork) -> Projection {
    net.projection().copied().unwrap_or(Projection::new(0.0, 0.0))
}

/// Writes beside the target and renames, so a failed run never leaves a
/// half-written artifact in place of an older one.
pub fn write_atomic(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let dst = dir.join(name);
    fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &dst).with_context(|| format!("writing {}", dst.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: u64,
    workers: usize,
    inputs: Vec<InputFile>,
    outputs: &'a [&'a str],
    config: serde_json::Value,
}

#[derive(Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

/// `manifest.json` plus `config.txt`, the effective configuration in the
/// `key=value` form `--config` accepts.
pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, reads: &Reads, outputs: &[&str]) -> Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: cfg.hash(),
        seed: cfg.benchmark.seed,
        workers: cfg.workers,
        inputs: reads
            .0
            .iter()
            .map(|(p, h)| InputFile { path: p.display().to_string(), sha256: h.clone() })
            .collect(),
        outputs,
        config: serde_json::to_value(cfg)?,
    };
    write_atomic(dir, "config.txt", cfg.to_text().as_bytes())?;
    write_atomic(dir, "manifest.json", (serde_json::to_string_pretty(&m)? + "\n").as_bytes())
}
