//! A world on disk: `network.json`, `towers.csv`, `records.csv`,
//! `truth.json` and `config.json`, each readable by the regular loaders.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BenchmarkConfig, BenchmarkWorld, GroundTruth, MemberTruth};
use crate::ingest::{format_record, parse_records, parse_tower_csv, write_tower_csv, CellRecord, IngestError, TowerMap};
use crate::roadnet::{parse_network, write_network, PathOnNetwork, RoadNetError, RoadNetwork, SegmentId};

#[derive(Debug, Error)]
pub enum WorldIoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Network(#[from] RoadNetError),
    #[error(transparent)]
    Towers(#[from] IngestError),
    #[error("{file}: {source}")]
    Json { file: &'static str, source: serde_json::Error },
    #[error("truth for {member} names segment {source_id} (reversed: {reversed}) missing from the network")]
    UnknownSegment { member: String, source_id: u64, reversed: bool },
    #[error("records.csv: {0} malformed lines")]
    Records(usize),
}

/// Truth paths refer to roads by their file id and direction, so the file
/// stays valid whatever order the loader assigns segment indices in.
#[derive(Serialize, Deserialize)]
struct TruthFile {
    members: Vec<TruthRow>,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    id: String,
    group: usize,
    carrier: usize,
    depart: i64,
    speed_mps: f64,
    /// `(road id, reversed)` in travel order.
    segments: Vec<(u64, bool)>,
    entry_offset_m: f64,
    exit_offset_m: f64,
    samples: Vec<(i64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LoadedWorld {
    pub config: Option<BenchmarkConfig>,
    pub network: RoadNetwork,
    pub towers: TowerMap,
    pub records: Vec<CellRecord>,
    pub truth: GroundTruth,
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<(), WorldIoError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| WorldIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(dir: &Path, name: &str) -> Result<String, WorldIoError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| WorldIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn pretty<T: Serialize>(file: &'static str, v: &T) -> Result<String, WorldIoError> {
    serde_json::to_string_pretty(v).map_err(|source| WorldIoError::Json { file, source })
}

pub fn write_world(world: &BenchmarkWorld, dir: &Path) -> Result<(), WorldIoError> {
    fs::create_dir_all(dir).map_err(|source| WorldIoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(dir, "network.json", pretty("network.json", &write_network(&world.network))?.as_bytes())?;
    write_file(dir, "towers.csv", write_tower_csv(&world.towers, &world.projection).as_bytes())?;
    let mut records = String::new();
    for r in &world.records {
        records.push_str(&format_record(r));
        records.push('\n');
    }
    write_file(dir, "records.csv", records.as_bytes())?;
    let net = &world.network;
    let truth = TruthFile {
        members: world
            .truth
            .members
            .iter()
            .map(|m| TruthRow {
                id: m.id.clone(),
                group: m.group,
                carrier: m.carrier,
                depart: m.depart,
                speed_mps: m.speed_mps,
                segments: m.path.segments.iter().map(|&s| (net.segment(s).source_id, net.segment(s).reversed)).collect(),
                entry_offset_m: m.path.entry_offset_m,
                exit_offset_m: m.path.exit_offset_m,
                samples: m.samples.clone(),
            })
            .collect(),
    };
    write_file(dir, "truth.json", pretty("truth.json", &truth)?.as_bytes())?;
    write_file(dir, "config.json", pretty("config.json", &world.config)?.as_bytes())?;
    Ok(())
}

pub fn read_world(dir: &Path) -> Result<LoadedWorld, WorldIoError> {
    let (network, _) = parse_network(&read_file(dir, "network.json")?)?;
    let projection = network.projection().copied().unwrap_or(crate::geometry::Projection::new(0.0, 0.0));
    let towers = parse_tower_csv(&read_file(dir, "towers.csv")?, &projection)?;
    let parsed = parse_records(read_file(dir, "records.csv")?.as_bytes()).map_err(|source| WorldIoError::Io {
        path: dir.join("records.csv").display().to_string(),
        source,
    })?;
    if parsed.skipped > 0 {
        return Err(WorldIoError::Records(parsed.skipped));
    }
    let file: TruthFile = serde_json::from_str(&read_file(dir, "truth.json")?).map_err(|source| WorldIoError::Json { file: "truth.json", source })?;
    let lookup: HashMap<(u64, bool), SegmentId> = network.segments().iter().map(|s| ((s.source_id, s.reversed), s.id)).collect();
    let mut members = Vec::with_capacity(file.members.len());
    for row in file.members {
        let segs = row
            .segments
            .iter()
            .map(|&(source_id, reversed)| {
                lookup.get(&(source_id, reversed)).copied().ok_or_else(|| WorldIoError::UnknownSegment {
                    member: row.id.clone(),
                    source_id,
                    reversed,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        // lengths shift by float noise after the lon/lat round trip
        let last = network.segment(*segs.last().expect("non-empty path")).length_m;
        let path = PathOnNetwork::new(&network, segs, row.entry_offset_m, row.exit_offset_m.min(last));
        members.push(MemberTruth {
            id: row.id,
            group: row.group,
            carrier: row.carrier,
            depart: row.depart,
            speed_mps: row.speed_mps,
            path,
            samples: row.samples,
        });
    }
    let config = match read_file(dir, "config.json") {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|source| WorldIoError::Json { file: "config.json", source })?),
        Err(_) => None,
    };
    Ok(LoadedWorld {
        config,
        network,
        towers,
        records: parsed.records,
        truth: GroundTruth { members },
    })
}
