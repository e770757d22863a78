//! Carrier log ingestion: records, tower map, per-user sequences and noise filters.

mod filters;
mod records;
mod towers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filters::{backward_filter, drifting_filter, pingpong_filter};
pub use records::{
    build_sequences, format_record, format_timestamp, parse_records, parse_timestamp,
    BuiltSequences, CellRecord, ParsedRecords,
};
pub use towers::{
    compute_local_density, parse_tower_csv, write_tower_csv, CellTower, TowerMap,
    DENSITY_RADIUS_M,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("tower file line {line}: {message}")]
    TowerParse { line: usize, message: String },
    #[error("duplicate tower {0}")]
    DuplicateTower(TowerId),
    #[error("empty tower map")]
    NoTowers,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Location area code plus cell id.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TowerId {
    pub lac: u32,
    pub cid: u32,
}

impl TowerId {
    pub const fn new(lac: u32, cid: u32) -> Self {
        Self { lac, cid }
    }
}

impl std::fmt::Display for TowerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.lac, self.cid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqPoint {
    /// Seconds since the Unix epoch.
    pub time: i64,
    pub tower: TowerId,
}

/// Time-ordered tower observations of one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerSequence {
    pub user_id: String,
    pub points: Vec<SeqPoint>,
}

impl TowerSequence {
    pub fn new(user_id: impl Into<String>, points: Vec<SeqPoint>) -> Self {
        Self {
            user_id: user_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean interval between consecutive points, `None` with fewer than two.
    pub fn mean_interval_s(&self) -> Option<f64> {
        let (first, last) = (self.points.first()?, self.points.last()?);
        if self.points.len() < 2 {
            return None;
        }
        Some((last.time - first.time) as f64 / (self.points.len() - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    PingPong,
    Backward,
    Drifting,
}

impl std::str::FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pingpong" => Ok(Self::PingPong),
            "backward" => Ok(Self::Backward),
            "drifting" => Ok(Self::Drifting),
            other => Err(format!("unknown filter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub w_p: usize,
    pub w_b: usize,
    pub speed_cap_kmh: f64,
    pub order: Vec<FilterKind>,
    /// Drop sequences sampled less than once per `max_mean_interval_s` on average.
    pub screen_sample_rate: bool,
    pub max_mean_interval_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            w_p: 3,
            w_b: 5,
            speed_cap_kmh: crate::roadnet::MAX_SPEED_KMH,
            order: vec![FilterKind::PingPong, FilterKind::Backward, FilterKind::Drifting],
            screen_sample_rate: true,
            max_mean_interval_s: 600.0,
        }
    }
}

/// Counters from [`preprocess`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub unknown_towers: usize,
    pub removed_pingpong: usize,
    pub removed_backward: usize,
    pub removed_drifting: usize,
    pub screened_out: bool,
}

/// Drops unknown towers, runs the configured filters in order and applies the
/// sample-rate screen. `None` when the sequence is screened out or ends up with
/// fewer than two points.
pub fn preprocess(
    seq: &TowerSequence,
    towers: &TowerMap,
    cfg: &FilterConfig,
) -> (Option<TowerSequence>, PreprocessStats) {
    let mut stats = PreprocessStats::default();
    let mut cur = seq.clone();
    cur.points.retain(|p| towers.get(p.tower).is_some());
    stats.unknown_towers = seq.len() - cur.len();
    for kind in &cfg.order {
        let before = cur.len();
        cur = match kind {
            FilterKind::PingPong => pingpong_filter(&cur, cfg.w_p),
            FilterKind::Backward => backward_filter(&cur, towers, cfg.w_b),
            FilterKind::Drifting => drifting_filter(&cur, towers, cfg.speed_cap_kmh),
        };
        let removed = before - cur.len();
        match kind {
            FilterKind::PingPong => stats.removed_pingpong += removed,
            FilterKind::Backward => stats.removed_backward += removed,
            FilterKind::Drifting => stats.removed_drifting += removed,
        }
    }
    let too_sparse = cfg.screen_sample_rate
        && cur
            .mean_interval_s()
            .is_none_or(|m| m > cfg.max_mean_interval_s);
    if cur.len() < 2 || too_sparse {
        stats.screened_out = true;
        return (None, stats);
    }
    (Some(cur), stats)
}
