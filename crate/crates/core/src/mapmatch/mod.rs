//! Multi-candidate HMM map matching of tower sequences.
//!
//! [`match_sequence`] returns the single best road trajectory,
//! [`expand_candidates`] the top-M alternatives with confidences.

mod expand;
mod format;
mod hmm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::ingest::{TowerMap, TowerSequence};
use crate::roadnet::{search_range_m, PathOnNetwork, SegmentId, SegmentPosition};

pub use expand::{detect_single_path, expand_candidates, expand_observations, gap_alternatives};
pub use format::{
    decode_candidate_set, encode_candidate_set, read_store, to_debug_json, write_store,
    FormatError, FORMAT_VERSION,
};
pub use hmm::{
    build_lattice, emission_log_density, emission_probability, match_observations,
    match_sequence, transition_log_density, transition_probability, viterbi, Lattice,
    ViterbiPath,
};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("sequence too short: {usable} usable observation(s), dropped {dropped:?}")]
    TooShort { usable: usize, dropped: Vec<usize> },
    #[error("invalid match config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Transition decay scale in km.
    pub beta: f64,
    pub c_speed: f64,
    /// σ of the emission Gaussian as a fraction of the search range.
    pub sigma_scale: f64,
    pub w_d_floor: f64,
    pub k_paths: usize,
    pub path_slack: f64,
    pub single_path_tol: f64,
    pub m_max: usize,
    /// Nearest candidate segments kept per observation.
    pub max_candidates: usize,
    /// Search radius for GPS fixes, meters.
    pub gps_range_m: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            beta: 0.0096,
            c_speed: 0.08,
            sigma_scale: 0.5,
            w_d_floor: 0.25,
            k_paths: 4,
            path_slack: 0.10,
            single_path_tol: 0.05,
            m_max: 7,
            max_candidates: 8,
            gps_range_m: 100.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::Config(m.to_string()));
        if !(self.beta > 0.0) {
            return bad("beta must be > 0");
        }
        if !(0.0..1.0).contains(&self.c_speed) {
            return bad("c_speed must be in [0, 1)");
        }
        if !(self.w_d_floor > 0.0 && self.w_d_floor <= 1.0) {
            return bad("w_d_floor must be in (0, 1]");
        }
        if !(self.sigma_scale > 0.0) {
            return bad("sigma_scale must be > 0");
        }
        if self.k_paths == 0 || self.m_max == 0 || self.max_candidates == 0 {
            return bad("k_paths, m_max and max_candidates must be >= 1");
        }
        if !(self.path_slack >= 0.0 && self.single_path_tol >= 0.0) {
            return bad("path_slack and single_path_tol must be >= 0");
        }
        Ok(())
    }
}

/// One located observation fed to the HMM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: i64,
    pub position: Point,
    pub search_range_m: f64,
}

/// Observations for a filtered tower sequence; unknown towers are skipped.
pub fn observations_from_sequence(seq: &TowerSequence, towers: &TowerMap) -> Vec<Observation> {
    seq.points
        .iter()
        .filter_map(|p| {
            let t = towers.get(p.tower)?;
            Some(Observation {
                time: p.time,
                position: t.position,
                search_range_m: search_range_m(t.local_density),
            })
        })
        .collect()
}

/// Observations for a GPS trace of `(time, planar point)` fixes.
pub fn observations_from_gps(fixes: &[(i64, Point)], cfg: &MatchConfig) -> Vec<Observation> {
    fixes
        .iter()
        .map(|&(time, position)| Observation {
            time,
            position,
            search_range_m: cfg.gps_range_m,
        })
        .collect()
}

/// A candidate road segment for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmState {
    pub observation_index: usize,
    pub segment: SegmentId,
    pub projected_point: Point,
    pub offset_m: f64,
    pub distance_m: f64,
}

impl HmmState {
    pub fn position(&self) -> SegmentPosition {
        SegmentPosition::new(self.segment, self.offset_m)
    }
}

/// Matched location of one retained observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub time: i64,
    pub position: SegmentPosition,
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrajectory {
    pub anchors: Vec<Anchor>,
    /// `subpaths[g]` runs from `anchors[g]` to `anchors[g + 1]`.
    pub subpaths: Vec<PathOnNetwork>,
    /// Log transition plus log emission of each gap.
    pub gap_log_probs: Vec<f64>,
    pub raw_log_prob: f64,
    pub confidence: f64,
}

impl CandidateTrajectory {
    pub fn length_m(&self) -> f64 {
        self.subpaths.iter().map(|p| p.length_m).sum()
    }

    /// All traversed segments in order (a segment shared by consecutive
    /// subpaths appears once per subpath).
    pub fn segments(&self) -> impl Iterator<Item = SegmentId> + '_ {
        self.subpaths.iter().flat_map(|p| p.segments.iter().copied())
    }

    pub fn start_time(&self) -> i64 {
        self.anchors.first().map_or(0, |a| a.time)
    }

    pub fn end_time(&self) -> i64 {
        self.anchors.last().map_or(0, |a| a.time)
    }
}

/// Top-M candidate trajectories of one sequence, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub sequence_id: String,
    pub candidates: Vec<CandidateTrajectory>,
}

impl CandidateSet {
    pub fn best(&self) -> &CandidateTrajectory {
        &self.candidates[0]
    }

    /// The same set keeping only the first `m` candidates.
    pub fn truncated(&self, m: usize) -> CandidateSet {
        CandidateSet {
            sequence_id: self.sequence_id.clone(),
            candidates: self.candidates.iter().take(m.max(1)).cloned().collect(),
        }
    }
}

pub(crate) fn quantize_m(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
