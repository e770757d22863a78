//! Threshold similarity search over candidate sets.
//!
//! Candidates are aligned in time ([`align_time`]) and compared window by
//! window over the query's anchor intervals. Every query/entry candidate pair
//! is scored and the best pair decides whether the entry is returned.

mod timed;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::mapmatch::{CandidateSet, CandidateTrajectory, MatchError};
use crate::roadnet::{search_range_m, RoadNetwork};

pub use timed::{align_time, window_overlap, Arc, Piece, TimedTrajectory};
pub(crate) use timed::shared_length;

/// Slack when comparing the local-pruning bound against the cut-off, so float
/// error in the bound never cuts a pair that would have reached it.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("empty query: trajectory length is zero")]
    EmptyQuery,
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Candidate count for queries of at least `min_length_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLevel {
    pub min_length_m: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tau: f64,
    pub epsilon0: f64,
    pub space_scale_m: f64,
    pub time_scale_s: f64,
    /// Ascending by `min_length_m`, first row at 0.
    pub m_table: Vec<MLevel>,
    pub m_max: usize,
    pub local_pruning: bool,
    pub global_pruning: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let level = |km: f64, m| MLevel { min_length_m: km * 1000.0, m };
        Self {
            tau: 0.85,
            epsilon0: 2.0,
            space_scale_m: 1000.0,
            time_scale_s: 600.0,
            m_table: vec![level(0.0, 2), level(3.0, 3), level(6.0, 5), level(9.0, 6), level(12.0, 7)],
            m_max: 7,
            local_pruning: true,
            global_pruning: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.epsilon0 > 0.0) {
            return bad("epsilon0 must be > 0");
        }
        if !(self.space_scale_m > 0.0 && self.time_scale_s > 0.0) {
            return bad("space and time scales must be > 0");
        }
        if self.m_max == 0 {
            return bad("m_max must be >= 1");
        }
        match self.m_table.first() {
            Some(l) if l.min_length_m == 0.0 => {}
            _ => return bad("m_table must start at length 0"),
        }
        for w in self.m_table.windows(2) {
            if !(w[1].min_length_m > w[0].min_length_m) || w[1].m < w[0].m {
                return bad("m_table must be ascending in length and non-decreasing in M");
            }
        }
        if self.m_table.iter().any(|l| l.m == 0) {
            return bad("m_table values must be >= 1");
        }
        Ok(())
    }
}

/// Candidates kept per side for a query of the given length.
pub fn adapt_m(query_length_m: f64, cfg: &SearchConfig) -> usize {
    let i = cfg.m_table.partition_point(|l| l.min_length_m <= query_length_m);
    cfg.m_table[i.saturating_sub(1)].m.min(cfg.m_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTime {
    pub point: Point,
    pub time: i64,
}

/// Start and end of a sequence's matched trajectory, used by global pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub start: SpaceTime,
    pub end: SpaceTime,
}

impl EntrySummary {
    pub fn of(set: &CandidateSet) -> Self {
        let a = &set.best().anchors;
        let st = |i: usize| SpaceTime {
            point: a[i].point,
            time: a[i].time,
        };
        EntrySummary {
            start: st(0),
            end: st(a.len() - 1),
        }
    }
}

/// Global pruning radius for a query in an area of the given tower density.
pub fn prune_radius(cfg: &SearchConfig, local_density: f64) -> f64 {
    cfg.epsilon0 * search_range_m(local_density) / 200.0
}

fn normalized_distance(a: &SpaceTime, b: &SpaceTime, cfg: &SearchConfig) -> f64 {
    let dx = (a.point.x - b.point.x) / cfg.space_scale_m;
    let dy = (a.point.y - b.point.y) / cfg.space_scale_m;
    let dt = (a.time - b.time) as f64 / cfg.time_scale_s;
    (dx * dx + dy * dy + dt * dt).sqrt()
}

/// True when the entry survives: both its start and its end lie within
/// `epsilon` of the query's in normalized space-time.
pub fn global_prune(query: &EntrySummary, entry: &EntrySummary, epsilon: f64, cfg: &SearchConfig) -> bool {
    normalized_distance(&query.start, &entry.start, cfg) <= epsilon
        && normalized_distance(&query.end, &entry.end, cfg) <= epsilon
}

/// A candidate set with every candidate aligned in time.
#[derive(Debug, Clone)]
pub struct TimedSet {
    pub id: String,
    pub confidences: Vec<f64>,
    pub timed: Vec<TimedTrajectory>,
    pub summary: EntrySummary,
}

impl TimedSet {
    pub fn new(set: &CandidateSet, net: &RoadNetwork) -> Self {
        TimedSet {
            id: set.sequence_id.clone(),
            confidences: set.candidates.iter().map(|c| c.confidence).collect(),
            timed: set.candidates.iter().map(|c| align_time(c, net)).collect(),
            summary: EntrySummary::of(set),
        }
    }

    pub fn len(&self) -> usize {
        self.timed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timed.is_empty()
    }
}

/// Sum of window overlaps over the query's anchor intervals.
fn overlap_sum(q: &TimedTrajectory, t: &TimedTrajectory) -> f64 {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for p in &q.pieces {
        a.clear();
        b.clear();
        q.arcs_during_into(p.t0 as f64, p.t1 as f64, &mut a);
        t.arcs_during_into(p.t0 as f64, p.t1 as f64, &mut b);
        total += timed::shared_length(&mut a, &mut b);
    }
    total
}

fn clamp_sim(overlap: f64, len: f64, conf: f64) -> f64 {
    debug_assert!(overlap <= len * (1.0 + 1e-9), "overlap {overlap} exceeds query length {len}");
    conf * (overlap / len).min(1.0)
}

/// Similarity of two aligned candidates with the given confidences.
pub fn timed_similarity(q: &TimedTrajectory, q_conf: f64, t: &TimedTrajectory, t_conf: f64) -> Result<f64, SearchError> {
    if !(q.length_m > 0.0) {
        return Err(SearchError::EmptyQuery);
    }
    Ok(clamp_sim(overlap_sum(q, t), q.length_m, q_conf * t_conf))
}

/// Confidence-weighted share of the query's length that the other candidate
/// covers at the same time.
pub fn pair_similarity(qc: &CandidateTrajectory, tc: &CandidateTrajectory, net: &RoadNetwork) -> Result<f64, SearchError> {
    timed_similarity(&align_time(qc, net), qc.confidence, &align_time(tc, net), tc.confidence)
}

/// Outcome of comparing every candidate pair of two sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestPair {
    pub similarity: f64,
    pub query_rank: usize,
    pub entry_rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairStats {
    pub evaluated: usize,
    pub cut: usize,
}

/// Best pair over the first `m` candidates of each side, or `None` when no
/// pair reaches `cfg.tau`. Ties keep the lowest (query rank, entry rank).
/// With local pruning a pair stops as soon as it can no longer beat the
/// current best or the threshold; the outcome is the same either way.
pub fn best_pair_similarity(q: &TimedSet, t: &TimedSet, m: usize, cfg: &SearchConfig) -> Result<(Option<BestPair>, PairStats), SearchError> {
    let mut best: Option<BestPair> = None;
    let mut stats = PairStats::default();
    let (mq, mt) = (m.min(q.len()), m.min(t.len()));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for qi in 0..mq {
        let qt = &q.timed[qi];
        let len = qt.length_m;
        if !(len > 0.0) {
            return Err(SearchError::EmptyQuery);
        }
        // query length still to come after each window
        let mut remaining = vec![0.0; qt.pieces.len()];
        let mut acc = 0.0;
        for (k, p) in qt.pieces.iter().enumerate().rev() {
            remaining[k] = acc;
            acc += p.length_m;
        }
        for ti in 0..mt {
            let tt = &t.timed[ti];
            let conf = q.confidences[qi] * t.confidences[ti];
            let cutoff = best.map_or(cfg.tau, |b| b.similarity.max(cfg.tau));
            stats.evaluated += 1;
            if cfg.local_pruning && conf + BOUND_SLACK < cutoff {
                stats.cut += 1;
                continue;
            }
            let mut overlap = 0.0;
            let mut cut = false;
            for (k, p) in qt.pieces.iter().enumerate() {
                a.clear();
                b.clear();
                qt.arcs_during_into(p.t0 as f64, p.t1 as f64, &mut a);
                tt.arcs_during_into(p.t0 as f64, p.t1 as f64, &mut b);
                overlap += timed::shared_length(&mut a, &mut b);
                if cfg.local_pruning {
                    let bound = conf * ((overlap + remaining[k]) / len).min(1.0);
                    if bound + BOUND_SLACK < cutoff {
                        cut = true;
                        break;
                    }
                }
            }
            if cut {
                stats.cut += 1;
                continue;
            }
            let sim = clamp_sim(overlap, len, conf);
            if sim >= cfg.tau && best.is_none_or(|b| sim > b.similarity) {
                best = Some(BestPair {
                    similarity: sim,
                    query_rank: qi,
                    entry_rank: ti,
                });
            }
        }
    }
    Ok((best, stats))
}

/// Dataset entry returned by a search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub id: String,
    pub similarity: f64,
    pub query_rank: usize,
    pub entry_rank: usize,
    /// Candidate pairs of this entry stopped early by local pruning.
    pub pairs_cut: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub entries: usize,
    pub skipped_globally: usize,
    pub pairs_evaluated: usize,
    pub pairs_cut: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub results: Vec<QueryResult>,
    pub stats: SearchStats,
}

/// Immutable collection of aligned dataset entries.
#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    pub entries: Vec<TimedSet>,
}

impl SearchIndex {
    pub fn build(sets: &[CandidateSet], net: &RoadNetwork) -> Self {
        SearchIndex {
            entries: sets.par_iter().map(|s| TimedSet::new(s, net)).collect(),
        }
    }
}

/// All entries whose best candidate pair reaches `cfg.tau`, most similar first
/// (ties by id). `local_density` sets the global pruning radius.
pub fn search(query: &TimedSet, index: &SearchIndex, local_density: f64, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let qlen = query.timed.first().map_or(0.0, |t| t.length_m);
    if !(qlen > 0.0) {
        return Err(SearchError::EmptyQuery);
    }
    let m = adapt_m(qlen, cfg);
    let eps = prune_radius(cfg, local_density);
    let per_entry: Vec<Result<(bool, Option<QueryResult>, PairStats), SearchError>> = index
        .entries
        .par_iter()
        .map(|e| {
            if cfg.global_pruning && !global_prune(&query.summary, &e.summary, eps, cfg) {
                return Ok((true, None, PairStats::default()));
            }
            let (best, st) = best_pair_similarity(query, e, m, cfg)?;
            let r = best.map(|b| QueryResult {
                id: e.id.clone(),
                similarity: b.similarity,
                query_rank: b.query_rank,
                entry_rank: b.entry_rank,
                pairs_cut: st.cut,
            });
            Ok((false, r, st))
        })
        .collect();
    let mut stats = SearchStats {
        entries: index.entries.len(),
        m,
        ..SearchStats::default()
    };
    let mut results = Vec::new();
    for r in per_entry {
        let (skipped, res, st) = r?;
        stats.skipped_globally += skipped as usize;
        stats.pairs_evaluated += st.evaluated;
        stats.pairs_cut += st.cut;
        results.extend(res);
    }
    results.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id)));
    Ok(SearchOutcome { results, stats })
}
