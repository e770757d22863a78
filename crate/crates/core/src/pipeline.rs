//! Batch stages shared by the command line and the benchmarks: build and
//! filter sequences, match them into candidate sets, run queries.

use rayon::prelude::*;
use serde::Serialize;

use crate::ingest::{build_sequences, preprocess, CellRecord, FilterConfig, TowerMap, TowerSequence};
use crate::mapmatch::{expand_candidates, CandidateSet, MatchConfig, MatchError};
use crate::roadnet::RoadNetwork;
use crate::simsearch::{search, SearchConfig, SearchError, SearchIndex, SearchOutcome, TimedSet};

/// Drifting-filter speed cap for an area: its fastest road, at most the
/// global ceiling.
pub fn area_speed_cap(net: &RoadNetwork) -> f64 {
    net.segments()
        .iter()
        .map(|s| s.speed_limit_kmh)
        .fold(0.0, f64::max)
        .min(crate::roadnet::MAX_SPEED_KMH)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessTotals {
    pub users: usize,
    pub kept: usize,
    pub screened_out: usize,
    pub duplicates: usize,
    pub conflicts: usize,
    pub unknown_towers: usize,
    pub removed_pingpong: usize,
    pub removed_backward: usize,
    pub removed_drifting: usize,
}

/// Groups records into per-user sequences and filters them. Output is ordered by user id.
pub fn preprocess_records(records: &[CellRecord], towers: &TowerMap, cfg: &FilterConfig) -> (Vec<TowerSequence>, PreprocessTotals) {
    let built = build_sequences(records);
    let mut totals = PreprocessTotals {
        users: built.sequences.len(),
        duplicates: built.duplicates,
        conflicts: built.conflicts,
        ..Default::default()
    };
    let done: Vec<_> = built.sequences.par_iter().map(|s| preprocess(s, towers, cfg)).collect();
    let mut out = Vec::with_capacity(done.len());
    for (seq, st) in done {
        totals.unknown_towers += st.unknown_towers;
        totals.removed_pingpong += st.removed_pingpong;
        totals.removed_backward += st.removed_backward;
        totals.removed_drifting += st.removed_drifting;
        match seq {
            Some(s) => out.push(s),
            None => totals.screened_out += 1,
        }
    }
    totals.kept = out.len();
    (out, totals)
}

#[derive(Debug, Default)]
pub struct MatchedSets {
    /// In input order, failures skipped.
    pub sets: Vec<CandidateSet>,
    pub failures: Vec<(String, MatchError)>,
}

/// Top-`m` candidate sets for every sequence, in parallel.
pub fn match_all(seqs: &[TowerSequence], towers: &TowerMap, net: &RoadNetwork, cfg: &MatchConfig, m: usize) -> MatchedSets {
    let done: Vec<_> = seqs.par_iter().map(|s| (s.user_id.clone(), expand_candidates(s, towers, net, cfg, m))).collect();
    let mut out = MatchedSets::default();
    for (id, r) in done {
        match r {
            Ok(set) => out.sets.push(set),
            Err(e) => out.failures.push((id, e)),
        }
    }
    out
}

/// Tower density around where a query starts; sets its global pruning radius.
pub fn query_density(query: &TimedSet, towers: &TowerMap) -> f64 {
    towers.density_at(&query.summary.start.point)
}

/// Runs each query against the index. Queries run one after another; each
/// search spreads its entries over the current thread pool.
pub fn run_queries(
    queries: &[TimedSet],
    index: &SearchIndex,
    towers: &TowerMap,
    cfg: &SearchConfig,
) -> Vec<(String, Result<SearchOutcome, SearchError>)> {
    queries
        .iter()
        .map(|q| (q.id.clone(), search(q, index, query_density(q, towers), cfg)))
        .collect()
}
