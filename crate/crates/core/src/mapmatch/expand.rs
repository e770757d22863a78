//! Top-M candidate trajectories by splicing alternative routes into ambiguous gaps.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::hmm::{decode, trajectory_for};
use super::{
    observations_from_sequence, quantize_m, CandidateSet, CandidateTrajectory, HmmState,
    MatchConfig, MatchError, Observation,
};
use crate::geometry::Point;
use crate::ingest::{TowerMap, TowerSequence};
use crate::roadnet::{k_shortest_paths, network_distance, PathOnNetwork, RoadNetwork, SegmentPosition};

/// Extra heap pops allowed past the M-th candidate while scores are still tied.
const TIE_POP_LIMIT: usize = 256;

fn is_single_path(route_m: f64, a: &Point, b: &Point, cfg: &MatchConfig) -> bool {
    let straight = a.distance(b);
    (route_m - straight).abs() <= cfg.single_path_tol * straight
}

/// True when the shortest route between the two states is (nearly) as short
/// as the straight line between their projections, so only one route is kept.
pub fn detect_single_path(from: &HmmState, to: &HmmState, net: &RoadNetwork, cfg: &MatchConfig) -> bool {
    let d = network_distance(net, &from.position(), &to.position());
    d.is_finite() && is_single_path(d, &from.projected_point, &to.projected_point, cfg)
}

/// Alternative routes for one gap, `primary` first. Ordered by length (to the
/// micrometre), `primary` ahead of equal-length routes, then by segment ids.
pub fn gap_alternatives(
    net: &RoadNetwork,
    from: (&SegmentPosition, &Point),
    to: (&SegmentPosition, &Point),
    primary: &PathOnNetwork,
    cfg: &MatchConfig,
) -> Vec<PathOnNetwork> {
    if is_single_path(primary.length_m, from.1, to.1, cfg) {
        return vec![primary.clone()];
    }
    let mut alts = vec![primary.clone()];
    for p in k_shortest_paths(net, from.0, to.0, cfg.k_paths, cfg.path_slack) {
        if p.segments != primary.segments {
            alts.push(p);
        }
    }
    alts[1..].sort_by(|a, b| {
        quantize_m(a.length_m)
            .total_cmp(&quantize_m(b.length_m))
            .then_with(|| a.segments.cmp(&b.segments))
    });
    // the primary route is a shortest one, so it stays ahead after a stable merge
    let q0 = quantize_m(primary.length_m);
    debug_assert!(alts[1..].iter().all(|p| quantize_m(p.length_m) >= q0));
    alts.truncate(cfg.k_paths.max(1));
    alts
}

struct Gap {
    paths: Vec<PathOnNetwork>,
    qlen: Vec<f64>,
    inc: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    delta: f64,
    qlen: f64,
    choice: Vec<u16>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    /// Max-heap order: larger delta, then shorter, then smaller choice vector.
    fn cmp(&self, o: &Self) -> Ordering {
        self.delta
            .total_cmp(&o.delta)
            .then_with(|| o.qlen.total_cmp(&self.qlen))
            .then_with(|| o.choice.cmp(&self.choice))
    }
}

fn node(gaps: &[Gap], choice: Vec<u16>) -> Node {
    let mut delta = 0.0;
    let mut qlen = 0.0;
    for (g, &c) in gaps.iter().zip(&choice) {
        delta += g.inc[c as usize] - g.inc[0];
        qlen += g.qlen[c as usize];
    }
    Node { delta, qlen, choice }
}

/// Best-first enumeration of choice vectors by summed score change.
fn best_choices(gaps: &[Gap], m: usize) -> Vec<Node> {
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let zero = vec![0u16; gaps.len()];
    seen.insert(zero.clone());
    heap.push(node(gaps, zero));
    let mut out: Vec<Node> = Vec::new();
    while let Some(top) = heap.peek() {
        if out.len() >= m {
            let mth = &out[m - 1];
            if top.delta < mth.delta - 1e-9 || out.len() >= m + TIE_POP_LIMIT {
                break;
            }
        }
        let cur = heap.pop().unwrap();
        for (g, gap) in gaps.iter().enumerate() {
            let c = cur.choice[g] as usize;
            if c + 1 < gap.paths.len() {
                let mut next = cur.choice.clone();
                next[g] += 1;
                if seen.insert(next.clone()) {
                    heap.push(node(gaps, next));
                }
            }
        }
        out.push(cur);
    }
    out
}

/// Top-`m` candidates (capped at `cfg.m_max`) for located observations.
pub fn expand_observations(
    sequence_id: &str,
    obs: &[Observation],
    net: &RoadNetwork,
    cfg: &MatchConfig,
    m: usize,
) -> Result<CandidateSet, MatchError> {
    let (lat, vpath) = decode(obs, net, cfg)?;
    let best = trajectory_for(&lat, &vpath, net, cfg);
    let m = m.clamp(1, cfg.m_max);
    if m == 1 {
        return Ok(CandidateSet {
            sequence_id: sequence_id.to_string(),
            candidates: vec![best],
        });
    }

    let gaps: Vec<Gap> = best
        .subpaths
        .iter()
        .enumerate()
        .map(|(g, primary)| {
            let (a, b) = (&best.anchors[g], &best.anchors[g + 1]);
            let paths = gap_alternatives(net, (&a.position, &a.point), (&b.position, &b.point), primary, cfg);
            let (j, k) = (vpath.states[g], vpath.states[g + 1]);
            let inc: Vec<f64> = paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i == 0 {
                        best.gap_log_probs[g]
                    } else {
                        lat.step_log_prob(g, j, k, p.length_m, cfg)
                    }
                })
                .collect();
            let qlen = paths.iter().map(|p| quantize_m(p.length_m)).collect();
            Gap { paths, qlen, inc }
        })
        .collect();

    let first = lat.first_emission[vpath.states[0]];
    let mut ranked: Vec<(CandidateTrajectory, f64, Vec<u16>)> = best_choices(&gaps, m)
        .into_iter()
        .map(|n| {
            let mut raw = first;
            let mut subpaths = Vec::with_capacity(gaps.len());
            let mut gap_log_probs = Vec::with_capacity(gaps.len());
            for (gap, &c) in gaps.iter().zip(&n.choice) {
                raw += gap.inc[c as usize];
                gap_log_probs.push(gap.inc[c as usize]);
                subpaths.push(gap.paths[c as usize].clone());
            }
            let t = CandidateTrajectory {
                anchors: best.anchors.clone(),
                subpaths,
                gap_log_probs,
                raw_log_prob: raw,
                confidence: 0.0,
            };
            (t, n.qlen, n.choice)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.0.raw_log_prob
            .total_cmp(&a.0.raw_log_prob)
            .then_with(|| a.1.total_cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    ranked.truncate(m);
    let top = ranked[0].0.raw_log_prob;
    let candidates = ranked
        .into_iter()
        .map(|(mut t, _, _)| {
            t.confidence = (t.raw_log_prob - top).exp();
            t
        })
        .collect();
    Ok(CandidateSet {
        sequence_id: sequence_id.to_string(),
        candidates,
    })
}

pub fn expand_candidates(
    seq: &TowerSequence,
    towers: &TowerMap,
    net: &RoadNetwork,
    cfg: &MatchConfig,
    m: usize,
) -> Result<CandidateSet, MatchError> {
    expand_observations(&seq.user_id, &observations_from_sequence(seq, towers), net, cfg, m)
}
