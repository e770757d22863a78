//! Search and map-matching metrics against generated ground truth.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::GroundTruth;
use crate::mapmatch::CandidateTrajectory;
use crate::roadnet::{PathOnNetwork, RoadNetwork};
use crate::simsearch::{shared_length, Arc};

fn arcs_of(paths: &[&PathOnNetwork], net: &RoadNetwork) -> Vec<Arc> {
    paths
        .iter()
        .flat_map(|p| p.intervals(net))
        .filter(|&(_, lo, hi)| hi > lo)
        .map(|(segment, lo, hi)| Arc { segment, lo, hi })
        .collect()
}

/// Length of road, per directed segment, covered by both path collections.
pub fn covered_length(a: &[&PathOnNetwork], b: &[&PathOnNetwork], net: &RoadNetwork) -> f64 {
    shared_length(&mut arcs_of(a, net), &mut arcs_of(b, net))
}

/// Fraction of `truth` (by length) that the trajectory drives along, same direction.
pub fn truth_overlap(cand: &CandidateTrajectory, truth: &PathOnNetwork, net: &RoadNetwork) -> f64 {
    if !(truth.length_m > 0.0) {
        return 0.0;
    }
    let mine: Vec<&PathOnNetwork> = cand.subpaths.iter().collect();
    (covered_length(&mine, &[truth], net) / truth.length_m).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MatchingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub correct_m: f64,
    pub matched_m: f64,
    pub truth_m: f64,
    pub sequences: usize,
    /// Ids absent from the ground truth.
    pub unknown: usize,
}

/// Length-based precision and recall of top-1 matches. Each truth path is
/// clipped to the span between the member's first and last sample, since the
/// logs say nothing about travel before or after.
pub fn evaluate_matching(matched: &[(String, CandidateTrajectory)], truth: &GroundTruth, net: &RoadNetwork) -> MatchingMetrics {
    let mut m = MatchingMetrics::default();
    for (id, cand) in matched {
        let Some(member) = truth.member(id) else {
            m.unknown += 1;
            continue;
        };
        let Some(true_path) = member.sampled_path(net) else {
            m.unknown += 1;
            continue;
        };
        let mine: Vec<&PathOnNetwork> = cand.subpaths.iter().collect();
        m.correct_m += covered_length(&mine, &[&true_path], net);
        m.matched_m += cand.length_m();
        m.truth_m += true_path.length_m;
        m.sequences += 1;
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { (a / b).clamp(0.0, 1.0) } else { 0.0 };
    m.precision = ratio(m.correct_m, m.matched_m);
    m.recall = ratio(m.correct_m, m.truth_m);
    m
}

/// Ids returned for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub returned: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SearchMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Queries that entered the averages.
    pub queries: usize,
    /// Queries with no other group member in the dataset.
    pub excluded_empty_group: usize,
    /// Scored queries that returned nothing; they count towards recall only.
    pub empty_results: usize,
}

/// Per-query precision and recall against the query's co-moving group,
/// restricted to members present in `indexed`. The query itself is ignored
/// in both the returned and the relevant set. Precision is undefined for a
/// query that returns nothing, so it is averaged over the others only.
pub fn evaluate_search(outcomes: &[QueryOutcome], truth: &GroundTruth, indexed: &BTreeSet<String>) -> SearchMetrics {
    let group_of: HashMap<&str, usize> = truth.members.iter().map(|m| (m.id.as_str(), m.group)).collect();
    let groups = truth.groups();
    let mut out = SearchMetrics::default();
    let (mut p_sum, mut r_sum, mut p_n) = (0.0, 0.0, 0usize);
    for q in outcomes {
        let relevant: BTreeSet<&str> = group_of
            .get(q.query_id.as_str())
            .map(|&g| groups[g].iter().copied().filter(|id| *id != q.query_id && indexed.contains(*id)).collect())
            .unwrap_or_default();
        if relevant.is_empty() {
            out.excluded_empty_group += 1;
            continue;
        }
        let returned: BTreeSet<&str> = q.returned.iter().map(String::as_str).filter(|id| *id != q.query_id).collect();
        let hits = returned.intersection(&relevant).count() as f64;
        r_sum += hits / relevant.len() as f64;
        if returned.is_empty() {
            out.empty_results += 1;
        } else {
            p_sum += hits / returned.len() as f64;
            p_n += 1;
        }
        out.queries += 1;
    }
    if out.queries > 0 {
        out.recall = r_sum / out.queries as f64;
    }
    if p_n > 0 {
        out.precision = p_sum / p_n as f64;
    }
    out.f_measure = f_measure(out.precision, out.recall);
    out
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::SegmentId;
    use crate::simulate::{synthesize_benchmark, BenchmarkConfig, MemberTruth};
    use proptest::prelude::*;

    fn truth_of(groups: &[&[&str]]) -> GroundTruth {
        let path = PathOnNetwork {
            segments: vec![SegmentId(0)],
            entry_offset_m: 0.0,
            exit_offset_m: 1.0,
            length_m: 1.0,
        };
        let members = groups
            .iter()
            .enumerate()
            .flat_map(|(g, ids)| {
                let path = path.clone();
                ids.iter().map(move |id| MemberTruth {
                    id: id.to_string(),
                    group: g,
                    carrier: 0,
                    depart: 0,
                    speed_mps: 1.0,
                    path: path.clone(),
                    samples: vec![],
                })
            })
            .collect();
        GroundTruth { members }
    }

    fn outcome(q: &str, r: &[&str]) -> QueryOutcome {
        QueryOutcome {
            query_id: q.into(),
            returned: r.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn all(t: &GroundTruth) -> BTreeSet<String> {
        t.members.iter().map(|m| m.id.clone()).collect()
    }

    #[test]
    fn perfect_retrieval() {
        let t = truth_of(&[&["a", "b", "c"], &["d", "e"]]);
        let o = vec![outcome("a", &["a", "b", "c"]), outcome("d", &["e"])];
        let m = evaluate_search(&o, &t, &all(&t));
        assert_eq!((m.precision, m.recall, m.f_measure), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_right() {
        let t = truth_of(&[&["a", "b", "c"], &["d", "e"]]);
        // a finds b and d: P = 1/2, R = 1/2
        let m = evaluate_search(&[outcome("a", &["b", "d"])], &t, &all(&t));
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
        assert!((m.f_measure - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_group_is_excluded_and_counted() {
        let t = truth_of(&[&["a", "b"], &["c", "d"]]);
        let indexed: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = evaluate_search(&[outcome("c", &["a"]), outcome("a", &[])], &t, &indexed);
        assert_eq!((m.excluded_empty_group, m.queries, m.empty_results), (1, 1, 1));
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
    }

    #[test]
    fn results_as_truth_score_one() {
        let o = vec![outcome("a", &["b", "c"]), outcome("d", &["e"]), outcome("f", &["g", "h", "i"])];
        let t = truth_of(&[&["a", "b", "c"], &["d", "e"], &["f", "g", "h", "i"]]);
        let m = evaluate_search(&o, &t, &all(&t));
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn matching_identity_and_half() {
        let w = synthesize_benchmark(&BenchmarkConfig {
            rows: 8,
            cols: 8,
            group_count: 2,
            trip_km_min: 3.0,
            trip_km_max: 4.0,
            ..BenchmarkConfig::default()
        })
        .unwrap();
        let mem = &w.truth.members[0];
        let sampled = mem.sampled_path(&w.network).unwrap();
        let mut exact = mem.as_trajectory(&w.network, 30);
        exact.subpaths = vec![sampled.clone()];
        let m = evaluate_matching(&[(mem.id.clone(), exact.clone())], &w.truth, &w.network);
        assert!((m.precision - 1.0).abs() < 1e-9 && (m.recall - 1.0).abs() < 1e-9);

        let half = super::super::slice_path(&sampled, &w.network, 0.0, sampled.length_m / 2.0);
        exact.subpaths = vec![half];
        let m = evaluate_matching(&[(mem.id.clone(), exact.clone())], &w.truth, &w.network);
        assert!((m.precision - 1.0).abs() < 1e-9 && (m.recall - 0.5).abs() < 1e-9);

        let m = evaluate_matching(&[("nobody".into(), exact)], &w.truth, &w.network);
        assert_eq!((m.unknown, m.sequences), (1, 0));
    }

    fn line4() -> RoadNetwork {
        let mut b = crate::roadnet::RoadNetworkBuilder::new();
        for i in 0..5u64 {
            b.add_node(i, crate::geometry::Point::new(100.0 * i as f64, 0.0)).unwrap();
        }
        for i in 0..4u64 {
            b.add_road(i, i, i + 1, 50.0, true, None);
        }
        b.build().unwrap()
    }

    // Independent check: sample both interval sets on a fine lattice of
    // elementary pieces bounded by every endpoint.
    fn brute(a: &[(u32, f64, f64)], b: &[(u32, f64, f64)]) -> f64 {
        let mut total = 0.0;
        for seg in 0..4u32 {
            let mut cuts: Vec<f64> = a.iter().chain(b).filter(|x| x.0 == seg).flat_map(|x| [x.1, x.2]).collect();
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let inside = |s: &[(u32, f64, f64)]| s.iter().any(|x| x.0 == seg && x.1 <= mid && mid <= x.2);
                if inside(a) && inside(b) {
                    total += w[1] - w[0];
                }
            }
        }
        total
    }

    proptest! {
        #[test]
        fn covered_length_matches_brute(
            a in prop::collection::vec((0u32..4, 0.0..100.0f64, 0.0..100.0f64), 1..6),
            b in prop::collection::vec((0u32..4, 0.0..100.0f64, 0.0..100.0f64), 1..6),
        ) {
            let net = line4();
            let fix = |v: &[(u32, f64, f64)]| -> Vec<(u32, f64, f64)> { v.iter().map(|&(s, x, y)| (s, x.min(y), x.max(y))).collect() };
            let (a, b) = (fix(&a), fix(&b));
            let to_paths = |v: &[(u32, f64, f64)]| -> Vec<PathOnNetwork> {
                v.iter().map(|&(s, lo, hi)| PathOnNetwork::new(&net, vec![SegmentId(s)], lo, hi)).collect()
            };
            let (pa, pb) = (to_paths(&a), to_paths(&b));
            let ra: Vec<&PathOnNetwork> = pa.iter().collect();
            let rb: Vec<&PathOnNetwork> = pb.iter().collect();
            let got = covered_length(&ra, &rb, &net);
            prop_assert!((got - brute(&a, &b)).abs() < 1e-6, "{} vs {}", got, brute(&a, &b));
        }
    }
}
