//! Time-aligned trajectories and windowed overlap.

use crate::geometry::Point;
use crate::mapmatch::CandidateTrajectory;
use crate::roadnet::{RoadNetwork, SegmentId, SegmentPosition};

/// Part of a segment, `lo <= hi` in segment offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub segment: SegmentId,
    pub lo: f64,
    pub hi: f64,
}

impl Arc {
    pub fn length_m(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Travel between two consecutive anchor times at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub t0: i64,
    pub t1: i64,
    pub arcs: Vec<Arc>,
    /// Path offset at which each arc starts, measured from the piece start.
    pub starts: Vec<f64>,
    pub length_m: f64,
}

impl Piece {
    fn new(t0: i64, t1: i64, arcs: Vec<Arc>) -> Self {
        let mut starts = Vec::with_capacity(arcs.len());
        let mut length_m = 0.0;
        for a in &arcs {
            starts.push(length_m);
            length_m += a.length_m();
        }
        Piece {
            t0,
            t1,
            arcs,
            starts,
            length_m,
        }
    }

    fn offset_at(&self, t: f64) -> f64 {
        let f = (t - self.t0 as f64) / (self.t1 - self.t0) as f64;
        (self.length_m * f).clamp(0.0, self.length_m)
    }

    fn position_at_offset(&self, off: f64) -> Option<SegmentPosition> {
        let i = self.starts.partition_point(|&s| s <= off).checked_sub(1)?;
        let a = &self.arcs[i];
        Some(SegmentPosition::new(a.segment, (a.lo + off - self.starts[i]).min(a.hi)))
    }

    /// Arcs covered between path offsets `from..to` of this piece.
    fn arcs_between(&self, from: f64, to: f64, out: &mut Vec<Arc>) {
        if from <= 0.0 && to >= self.length_m {
            out.extend(self.arcs.iter().filter(|a| a.hi > a.lo));
            return;
        }
        for (a, &s) in self.arcs.iter().zip(&self.starts) {
            let e = s + a.length_m();
            let lo = from.max(s);
            let hi = to.min(e);
            if hi > lo {
                out.push(Arc {
                    segment: a.segment,
                    lo: a.lo + (lo - s),
                    hi: (a.lo + (hi - s)).min(a.hi),
                });
            }
        }
    }
}

/// A candidate trajectory with a position for every time in its span.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrajectory {
    pub pieces: Vec<Piece>,
    /// Anchors merged into their successor because they shared a timestamp.
    pub collapsed: usize,
    pub start_time: i64,
    pub end_time: i64,
    pub length_m: f64,
}

/// Interpolates a candidate trajectory in time at constant speed between
/// anchors. Anchors with the same timestamp as their predecessor are merged.
pub fn align_time(cand: &CandidateTrajectory, net: &RoadNetwork) -> TimedTrajectory {
    let mut pieces: Vec<Piece> = Vec::new();
    let mut collapsed = 0;
    let mut pending: Vec<Arc> = Vec::new();
    let mut t_start = cand.start_time();
    for (g, path) in cand.subpaths.iter().enumerate() {
        let arcs = path.intervals(net).into_iter().map(|(segment, lo, hi)| Arc { segment, lo, hi });
        pending.extend(arcs);
        let t_end = cand.anchors[g + 1].time;
        if t_end <= t_start {
            collapsed += 1;
            continue;
        }
        pieces.push(Piece::new(t_start, t_end, std::mem::take(&mut pending)));
        t_start = t_end;
    }
    if !pending.is_empty() {
        // trailing zero-duration gaps join the last piece
        if let Some(last) = pieces.pop() {
            let mut arcs = last.arcs;
            arcs.extend(pending);
            pieces.push(Piece::new(last.t0, last.t1, arcs));
        }
    }
    let length_m = pieces.iter().map(|p| p.length_m).sum();
    TimedTrajectory {
        collapsed,
        start_time: cand.start_time(),
        end_time: pieces.last().map_or(cand.start_time(), |p| p.t1),
        length_m,
        pieces,
    }
}

impl TimedTrajectory {
    fn piece_index(&self, t: f64) -> Option<usize> {
        if self.pieces.is_empty() || t < self.start_time as f64 || t > self.end_time as f64 {
            return None;
        }
        let i = self.pieces.partition_point(|p| (p.t1 as f64) < t);
        Some(i.min(self.pieces.len() - 1))
    }

    /// Distance travelled from the start at time `t`, `None` outside the span.
    pub fn offset_at(&self, t: f64) -> Option<f64> {
        let i = self.piece_index(t)?;
        let before: f64 = self.pieces[..i].iter().map(|p| p.length_m).sum();
        Some(before + self.pieces[i].offset_at(t))
    }

    pub fn position_at(&self, t: f64) -> Option<SegmentPosition> {
        let i = self.piece_index(t)?;
        let p = &self.pieces[i];
        p.position_at_offset(p.offset_at(t))
    }

    pub fn point_at(&self, t: f64, net: &RoadNetwork) -> Option<Point> {
        self.position_at(t).map(|s| net.segment(s.segment).point_at(s.offset_m))
    }

    /// Arcs traversed during `[t0, t1]`, clipped to the span.
    pub fn arcs_during(&self, t0: f64, t1: f64) -> Vec<Arc> {
        let mut out = Vec::new();
        self.arcs_during_into(t0, t1, &mut out);
        out
    }

    pub(crate) fn arcs_during_into(&self, t0: f64, t1: f64, out: &mut Vec<Arc>) {
        let first = self.pieces.partition_point(|p| (p.t1 as f64) <= t0);
        for p in &self.pieces[first..] {
            if p.t0 as f64 >= t1 {
                break;
            }
            let a = t0.max(p.t0 as f64);
            let b = t1.min(p.t1 as f64);
            if b <= a {
                continue;
            }
            let from = if a <= p.t0 as f64 { 0.0 } else { p.offset_at(a) };
            let to = if b >= p.t1 as f64 { p.length_m } else { p.offset_at(b) };
            p.arcs_between(from, to, out);
        }
    }
}

/// Merges overlapping arcs on the same segment. Output sorted by (segment, lo).
fn normalize(arcs: &mut Vec<Arc>) {
    arcs.sort_by(|a, b| a.segment.cmp(&b.segment).then(a.lo.total_cmp(&b.lo)));
    let mut w = 0;
    for r in 0..arcs.len() {
        if w > 0 && arcs[w - 1].segment == arcs[r].segment && arcs[r].lo <= arcs[w - 1].hi {
            arcs[w - 1].hi = arcs[w - 1].hi.max(arcs[r].hi);
        } else {
            arcs[w] = arcs[r];
            w += 1;
        }
    }
    arcs.truncate(w);
}

/// Length covered by both arc sets on the same directed segments.
pub(crate) fn shared_length(a: &mut Vec<Arc>, b: &mut Vec<Arc>) -> f64 {
    normalize(a);
    normalize(b);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let (x, y) = (&a[i], &b[j]);
        if x.segment != y.segment {
            if x.segment < y.segment {
                i += 1;
            } else {
                j += 1;
            }
            continue;
        }
        let lo = x.lo.max(y.lo);
        let hi = x.hi.min(y.hi);
        if hi > lo {
            total += hi - lo;
        }
        if x.hi < y.hi {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Length both trajectories cover on the same directed segments during `[t0, t1]`.
pub fn window_overlap(q: &TimedTrajectory, t: &TimedTrajectory, t0: f64, t1: f64) -> f64 {
    let mut a = q.arcs_during(t0, t1);
    let mut b = t.arcs_during(t0, t1);
    shared_length(&mut a, &mut b)
}
