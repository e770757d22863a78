//! Ping-Pong, backward and drifting noise filters.
//!
//! Each filter returns an order-preserving subset of its input points.

use crate::geometry::{angular_difference, bearing, Point};

use super::{SeqPoint, TowerMap, TowerSequence};

const REVERSAL_RAD: f64 = std::f64::consts::FRAC_PI_2;

fn with_points(seq: &TowerSequence, keep: impl IntoIterator<Item = usize>) -> TowerSequence {
    TowerSequence {
        user_id: seq.user_id.clone(),
        points: keep.into_iter().map(|i| seq.points[i]).collect(),
    }
}

fn pingpong_pass(points: &[SeqPoint], w_p: usize) -> Vec<usize> {
    let n = points.len();
    let mut keep = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        keep.push(i);
        let home = points[i].tower;
        let end = (i + w_p).min(n - 1);
        let back = (i + 1..=end).rev().find(|&m| points[m].tower == home);
        match back {
            Some(l) if (i + 1..l).any(|m| points[m].tower != home) => {
                keep.extend((i + 1..l).filter(|&m| points[m].tower == home));
                i = l;
            }
            _ => i += 1,
        }
    }
    keep
}

/// Removes short excursions to another tower that return to the current one
/// within the next `w_p` points. Repeats until the size stops shrinking.
pub fn pingpong_filter(seq: &TowerSequence, w_p: usize) -> TowerSequence {
    let mut cur = seq.clone();
    if w_p == 0 {
        return cur;
    }
    loop {
        let keep = pingpong_pass(&cur.points, w_p);
        if keep.len() == cur.len() {
            return cur;
        }
        cur = with_points(&cur, keep);
    }
}

fn positions(seq: &TowerSequence, towers: &TowerMap) -> Vec<Option<Point>> {
    seq.points
        .iter()
        .map(|p| towers.get(p.tower).map(|t| t.position))
        .collect()
}

/// Drops isolated reversals of direction. A move turning more than 90° away
/// from the running heading is held until the next `w_b` points either follow
/// the new direction (keep it, heading resets) or not (drop it).
///
/// Points with unknown towers are kept untouched and ignored for headings.
pub fn backward_filter(seq: &TowerSequence, towers: &TowerMap, w_b: usize) -> TowerSequence {
    let n = seq.len();
    if w_b == 0 || n < 3 {
        return seq.clone();
    }
    let pos = positions(seq, towers);
    let mut keep = Vec::with_capacity(n);
    let mut last: Option<Point> = None;
    let mut heading: Option<f64> = None;

    let accept = |i: usize, last: &mut Option<Point>, heading: &mut Option<f64>| {
        if let Some(p) = pos[i] {
            if let Some(b) = last.and_then(|l| bearing(&l, &p)) {
                *heading = Some(b);
            }
            *last = Some(p);
        }
    };

    let mut j = 0;
    while j < n {
        let (Some(p), Some(l), Some(h)) = (pos[j], last, heading) else {
            keep.push(j);
            accept(j, &mut last, &mut heading);
            j += 1;
            continue;
        };
        let Some(b) = bearing(&l, &p) else {
            keep.push(j);
            j += 1;
            continue;
        };
        if angular_difference(b, h) <= REVERSAL_RAD {
            keep.push(j);
            accept(j, &mut last, &mut heading);
            j += 1;
            continue;
        }
        let window = j + 1..(j + 1 + w_b).min(n);
        let mut run = b;
        let mut prev = p;
        let mut confirmed = true;
        for m in window.clone() {
            let Some(q) = pos[m] else { continue };
            if let Some(bm) = bearing(&prev, &q) {
                if angular_difference(bm, run) > REVERSAL_RAD {
                    confirmed = false;
                    break;
                }
                run = bm;
            }
            prev = q;
        }
        if confirmed {
            keep.push(j);
            last = Some(p);
            heading = Some(b);
            j += 1;
        } else {
            for m in window.clone() {
                keep.push(m);
                accept(m, &mut last, &mut heading);
            }
            j = window.end;
        }
    }
    with_points(seq, keep)
}

/// Drops points whose implied speed from the last kept point exceeds the cap.
/// A single forward pass already reaches the fixpoint.
pub fn drifting_filter(seq: &TowerSequence, towers: &TowerMap, speed_cap_kmh: f64) -> TowerSequence {
    let pos = positions(seq, towers);
    let mut keep: Vec<usize> = Vec::with_capacity(seq.len());
    let mut last: Option<usize> = None;
    for j in 0..seq.len() {
        let Some(p) = pos[j] else {
            keep.push(j);
            continue;
        };
        if let Some(l) = last {
            if implied_speed_kmh(&seq.points[l], &pos[l].unwrap(), &seq.points[j], &p)
                > speed_cap_kmh
            {
                continue;
            }
        }
        keep.push(j);
        last = Some(j);
    }
    with_points(seq, keep)
}

fn implied_speed_kmh(a: &SeqPoint, pa: &Point, b: &SeqPoint, pb: &Point) -> f64 {
    let d = pa.distance(pb);
    if d == 0.0 {
        return 0.0;
    }
    let dt = (b.time - a.time) as f64;
    if dt <= 0.0 {
        return f64::INFINITY;
    }
    d / dt * 3.6
}
