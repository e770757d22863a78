//! Shortest directed paths between positions on segments.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{PathOnNetwork, RoadNetwork, SegmentId, SegmentPosition};

const NO_PRED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Reusable Dijkstra buffers; generation stamps avoid clearing between runs.
#[derive(Default)]
struct Scratch {
    dist: Vec<f64>,
    pred: Vec<u32>,
    stamp: Vec<u32>,
    settled: Vec<u32>,
    target: Vec<u32>,
    generation: u32,
    heap: BinaryHeap<HeapItem>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        if self.dist.len() < n {
            self.dist.resize(n, f64::INFINITY);
            self.pred.resize(n, NO_PRED);
            self.stamp.resize(n, 0);
            self.settled.resize(n, 0);
            self.target.resize(n, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.settled.iter_mut().for_each(|s| *s = 0);
            self.target.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.heap.clear();
    }

    fn dist(&self, node: usize) -> f64 {
        if self.stamp[node] == self.generation {
            self.dist[node]
        } else {
            f64::INFINITY
        }
    }

    fn is_settled(&self, node: usize) -> bool {
        self.settled[node] == self.generation
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

/// Runs Dijkstra from `source` (already at `init` meters) until every target
/// node is settled or the frontier exceeds `bound`.
fn dijkstra(
    net: &RoadNetwork,
    sc: &mut Scratch,
    source: usize,
    init: f64,
    targets: &[usize],
    bound: f64,
) {
    sc.reset(net.nodes.len());
    let g = sc.generation;
    let mut remaining = 0usize;
    for &t in targets {
        if sc.target[t] != g {
            sc.target[t] = g;
            remaining += 1;
        }
    }
    sc.dist[source] = init;
    sc.pred[source] = NO_PRED;
    sc.stamp[source] = g;
    sc.heap.push(HeapItem {
        dist: init,
        node: source as u32,
    });
    while let Some(HeapItem { dist, node }) = sc.heap.pop() {
        let u = node as usize;
        if sc.is_settled(u) || dist > sc.dist(u) {
            continue;
        }
        if dist > bound {
            break;
        }
        sc.settled[u] = g;
        if sc.target[u] == g {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        for &s in net.outgoing(u) {
            let seg = net.segment(s);
            let v = seg.to;
            let nd = dist + seg.length_m;
            if nd < sc.dist(v) {
                sc.dist[v] = nd;
                sc.pred[v] = s.0;
                sc.stamp[v] = g;
                sc.heap.push(HeapItem {
                    dist: nd,
                    node: v as u32,
                });
            }
        }
    }
}

fn trace_back(net: &RoadNetwork, sc: &Scratch, node: usize) -> Vec<SegmentId> {
    let mut segs = Vec::new();
    let mut u = node;
    while sc.pred[u] != NO_PRED {
        let s = SegmentId(sc.pred[u]);
        segs.push(s);
        u = net.segment(s).from;
    }
    segs.reverse();
    segs
}

/// Length of the shortest directed route from `a` to `b`;
/// `f64::INFINITY` when `b` cannot be reached.
pub fn network_distance(net: &RoadNetwork, a: &SegmentPosition, b: &SegmentPosition) -> f64 {
    DistanceTable::compute(net, std::slice::from_ref(a), std::slice::from_ref(b), f64::INFINITY)
        .get(0, 0)
}

/// Shortest directed route from `a` to `b`, or `None` if unreachable.
pub fn shortest_path(
    net: &RoadNetwork,
    a: &SegmentPosition,
    b: &SegmentPosition,
) -> Option<PathOnNetwork> {
    if a.segment == b.segment && b.offset_m >= a.offset_m {
        return Some(PathOnNetwork::new(net, vec![a.segment], a.offset_m, b.offset_m));
    }
    let sa = net.segment(a.segment);
    let sb = net.segment(b.segment);
    SCRATCH.with(|cell| {
        let sc = &mut *cell.borrow_mut();
        dijkstra(net, sc, sa.to, sa.length_m - a.offset_m, &[sb.from], f64::INFINITY);
        if !sc.is_settled(sb.from) {
            return None;
        }
        let mut segs = vec![a.segment];
        segs.extend(trace_back(net, sc, sb.from));
        segs.push(b.segment);
        Some(PathOnNetwork::new(net, segs, a.offset_m, b.offset_m))
    })
}

/// Route lengths from every source position to every target position.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    cols: usize,
    lengths: Vec<f64>,
}

impl DistanceTable {
    /// One Dijkstra per source, stopping once all targets are settled or the
    /// search passes `bound` meters (entries beyond it are `INFINITY`).
    pub fn compute(
        net: &RoadNetwork,
        sources: &[SegmentPosition],
        targets: &[SegmentPosition],
        bound: f64,
    ) -> Self {
        let cols = targets.len();
        let mut lengths = vec![f64::INFINITY; sources.len() * cols];
        let target_nodes: Vec<usize> = targets
            .iter()
            .map(|t| net.segment(t.segment).from)
            .collect();
        SCRATCH.with(|cell| {
            let sc = &mut *cell.borrow_mut();
            for (i, a) in sources.iter().enumerate() {
                let sa = net.segment(a.segment);
                dijkstra(net, sc, sa.to, sa.length_m - a.offset_m, &target_nodes, bound);
                for (j, b) in targets.iter().enumerate() {
                    let d = if a.segment == b.segment && b.offset_m >= a.offset_m {
                        b.offset_m - a.offset_m
                    } else {
                        let n = target_nodes[j];
                        if sc.is_settled(n) {
                            sc.dist(n) + b.offset_m
                        } else {
                            f64::INFINITY
                        }
                    };
                    lengths[i * cols + j] = if d <= bound { d } else { f64::INFINITY };
                }
            }
        });
        Self { cols, lengths }
    }

    pub fn get(&self, source: usize, target: usize) -> f64 {
        self.lengths[source * self.cols + target]
    }

    /// Smallest finite entry, if any.
    pub fn min(&self) -> Option<f64> {
        self.lengths
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .min_by(f64::total_cmp)
    }
}
