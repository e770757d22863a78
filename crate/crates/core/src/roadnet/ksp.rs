//! Loopless k-shortest paths (Yen) between two segment positions.
//!
//! The search runs on the node graph extended with a virtual source and sink:
//! the source reaches the downstream node of the start segment, the sink is
//! reached from the upstream node of the end segment, and when both positions
//! sit on one segment in travel order a direct source→sink edge is added.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{PathOnNetwork, RoadNetwork, SegmentId, SegmentPosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Entry,
    Direct,
    Seg(SegmentId),
    Exit,
}

struct Augmented<'a> {
    net: &'a RoadNetwork,
    a: SegmentPosition,
    b: SegmentPosition,
    source: usize,
    sink: usize,
}

impl Augmented<'_> {
    fn node_count(&self) -> usize {
        self.net.nodes().len() + 2
    }

    fn for_each_edge(&self, u: usize, mut f: impl FnMut(Edge, usize, f64)) {
        let net = self.net;
        if u == self.source {
            let sa = net.segment(self.a.segment);
            f(Edge::Entry, sa.to, sa.length_m - self.a.offset_m);
            if self.a.segment == self.b.segment && self.b.offset_m >= self.a.offset_m {
                f(Edge::Direct, self.sink, self.b.offset_m - self.a.offset_m);
            }
            return;
        }
        if u == self.sink {
            return;
        }
        for &s in net.outgoing(u) {
            let seg = net.segment(s);
            f(Edge::Seg(s), seg.to, seg.length_m);
        }
        if u == net.segment(self.b.segment).from {
            f(Edge::Exit, self.sink, self.b.offset_m);
        }
    }

    fn to_path(&self, edges: &[Edge]) -> PathOnNetwork {
        let mut segs = vec![self.a.segment];
        if edges != [Edge::Direct] {
            segs.extend(edges.iter().filter_map(|e| match e {
                Edge::Seg(s) => Some(*s),
                _ => None,
            }));
            segs.push(self.b.segment);
        }
        PathOnNetwork::new(self.net, segs, self.a.offset_m, self.b.offset_m)
    }
}

#[derive(Clone, Copy)]
struct Item {
    dist: f64,
    node: usize,
}
impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.dist.total_cmp(&self.dist).then_with(|| o.node.cmp(&self.node))
    }
}

/// Shortest path from `start` to the sink avoiding banned nodes and edges,
/// pruned at `limit`. Returns `(nodes, edges)` of the spur.
fn spur_search(
    g: &Augmented,
    start: usize,
    init: f64,
    limit: f64,
    banned_node: &[bool],
    banned_edge: &[Edge],
) -> Option<(Vec<usize>, Vec<Edge>)> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(usize, Edge)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start] = init;
    heap.push(Item {
        dist: init,
        node: start,
    });
    while let Some(Item { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        if d > limit {
            return None;
        }
        done[u] = true;
        if u == g.sink {
            break;
        }
        g.for_each_edge(u, |e, v, w| {
            if banned_node[v] || banned_edge.contains(&e) {
                return;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some((u, e));
                heap.push(Item { dist: nd, node: v });
            }
        });
    }
    if !done[g.sink] {
        return None;
    }
    let mut nodes = vec![g.sink];
    let mut edges = Vec::new();
    let mut u = g.sink;
    while u != start {
        let (p, e) = pred[u]?;
        nodes.push(p);
        edges.push(e);
        u = p;
    }
    nodes.reverse();
    edges.reverse();
    Some((nodes, edges))
}

struct Found {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
    path: PathOnNetwork,
}

fn path_order(x: &PathOnNetwork, y: &PathOnNetwork) -> Ordering {
    x.length_m
        .total_cmp(&y.length_m)
        .then_with(|| x.segments.cmp(&y.segments))
}

/// Up to `k` loopless directed paths from `a` to `b`, shortest first, each no
/// longer than `(1 + slack)` times the shortest. Empty when `b` is unreachable.
///
/// Output for `k` is always a prefix of the output for `k + 1`.
pub fn k_shortest_paths(
    net: &RoadNetwork,
    a: &SegmentPosition,
    b: &SegmentPosition,
    k: usize,
    slack: f64,
) -> Vec<PathOnNetwork> {
    if k == 0 {
        return Vec::new();
    }
    let n = net.nodes().len();
    let g = Augmented {
        net,
        a: *a,
        b: *b,
        source: n,
        sink: n + 1,
    };
    let no_nodes = vec![false; g.node_count()];
    let Some((nodes, edges)) = spur_search(&g, g.source, 0.0, f64::INFINITY, &no_nodes, &[])
    else {
        return Vec::new();
    };
    let first = g.to_path(&edges);
    let limit = first.length_m * (1.0 + slack.max(0.0)) * (1.0 + 1e-12) + 1e-9;

    let mut accepted = vec![Found {
        nodes,
        edges,
        path: first,
    }];
    let mut pending: Vec<Found> = Vec::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap();
        let (prev_nodes, prev_edges) = (prev.nodes.clone(), prev.edges.clone());
        for i in 0..prev_nodes.len() - 1 {
            let spur_node = prev_nodes[i];
            let root_nodes = &prev_nodes[..=i];
            let root_edges = &prev_edges[..i];
            let root_len = edge_prefix_len(&g, root_nodes, root_edges);
            if root_len > limit {
                break;
            }
            let mut banned_edge = Vec::new();
            for p in &accepted {
                // roots compare by edge, parallel segments share node sequences
                if p.edges.len() > i && p.edges[..i] == *root_edges {
                    banned_edge.push(p.edges[i]);
                }
            }
            let mut banned_node = no_nodes.clone();
            for &u in &root_nodes[..i] {
                banned_node[u] = true;
            }
            if let Some((sn, se)) =
                spur_search(&g, spur_node, root_len, limit, &banned_node, &banned_edge)
            {
                let mut all_nodes = root_nodes[..i].to_vec();
                all_nodes.extend(sn);
                let mut all_edges = root_edges.to_vec();
                all_edges.extend(se);
                let path = g.to_path(&all_edges);
                if path.length_m <= limit
                    && !accepted.iter().any(|f| f.edges == all_edges)
                    && !pending.iter().any(|f| f.edges == all_edges)
                {
                    pending.push(Found {
                        nodes: all_nodes,
                        edges: all_edges,
                        path,
                    });
                }
            }
        }
        let Some(best) = pending
            .iter()
            .enumerate()
            .min_by(|x, y| path_order(&x.1.path, &y.1.path))
            .map(|(i, _)| i)
        else {
            break;
        };
        accepted.push(pending.swap_remove(best));
    }
    accepted.into_iter().map(|f| f.path).collect()
}

fn edge_prefix_len(g: &Augmented, nodes: &[usize], edges: &[Edge]) -> f64 {
    let mut len = 0.0;
    for (i, e) in edges.iter().enumerate() {
        g.for_each_edge(nodes[i], |ee, _, w| {
            if ee == *e {
                len += w;
            }
        });
    }
    len
}
