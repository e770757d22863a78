//! Directed road network: geometry, spatial lookup and path queries.
//!
//! A [`RoadNetwork`] is immutable once built. All query methods take `&self`
//! and may be called from any number of threads at once.

mod index;
mod io;
mod ksp;
mod routing;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BBox, Point, Projection};

pub use index::GridIndex;
pub use io::{load_network, parse_network, write_network, LoadReport, NetworkFile};
pub use ksp::k_shortest_paths;
pub use routing::{network_distance, shortest_path, DistanceTable};

/// Upper bound on any speed limit in the network (km/h).
pub const MAX_SPEED_KMH: f64 = 120.0;

/// Search radius used at or above [`DENSE_TOWER_DENSITY`].
pub const MIN_SEARCH_RANGE_M: f64 = 200.0;
/// Search radius used at or below [`SPARSE_TOWER_DENSITY`].
pub const MAX_SEARCH_RANGE_M: f64 = 1000.0;
/// Towers per km².
pub const DENSE_TOWER_DENSITY: f64 = 50.0;
/// Towers per km².
pub const SPARSE_TOWER_DENSITY: f64 = 5.0;

#[derive(Debug, Error)]
pub enum RoadNetError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("segment {segment} references missing node {node}")]
    DanglingNode { segment: u64, node: u64 },
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("segment {segment}: speed limit {speed} km/h outside (0, 120]")]
    InvalidSpeed { segment: u64, speed: f64 },
    #[error("segment {0} has zero length")]
    ZeroLength(u64),
    #[error("network has no nodes")]
    Empty,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense index of a directed segment inside a [`RoadNetwork`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SegmentId(pub u32);

impl SegmentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNode {
    pub id: u64,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: SegmentId,
    /// Segment id in the source file; both directions of a two-way road share it.
    pub source_id: u64,
    /// True for the synthesized opposite direction of a two-way road.
    pub reversed: bool,
    /// Node index (into [`RoadNetwork::nodes`]).
    pub from: usize,
    pub to: usize,
    pub polyline: Vec<Point>,
    pub length_m: f64,
    pub speed_limit_kmh: f64,
    /// Bearing of the chord from the first to the last polyline point, `[0, 2π)`.
    pub direction_angle: f64,
    pub bbox: BBox,
}

impl RoadSegment {
    pub fn start(&self) -> Point {
        self.polyline[0]
    }

    pub fn end(&self) -> Point {
        *self.polyline.last().unwrap()
    }

    pub fn point_at(&self, offset_m: f64) -> Point {
        geometry::point_along(&self.polyline, offset_m)
    }
}

/// A location on the network: a directed segment and an arc-length offset along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPosition {
    pub segment: SegmentId,
    pub offset_m: f64,
}

impl SegmentPosition {
    pub fn new(segment: SegmentId, offset_m: f64) -> Self {
        Self { segment, offset_m }
    }
}

/// Projection of a point onto one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    pub point: Point,
    pub distance_m: f64,
    pub offset_m: f64,
}

/// A segment found near a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCandidate {
    pub segment: SegmentId,
    pub point: Point,
    pub distance_m: f64,
    pub offset_m: f64,
}

impl SegmentCandidate {
    pub fn position(&self) -> SegmentPosition {
        SegmentPosition::new(self.segment, self.offset_m)
    }
}

/// A directed route between two [`SegmentPosition`]s.
///
/// `segments[0]` is entered at `entry_offset_m` and the last segment is left at
/// `exit_offset_m`. When both ends lie on one segment the path has one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOnNetwork {
    pub segments: Vec<SegmentId>,
    pub entry_offset_m: f64,
    pub exit_offset_m: f64,
    pub length_m: f64,
}

impl PathOnNetwork {
    /// Builds a path and computes its length by summing front to back.
    pub fn new(
        net: &RoadNetwork,
        segments: Vec<SegmentId>,
        entry_offset_m: f64,
        exit_offset_m: f64,
    ) -> Self {
        let length_m = match segments.len() {
            0 => 0.0,
            1 => exit_offset_m - entry_offset_m,
            n => {
                let mut len = net.segment(segments[0]).length_m - entry_offset_m;
                for s in &segments[1..n - 1] {
                    len += net.segment(*s).length_m;
                }
                len + exit_offset_m
            }
        };
        Self {
            segments,
            entry_offset_m,
            exit_offset_m,
            length_m,
        }
    }

    pub fn start(&self) -> SegmentPosition {
        SegmentPosition::new(self.segments[0], self.entry_offset_m)
    }

    pub fn end(&self) -> SegmentPosition {
        SegmentPosition::new(*self.segments.last().unwrap(), self.exit_offset_m)
    }

    /// Per-segment `(segment, from_offset, to_offset)` intervals in travel order.
    pub fn intervals(&self, net: &RoadNetwork) -> Vec<(SegmentId, f64, f64)> {
        let n = self.segments.len();
        self.segments
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let a = if i == 0 { self.entry_offset_m } else { 0.0 };
                let b = if i + 1 == n {
                    self.exit_offset_m
                } else {
                    net.segment(s).length_m
                };
                (s, a, b)
            })
            .collect()
    }
}

/// Search radius for a tower at the given local density (towers per km²).
///
/// 200 m at or above 50/km², 1000 m at or below 5/km², linear in between.
pub fn search_range_m(local_density: f64) -> f64 {
    if local_density >= DENSE_TOWER_DENSITY {
        MIN_SEARCH_RANGE_M
    } else if local_density <= SPARSE_TOWER_DENSITY {
        MAX_SEARCH_RANGE_M
    } else {
        let t = (local_density - SPARSE_TOWER_DENSITY)
            / (DENSE_TOWER_DENSITY - SPARSE_TOWER_DENSITY);
        MAX_SEARCH_RANGE_M + t * (MIN_SEARCH_RANGE_M - MAX_SEARCH_RANGE_M)
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    projection: Option<Projection>,
    nodes: Vec<RoadNode>,
    segments: Vec<RoadSegment>,
    out_segments: Vec<Vec<SegmentId>>,
    node_index: HashMap<u64, usize>,
    index: GridIndex,
}

impl RoadNetwork {
    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &RoadSegment {
        &self.segments[id.index()]
    }

    pub fn node(&self, index: usize) -> &RoadNode {
        &self.nodes[index]
    }

    pub fn node_index(&self, id: u64) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    /// Outgoing directed segments of a node (by node index).
    pub fn outgoing(&self, node: usize) -> &[SegmentId] {
        &self.out_segments[node]
    }

    /// Projection used to bring lon/lat inputs into the planar frame, if the
    /// network was loaded from geographic coordinates.
    pub fn projection(&self) -> Option<&Projection> {
        self.projection.as_ref()
    }

    pub fn spatial_index(&self) -> &GridIndex {
        &self.index
    }

    pub fn position_point(&self, pos: &SegmentPosition) -> Point {
        self.segment(pos.segment).point_at(pos.offset_m)
    }

    /// Opposite direction of a two-way road, if present.
    pub fn reverse_of(&self, id: SegmentId) -> Option<SegmentId> {
        let s = self.segment(id);
        self.outgoing(s.to)
            .iter()
            .copied()
            .find(|&o| {
                let r = self.segment(o);
                r.to == s.from && r.source_id == s.source_id && r.reversed != s.reversed
            })
    }

    /// Closest point on the segment polyline to `p`; the foot of the
    /// perpendicular is clamped to the nearer endpoint when it falls outside.
    pub fn project_to_segment(&self, p: &Point, seg: SegmentId) -> SegmentProjection {
        project_onto_polyline(p, &self.segment(seg).polyline)
    }

    /// All segments whose geometry lies within `radius_m` of `center`, sorted
    /// by segment id.
    pub fn segments_within(&self, center: &Point, radius_m: f64) -> Vec<SegmentCandidate> {
        let mut out: Vec<SegmentCandidate> = self
            .index
            .query_bbox(center, radius_m)
            .into_iter()
            .filter_map(|s| {
                let pr = self.project_to_segment(center, s);
                (pr.distance_m <= radius_m).then_some(SegmentCandidate {
                    segment: s,
                    point: pr.point,
                    distance_m: pr.distance_m,
                    offset_m: pr.offset_m,
                })
            })
            .collect();
        out.sort_by_key(|c| c.segment);
        out
    }

    /// Candidate road segments for a tower at `position` with the given local
    /// density: every segment intersecting the density-dependent search disc.
    pub fn candidate_segments(
        &self,
        position: &Point,
        local_density: f64,
    ) -> Vec<SegmentCandidate> {
        self.segments_within(position, search_range_m(local_density))
    }

    /// Linear scan equivalent of [`segments_within`](Self::segments_within).
    pub fn segments_within_scan(&self, center: &Point, radius_m: f64) -> Vec<SegmentCandidate> {
        self.segments
            .iter()
            .filter_map(|s| {
                let pr = self.project_to_segment(center, s.id);
                (pr.distance_m <= radius_m).then_some(SegmentCandidate {
                    segment: s.id,
                    point: pr.point,
                    distance_m: pr.distance_m,
                    offset_m: pr.offset_m,
                })
            })
            .collect()
    }

    pub fn bbox(&self) -> BBox {
        let pts: Vec<Point> = self.nodes.iter().map(|n| n.position).collect();
        BBox::of_points(&pts).expect("network has nodes")
    }
}

fn project_onto_polyline(p: &Point, polyline: &[Point]) -> SegmentProjection {
    let mut best = SegmentProjection {
        point: polyline[0],
        distance_m: p.distance(&polyline[0]),
        offset_m: 0.0,
    };
    let mut walked = 0.0;
    for w in polyline.windows(2) {
        let piece = w[0].distance(&w[1]);
        let (foot, t) = geometry::closest_on_segment(p, &w[0], &w[1]);
        let d = p.distance(&foot);
        if d < best.distance_m {
            best = SegmentProjection {
                point: foot,
                distance_m: d,
                offset_m: walked + t * piece,
            };
        }
        walked += piece;
    }
    best
}

/// Incremental construction of a [`RoadNetwork`] in planar coordinates.
#[derive(Debug, Default)]
pub struct RoadNetworkBuilder {
    projection: Option<Projection>,
    nodes: Vec<RoadNode>,
    node_index: HashMap<u64, usize>,
    pending: Vec<PendingSegment>,
    cell_size_m: Option<f64>,
}

#[derive(Debug)]
struct PendingSegment {
    source_id: u64,
    from: u64,
    to: u64,
    speed_kmh: f64,
    oneway: bool,
    shape: Option<Vec<Point>>,
}

impl RoadNetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = Some(projection);
        self
    }

    /// Overrides the spatial grid cell size (default 250 m).
    pub fn with_cell_size(mut self, cell_size_m: f64) -> Self {
        self.cell_size_m = Some(cell_size_m);
        self
    }

    pub fn add_node(&mut self, id: u64, position: Point) -> Result<&mut Self, RoadNetError> {
        if self.node_index.contains_key(&id) {
            return Err(RoadNetError::DuplicateNode(id));
        }
        self.node_index.insert(id, self.nodes.len());
        self.nodes.push(RoadNode { id, position });
        Ok(self)
    }

    /// Adds a road. Two-way roads (`oneway == false`) become two directed
    /// segments. `shape`, when given, is the full polyline; its first and last
    /// vertices are replaced by the node positions.
    pub fn add_road(
        &mut self,
        source_id: u64,
        from: u64,
        to: u64,
        speed_kmh: f64,
        oneway: bool,
        shape: Option<Vec<Point>>,
    ) -> &mut Self {
        self.pending.push(PendingSegment {
            source_id,
            from,
            to,
            speed_kmh,
            oneway,
            shape,
        });
        self
    }

    pub fn build(self) -> Result<RoadNetwork, RoadNetError> {
        if self.nodes.is_empty() {
            return Err(RoadNetError::Empty);
        }
        let mut segments = Vec::with_capacity(self.pending.len() * 2);
        for p in &self.pending {
            let from = *self
                .node_index
                .get(&p.from)
                .ok_or(RoadNetError::DanglingNode {
                    segment: p.source_id,
                    node: p.from,
                })?;
            let to = *self
                .node_index
                .get(&p.to)
                .ok_or(RoadNetError::DanglingNode {
                    segment: p.source_id,
                    node: p.to,
                })?;
            if !(p.speed_kmh > 0.0 && p.speed_kmh <= MAX_SPEED_KMH) {
                return Err(RoadNetError::InvalidSpeed {
                    segment: p.source_id,
                    speed: p.speed_kmh,
                });
            }
            let mut polyline = match &p.shape {
                Some(shape) if shape.len() >= 2 => shape.clone(),
                _ => vec![self.nodes[from].position, self.nodes[to].position],
            };
            polyline[0] = self.nodes[from].position;
            *polyline.last_mut().unwrap() = self.nodes[to].position;
            if geometry::polyline_length(&polyline) <= 0.0 {
                return Err(RoadNetError::ZeroLength(p.source_id));
            }
            segments.push(make_segment(
                segments.len(),
                p.source_id,
                false,
                from,
                to,
                polyline.clone(),
                p.speed_kmh,
            ));
            if !p.oneway {
                polyline.reverse();
                segments.push(make_segment(
                    segments.len(),
                    p.source_id,
                    true,
                    to,
                    from,
                    polyline,
                    p.speed_kmh,
                ));
            }
        }
        let mut out_segments = vec![Vec::new(); self.nodes.len()];
        for s in &segments {
            out_segments[s.from].push(s.id);
        }
        let index = GridIndex::build(&segments, self.cell_size_m.unwrap_or(250.0));
        Ok(RoadNetwork {
            projection: self.projection,
            nodes: self.nodes,
            segments,
            out_segments,
            node_index: self.node_index,
            index,
        })
    }
}

fn make_segment(
    idx: usize,
    source_id: u64,
    reversed: bool,
    from: usize,
    to: usize,
    polyline: Vec<Point>,
    speed_limit_kmh: f64,
) -> RoadSegment {
    let length_m = geometry::polyline_length(&polyline);
    let direction_angle =
        geometry::bearing(&polyline[0], polyline.last().unwrap()).unwrap_or(0.0);
    let bbox = BBox::of_points(&polyline).unwrap();
    RoadSegment {
        id: SegmentId(idx as u32),
        source_id,
        reversed,
        from,
        to,
        polyline,
        length_m,
        speed_limit_kmh,
        direction_angle,
        bbox,
    }
}
