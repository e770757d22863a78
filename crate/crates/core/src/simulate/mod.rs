//! Seeded synthetic benchmark worlds: a jittered street grid, cell towers of
//! several carriers, co-moving groups of phones and their noisy tower logs.

mod eval;
mod world_io;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Projection};
use crate::ingest::CellRecord;
use crate::ingest::{compute_local_density, CellTower, TowerId, TowerMap};
use crate::mapmatch::{Anchor, CandidateTrajectory};
use crate::roadnet::{shortest_path, PathOnNetwork, RoadNetwork, RoadNetworkBuilder, SegmentId, SegmentPosition};

pub use eval::{
    covered_length, evaluate_matching, evaluate_search, truth_overlap, MatchingMetrics,
    QueryOutcome, SearchMetrics,
};
pub use world_io::{read_world, write_world, LoadedWorld, WorldIoError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub block_m: f64,
    /// Maximum node displacement from the regular grid, meters.
    pub jitter_m: f64,
    /// Every `arterial_every`-th street is faster.
    pub arterial_every: usize,
    pub arterial_speed_kmh: f64,
    pub street_speed_kmh: f64,
    /// Towers per km² at the centre and at the edge, linear in between.
    pub tower_density_center: f64,
    pub tower_density_edge: f64,
    pub carrier_count: usize,
    pub group_count: usize,
    pub group_size_min: usize,
    pub group_size_max: usize,
    pub trip_km_min: f64,
    pub trip_km_max: f64,
    pub trip_speed_kmh_min: f64,
    pub trip_speed_kmh_max: f64,
    pub max_turns: usize,
    /// Drive the shortest route between the trip's end nodes instead of the
    /// drawn few-turn route.
    pub shortest_routes: bool,
    pub sample_interval_s_min: i64,
    pub sample_interval_s_max: i64,
    /// Departure times fall in `[start_time, start_time + time_span_s)`.
    pub start_time: i64,
    pub time_span_s: i64,
    /// A new tower takes over only when this much closer (fraction).
    pub hysteresis: f64,
    pub pingpong_rate: f64,
    pub backward_rate: f64,
    pub drift_rate: f64,
    /// A backward flip reports the tower nearest to the point this far back
    /// along the trip, meters.
    pub backward_lookback_m: f64,
    pub drift_min_m: f64,
    pub origin_lon: f64,
    pub origin_lat: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rows: 20,
            cols: 20,
            block_m: 500.0,
            jitter_m: 15.0,
            arterial_every: 5,
            arterial_speed_kmh: 80.0,
            street_speed_kmh: 60.0,
            tower_density_center: 200.0,
            tower_density_edge: 150.0,
            carrier_count: 2,
            group_count: 50,
            group_size_min: 2,
            group_size_max: 8,
            trip_km_min: 10.0,
            trip_km_max: 16.0,
            trip_speed_kmh_min: 45.0,
            trip_speed_kmh_max: 60.0,
            max_turns: 2,
            shortest_routes: true,
            sample_interval_s_min: 45,
            sample_interval_s_max: 90,
            // 2017-09-01 00:00:00 UTC
            start_time: 1_504_224_000,
            time_span_s: 86_400,
            hysteresis: 0.10,
            pingpong_rate: 0.05,
            backward_rate: 0.05,
            drift_rate: 0.05,
            backward_lookback_m: 400.0,
            drift_min_m: 6000.0,
            origin_lon: 116.40,
            origin_lat: 39.90,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        for (name, r) in [
            ("pingpong_rate", self.pingpong_rate),
            ("backward_rate", self.backward_rate),
            ("drift_rate", self.drift_rate),
            ("hysteresis", self.hysteresis),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.rows < 2 || self.cols < 2 || !(self.block_m > 0.0) {
            return bad("grid needs at least 2×2 nodes and a positive block size");
        }
        if !(self.jitter_m >= 0.0 && self.jitter_m < self.block_m / 2.0) {
            return bad("jitter_m must be in [0, block_m / 2)");
        }
        if self.group_size_min < 2 || self.group_size_max < self.group_size_min {
            return bad("group sizes must satisfy 2 <= min <= max");
        }
        if self.carrier_count == 0 {
            return bad("carrier_count must be >= 1");
        }
        if !(self.trip_km_min > 0.0 && self.trip_km_max >= self.trip_km_min) {
            return bad("trip length range is invalid");
        }
        if !(self.trip_speed_kmh_min > 0.0 && self.trip_speed_kmh_max >= self.trip_speed_kmh_min) {
            return bad("trip speed range is invalid");
        }
        if self.trip_speed_kmh_max > self.street_speed_kmh.min(self.arterial_speed_kmh) {
            return bad("trip speeds must stay within every speed limit");
        }
        if self.sample_interval_s_min < 1 || self.sample_interval_s_max < self.sample_interval_s_min {
            return bad("sample interval range is invalid");
        }
        if self.time_span_s < 1 {
            return bad("time_span_s must be >= 1");
        }
        if !(self.tower_density_center > 0.0 && self.tower_density_edge > 0.0) {
            return bad("tower densities must be > 0");
        }
        Ok(())
    }
}

/// True trip of one phone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberTruth {
    pub id: String,
    pub group: usize,
    pub carrier: usize,
    pub depart: i64,
    pub speed_mps: f64,
    pub path: PathOnNetwork,
    /// Sample instants with the distance travelled at each.
    pub samples: Vec<(i64, f64)>,
}

impl MemberTruth {
    pub fn arrive(&self) -> i64 {
        self.depart + (self.path.length_m / self.speed_mps).ceil() as i64
    }

    pub fn offset_at(&self, t: i64) -> f64 {
        (self.speed_mps * (t - self.depart) as f64).clamp(0.0, self.path.length_m)
    }

    /// The true trip as a trajectory with confidence 1, anchored every
    /// `interval_s` seconds and at arrival, like a GPS trace snapped to the map.
    pub fn as_trajectory(&self, net: &RoadNetwork, interval_s: i64) -> CandidateTrajectory {
        let end = self.arrive();
        let mut times: Vec<i64> = (self.depart..end).step_by(interval_s.max(1) as usize).collect();
        times.push(end);
        let offsets: Vec<f64> = times.iter().map(|&t| self.offset_at(t)).collect();
        let subpaths: Vec<PathOnNetwork> = offsets.windows(2).map(|w| slice_path(&self.path, net, w[0], w[1])).collect();
        let anchors = times
            .iter()
            .zip(&offsets)
            .enumerate()
            .map(|(i, (&time, _))| {
                let position = if i == 0 { subpaths[0].start() } else { subpaths[i - 1].end() };
                Anchor {
                    time,
                    position,
                    point: net.position_point(&position),
                }
            })
            .collect();
        CandidateTrajectory {
            anchors,
            gap_log_probs: vec![0.0; subpaths.len()],
            subpaths,
            raw_log_prob: 0.0,
            confidence: 1.0,
        }
    }

    /// The part of the trip between the first and last sample.
    pub fn sampled_path(&self, net: &RoadNetwork) -> Option<PathOnNetwork> {
        let (a, b) = (self.samples.first()?.1, self.samples.last()?.1);
        Some(slice_path(&self.path, net, a, b))
    }
}

/// Portion of `path` between distances `a <= b` from its start. A cut on a
/// segment boundary stays on the earlier segment, so consecutive slices meet
/// at the same position.
pub fn slice_path(path: &PathOnNetwork, net: &RoadNetwork, a: f64, b: f64) -> PathOnNetwork {
    let iv = path.intervals(net);
    let mut ends = Vec::with_capacity(iv.len());
    let mut acc = 0.0;
    for &(_, lo, hi) in &iv {
        acc += hi - lo;
        ends.push(acc);
    }
    let pick = |x: f64| ends.iter().position(|&e| e >= x).unwrap_or(iv.len() - 1);
    let (i, j) = (pick(a), pick(b));
    let start_of = |k: usize| if k == 0 { 0.0 } else { ends[k - 1] };
    let entry = (iv[i].1 + (a - start_of(i))).clamp(iv[i].1, iv[i].2);
    let exit = (iv[j].1 + (b - start_of(j))).clamp(iv[j].1, iv[j].2);
    let segs: Vec<SegmentId> = iv[i..=j].iter().map(|x| x.0).collect();
    PathOnNetwork::new(net, segs, entry, exit)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    pub pingpong: usize,
    pub backward: usize,
    pub drift: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub members: Vec<MemberTruth>,
}

impl GroundTruth {
    pub fn member(&self, id: &str) -> Option<&MemberTruth> {
        self.members.iter().find(|m| m.id == id)
    }

    /// Member ids of each group, groups in ascending order.
    pub fn groups(&self) -> Vec<Vec<&str>> {
        let n = self.members.iter().map(|m| m.group + 1).max().unwrap_or(0);
        let mut out = vec![Vec::new(); n];
        for m in &self.members {
            out[m.group].push(m.id.as_str());
        }
        out
    }

    /// Unordered pairs of members that travel together.
    pub fn comoving_pairs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for g in self.groups() {
            for i in 0..g.len() {
                for j in i + 1..g.len() {
                    out.push((g[i], g[j]));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkWorld {
    pub config: BenchmarkConfig,
    pub projection: Projection,
    pub network: RoadNetwork,
    pub towers: TowerMap,
    /// Sorted by user id, then time.
    pub records: Vec<CellRecord>,
    pub truth: GroundTruth,
    pub noise: NoiseCounts,
}

fn grid_network(cfg: &BenchmarkConfig, rng: &mut ChaCha8Rng, projection: Projection) -> RoadNetwork {
    let j = cfg.jitter_m.floor() as i64;
    let mut pts: Vec<Point> = Vec::with_capacity(cfg.rows * cfg.cols);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let dx = rng.gen_range(-j..=j) as f64;
            let dy = rng.gen_range(-j..=j) as f64;
            pts.push(Point::new(c as f64 * cfg.block_m + dx, r as f64 * cfg.block_m + dy));
        }
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n);
    let mut b = RoadNetworkBuilder::new().with_projection(projection);
    for (i, p) in pts.iter().enumerate() {
        b.add_node(i as u64, Point::new(p.x - mx, p.y - my)).expect("unique ids");
    }
    let speed = |k: usize| if k.is_multiple_of(cfg.arterial_every.max(1)) { cfg.arterial_speed_kmh } else { cfg.street_speed_kmh };
    let mut sid = 0;
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let id = (r * cfg.cols + c) as u64;
            if c + 1 < cfg.cols {
                b.add_road(sid, id, id + 1, speed(r), false, None);
                sid += 1;
            }
            if r + 1 < cfg.rows {
                b.add_road(sid, id, id + cfg.cols as u64, speed(c), false, None);
                sid += 1;
            }
        }
    }
    b.build().expect("grid is valid")
}

fn place_towers(cfg: &BenchmarkConfig, net: &RoadNetwork, rng: &mut ChaCha8Rng) -> Vec<(CellTower, usize)> {
    const CELL: f64 = 250.0;
    let bb = net.bbox();
    let (x0, y0) = (bb.min.x - 500.0, bb.min.y - 500.0);
    let (x1, y1) = (bb.max.x + 500.0, bb.max.y + 500.0);
    let centre = Point::new(0.5 * (bb.min.x + bb.max.x), 0.5 * (bb.min.y + bb.max.y));
    let reach = Point::new(bb.min.x, bb.min.y).distance(&centre).max(1.0);
    let mut per_carrier = vec![0u32; cfg.carrier_count];
    let mut out = Vec::new();
    let nx = ((x1 - x0) / CELL).ceil() as usize;
    let ny = ((y1 - y0) / CELL).ceil() as usize;
    for iy in 0..ny {
        for ix in 0..nx {
            let cx = x0 + (ix as f64 + 0.5) * CELL;
            let cy = y0 + (iy as f64 + 0.5) * CELL;
            let f = (Point::new(cx, cy).distance(&centre) / reach).min(1.0);
            let density = cfg.tower_density_center + f * (cfg.tower_density_edge - cfg.tower_density_center);
            let expected = density * (CELL / 1000.0).powi(2);
            let mut count = expected.floor() as usize;
            if rng.gen::<f64>() < expected.fract() {
                count += 1;
            }
            for _ in 0..count {
                let x = x0 + ix as f64 * CELL + rng.gen_range(0..CELL as i64) as f64;
                let y = y0 + iy as f64 * CELL + rng.gen_range(0..CELL as i64) as f64;
                let carrier = rng.gen_range(0..cfg.carrier_count);
                per_carrier[carrier] += 1;
                let id = TowerId::new(100 + carrier as u32, per_carrier[carrier]);
                out.push((CellTower::new(id, Point::new(x, y)), carrier));
            }
        }
    }
    out
}

/// Node-to-node route along the grid with at most `max_turns` turns.
fn lattice_route(cfg: &BenchmarkConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (rows, cols) = (cfg.rows as i64, cfg.cols as i64);
    let kmin = (cfg.trip_km_min * 1000.0 / cfg.block_m).ceil().max(1.0) as i64;
    let kmax = ((cfg.trip_km_max * 1000.0 / cfg.block_m).floor() as i64).max(kmin);
    loop {
        let (r0, c0) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        let k = rng.gen_range(kmin..=kmax);
        let dr_abs = rng.gen_range(0..=k);
        let dc_abs = k - dr_abs;
        let dr = if rng.gen_bool(0.5) { dr_abs } else { -dr_abs };
        let dc = if rng.gen_bool(0.5) { dc_abs } else { -dc_abs };
        let (r1, c1) = (r0 + dr, c0 + dc);
        if !(0..rows).contains(&r1) || !(0..cols).contains(&c1) {
            continue;
        }
        // split each axis into alternating legs
        let turns = if dr == 0 || dc == 0 { 0 } else { rng.gen_range(1..=cfg.max_turns.max(1)) };
        let legs = turns + 1;
        let horizontal_first = if dr == 0 { true } else if dc == 0 { false } else { rng.gen_bool(0.5) };
        let n_h = if horizontal_first { legs.div_ceil(2) } else { legs / 2 };
        let n_v = legs - n_h;
        if (n_h as i64) > dc_abs || (n_v as i64) > dr_abs {
            continue;
        }
        let split = |total: i64, parts: usize, rng: &mut ChaCha8Rng| -> Vec<i64> {
            if parts == 0 {
                return Vec::new();
            }
            let mut cuts: Vec<i64> = (1..total).collect::<Vec<_>>().choose_multiple(rng, parts - 1).copied().collect();
            cuts.sort_unstable();
            let mut out = Vec::with_capacity(parts);
            let mut prev = 0;
            for c in cuts.into_iter().chain([total]) {
                out.push(c - prev);
                prev = c;
            }
            out
        };
        let hs = split(dc_abs, n_h, rng);
        let vs = split(dr_abs, n_v, rng);
        let (mut r, mut c) = (r0, c0);
        let mut nodes = vec![(r * cols + c) as usize];
        let (mut hi, mut vi) = (0, 0);
        for leg in 0..legs {
            let horizontal = (leg % 2 == 0) == horizontal_first;
            let (steps, dir_r, dir_c) = if horizontal {
                hi += 1;
                (hs[hi - 1], 0, dc.signum())
            } else {
                vi += 1;
                (vs[vi - 1], dr.signum(), 0)
            };
            for _ in 0..steps {
                r += dir_r;
                c += dir_c;
                nodes.push((r * cols + c) as usize);
            }
        }
        return nodes;
    }
}

fn route_path(net: &RoadNetwork, nodes: &[usize]) -> PathOnNetwork {
    let segs: Vec<SegmentId> = nodes
        .windows(2)
        .map(|w| {
            *net.outgoing(w[0])
                .iter()
                .find(|&&s| net.segment(s).to == w[1])
                .expect("grid neighbours are connected")
        })
        .collect();
    let exit = net.segment(*segs.last().unwrap()).length_m;
    PathOnNetwork::new(net, segs, 0.0, exit)
}

/// Shortest node-to-node route, trying every leaving and arriving segment.
fn shortest_route(net: &RoadNetwork, from: usize, to: usize) -> PathOnNetwork {
    let into: Vec<SegmentId> = net.segments().iter().filter(|s| s.to == to).map(|s| s.id).collect();
    let mut best: Option<PathOnNetwork> = None;
    for &a in net.outgoing(from) {
        for &b in &into {
            let p = shortest_path(net, &SegmentPosition::new(a, 0.0), &SegmentPosition::new(b, net.segment(b).length_m));
            if let Some(p) = p {
                if best.as_ref().is_none_or(|q| p.length_m < q.length_m) {
                    best = Some(p);
                }
            }
        }
    }
    best.expect("grid is strongly connected")
}

fn nearest(towers: &[(usize, Point)], p: &Point, skip: Option<usize>) -> Option<(usize, f64)> {
    towers
        .iter()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, q)| (*i, q.distance(p)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Builds a complete benchmark world from `cfg.seed`.
pub fn synthesize_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkWorld, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let projection = Projection::new(cfg.origin_lon, cfg.origin_lat);
    let network = grid_network(cfg, &mut rng, projection);
    let placed = place_towers(cfg, &network, &mut rng);
    let towers = compute_local_density(placed.iter().map(|(t, _)| *t).collect()).map_err(|e| SimError::Config(e.to_string()))?;
    let by_carrier: Vec<Vec<(usize, Point)>> = (0..cfg.carrier_count)
        .map(|c| placed.iter().enumerate().filter(|(_, (_, k))| *k == c).map(|(i, (t, _))| (i, t.position)).collect())
        .collect();
    if by_carrier.iter().any(|v| v.is_empty()) {
        return Err(SimError::Config("a carrier received no towers; raise tower densities".into()));
    }

    let mut truth = GroundTruth::default();
    let mut records = Vec::new();
    let mut noise = NoiseCounts::default();
    for g in 0..cfg.group_count {
        let nodes = lattice_route(cfg, &mut rng);
        let path = if cfg.shortest_routes {
            shortest_route(&network, nodes[0], *nodes.last().unwrap())
        } else {
            route_path(&network, &nodes)
        };
        let depart = cfg.start_time + rng.gen_range(0..cfg.time_span_s);
        let speed_kmh = rng.gen_range(cfg.trip_speed_kmh_min..=cfg.trip_speed_kmh_max);
        let size = rng.gen_range(cfg.group_size_min..=cfg.group_size_max);
        for k in 0..size {
            let carrier = rng.gen_range(0..cfg.carrier_count);
            let interval = rng.gen_range(cfg.sample_interval_s_min..=cfg.sample_interval_s_max);
            let phase = rng.gen_range(0..interval);
            let mut m = MemberTruth {
                id: format!("g{g:04}m{k}"),
                group: g,
                carrier,
                depart,
                speed_mps: speed_kmh / 3.6,
                path: path.clone(),
                samples: Vec::new(),
            };
            let end = m.arrive();
            let mut t = depart + phase;
            while t <= end {
                m.samples.push((t, m.offset_at(t)));
                t += interval;
            }
            let point_at = |off: f64| {
                let cut = slice_path(&m.path, &network, off, off);
                network.position_point(&cut.start())
            };
            let pool = &by_carrier[carrier];
            // handover with hysteresis
            let mut seq: Vec<usize> = Vec::with_capacity(m.samples.len());
            let mut cur: Option<(usize, Point)> = None;
            for &(_, off) in &m.samples {
                let p = point_at(off);
                let (n, dn) = nearest(pool, &p, None).expect("carrier has towers");
                let keep = match cur {
                    Some((c, cp)) if c != n => dn > (1.0 - cfg.hysteresis) * cp.distance(&p),
                    _ => false,
                };
                if !keep {
                    cur = Some((n, placed[n].0.position));
                }
                seq.push(cur.unwrap().0);
            }
            // noise, at most one kind per point
            let clean = seq.clone();
            let mut i = 0;
            while i < seq.len() {
                let off = m.samples[i].1;
                let p = point_at(off);
                if rng.gen::<f64>() < cfg.pingpong_rate {
                    if let Some((alt, _)) = nearest(pool, &p, Some(seq[i])) {
                        // flip to the neighbour on every other point while the
                        // phone stays in the same cell
                        let home = clean[i];
                        let mut k = i;
                        while k < seq.len() && k < i + 3 && clean[k] == home {
                            if (k - i) % 2 == 0 {
                                seq[k] = alt;
                            }
                            k += 1;
                        }
                        noise.pingpong += 1;
                        i = k.max(i + 1);
                        continue;
                    }
                } else if rng.gen::<f64>() < cfg.backward_rate {
                    let back = point_at((off - cfg.backward_lookback_m).max(0.0));
                    if let Some((b, _)) = nearest(pool, &back, None).filter(|(b, _)| *b != seq[i]) {
                        seq[i] = b;
                        noise.backward += 1;
                    }
                } else if rng.gen::<f64>() < cfg.drift_rate {
                    let far: Vec<usize> = pool.iter().filter(|(_, q)| q.distance(&p) >= cfg.drift_min_m).map(|(j, _)| *j).collect();
                    if let Some(&f) = far.choose(&mut rng) {
                        seq[i] = f;
                        noise.drift += 1;
                    }
                }
                i += 1;
            }
            for (&(t, _), &ti) in m.samples.iter().zip(&seq) {
                records.push(CellRecord {
                    user_id: m.id.clone(),
                    timestamp: t,
                    tower: placed[ti].0.id,
                });
            }
            truth.members.push(m);
        }
    }
    records.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.timestamp.cmp(&b.timestamp)));
    Ok(BenchmarkWorld {
        config: cfg.clone(),
        projection,
        network,
        towers,
        records,
        truth,
        noise,
    })
}

/// Planar position of a point along a path, `offset` meters from its start.
pub fn point_on_path(path: &PathOnNetwork, net: &RoadNetwork, offset: f64) -> Point {
    let cut = slice_path(path, net, offset, offset);
    net.position_point(&SegmentPosition::new(cut.segments[0], cut.entry_offset_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_sequences;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            rows: 8,
            cols: 8,
            group_count: 6,
            trip_km_min: 0.8,
            trip_km_max: 1.6,
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = synthesize_benchmark(&small()).unwrap();
        let b = synthesize_benchmark(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        let c = synthesize_benchmark(&BenchmarkConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn ten_by_ten_grid_has_360_directed_segments() {
        let w = synthesize_benchmark(&BenchmarkConfig { rows: 10, cols: 10, ..small() }).unwrap();
        assert_eq!((w.network.nodes().len(), w.network.segments().len()), (100, 360));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(BenchmarkConfig { pingpong_rate: 1.5, ..small() }.validate().is_err());
        assert!(BenchmarkConfig { group_size_min: 1, ..small() }.validate().is_err());
        assert!(BenchmarkConfig { trip_speed_kmh_max: 90.0, ..small() }.validate().is_err());
    }

    #[test]
    fn groups_share_one_path_and_span() {
        let w = synthesize_benchmark(&small()).unwrap();
        for g in w.truth.groups() {
            assert!(g.len() >= 2 && g.len() <= 8);
            let ms: Vec<_> = g.iter().map(|id| w.truth.member(id).unwrap()).collect();
            assert!(ms.iter().all(|m| m.path == ms[0].path && m.depart == ms[0].depart && m.speed_mps == ms[0].speed_mps));
        }
        assert!(w.truth.comoving_pairs().len() >= w.truth.groups().len());
    }

    #[test]
    fn noiseless_phones_see_nearest_carrier_tower() {
        let cfg = BenchmarkConfig {
            pingpong_rate: 0.0,
            backward_rate: 0.0,
            drift_rate: 0.0,
            hysteresis: 0.0,
            ..small()
        };
        let w = synthesize_benchmark(&cfg).unwrap();
        let seqs = build_sequences(&w.records).sequences;
        for s in &seqs {
            let m = w.truth.member(&s.user_id).unwrap();
            assert_eq!(s.points.len(), m.samples.len());
            for (p, &(_, off)) in s.points.iter().zip(&m.samples) {
                let pos = point_on_path(&m.path, &w.network, off);
                let seen = w.towers.get(p.tower).unwrap();
                let lac = 100 + m.carrier as u32;
                let best = w
                    .towers
                    .towers()
                    .iter()
                    .filter(|t| t.id.lac == lac)
                    .map(|t| t.position.distance(&pos))
                    .fold(f64::INFINITY, f64::min);
                assert!(seen.id.lac == lac && (seen.position.distance(&pos) - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn truth_trajectory_covers_path() {
        let w = synthesize_benchmark(&small()).unwrap();
        let m = &w.truth.members[0];
        let t = m.as_trajectory(&w.network, 30);
        assert!((t.length_m() - m.path.length_m).abs() < 1e-6);
        assert_eq!(t.start_time(), m.depart);
        assert_eq!(t.end_time(), m.arrive());
        for (a, s) in t.anchors.iter().zip(&t.subpaths) {
            assert_eq!(a.position, s.start());
        }
    }

    #[test]
    fn slices_meet_at_boundaries() {
        let w = synthesize_benchmark(&small()).unwrap();
        let p = &w.truth.members[0].path;
        let first = w.network.segment(p.segments[0]).length_m;
        let a = slice_path(p, &w.network, 0.0, first);
        let b = slice_path(p, &w.network, first, p.length_m);
        assert_eq!(a.end(), b.start());
        assert!((a.length_m + b.length_m - p.length_m).abs() < 1e-9);
    }
}
