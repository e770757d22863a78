//! Emission, transition and Viterbi decoding.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use super::{
    observations_from_sequence, quantize_m, Anchor, CandidateTrajectory, HmmState, MatchConfig,
    MatchError, Observation,
};
use crate::geometry::{angular_difference, bearing};
use crate::ingest::{TowerMap, TowerSequence};
use crate::roadnet::{shortest_path, DistanceTable, RoadNetwork, MAX_SPEED_KMH};

/// Log of the emission density for a state at `distance_m` from its observation.
///
/// `heading` is the travel direction into the state, `None` for the first
/// observation (no direction weighting).
pub fn emission_log_density(
    distance_m: f64,
    search_range_m: f64,
    heading: Option<f64>,
    segment_bearing: f64,
    speed_limit_kmh: f64,
    cfg: &MatchConfig,
) -> f64 {
    let sigma = cfg.sigma_scale * search_range_m;
    let w_d = match heading {
        None => 1.0,
        Some(h) => (angular_difference(h, segment_bearing) / TAU).max(cfg.w_d_floor),
    };
    let w_s = 1.0 - cfg.c_speed * (speed_limit_kmh / MAX_SPEED_KMH);
    let z = w_d * w_s * distance_m / sigma;
    -(TAU.sqrt() * sigma).ln() - 0.5 * z * z
}

pub fn emission_probability(
    obs: &Observation,
    state: &HmmState,
    net: &RoadNetwork,
    heading: Option<f64>,
    cfg: &MatchConfig,
) -> f64 {
    let seg = net.segment(state.segment);
    emission_log_density(
        state.distance_m,
        obs.search_range_m,
        heading,
        seg.direction_angle,
        seg.speed_limit_kmh,
        cfg,
    )
    .exp()
}

/// Log transition density for a route of `route_m` when the shortest route
/// between any state pair of the same two steps is `min_route_m`.
pub fn transition_log_density(route_m: f64, min_route_m: f64, cfg: &MatchConfig) -> f64 {
    if !route_m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let d_km = (quantize_m(route_m) - quantize_m(min_route_m)).abs() / 1000.0;
    -cfg.beta.ln() - d_km / cfg.beta
}

pub fn transition_probability(route_m: f64, min_route_m: f64, cfg: &MatchConfig) -> f64 {
    transition_log_density(route_m, min_route_m, cfg).exp()
}

/// Travel direction used for the emission of `cur` when coming from `prev`.
/// Coincident projections count as moving along the segment.
pub(crate) fn pair_heading(prev: &HmmState, cur: &HmmState, net: &RoadNetwork) -> f64 {
    bearing(&prev.projected_point, &cur.projected_point)
        .unwrap_or_else(|| net.segment(cur.segment).direction_angle)
}

/// Longest route considered between two consecutive observations.
pub fn route_bound_m(a: &Observation, b: &Observation) -> f64 {
    4.0 * (a.position.distance(&b.position) + a.search_range_m + b.search_range_m) + 1000.0
}

/// States, emissions, route lengths and the Viterbi forward pass for the
/// retained observations of one sequence.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub observations: Vec<Observation>,
    /// Index of each retained observation in the input.
    pub original_index: Vec<usize>,
    /// Inputs dropped for lack of candidates or of a reachable state.
    pub dropped: Vec<usize>,
    pub states: Vec<Vec<HmmState>>,
    pub first_emission: Vec<f64>,
    /// `emission[g][j * n + k]`: log emission of state `k` of step `g + 1` entered from `j`.
    pub emission: Vec<Vec<f64>>,
    pub routes: Vec<DistanceTable>,
    pub min_route: Vec<f64>,
    forward: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    score: f64,
    length: f64,
    rank: usize,
    back: usize,
}

impl Cell {
    fn dead() -> Self {
        Cell {
            score: f64::NEG_INFINITY,
            length: 0.0,
            rank: usize::MAX,
            back: usize::MAX,
        }
    }
}

/// Higher score, then shorter route, then lexicographically smaller states.
fn better(a: (f64, f64, usize), b: (f64, f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.1.total_cmp(&b.1) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.2 < b.2,
        },
    }
}

fn assign_ranks(cells: &mut [Cell], states: &[HmmState], prev_rank: impl Fn(&Cell) -> usize) {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&k| {
        let c = &cells[k];
        (c.score == f64::NEG_INFINITY, prev_rank(c), states[k].segment, k)
    });
    for (r, k) in order.into_iter().enumerate() {
        cells[k].rank = r;
    }
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Log transition plus log emission for gap `g` between state `j` and state `k`,
    /// with the route length given explicitly.
    pub fn step_log_prob(&self, g: usize, j: usize, k: usize, route_m: f64, cfg: &MatchConfig) -> f64 {
        let n = self.states[g + 1].len();
        transition_log_density(route_m, self.min_route[g], cfg) + self.emission[g][j * n + k]
    }

    fn push_first(&mut self, index: usize, obs: Observation, states: Vec<HmmState>, net: &RoadNetwork, cfg: &MatchConfig) {
        self.first_emission = states
            .iter()
            .map(|s| {
                let seg = net.segment(s.segment);
                emission_log_density(s.distance_m, obs.search_range_m, None, seg.direction_angle, seg.speed_limit_kmh, cfg)
            })
            .collect();
        let mut cells: Vec<Cell> = self
            .first_emission
            .iter()
            .map(|&e| Cell {
                score: e,
                length: 0.0,
                rank: 0,
                back: usize::MAX,
            })
            .collect();
        assign_ranks(&mut cells, &states, |_| 0);
        self.observations.push(obs);
        self.original_index.push(index);
        self.states.push(states);
        self.forward.push(cells);
    }

    /// Adds a step unless no state of it is reachable from a live previous state.
    fn try_push(&mut self, index: usize, obs: Observation, states: Vec<HmmState>, net: &RoadNetwork, cfg: &MatchConfig) -> bool {
        let prev_obs = self.observations.last().unwrap();
        let prev_states = self.states.last().unwrap();
        let prev_cells = self.forward.last().unwrap();
        let sources: Vec<_> = prev_states.iter().map(HmmState::position).collect();
        let targets: Vec<_> = states.iter().map(HmmState::position).collect();
        let table = DistanceTable::compute(net, &sources, &targets, route_bound_m(prev_obs, &obs));
        let Some(min_route) = table.min() else {
            return false;
        };
        let n = states.len();
        let mut emission = vec![0.0; prev_states.len() * n];
        for (j, ps) in prev_states.iter().enumerate() {
            for (k, s) in states.iter().enumerate() {
                let seg = net.segment(s.segment);
                emission[j * n + k] = emission_log_density(
                    s.distance_m,
                    obs.search_range_m,
                    Some(pair_heading(ps, s, net)),
                    seg.direction_angle,
                    seg.speed_limit_kmh,
                    cfg,
                );
            }
        }
        let mut cells = vec![Cell::dead(); n];
        for (k, cell) in cells.iter_mut().enumerate() {
            for (j, pc) in prev_cells.iter().enumerate() {
                if pc.score == f64::NEG_INFINITY {
                    continue;
                }
                let route = table.get(j, k);
                if !route.is_finite() {
                    continue;
                }
                let inc = transition_log_density(route, min_route, cfg) + emission[j * n + k];
                let cand = (pc.score + inc, pc.length + quantize_m(route), pc.rank);
                let cur = (cell.score, cell.length, prev_cells.get(cell.back).map_or(usize::MAX, |c| c.rank));
                if cell.back == usize::MAX || better(cand, cur) {
                    *cell = Cell {
                        score: cand.0,
                        length: cand.1,
                        rank: 0,
                        back: j,
                    };
                }
            }
        }
        if cells.iter().all(|c| c.score == f64::NEG_INFINITY) {
            return false;
        }
        assign_ranks(&mut cells, &states, |c| prev_cells.get(c.back).map_or(usize::MAX, |p| p.rank));
        self.observations.push(obs);
        self.original_index.push(index);
        self.states.push(states);
        self.emission.push(emission);
        self.routes.push(table);
        self.min_route.push(min_route);
        self.forward.push(cells);
        true
    }
}

/// Candidate states for one observation: segments within the search range
/// (doubled once if none), nearest `max_candidates` kept.
fn candidate_states(index: usize, obs: &Observation, net: &RoadNetwork, cfg: &MatchConfig) -> Vec<HmmState> {
    let mut found = net.segments_within(&obs.position, obs.search_range_m);
    if found.is_empty() {
        found = net.segments_within(&obs.position, 2.0 * obs.search_range_m);
    }
    found.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.segment.cmp(&b.segment)));
    found.truncate(cfg.max_candidates);
    found
        .into_iter()
        .map(|c| HmmState {
            observation_index: index,
            segment: c.segment,
            projected_point: c.point,
            offset_m: c.offset_m,
            distance_m: c.distance_m,
        })
        .collect()
}

pub fn build_lattice(obs: &[Observation], net: &RoadNetwork, cfg: &MatchConfig) -> Lattice {
    let mut lat = Lattice {
        observations: Vec::new(),
        original_index: Vec::new(),
        dropped: Vec::new(),
        states: Vec::new(),
        first_emission: Vec::new(),
        emission: Vec::new(),
        routes: Vec::new(),
        min_route: Vec::new(),
        forward: Vec::new(),
    };
    for (i, o) in obs.iter().enumerate() {
        let states = candidate_states(i, o, net, cfg);
        if states.is_empty() {
            lat.dropped.push(i);
            continue;
        }
        if lat.is_empty() {
            lat.push_first(i, *o, states, net, cfg);
        } else if !lat.try_push(i, *o, states, net, cfg) {
            lat.dropped.push(i);
        }
    }
    lat
}

/// Chosen state per lattice step with the accumulated log probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub raw_log_prob: f64,
}

pub fn viterbi(lat: &Lattice) -> Option<ViterbiPath> {
    let last = lat.forward.last()?;
    let mut best = 0;
    for k in 1..last.len() {
        let (a, b) = (&last[k], &last[best]);
        if better((a.score, a.length, a.rank), (b.score, b.length, b.rank)) {
            best = k;
        }
    }
    if last[best].score == f64::NEG_INFINITY {
        return None;
    }
    let raw_log_prob = last[best].score;
    let mut states = vec![best];
    for step in (1..lat.forward.len()).rev() {
        let k = *states.last().unwrap();
        states.push(lat.forward[step][k].back);
    }
    states.reverse();
    Some(ViterbiPath {
        states,
        raw_log_prob,
    })
}

/// Builds the trajectory following the shortest route between chosen states.
pub(crate) fn trajectory_for(lat: &Lattice, path: &ViterbiPath, net: &RoadNetwork, cfg: &MatchConfig) -> CandidateTrajectory {
    let anchors: Vec<Anchor> = path
        .states
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let s = &lat.states[i][k];
            Anchor {
                time: lat.observations[i].time,
                position: s.position(),
                point: s.projected_point,
            }
        })
        .collect();
    let mut subpaths = Vec::with_capacity(anchors.len().saturating_sub(1));
    let mut gap_log_probs = Vec::with_capacity(subpaths.capacity());
    let mut raw = lat.first_emission[path.states[0]];
    for g in 0..anchors.len() - 1 {
        let (j, k) = (path.states[g], path.states[g + 1]);
        let p = shortest_path(net, &anchors[g].position, &anchors[g + 1].position)
            .expect("viterbi only follows reachable transitions");
        let inc = lat.step_log_prob(g, j, k, lat.routes[g].get(j, k), cfg);
        raw += inc;
        gap_log_probs.push(inc);
        subpaths.push(p);
    }
    debug_assert_eq!(raw, path.raw_log_prob);
    CandidateTrajectory {
        anchors,
        subpaths,
        gap_log_probs,
        raw_log_prob: raw,
        confidence: 1.0,
    }
}

pub(crate) fn decode(obs: &[Observation], net: &RoadNetwork, cfg: &MatchConfig) -> Result<(Lattice, ViterbiPath), MatchError> {
    cfg.validate()?;
    let lat = build_lattice(obs, net, cfg);
    let too_short = |lat: &Lattice| MatchError::TooShort {
        usable: lat.len(),
        dropped: lat.dropped.clone(),
    };
    if lat.len() < 2 {
        return Err(too_short(&lat));
    }
    let path = viterbi(&lat).ok_or_else(|| too_short(&lat))?;
    Ok((lat, path))
}

/// Best road trajectory for located observations.
pub fn match_observations(obs: &[Observation], net: &RoadNetwork, cfg: &MatchConfig) -> Result<CandidateTrajectory, MatchError> {
    let (lat, path) = decode(obs, net, cfg)?;
    Ok(trajectory_for(&lat, &path, net, cfg))
}

pub fn match_sequence(seq: &TowerSequence, towers: &TowerMap, net: &RoadNetwork, cfg: &MatchConfig) -> Result<CandidateTrajectory, MatchError> {
    match_observations(&observations_from_sequence(seq, towers), net, cfg)
}
