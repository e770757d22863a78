//! Tower map (`lac,cid,lon,lat`) and local tower density.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{IngestError, TowerId};
use crate::geometry::{Point, Projection};

/// Radius of the disc over which local density is counted.
pub const DENSITY_RADIUS_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTower {
    pub id: TowerId,
    pub position: Point,
    /// Towers per km² within [`DENSITY_RADIUS_M`], the tower itself included.
    pub local_density: f64,
}

impl CellTower {
    pub fn new(id: TowerId, position: Point) -> Self {
        Self {
            id,
            position,
            local_density: 0.0,
        }
    }
}

/// Immutable tower lookup with densities filled in.
#[derive(Debug, Clone)]
pub struct TowerMap {
    towers: Vec<CellTower>,
    by_id: HashMap<TowerId, usize>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

fn cell(p: &Point) -> (i64, i64) {
    (
        (p.x / DENSITY_RADIUS_M).floor() as i64,
        (p.y / DENSITY_RADIUS_M).floor() as i64,
    )
}

impl TowerMap {
    pub fn new(towers: Vec<CellTower>) -> Result<Self, IngestError> {
        if towers.is_empty() {
            return Err(IngestError::NoTowers);
        }
        let mut by_id = HashMap::with_capacity(towers.len());
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, t) in towers.iter().enumerate() {
            if by_id.insert(t.id, i).is_some() {
                return Err(IngestError::DuplicateTower(t.id));
            }
            grid.entry(cell(&t.position)).or_default().push(i);
        }
        let mut map = Self {
            towers,
            by_id,
            grid,
        };
        let densities: Vec<f64> = map
            .towers
            .iter()
            .map(|t| map.density_at(&t.position))
            .collect();
        for (t, d) in map.towers.iter_mut().zip(densities) {
            t.local_density = d;
        }
        Ok(map)
    }

    pub fn towers(&self) -> &[CellTower] {
        &self.towers
    }

    pub fn get(&self, id: TowerId) -> Option<&CellTower> {
        self.by_id.get(&id).map(|&i| &self.towers[i])
    }

    /// Indices of towers within `radius` of `p` (inclusive).
    pub fn within(&self, p: &Point, radius: f64) -> Vec<usize> {
        let r_sq = radius * radius;
        let lo = cell(&Point::new(p.x - radius, p.y - radius));
        let hi = cell(&Point::new(p.x + radius, p.y + radius));
        let mut out = Vec::new();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if let Some(list) = self.grid.get(&(cx, cy)) {
                    out.extend(
                        list.iter()
                            .copied()
                            .filter(|&i| self.towers[i].position.distance_sq(p) <= r_sq),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Tower density (per km²) around an arbitrary point.
    pub fn density_at(&self, p: &Point) -> f64 {
        let area_km2 = PI * (DENSITY_RADIUS_M / 1000.0).powi(2);
        self.within(p, DENSITY_RADIUS_M).len() as f64 / area_km2
    }
}

/// Fills in `local_density` for a list of towers.
pub fn compute_local_density(towers: Vec<CellTower>) -> Result<TowerMap, IngestError> {
    TowerMap::new(towers)
}

pub fn parse_tower_csv(text: &str, projection: &Projection) -> Result<TowerMap, IngestError> {
    let mut towers = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("lac")) {
            continue;
        }
        let err = |message: &str| IngestError::TowerParse {
            line: n + 1,
            message: message.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err("expected lac,cid,lon,lat"));
        }
        let lac = f[0].parse().map_err(|_| err("bad lac"))?;
        let cid = f[1].parse().map_err(|_| err("bad cid"))?;
        let lon: f64 = f[2].parse().map_err(|_| err("bad lon"))?;
        let lat: f64 = f[3].parse().map_err(|_| err("bad lat"))?;
        towers.push(CellTower::new(
            TowerId::new(lac, cid),
            projection.to_plane(lon, lat),
        ));
    }
    TowerMap::new(towers)
}

pub fn write_tower_csv(map: &TowerMap, projection: &Projection) -> String {
    let mut s = String::from("lac,cid,lon,lat\n");
    for t in map.towers() {
        let (lon, lat) = projection.to_lon_lat(&t.position);
        let _ = writeln!(s, "{},{},{:.8},{:.8}", t.id.lac, t.id.cid, lon, lat);
    }
    s
}
