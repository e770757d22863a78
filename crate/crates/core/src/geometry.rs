//! Planar geometry in a local metric frame.
//!
//! Everything downstream of the loaders works in meters on an equirectangular
//! projection centred on the road network. At city scale the distortion is far
//! below the positioning error of cell towers.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Linear interpolation, `t = 0` gives `self`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Bearing from `a` to `b` in radians, counter-clockwise from east, in `[0, 2π)`.
/// Returns `None` for coincident points.
pub fn bearing(a: &Point, b: &Point) -> Option<f64> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some(normalize_angle(dy.atan2(dx)))
}

/// Maps any angle onto `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Closest point to `p` on the closed segment `a`–`b`, with the parameter `t ∈ [0, 1]`.
pub fn closest_on_segment(p: &Point, a: &Point, b: &Point) -> (Point, f64) {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return (*a, 0.0);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
    (a.lerp(b, t), t)
}

/// Arc length of a polyline.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Point at arc-length `offset` along a polyline (clamped to its ends).
pub fn point_along(points: &[Point], offset: f64) -> Point {
    if points.is_empty() {
        return Point::default();
    }
    let mut remaining = offset.max(0.0);
    for w in points.windows(2) {
        let l = w[0].distance(&w[1]);
        if remaining <= l {
            if l == 0.0 {
                return w[0];
            }
            return w[0].lerp(&w[1], remaining / l);
        }
        remaining -= l;
    }
    *points.last().unwrap()
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of_points(points: &[Point]) -> Option<BBox> {
        let first = points.first()?;
        let mut bb = BBox {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }
}

/// Equirectangular projection about a reference longitude/latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Projection {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        Self { lon0, lat0 }
    }

    /// Projection centred on the mean of the given `(lon, lat)` pairs.
    pub fn centred_on(coords: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (lon, lat) in coords {
            sx += lon;
            sy += lat;
            n += 1;
        }
        (n > 0).then(|| Self::new(sx / n as f64, sy / n as f64))
    }

    pub fn to_plane(&self, lon: f64, lat: f64) -> Point {
        let k = EARTH_RADIUS_M * PI / 180.0;
        Point::new(
            (lon - self.lon0) * k * self.lat0.to_radians().cos(),
            (lat - self.lat0) * k,
        )
    }

    pub fn to_lon_lat(&self, p: &Point) -> (f64, f64) {
        let k = EARTH_RADIUS_M * PI / 180.0;
        (
            self.lon0 + p.x / (k * self.lat0.to_radians().cos()),
            self.lat0 + p.y / k,
        )
    }
}
