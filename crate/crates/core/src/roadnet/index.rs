//! Uniform grid over segment bounding boxes.

use std::collections::HashMap;

use super::{RoadSegment, SegmentId};
use crate::geometry::Point;

#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size: f64,
    cells: HashMap<(i64, i64), Vec<SegmentId>>,
}

impl GridIndex {
    pub(crate) fn build(segments: &[RoadSegment], cell_size: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<SegmentId>> = HashMap::new();
        for s in segments {
            let (x0, y0) = cell_of(s.bbox.min.x, s.bbox.min.y, cell_size);
            let (x1, y1) = cell_of(s.bbox.max.x, s.bbox.max.y, cell_size);
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    cells.entry((cx, cy)).or_default().push(s.id);
                }
            }
        }
        Self { cell_size, cells }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Segments whose bounding box may intersect the square around the disc.
    /// Sorted and deduplicated; callers apply the exact distance test.
    pub fn query_bbox(&self, center: &Point, radius: f64) -> Vec<SegmentId> {
        let (x0, y0) = cell_of(center.x - radius, center.y - radius, self.cell_size);
        let (x1, y1) = cell_of(center.x + radius, center.y + radius, self.cell_size);
        let mut out = Vec::new();
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(list) = self.cells.get(&(cx, cy)) {
                    out.extend_from_slice(list);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn cell_of(x: f64, y: f64, size: f64) -> (i64, i64) {
    ((x / size).floor() as i64, (y / size).floor() as i64)
}
