//! JSON road network files.
//!
//! ```json
//! {"nodes": [{"id": 1, "lon": 8.54, "lat": 47.37}, ...],
//!  "segments": [{"id": 7, "from": 1, "to": 2, "speed_kmh": 50,
//!                "oneway": false, "polyline": [[8.54, 47.37], ...]}]}
//! ```
//!
//! `polyline` is optional. Unknown keys are ignored and reported.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RoadNetError, RoadNetwork, RoadNetworkBuilder};
use crate::geometry::Projection;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeRecord>,
    pub segments: Vec<SegmentRecord>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub lon: f64,
    pub lat: f64,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: u64,
    pub from: u64,
    pub to: u64,
    pub speed_kmh: f64,
    #[serde(default)]
    pub oneway: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polyline: Option<Vec<[f64; 2]>>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, Value>,
}

/// What the loader saw besides the network itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// Unknown keys, prefixed by the object kind (`network.`, `node.`, `segment.`).
    pub ignored_keys: Vec<String>,
    pub nodes: usize,
    pub directed_segments: usize,
}

pub fn parse_network(text: &str) -> Result<(RoadNetwork, LoadReport), RoadNetError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| RoadNetError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut ignored = BTreeSet::new();
    ignored.extend(file.extra.keys().map(|k| format!("network.{k}")));
    for n in &file.nodes {
        ignored.extend(n.extra.keys().map(|k| format!("node.{k}")));
    }
    for s in &file.segments {
        ignored.extend(s.extra.keys().map(|k| format!("segment.{k}")));
    }
    if !ignored.is_empty() {
        log::warn!("ignoring unknown network keys: {ignored:?}");
    }

    let projection = Projection::centred_on(file.nodes.iter().map(|n| (n.lon, n.lat)))
        .ok_or(RoadNetError::Empty)?;
    let mut b = RoadNetworkBuilder::new().with_projection(projection);
    for n in &file.nodes {
        b.add_node(n.id, projection.to_plane(n.lon, n.lat))?;
    }
    for s in &file.segments {
        let shape = s.polyline.as_ref().map(|pl| {
            pl.iter()
                .map(|[lon, lat]| projection.to_plane(*lon, *lat))
                .collect()
        });
        b.add_road(s.id, s.from, s.to, s.speed_kmh, s.oneway, shape);
    }
    let net = b.build()?;
    let report = LoadReport {
        ignored_keys: ignored.into_iter().collect(),
        nodes: net.nodes().len(),
        directed_segments: net.segments().len(),
    };
    Ok((net, report))
}

pub fn load_network(path: &Path) -> Result<(RoadNetwork, LoadReport), RoadNetError> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

/// Serialises a network back to the file format. Networks built without a
/// projection are written as if centred on (0, 0).
pub fn write_network(net: &RoadNetwork) -> NetworkFile {
    let proj = net.projection().copied().unwrap_or(Projection::new(0.0, 0.0));
    let nodes = net
        .nodes()
        .iter()
        .map(|n| {
            let (lon, lat) = proj.to_lon_lat(&n.position);
            NodeRecord {
                id: n.id,
                lon,
                lat,
                extra: BTreeMap::new(),
            }
        })
        .collect();
    let segments = net
        .segments()
        .iter()
        .filter(|s| !s.reversed)
        .map(|s| SegmentRecord {
            id: s.source_id,
            from: net.node(s.from).id,
            to: net.node(s.to).id,
            speed_kmh: s.speed_limit_kmh,
            oneway: net.reverse_of(s.id).is_none(),
            polyline: (s.polyline.len() > 2).then(|| {
                s.polyline
                    .iter()
                    .map(|p| {
                        let (lon, lat) = proj.to_lon_lat(p);
                        [lon, lat]
                    })
                    .collect()
            }),
            extra: BTreeMap::new(),
        })
        .collect();
    NetworkFile {
        nodes,
        segments,
        extra: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "nodes": [
            {"id": 1, "lon": 8.5400, "lat": 47.3700},
            {"id": 2, "lon": 8.5410, "lat": 47.3700, "elevation": 410},
            {"id": 3, "lon": 8.5410, "lat": 47.3710}
        ],
        "segments": [
            {"id": 10, "from": 1, "to": 2, "speed_kmh": 50, "oneway": false, "name": "Main"},
            {"id": 11, "from": 2, "to": 3, "speed_kmh": 30, "oneway": true,
             "polyline": [[8.5410, 47.3700], [8.5412, 47.3705], [8.5410, 47.3710]]}
        ],
        "version": 3
    }"#;

    #[test]
    fn loads_and_reports_unknown_keys() {
        let (net, report) = parse_network(SAMPLE).unwrap();
        assert_eq!(net.nodes().len(), 3);
        assert_eq!(net.segments().len(), 3);
        assert_eq!(
            report.ignored_keys,
            vec!["network.version", "node.elevation", "segment.name"]
        );
        let bent = net.segments().iter().find(|s| s.source_id == 11).unwrap();
        assert_eq!(bent.polyline.len(), 3);
        assert!(bent.length_m > net.node(bent.from).position.distance(&net.node(bent.to).position));
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_network("{\n  \"nodes\": [\n    {\"id\": 1, \"lon\": x}\n  ]\n}").unwrap_err();
        match err {
            RoadNetError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let text = r#"{"nodes":[{"id":1,"lon":0,"lat":0}],
            "segments":[{"id":5,"from":1,"to":9,"speed_kmh":50}]}"#;
        assert!(matches!(
            parse_network(text),
            Err(RoadNetError::DanglingNode { segment: 5, node: 9 })
        ));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (net, _) = parse_network(SAMPLE).unwrap();
        let text = serde_json::to_string(&write_network(&net)).unwrap();
        let (again, report) = parse_network(&text).unwrap();
        assert!(report.ignored_keys.is_empty());
        assert_eq!(again.segments().len(), net.segments().len());
        for (a, b) in net.segments().iter().zip(again.segments()) {
            assert_eq!(a.source_id, b.source_id);
            assert!((a.length_m - b.length_m).abs() < 1e-6);
        }
    }
}
