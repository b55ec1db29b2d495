//! GeoJSON export of the most-supported pathlets for figure reproduction.

use pathlet_core::hierarchy::MultiScaleDictionary;
use pathlet_core::model::{Pathlet, RoadGraph};
use serde_json::{json, Value};

/// LineString coordinates of a pathlet: edge polylines concatenated in path
/// order, with the duplicated joint points removed.
fn expansion_coordinates(pathlet: &Pathlet, graph: &RoadGraph) -> Vec<[f64; 2]> {
    let mut coords: Vec<[f64; 2]> = Vec::new();
    for &e in &pathlet.edge_seq {
        let polyline = graph
            .edge(e)
            .geometry
            .as_ref()
            .expect("export requires geometry");
        for &(x, y) in polyline {
            if coords.last() != Some(&[x, y]) {
                coords.push([x, y]);
            }
        }
    }
    coords
}

/// Build a FeatureCollection of the `top_k` pathlets by support (ties by
/// level, then id).
pub fn export_top_pathlets(
    dict: &MultiScaleDictionary,
    graph: &RoadGraph,
    top_k: usize,
) -> Value {
    let mut refs: Vec<&Pathlet> = (0..dict.size()).map(|c| dict.column(c)).collect();
    refs.sort_by_key(|p| (std::cmp::Reverse(p.support), p.level, p.pathlet_id));
    let features: Vec<Value> = refs
        .into_iter()
        .take(top_k)
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": expansion_coordinates(p, graph),
                },
                "properties": {
                    "pathlet_id": p.pathlet_id,
                    "support": p.support,
                    "level": p.level,
                    "n_edges": p.edge_seq.len(),
                },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}
