//! File formats: graph CSV, trajectory JSONL, dictionary JSON, and the
//! canonical writers whose output round-trips byte-identically.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use pathlet_core::hierarchy::MultiScaleDictionary;
use pathlet_core::model::{split_at_revisits, EdgeRecord, RoadGraph, Trajectory};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Model {
        path: String,
        source: pathlet_core::model::ModelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Mapping from original (possibly sparse) edge ids to dense indices.
/// Emitted whenever the input ids were not already `0..n`.
pub type IdRemap = BTreeMap<u64, u32>;

/// Read a graph from CSV with header
/// `edge_id,from_node,to_node[,x1,y1,x2,y2]`. Sparse edge ids are remapped
/// to dense indices and the mapping is returned for persistence.
pub fn load_graph(path: &Path) -> Result<(RoadGraph, Option<IdRemap>), IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let with_geometry = match headers.len() {
        3 => false,
        7 => true,
        n => {
            return Err(parse_err(
                path,
                1,
                format!("expected 3 or 7 columns (edge_id,from_node,to_node[,x1,y1,x2,y2]), got {n}"),
            ))
        }
    };

    let mut raw: Vec<(u64, u64, u64, Option<Vec<(f64, f64)>>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let field = |k: usize| -> Result<&str, IoError> {
            record
                .get(k)
                .ok_or_else(|| parse_err(path, line, format!("missing column {k}")))
        };
        let num = |k: usize| -> Result<u64, IoError> {
            field(k)?
                .trim()
                .parse::<u64>()
                .map_err(|e| parse_err(path, line, format!("column {k}: {e}")))
        };
        let geometry = if with_geometry {
            let coord = |k: usize| -> Result<f64, IoError> {
                field(k)?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, line, format!("column {k}: {e}")))
            };
            Some(vec![(coord(3)?, coord(4)?), (coord(5)?, coord(6)?)])
        } else {
            None
        };
        raw.push((num(0)?, num(1)?, num(2)?, geometry));
    }

    let dense_already = {
        let mut ids: Vec<u64> = raw.iter().map(|r| r.0).collect();
        ids.sort_unstable();
        ids.iter().enumerate().all(|(i, &id)| id == i as u64)
    };
    let remap: Option<IdRemap> = if dense_already {
        None
    } else {
        let mut ids: Vec<u64> = raw.iter().map(|r| r.0).collect();
        ids.sort_unstable();
        ids.dedup();
        Some(ids.into_iter().zip(0u32..).collect())
    };
    let edges = raw
        .into_iter()
        .map(|(id, from, to, geometry)| EdgeRecord {
            edge_id: match &remap {
                Some(m) => m[&id],
                None => id as u32,
            },
            from_node: from,
            to_node: to,
            geometry,
        })
        .collect();
    let graph = RoadGraph::new(edges).map_err(|source| IoError::Model {
        path: path.display().to_string(),
        source,
    })?;
    Ok((graph, remap))
}

/// Canonical graph CSV writer; `load_graph` of the output reproduces the
/// input graph, and re-serializing a canonical file is byte-identical.
pub fn write_graph_csv(graph: &RoadGraph, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    if graph.has_geometry() {
        out.push_str("edge_id,from_node,to_node,x1,y1,x2,y2\n");
    } else {
        out.push_str("edge_id,from_node,to_node\n");
    }
    for e in graph.edges() {
        match &e.geometry {
            Some(g) => {
                let a = g.first().expect("validated polyline");
                let b = g.last().expect("validated polyline");
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.edge_id, e.from_node, e.to_node, a.0, a.1, b.0, b.1
                ));
            }
            None => out.push_str(&format!("{},{},{}\n", e.edge_id, e.from_node, e.to_node)),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajLine {
    traj_id: u64,
    edge_seq: Vec<u64>,
}

/// Ingestion statistics; persisted so the revisit-splitting rule is visible
/// in run metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestStats {
    /// Input lines that revisited an edge and were split.
    pub revisit_splits: usize,
    /// Segments dropped for being shorter than the configured minimum.
    pub dropped_short: usize,
    /// Original id of each split line and the ids of its segments.
    pub split_detail: Vec<(u64, Vec<u64>)>,
}

/// Read trajectories from JSONL (`{"traj_id": int, "edge_seq": [int, ...]}`),
/// apply the id remap, validate contiguity against the graph, and split any
/// line that revisits an edge into simple segments. Unsplit lines keep their
/// ids; extra segments get fresh ids above the file's maximum. Segments
/// shorter than `min_len` are dropped.
pub fn load_trajectories(
    path: &Path,
    graph: &RoadGraph,
    remap: Option<&IdRemap>,
    min_len: usize,
) -> Result<(Vec<Trajectory>, IngestStats), IoError> {
    let file = std::fs::File::open(path)?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajLine = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        lines.push((i + 1, parsed));
    }
    let mut next_id = lines
        .iter()
        .map(|(_, l)| l.traj_id)
        .max()
        .map_or(0, |m| m + 1);

    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for (line_no, line) in lines {
        let mut edge_seq = Vec::with_capacity(line.edge_seq.len());
        for &raw in &line.edge_seq {
            let dense = match remap {
                Some(m) => *m.get(&raw).ok_or_else(|| IoError::Model {
                    path: path.display().to_string(),
                    source: pathlet_core::model::ModelError::DanglingReference(raw),
                })?,
                None => u32::try_from(raw).map_err(|_| IoError::Model {
                    path: path.display().to_string(),
                    source: pathlet_core::model::ModelError::DanglingReference(raw),
                })?,
            };
            edge_seq.push(dense);
        }
        let segments =
            split_at_revisits(line.traj_id, &edge_seq, graph).map_err(|source| {
                IoError::Parse {
                    path: path.display().to_string(),
                    line: line_no,
                    message: source.to_string(),
                }
            })?;
        let split = segments.len() > 1;
        let mut ids = Vec::new();
        for (k, seg) in segments.into_iter().enumerate() {
            if seg.len() < min_len {
                stats.dropped_short += 1;
                continue;
            }
            let id = if k == 0 {
                line.traj_id
            } else {
                let id = next_id;
                next_id += 1;
                id
            };
            ids.push(id);
            out.push(Trajectory {
                traj_id: id,
                edge_seq: seg,
            });
        }
        if split {
            stats.revisit_splits += 1;
            stats.split_detail.push((line.traj_id, ids));
        }
    }
    Ok((out, stats))
}

/// Canonical trajectory JSONL writer.
pub fn write_trajectories_jsonl(trajs: &[Trajectory], path: &Path) -> Result<(), IoError> {
    let mut file = std::fs::File::create(path)?;
    for t in trajs {
        let line = TrajLine {
            traj_id: t.traj_id,
            edge_seq: t.edge_seq.iter().map(|&e| e as u64).collect(),
        };
        writeln!(file, "{}", serde_json::to_string(&line).expect("serializes"))?;
    }
    Ok(())
}

/// On-disk dictionary artifact: the unified multi-scale dictionary plus run
/// provenance. Flat runs store a single level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryFile {
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub theta_mode: String,
    /// Ingestion splits trajectories at edge revisits (see README).
    pub split_at_edge_revisit: bool,
    pub multi_scale: MultiScaleDictionary,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dictionary(path: &Path) -> Result<DictionaryFile, IoError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| parse_err(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn chain_graph_roundtrip_is_bit_identical() {
        let dir = tmp();
        let path = dir.path().join("graph.csv");
        std::fs::write(
            &path,
            "edge_id,from_node,to_node\n0,0,1\n1,1,2\n2,2,3\n",
        )
        .unwrap();
        let (graph, remap) = load_graph(&path).unwrap();
        assert_eq!(graph.n_edges(), 3);
        assert!(remap.is_none());
        let out = dir.path().join("echo.csv");
        write_graph_csv(&graph, &out).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&out).unwrap()
        );
    }

    #[test]
    fn duplicate_edge_id_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("graph.csv");
        std::fs::write(&path, "edge_id,from_node,to_node\n0,0,1\n0,1,2\n").unwrap();
        let err = load_graph(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate edge id"), "{err}");
    }

    #[test]
    fn sparse_ids_are_remapped_with_table() {
        let dir = tmp();
        let path = dir.path().join("graph.csv");
        std::fs::write(&path, "edge_id,from_node,to_node\n10,0,1\n40,1,2\n").unwrap();
        let (graph, remap) = load_graph(&path).unwrap();
        let remap = remap.expect("sparse ids need a remap");
        assert_eq!(graph.n_edges(), 2);
        assert_eq!(remap[&10], 0);
        assert_eq!(remap[&40], 1);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tmp();
        let path = dir.path().join("graph.csv");
        std::fs::write(&path, "edge_id,from_node,to_node\n0,0,1\nx,1,2\n").unwrap();
        let err = load_graph(&path).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
    }

    fn chain_graph_file(dir: &Path, n: usize) -> std::path::PathBuf {
        let mut csv = String::from("edge_id,from_node,to_node\n");
        for i in 0..n {
            csv.push_str(&format!("{i},{i},{}\n", i + 1));
        }
        let path = dir.join("graph.csv");
        std::fs::write(&path, csv).unwrap();
        path
    }

    #[test]
    fn trajectory_loading_validates_and_splits() {
        let dir = tmp();
        let gpath = chain_graph_file(dir.path(), 3);
        let (graph, _) = load_graph(&gpath).unwrap();
        let tpath = dir.path().join("trajs.jsonl");
        std::fs::write(
            &tpath,
            "{\"traj_id\":0,\"edge_seq\":[0,1,2]}\n",
        )
        .unwrap();
        let (trajs, stats) = load_trajectories(&tpath, &graph, None, 1).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].edge_seq, vec![0, 1, 2]);
        assert_eq!(stats.revisit_splits, 0);

        // non-contiguous pair reports its index
        std::fs::write(&tpath, "{\"traj_id\":1,\"edge_seq\":[0,2]}\n").unwrap();
        let err = load_trajectories(&tpath, &graph, None, 1).unwrap_err();
        assert!(err.to_string().contains("index 1"), "{err}");
    }

    #[test]
    fn revisit_split_produces_fresh_ids() {
        let dir = tmp();
        let gpath = dir.path().join("graph.csv");
        std::fs::write(&gpath, "edge_id,from_node,to_node\n0,0,1\n1,1,0\n").unwrap();
        let (graph, _) = load_graph(&gpath).unwrap();
        let tpath = dir.path().join("trajs.jsonl");
        std::fs::write(&tpath, "{\"traj_id\":5,\"edge_seq\":[0,1,0,1]}\n").unwrap();
        let (trajs, stats) = load_trajectories(&tpath, &graph, None, 1).unwrap();
        assert_eq!(trajs.len(), 2);
        assert_eq!(trajs[0].traj_id, 5);
        assert_eq!(trajs[1].traj_id, 6, "fresh id above the file maximum");
        assert_eq!(stats.revisit_splits, 1);
        assert_eq!(stats.split_detail, vec![(5, vec![5, 6])]);
    }

    #[test]
    fn jsonl_roundtrip_is_bit_identical() {
        let dir = tmp();
        let gpath = chain_graph_file(dir.path(), 4);
        let (graph, _) = load_graph(&gpath).unwrap();
        let tpath = dir.path().join("trajs.jsonl");
        std::fs::write(
            &tpath,
            "{\"traj_id\":0,\"edge_seq\":[0,1,2]}\n{\"traj_id\":1,\"edge_seq\":[2,3]}\n",
        )
        .unwrap();
        let (trajs, _) = load_trajectories(&tpath, &graph, None, 1).unwrap();
        let out = dir.path().join("echo.jsonl");
        write_trajectories_jsonl(&trajs, &out).unwrap();
        assert_eq!(
            std::fs::read(&tpath).unwrap(),
            std::fs::read(&out).unwrap()
        );
    }

    #[test]
    fn short_segments_are_dropped_by_min_len() {
        let dir = tmp();
        let gpath = chain_graph_file(dir.path(), 3);
        let (graph, _) = load_graph(&gpath).unwrap();
        let tpath = dir.path().join("trajs.jsonl");
        std::fs::write(
            &tpath,
            "{\"traj_id\":0,\"edge_seq\":[0]}\n{\"traj_id\":1,\"edge_seq\":[0,1]}\n",
        )
        .unwrap();
        let (trajs, stats) = load_trajectories(&tpath, &graph, None, 2).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].traj_id, 1);
        assert_eq!(stats.dropped_short, 1);
    }
}
