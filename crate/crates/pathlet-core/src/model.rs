//! Domain types: road graphs, trajectories, pathlets, and dictionaries.
//!
//! All types are immutable after construction and safe to share across
//! threads. Validation happens in the constructors; downstream modules assume
//! the invariants hold (dense edge ids, contiguous simple trajectories,
//! pairwise-distinct dictionary entries).

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Dense edge index into a [`RoadGraph`]; also the symbol type for token
/// sequences at coarser hierarchy levels.
pub type EdgeId = u32;
pub type NodeId = u64;
pub type TrajId = u64;
pub type PathletId = u32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("duplicate edge id {0}")]
    DuplicateEdge(EdgeId),
    #[error("edge ids are not dense in [0, {n_edges}): missing id {missing}")]
    NonDenseIds { n_edges: usize, missing: EdgeId },
    #[error("reference to unknown edge id {0}")]
    DanglingReference(u64),
    #[error("some edges carry geometry and others do not")]
    PartialGeometry,
    #[error("edge {0} has a geometry polyline with fewer than 2 points")]
    DegenerateGeometry(EdgeId),
    #[error("trajectory {traj_id} breaks contiguity at index {index}")]
    NonContiguous { traj_id: TrajId, index: usize },
    #[error("trajectory {traj_id} revisits edge {edge} (split it first)")]
    RepeatedEdge { traj_id: TrajId, edge: EdgeId },
    #[error("trajectory {0} is empty")]
    EmptyTrajectory(TrajId),
}

/// One directed edge of the road network, with optional planar geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub edge_id: EdgeId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    /// Planar polyline in meters; required for hierarchy mode.
    pub geometry: Option<Vec<(f64, f64)>>,
}

/// Directed graph given as an edge list with dense ids in `[0, n_edges)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    edges: Vec<EdgeRecord>,
    has_geometry: bool,
}

impl RoadGraph {
    pub fn new(mut edges: Vec<EdgeRecord>) -> Result<Self, ModelError> {
        edges.sort_by_key(|e| e.edge_id);
        for pair in edges.windows(2) {
            if pair[0].edge_id == pair[1].edge_id {
                return Err(ModelError::DuplicateEdge(pair[0].edge_id));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.edge_id as usize != i {
                return Err(ModelError::NonDenseIds {
                    n_edges: edges.len(),
                    missing: i as EdgeId,
                });
            }
        }
        let with_geometry = edges.iter().filter(|e| e.geometry.is_some()).count();
        if with_geometry != 0 && with_geometry != edges.len() {
            return Err(ModelError::PartialGeometry);
        }
        for e in &edges {
            if let Some(g) = &e.geometry {
                if g.len() < 2 {
                    return Err(ModelError::DegenerateGeometry(e.edge_id));
                }
            }
        }
        let has_geometry = with_geometry == edges.len() && !edges.is_empty();
        Ok(Self {
            edges,
            has_geometry,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &EdgeRecord {
        &self.edges[id as usize]
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn has_geometry(&self) -> bool {
        self.has_geometry
    }

    pub fn contains(&self, id: EdgeId) -> bool {
        (id as usize) < self.edges.len()
    }

    /// Two edges chain when the head node of `a` is the tail node of `b`.
    pub fn contiguous(&self, a: EdgeId, b: EdgeId) -> bool {
        self.edges[a as usize].to_node == self.edges[b as usize].from_node
    }

    /// Whether `seq` is a contiguous path on this graph (ids in range).
    pub fn is_path(&self, seq: &[EdgeId]) -> bool {
        if seq.is_empty() || seq.iter().any(|&e| !self.contains(e)) {
            return false;
        }
        seq.windows(2).all(|w| self.contiguous(w[0], w[1]))
    }

    /// Midpoint of the edge geometry (mean of polyline endpoints).
    pub fn midpoint(&self, id: EdgeId) -> Option<(f64, f64)> {
        let g = self.edges[id as usize].geometry.as_ref()?;
        let a = g.first()?;
        let b = g.last()?;
        Some(((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0))
    }
}

/// Ordered contiguous edge sequence on a graph. Simple: no edge repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub traj_id: TrajId,
    pub edge_seq: Vec<EdgeId>,
}

impl Trajectory {
    /// Validate contiguity, range, simplicity, and non-emptiness.
    pub fn validated(
        traj_id: TrajId,
        edge_seq: Vec<EdgeId>,
        graph: &RoadGraph,
    ) -> Result<Self, ModelError> {
        if edge_seq.is_empty() {
            return Err(ModelError::EmptyTrajectory(traj_id));
        }
        check_refs_and_contiguity(traj_id, &edge_seq, graph)?;
        let mut seen = alloc::collections::BTreeSet::new();
        for &e in &edge_seq {
            if !seen.insert(e) {
                return Err(ModelError::RepeatedEdge { traj_id, edge: e });
            }
        }
        Ok(Self { traj_id, edge_seq })
    }

    pub fn len(&self) -> usize {
        self.edge_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_seq.is_empty()
    }
}

fn check_refs_and_contiguity(
    traj_id: TrajId,
    edge_seq: &[EdgeId],
    graph: &RoadGraph,
) -> Result<(), ModelError> {
    for &e in edge_seq {
        if !graph.contains(e) {
            return Err(ModelError::DanglingReference(e as u64));
        }
    }
    for (k, w) in edge_seq.windows(2).enumerate() {
        if !graph.contiguous(w[0], w[1]) {
            return Err(ModelError::NonContiguous {
                traj_id,
                index: k + 1,
            });
        }
    }
    Ok(())
}

/// Split an edge sequence into simple segments, cutting whenever an edge id
/// recurs within the current segment. The recurring edge starts the next
/// segment, so `[0, 1, 0]` becomes `[0, 1]` and `[0]`.
///
/// The full sequence must be contiguous and reference known edges; it is an
/// error otherwise (splitting does not excuse a broken input).
pub fn split_at_revisits(
    traj_id: TrajId,
    edge_seq: &[EdgeId],
    graph: &RoadGraph,
) -> Result<Vec<Vec<EdgeId>>, ModelError> {
    if edge_seq.is_empty() {
        return Err(ModelError::EmptyTrajectory(traj_id));
    }
    check_refs_and_contiguity(traj_id, edge_seq, graph)?;
    let mut segments = Vec::new();
    let mut current: Vec<EdgeId> = Vec::new();
    let mut in_current = alloc::collections::BTreeSet::new();
    for &e in edge_seq {
        if in_current.contains(&e) {
            segments.push(core::mem::take(&mut current));
            in_current.clear();
        }
        in_current.insert(e);
        current.push(e);
    }
    if !current.is_empty() {
        segments.push(current);
    }
    Ok(segments)
}

/// A reusable subpath. At a leaf level `edge_seq` lists graph edges directly;
/// a coarser "super-pathlet" stores the finer-level ids it concatenates in
/// `children` and its full expansion to graph edges in `edge_seq`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pathlet {
    #[serde(rename = "id")]
    pub pathlet_id: PathletId,
    pub edge_seq: Vec<EdgeId>,
    /// Hierarchy level; 0 is the whole-map (coarsest) level.
    pub level: u32,
    /// Number of training sequences containing this pathlet.
    pub support: u32,
    /// Leaf cell the pathlet was learned in, if it came from a partition cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<u32>,
    /// Finer-level pathlet ids whose concatenation this pathlet represents.
    #[serde(
        rename = "children_ids",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub children: Option<Vec<PathletId>>,
}

/// Provenance recorded with every learned dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryOrigin {
    pub lambda: f64,
    pub theta: f64,
    pub seed: u64,
    pub level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Selected pathlets of one level, with ids dense in `[0, len)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub pathlets: Vec<Pathlet>,
    pub origin: DictionaryOrigin,
}

impl Dictionary {
    /// Number of pathlets in the dictionary.
    pub fn size(&self) -> usize {
        self.pathlets.len()
    }

    /// Check the structural invariants: dense ids and pairwise-distinct
    /// edge sequences.
    pub fn validate(&self) -> bool {
        let mut seen = alloc::collections::BTreeSet::new();
        for (i, p) in self.pathlets.iter().enumerate() {
            if p.pathlet_id as usize != i || !seen.insert(&p.edge_seq) {
                return false;
            }
        }
        true
    }
}
