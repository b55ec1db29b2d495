//! Seeded synthetic corpora: a grid road network and trajectories built as
//! shared "corridor" paths with random prefix/suffix walks. The corridor
//! list is returned as ground truth for recovery checks.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{EdgeId, EdgeRecord, NodeId, RoadGraph, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Nodes per grid side.
    pub grid: u32,
    pub n_corridors: u32,
    /// Edges per corridor.
    pub corridor_len: u32,
    pub n_trajs: u32,
    /// Maximum random prefix/suffix length added on each side of a corridor.
    pub noise: f64,
    pub seed: u64,
    /// Node spacing in meters.
    pub spacing: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            grid: 10,
            n_corridors: 3,
            corridor_len: 8,
            n_trajs: 200,
            noise: 2.0,
            seed: 7,
            spacing: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub graph: RoadGraph,
    pub trajectories: Vec<Trajectory>,
    /// Ground-truth corridors, as edge sequences.
    pub corridors: Vec<Vec<EdgeId>>,
}

/// Build an n-by-n grid graph with one directed edge per direction between
/// adjacent nodes. Horizontal edges come first (west-east pair per slot),
/// then vertical (north-south pair per slot). A 10x10 grid has 360 edges.
pub fn grid_graph(n: u32, spacing: f64) -> RoadGraph {
    let node = |r: u32, c: u32| (r as NodeId) * (n as NodeId) + c as NodeId;
    let coord = |r: u32, c: u32| (c as f64 * spacing, r as f64 * spacing);
    let mut edges = Vec::new();
    let mut push = |from: (u32, u32), to: (u32, u32)| {
        let id = edges.len() as EdgeId;
        edges.push(EdgeRecord {
            edge_id: id,
            from_node: node(from.0, from.1),
            to_node: node(to.0, to.1),
            geometry: Some(alloc::vec![coord(from.0, from.1), coord(to.0, to.1)]),
        });
    };
    for r in 0..n {
        for c in 0..n.saturating_sub(1) {
            push((r, c), (r, c + 1));
            push((r, c + 1), (r, c));
        }
    }
    for r in 0..n.saturating_sub(1) {
        for c in 0..n {
            push((r, c), (r + 1, c));
            push((r + 1, c), (r, c));
        }
    }
    RoadGraph::new(edges).expect("grid construction is well formed")
}

fn outgoing(graph: &RoadGraph, node: NodeId) -> Vec<EdgeId> {
    graph
        .edges()
        .iter()
        .filter(|e| e.from_node == node)
        .map(|e| e.edge_id)
        .collect()
}

fn incoming(graph: &RoadGraph, node: NodeId) -> Vec<EdgeId> {
    graph
        .edges()
        .iter()
        .filter(|e| e.to_node == node)
        .map(|e| e.edge_id)
        .collect()
}

/// Random simple walk of up to `len` edges starting at `node`; stops early at
/// dead ends. `avoid` edges are never used.
fn walk_forward(
    graph: &RoadGraph,
    node: NodeId,
    len: usize,
    avoid: &BTreeSet<EdgeId>,
    rng: &mut ChaCha8Rng,
) -> Vec<EdgeId> {
    let mut seq = Vec::new();
    let mut used = avoid.clone();
    let mut at = node;
    for _ in 0..len {
        let options: Vec<EdgeId> = outgoing(graph, at)
            .into_iter()
            .filter(|e| !used.contains(e))
            .collect();
        match options.choose(rng) {
            Some(&e) => {
                used.insert(e);
                at = graph.edge(e).to_node;
                seq.push(e);
            }
            None => break,
        }
    }
    seq
}

/// Random simple walk of up to `len` edges ending at `node`, returned in
/// path order.
fn walk_backward(
    graph: &RoadGraph,
    node: NodeId,
    len: usize,
    avoid: &BTreeSet<EdgeId>,
    rng: &mut ChaCha8Rng,
) -> Vec<EdgeId> {
    let mut rev = Vec::new();
    let mut used = avoid.clone();
    let mut at = node;
    for _ in 0..len {
        let options: Vec<EdgeId> = incoming(graph, at)
            .into_iter()
            .filter(|e| !used.contains(e))
            .collect();
        match options.choose(rng) {
            Some(&e) => {
                used.insert(e);
                at = graph.edge(e).from_node;
                rev.push(e);
            }
            None => break,
        }
    }
    rev.reverse();
    rev
}

/// Generate the corpus. Deterministic for a fixed parameter set.
pub fn gen_synthetic(params: &SynthParams) -> SynthCorpus {
    let graph = grid_graph(params.grid, params.spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_nodes = (params.grid as NodeId) * (params.grid as NodeId);

    let mut corridors = Vec::new();
    for _ in 0..params.n_corridors {
        // retry from random start nodes until a full-length corridor fits
        let mut best: Vec<EdgeId> = Vec::new();
        for _ in 0..32 {
            let start = rng.random_range(0..n_nodes);
            let w = walk_forward(
                &graph,
                start,
                params.corridor_len as usize,
                &BTreeSet::new(),
                &mut rng,
            );
            if w.len() > best.len() {
                best = w;
            }
            if best.len() == params.corridor_len as usize {
                break;
            }
        }
        assert!(!best.is_empty(), "grid too small for any corridor");
        corridors.push(best);
    }

    let noise_max = libm::round(params.noise.max(0.0)) as usize;
    let mut trajectories = Vec::new();
    for i in 0..params.n_trajs {
        let corridor = &corridors[rng.random_range(0..corridors.len())];
        let avoid: BTreeSet<EdgeId> = corridor.iter().copied().collect();
        let pre_len = if noise_max == 0 {
            0
        } else {
            rng.random_range(0..=noise_max)
        };
        let suf_len = if noise_max == 0 {
            0
        } else {
            rng.random_range(0..=noise_max)
        };
        let head = graph.edge(corridor[0]).from_node;
        let tail = graph.edge(*corridor.last().unwrap()).to_node;
        let prefix = walk_backward(&graph, head, pre_len, &avoid, &mut rng);
        let mut avoid_suffix = avoid.clone();
        avoid_suffix.extend(prefix.iter().copied());
        let suffix = walk_forward(&graph, tail, suf_len, &avoid_suffix, &mut rng);

        let mut edge_seq = prefix;
        edge_seq.extend_from_slice(corridor);
        edge_seq.extend(suffix);
        debug_assert!(graph.is_path(&edge_seq));
        trajectories.push(Trajectory {
            traj_id: i as u64,
            edge_seq,
        });
    }
    SynthCorpus {
        graph,
        trajectories,
        corridors,
    }
}
