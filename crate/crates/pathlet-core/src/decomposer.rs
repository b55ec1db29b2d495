//! Exact minimum-pathlet decomposition of a sequence over a fixed dictionary.
//!
//! Concatenation semantics turn the cover problem into a shortest path over
//! sequence positions: position `i` reaches `j` when `seq[i..j]` matches a
//! dictionary entry. The DP maximizes covered symbols first and minimizes the
//! entry count second, so it doubles as a best-partial-cover search when no
//! full decomposition exists.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::model::{EdgeId, Pathlet, PathletId, TrajId, Trajectory};

/// Dictionary entries indexed by first symbol for the position DP.
#[derive(Debug, Clone)]
pub struct SeqIndex {
    ids: Vec<PathletId>,
    seqs: Vec<Vec<u32>>,
    by_first: BTreeMap<u32, Vec<usize>>,
}

impl SeqIndex {
    pub fn new(items: impl IntoIterator<Item = (PathletId, Vec<u32>)>) -> Self {
        let mut ids = Vec::new();
        let mut seqs = Vec::new();
        let mut by_first: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (id, seq) in items {
            if seq.is_empty() {
                continue;
            }
            by_first.entry(seq[0]).or_default().push(ids.len());
            ids.push(id);
            seqs.push(seq);
        }
        Self {
            ids,
            seqs,
            by_first,
        }
    }

    /// Index over pathlet expansions (edge sequences).
    pub fn from_pathlets(pathlets: &[Pathlet]) -> Self {
        Self::new(
            pathlets
                .iter()
                .map(|p| (p.pathlet_id, p.edge_seq.clone())),
        )
    }

    /// Index over super-pathlet token sequences (children ids).
    pub fn from_children(pathlets: &[Pathlet]) -> Self {
        Self::new(pathlets.iter().map(|p| {
            (
                p.pathlet_id,
                p.children.clone().unwrap_or_else(|| p.edge_seq.clone()),
            )
        }))
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn matches_at<'a>(&'a self, seq: &'a [u32], i: usize) -> impl Iterator<Item = usize> + 'a {
        self.by_first
            .get(&seq[i])
            .into_iter()
            .flatten()
            .copied()
            .filter(move |&k| {
                let cand = &self.seqs[k];
                i + cand.len() <= seq.len() && &seq[i..i + cand.len()] == cand.as_slice()
            })
    }
}

/// Decomposition of one sequence over a dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub traj_id: TrajId,
    /// Chosen dictionary ids in path order.
    pub pathlet_ids: Vec<PathletId>,
    /// Number of chosen pathlets; equals the representation cost when covered.
    pub cost: usize,
    pub covered: bool,
    /// Positions left uncovered (empty when covered).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncovered_positions: Vec<usize>,
}

/// Sparse binary representation vector over a unified dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationVector {
    pub traj_id: TrajId,
    /// Active column indices, ascending.
    pub active_ids: Vec<u32>,
    /// Edge ids at positions no column could cover.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncovered_edges: Vec<EdgeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DpCell {
    covered: usize,
    count: usize,
}

/// Decompose `seq` over the index: maximum coverage first, minimum entry
/// count second. Among optimal choices at a position the longest match wins
/// (and matching over skipping).
pub fn decompose_seq(traj_id: TrajId, seq: &[u32], index: &SeqIndex) -> Decomposition {
    let n = seq.len();
    let mut dp = vec![
        DpCell {
            covered: 0,
            count: 0
        };
        n + 1
    ];
    for i in (0..n).rev() {
        // skipping position i leaves it uncovered
        let mut best = dp[i + 1];
        for k in index.matches_at(seq, i) {
            let len = index.seqs[k].len();
            let next = dp[i + len];
            let cand = DpCell {
                covered: len + next.covered,
                count: 1 + next.count,
            };
            if cand.covered > best.covered
                || (cand.covered == best.covered && cand.count < best.count)
            {
                best = cand;
            }
        }
        dp[i] = best;
    }

    let mut pathlet_ids = Vec::new();
    let mut uncovered_positions = Vec::new();
    let mut i = 0;
    while i < n {
        let target = dp[i];
        let mut chosen: Option<usize> = None;
        for k in index.matches_at(seq, i) {
            let len = index.seqs[k].len();
            let next = dp[i + len];
            if len + next.covered == target.covered && 1 + next.count == target.count {
                match chosen {
                    Some(cur) if index.seqs[cur].len() >= len => {}
                    _ => chosen = Some(k),
                }
            }
        }
        match chosen {
            Some(k) => {
                pathlet_ids.push(index.ids[k]);
                i += index.seqs[k].len();
            }
            None => {
                uncovered_positions.push(i);
                i += 1;
            }
        }
    }
    let covered = uncovered_positions.is_empty();
    debug_assert_eq!(dp[0].covered, n - uncovered_positions.len());
    debug_assert!(reconstructs(seq, &pathlet_ids, &uncovered_positions, index));
    Decomposition {
        traj_id,
        cost: pathlet_ids.len(),
        covered,
        pathlet_ids,
        uncovered_positions,
    }
}

/// Exactness check: the chosen pathlets, interleaved with the uncovered
/// positions, reproduce the sequence verbatim.
fn reconstructs(
    seq: &[u32],
    pathlet_ids: &[PathletId],
    uncovered: &[usize],
    index: &SeqIndex,
) -> bool {
    let mut rebuilt: Vec<Option<u32>> = vec![None; seq.len()];
    for &pos in uncovered {
        rebuilt[pos] = Some(seq[pos]);
    }
    let mut cursor = 0;
    for &id in pathlet_ids {
        let k = match index.ids.iter().position(|&x| x == id) {
            Some(k) => k,
            None => return false,
        };
        while cursor < seq.len() && rebuilt[cursor].is_some() {
            cursor += 1;
        }
        for &sym in &index.seqs[k] {
            if cursor >= seq.len() || rebuilt[cursor].is_some() {
                return false;
            }
            rebuilt[cursor] = Some(sym);
            cursor += 1;
        }
    }
    rebuilt
        .iter()
        .zip(seq)
        .all(|(r, &s)| *r == Some(s))
}

/// Immutable decomposition engine over one dictionary.
#[derive(Debug, Clone)]
pub struct Decomposer {
    index: SeqIndex,
}

impl Decomposer {
    pub fn new(pathlets: &[Pathlet]) -> Self {
        Self {
            index: SeqIndex::from_pathlets(pathlets),
        }
    }

    pub fn from_index(index: SeqIndex) -> Self {
        Self { index }
    }

    pub fn decompose(&self, traj: &Trajectory) -> Decomposition {
        decompose_seq(traj.traj_id, &traj.edge_seq, &self.index)
    }

    /// Minimum-support cover of a new trajectory over a unified dictionary,
    /// reported as a sparse binary vector plus any uncoverable edges.
    pub fn encode(&self, traj: &Trajectory) -> RepresentationVector {
        let d = self.decompose(traj);
        let mut active_ids: Vec<u32> = d.pathlet_ids.clone();
        active_ids.sort_unstable();
        active_ids.dedup();
        let uncovered_edges = d
            .uncovered_positions
            .iter()
            .map(|&i| traj.edge_seq[i])
            .collect();
        RepresentationVector {
            traj_id: traj.traj_id,
            active_ids,
            uncovered_edges,
        }
    }
}

/// Fraction of fully covered trajectories and of covered edge occurrences.
pub fn cover_ratio(trajs: &[Trajectory], decomposer: &Decomposer) -> (f64, f64) {
    if trajs.is_empty() {
        return (1.0, 1.0);
    }
    let mut covered_trajs = 0usize;
    let mut total_edges = 0usize;
    let mut uncovered_edges = 0usize;
    for t in trajs {
        let d = decomposer.decompose(t);
        if d.covered {
            covered_trajs += 1;
        }
        total_edges += t.edge_seq.len();
        uncovered_edges += d.uncovered_positions.len();
    }
    let traj_cover = covered_trajs as f64 / trajs.len() as f64;
    let edge_cover = if total_edges == 0 {
        1.0
    } else {
        1.0 - uncovered_edges as f64 / total_edges as f64
    };
    (traj_cover, edge_cover)
}
