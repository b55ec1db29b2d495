//! Candidate pathlet enumeration, frequency pre-filtering, and construction
//! of the sparse incidence matrices consumed by the solver.
//!
//! A candidate is any distinct contiguous subpath (up to `max_len` symbols)
//! of a training sequence. Support counts the sequences that contain the
//! subpath at least once, not occurrences. Candidates below the `c_min`
//! support threshold are dropped, except length-1 subpaths, which are always
//! retained so that a feasible cover exists for every input.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::matrix::{MatrixError, SparseBinaryMatrix};
use crate::model::{EdgeId, PathletId, Trajectory};

/// Paper default for the support threshold.
pub const DEFAULT_C_MIN: u32 = 3;
/// Cap on candidate subpath length; bounds the candidate count per sequence.
pub const DEFAULT_MAX_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error("sequence {seq_index} references symbol {symbol} outside alphabet of size {n_symbols}")]
    IndexOutOfRange {
        seq_index: usize,
        symbol: u32,
        n_symbols: usize,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Enumerated candidate subpaths in a fixed deterministic order
/// (by length, then lexicographic symbol sequence).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    seqs: Vec<Vec<u32>>,
    supports: Vec<u32>,
    singleton_rows: BTreeMap<u32, PathletId>,
    pub max_len: usize,
    pub c_min: u32,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn seq(&self, id: PathletId) -> &[u32] {
        &self.seqs[id as usize]
    }

    pub fn seqs(&self) -> &[Vec<u32>] {
        &self.seqs
    }

    pub fn support(&self, id: PathletId) -> u32 {
        self.supports[id as usize]
    }

    pub fn supports(&self) -> &[u32] {
        &self.supports
    }

    /// Candidate row holding the length-1 subpath `[symbol]`, if present.
    pub fn singleton_row(&self, symbol: u32) -> Option<PathletId> {
        self.singleton_rows.get(&symbol).copied()
    }
}

/// Enumerate all distinct contiguous subpaths of the given sequences.
///
/// Every subpath of length `<= max_len` occurring in at least `c_min`
/// sequences is kept; length-1 subpaths are kept unconditionally. Empty input
/// yields an empty set.
pub fn enumerate_candidates(
    trajs: &[Trajectory],
    max_len: usize,
    c_min: u32,
) -> CandidateSet {
    let mut counts: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    for t in trajs {
        let seq = &t.edge_seq;
        let mut seen: BTreeSet<&[u32]> = BTreeSet::new();
        for start in 0..seq.len() {
            let top = (seq.len() - start).min(max_len);
            for len in 1..=top {
                seen.insert(&seq[start..start + len]);
            }
        }
        for sub in seen {
            *counts.entry(sub.to_vec()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(Vec<u32>, u32)> = counts
        .into_iter()
        .filter(|(seq, support)| seq.len() == 1 || *support >= c_min)
        .collect();
    kept.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));

    let mut singleton_rows = BTreeMap::new();
    for (i, (seq, _)) in kept.iter().enumerate() {
        if seq.len() == 1 {
            singleton_rows.insert(seq[0], i as PathletId);
        }
    }
    let (seqs, supports) = kept.into_iter().unzip();
    CandidateSet {
        seqs,
        supports,
        singleton_rows,
        max_len,
        c_min,
    }
}

/// The two incidence matrices of one learning instance: symbols-by-sequences
/// (which symbols each sequence traverses) and symbols-by-candidates (which
/// symbols each candidate contains).
#[derive(Debug, Clone)]
pub struct ProblemMatrices {
    /// `n_symbols x n_sequences`; entry (e, t) set when sequence t uses e.
    pub edge_traj: SparseBinaryMatrix,
    /// `n_symbols x n_candidates`; entry (e, p) set when candidate p contains e.
    pub edge_cand: SparseBinaryMatrix,
}

/// Build the incidence matrices over an alphabet of `n_symbols` symbols.
pub fn build_matrices(
    trajs: &[Trajectory],
    candidates: &CandidateSet,
    n_symbols: usize,
) -> Result<ProblemMatrices, CandidateError> {
    for (j, t) in trajs.iter().enumerate() {
        if let Some(&bad) = t.edge_seq.iter().find(|&&e| e as usize >= n_symbols) {
            return Err(CandidateError::IndexOutOfRange {
                seq_index: j,
                symbol: bad,
                n_symbols,
            });
        }
    }
    let traj_entries = trajs.iter().enumerate().flat_map(|(j, t)| {
        t.edge_seq.iter().map(move |&e| (e as EdgeId, j as u32))
    });
    let edge_traj = SparseBinaryMatrix::from_entries(n_symbols, trajs.len(), traj_entries)?;

    let cand_entries = candidates.seqs().iter().enumerate().flat_map(|(p, seq)| {
        seq.iter().map(move |&e| (e as EdgeId, p as u32))
    });
    let edge_cand =
        SparseBinaryMatrix::from_entries(n_symbols, candidates.len(), cand_entries)?;
    Ok(ProblemMatrices {
        edge_traj,
        edge_cand,
    })
}
