//! End-to-end learning on one instance: enumerate candidates, build the
//! incidence matrices, solve the relaxation, round, and extract the
//! dictionary. Hierarchical learning reuses this per cell and per lift.

use alloc::vec::Vec;

use crate::candidates::{
    build_matrices, enumerate_candidates, CandidateError, CandidateSet, ProblemMatrices,
};
use crate::decomposer::RepresentationVector;
use crate::matrix::SparseBinaryMatrix;
use crate::model::{Dictionary, DictionaryOrigin, Pathlet, Trajectory};
use crate::rounding::{
    extract_dictionary, round_until_good, theta_value, BinarySolution, RoundingConfig,
    RoundingError, ThetaMode,
};
use crate::solver::{solve_relaxed, FractionalSolution, SolverConfig, SolverError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Rounding(#[from] RoundingError),
}

/// Everything one learning instance needs besides its input sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnParams {
    pub solver: SolverConfig,
    pub theta_mode: ThetaMode,
    pub theta_explicit: Option<f64>,
    pub c_min: u32,
    pub max_len: usize,
    pub max_attempts: u32,
    pub seed: u64,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            theta_mode: ThetaMode::QuarterLn2T,
            theta_explicit: None,
            c_min: crate::candidates::DEFAULT_C_MIN,
            max_len: crate::candidates::DEFAULT_MAX_LEN,
            max_attempts: 3,
            seed: 0,
        }
    }
}

/// Artifacts of one learning instance.
#[derive(Debug, Clone)]
pub struct FlatOutcome {
    pub dictionary: Dictionary,
    pub candidates: CandidateSet,
    pub matrices: ProblemMatrices,
    pub fractional: FractionalSolution,
    pub binary: BinarySolution,
    pub theta: f64,
}

impl FlatOutcome {
    /// Clean exit: solver converged and rounding found a good sample.
    pub fn clean(&self) -> bool {
        self.fractional.converged && !self.binary.repaired
    }
}

/// Stable per-instance seed derivation (splitmix64 of the mixed key), so
/// concurrent cells and lifts draw independent streams from one master seed.
pub fn derive_seed(seed: u64, level: u32, cell: u32) -> u64 {
    let mut z = seed
        ^ ((level as u64) << 32)
        ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run the full pipeline on one instance over an alphabet of `n_symbols`.
pub fn learn_flat(
    trajs: &[Trajectory],
    n_symbols: usize,
    level: u32,
    cell: Option<u32>,
    params: &LearnParams,
) -> Result<FlatOutcome, PipelineError> {
    let candidates = enumerate_candidates(trajs, params.max_len, params.c_min);
    let mats = build_matrices(trajs, &candidates, n_symbols)?;
    let fractional = solve_relaxed(&mats, &params.solver)?;
    let theta = theta_value(params.theta_mode, params.theta_explicit, trajs.len());
    let rounding = RoundingConfig {
        theta,
        max_attempts: params.max_attempts,
        seed: derive_seed(params.seed, level, cell.unwrap_or(u32::MAX)),
    };
    let binary = round_until_good(
        &fractional.assignment,
        &mats.edge_cand,
        &mats.edge_traj,
        &candidates,
        params.solver.lambda,
        &rounding,
    );
    let origin = DictionaryOrigin {
        lambda: params.solver.lambda,
        theta,
        seed: rounding.seed,
        level,
        cell,
        config_hash: None,
    };
    let dictionary = extract_dictionary(&binary, &candidates, origin)?;
    Ok(FlatOutcome {
        dictionary,
        candidates,
        matrices: mats,
        fractional,
        binary,
        theta,
    })
}

/// Encode new trajectories over a fixed unified dictionary via the same
/// relax-and-round strategy used for learning, instead of the exact
/// position DP. Kept for fidelity experiments; the DP is the default
/// encoder. Entries no column can cover are excluded up front and reported;
/// uncovered-but-coverable entries left by sampling are repaired with the
/// lowest-index covering column.
pub fn encode_relaxed(
    trajs: &[Trajectory],
    columns: &[Pathlet],
    n_symbols: usize,
    solver: &SolverConfig,
    theta: f64,
    max_attempts: u32,
    seed: u64,
) -> Result<Vec<RepresentationVector>, PipelineError> {
    let col_entries = columns.iter().enumerate().flat_map(|(c, p)| {
        p.edge_seq.iter().map(move |&e| (e, c as u32))
    });
    let edge_cand = SparseBinaryMatrix::from_entries(n_symbols, columns.len(), col_entries)
        .map_err(CandidateError::from)?;
    // keep only the coverable incidence entries; the rest are reported
    let mut uncoverable: Vec<Vec<u32>> = alloc::vec![Vec::new(); trajs.len()];
    let mut m_entries = Vec::new();
    for (t, traj) in trajs.iter().enumerate() {
        for &e in &traj.edge_seq {
            if edge_cand.row(e).is_empty() {
                uncoverable[t].push(e);
            } else {
                m_entries.push((e, t as u32));
            }
        }
    }
    let edge_traj = SparseBinaryMatrix::from_entries(n_symbols, trajs.len(), m_entries)
        .map_err(CandidateError::from)?;
    let mats = ProblemMatrices {
        edge_traj,
        edge_cand,
    };
    let fractional = solve_relaxed(&mats, solver)?;
    let mut binary = crate::rounding::randomized_round(&fractional.assignment, theta, seed);
    for attempt in 1..max_attempts.max(1) {
        if crate::rounding::covers(&binary, &mats.edge_cand, &mats.edge_traj) {
            break;
        }
        binary = crate::rounding::randomized_round(
            &fractional.assignment,
            theta,
            seed.wrapping_add(attempt as u64),
        );
    }
    // repair leftover gaps with the lowest-index covering column
    let mut entries: Vec<(u32, u32)> = binary.entries().collect();
    for (e, t) in mats.edge_traj.entries() {
        let hit = mats.edge_cand.row(e).iter().any(|&c| binary.get(c, t));
        if !hit {
            entries.push((mats.edge_cand.row(e)[0], t));
        }
    }
    let repaired = SparseBinaryMatrix::from_entries(columns.len(), trajs.len(), entries)
        .map_err(CandidateError::from)?;
    let vectors = trajs
        .iter()
        .enumerate()
        .map(|(t, traj)| {
            let active_ids: Vec<u32> = (0..columns.len() as u32)
                .filter(|&c| repaired.get(c, t as u32))
                .collect();
            let mut uncovered = core::mem::take(&mut uncoverable[t]);
            uncovered.sort_unstable();
            uncovered.dedup();
            RepresentationVector {
                traj_id: traj.traj_id,
                active_ids,
                uncovered_edges: uncovered,
            }
        })
        .collect();
    Ok(vectors)
}
