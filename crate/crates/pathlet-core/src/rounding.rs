//! Randomized rounding of the fractional solution, feasibility repair,
//! dictionary extraction, and Monte-Carlo verification of the probabilistic
//! guarantee.
//!
//! Each entry of the binary solution is an independent Bernoulli draw with
//! marginal `min(1, theta * R*[i,j])`. A sample is "good" when it covers
//! every incidence entry (coverage, not equality: overlapping covers are
//! accepted and exact-partition semantics are restored by the decomposer)
//! and its cost stays within `2*theta*(lambda+1)/lambda` of the fractional
//! objective. Sampling repeats up to a configured number of attempts; if no
//! good sample appears, the cheapest sample is repaired by inserting
//! length-1 candidates for every uncovered entry, which always restores
//! feasibility.

use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::matrix::{DenseMatrix, SparseBinaryMatrix};
use crate::model::{Dictionary, DictionaryOrigin, Pathlet, PathletId};
use crate::solver::true_objective;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoundingError {
    #[error("solution does not cover the incidence matrix")]
    InfeasibleSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingConfig {
    /// Marginal inflation factor.
    pub theta: f64,
    pub max_attempts: u32,
    pub seed: u64,
}

/// How the rounding inflation factor is derived from the instance size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Experimental default `ln(2|T|)/4`.
    QuarterLn2T,
    /// Theory-safe `ln(2|T|)`.
    Ln2T,
    /// Caller-supplied value.
    Explicit,
}

impl ThetaMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaMode::QuarterLn2T => "quarter_ln2t",
            ThetaMode::Ln2T => "ln2t",
            ThetaMode::Explicit => "explicit",
        }
    }
}

/// Resolve a theta value for an instance with `n_seqs` sequences.
pub fn theta_value(mode: ThetaMode, explicit: Option<f64>, n_seqs: usize) -> f64 {
    let ln2t = libm::log((2 * n_seqs.max(1)) as f64);
    match mode {
        ThetaMode::QuarterLn2T => 0.25 * ln2t,
        ThetaMode::Ln2T => ln2t,
        ThetaMode::Explicit => explicit.unwrap_or(ln2t),
    }
}

/// Rounded binary solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySolution {
    /// `n_candidates x n_sequences` binary assignment.
    pub assignment: SparseBinaryMatrix,
    /// Whether the assignment covers every incidence entry.
    pub feasible: bool,
    /// Exact selection objective of the assignment.
    pub cost: f64,
    pub attempts_used: u32,
    pub seed: u64,
    /// Set when greedy repair had to add singleton rows.
    pub repaired: bool,
    /// Set when an un-repaired sample met the cost bound and coverage.
    pub good_event: bool,
}

/// One Bernoulli sample of the fractional assignment. The draw order is
/// row-major and one uniform is consumed per entry, so a fixed
/// `(r_star, theta, seed, stream)` tuple reproduces the sample exactly.
fn sample_stream(r_star: &DenseMatrix, theta: f64, seed: u64, stream: u64) -> Vec<(u32, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut entries = Vec::new();
    for i in 0..r_star.n_rows() {
        for (j, &v) in r_star.row(i).iter().enumerate() {
            let q = (theta * v).min(1.0);
            // u in [0, 1): q = 0 never fires, q = 1 always fires
            if rng.random::<f64>() < q {
                entries.push((i as u32, j as u32));
            }
        }
    }
    entries
}

/// Single rounding sample (stream 0 of the seed).
pub fn randomized_round(r_star: &DenseMatrix, theta: f64, seed: u64) -> SparseBinaryMatrix {
    let entries = sample_stream(r_star, theta, seed, 0);
    SparseBinaryMatrix::from_entries(r_star.n_rows(), r_star.n_cols(), entries)
        .expect("sample entries are in range by construction")
}

/// Whether the binary assignment covers every entry of the incidence matrix:
/// for each (e, t) with M set there is a selected candidate containing e.
pub fn covers(
    assignment: &SparseBinaryMatrix,
    edge_cand: &SparseBinaryMatrix,
    edge_traj: &SparseBinaryMatrix,
) -> bool {
    uncovered_entries(assignment, edge_cand, edge_traj).is_empty()
}

fn uncovered_entries(
    assignment: &SparseBinaryMatrix,
    edge_cand: &SparseBinaryMatrix,
    edge_traj: &SparseBinaryMatrix,
) -> Vec<(u32, u32)> {
    let mut missing = Vec::new();
    for (e, t) in edge_traj.entries() {
        let hit = edge_cand.row(e).iter().any(|&p| assignment.get(p, t));
        if !hit {
            missing.push((e, t));
        }
    }
    missing
}

fn binary_cost(assignment: &SparseBinaryMatrix, lambda: f64) -> f64 {
    assignment.n_nonempty_rows() as f64 + lambda * assignment.nnz() as f64
}

/// Sample until a feasible sample within the cost bound appears, falling
/// back to the cheapest repaired sample. Repair sets the length-1 candidate
/// row for every uncovered entry; feasibility is guaranteed because every
/// symbol retains its singleton candidate.
pub fn round_until_good(
    r_star: &DenseMatrix,
    edge_cand: &SparseBinaryMatrix,
    edge_traj: &SparseBinaryMatrix,
    candidates: &CandidateSet,
    lambda: f64,
    config: &RoundingConfig,
) -> BinarySolution {
    let cost_bound =
        2.0 * config.theta * ((lambda + 1.0) / lambda) * true_objective(r_star, lambda);
    let attempts = config.max_attempts.max(1);
    let mut best: Option<(f64, u32, Vec<(u32, u32)>, bool)> = None;
    for attempt in 0..attempts {
        let entries = sample_stream(r_star, config.theta, config.seed, attempt as u64);
        let assignment =
            SparseBinaryMatrix::from_entries(r_star.n_rows(), r_star.n_cols(), entries.clone())
                .expect("in range");
        let missing = uncovered_entries(&assignment, edge_cand, edge_traj);
        if missing.is_empty() {
            let cost = binary_cost(&assignment, lambda);
            if cost <= cost_bound {
                return BinarySolution {
                    assignment,
                    feasible: true,
                    cost,
                    attempts_used: attempt + 1,
                    seed: config.seed,
                    repaired: false,
                    good_event: true,
                };
            }
            if best.as_ref().is_none_or(|(c, ..)| cost < *c) {
                best = Some((cost, attempt + 1, entries, false));
            }
        } else {
            // repair: cover each missing (e, t) with the singleton of e
            let mut repaired_entries = entries;
            let mut ok = true;
            for (e, t) in missing {
                match candidates.singleton_row(e) {
                    Some(p) => repaired_entries.push((p, t)),
                    None => ok = false,
                }
            }
            let assignment = SparseBinaryMatrix::from_entries(
                r_star.n_rows(),
                r_star.n_cols(),
                repaired_entries.clone(),
            )
            .expect("in range");
            if ok {
                let cost = binary_cost(&assignment, lambda);
                if best.as_ref().is_none_or(|(c, ..)| cost < *c) {
                    best = Some((cost, attempt + 1, repaired_entries, true));
                }
            }
        }
    }
    let (cost, attempts_used, entries, repaired) =
        best.expect("singleton candidates guarantee at least one repaired sample");
    let assignment =
        SparseBinaryMatrix::from_entries(r_star.n_rows(), r_star.n_cols(), entries)
            .expect("in range");
    let feasible = covers(&assignment, edge_cand, edge_traj);
    BinarySolution {
        assignment,
        feasible,
        cost,
        attempts_used,
        seed: config.seed,
        repaired,
        good_event: false,
    }
}

/// Dictionary = candidates whose assignment row is used by any sequence.
/// Ids are renumbered densely in candidate order; `level` and `cell` come
/// from the origin.
pub fn extract_dictionary(
    solution: &BinarySolution,
    candidates: &CandidateSet,
    origin: DictionaryOrigin,
) -> Result<Dictionary, RoundingError> {
    if !solution.feasible {
        return Err(RoundingError::InfeasibleSolution);
    }
    let mut pathlets = Vec::new();
    for p in 0..candidates.len() {
        if !solution.assignment.row(p as u32).is_empty() {
            pathlets.push(Pathlet {
                pathlet_id: pathlets.len() as PathletId,
                edge_seq: candidates.seq(p as PathletId).to_vec(),
                level: origin.level,
                support: candidates.support(p as PathletId),
                cell: origin.cell,
                children: None,
            });
        }
    }
    Ok(Dictionary { pathlets, origin })
}

/// Monte-Carlo check of the rounding guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theta: f64,
    pub lambda: f64,
    pub n_samples: u32,
    /// Empirical frequency of the good event (coverage and cost bound).
    pub empirical_p: f64,
    /// `1/2 - |T| * exp(-theta)`.
    pub theoretical_lower_bound: f64,
    pub pass: bool,
    /// The bound is non-positive at this theta and holds trivially.
    pub vacuous: bool,
    pub theta_mode: String,
}

/// Estimate the good-event probability over `n_samples` independent samples
/// and compare against the theoretical lower bound minus a 3-sigma binomial
/// margin. A failed comparison is reported, not raised.
pub fn verify_bound(
    r_star: &DenseMatrix,
    edge_cand: &SparseBinaryMatrix,
    edge_traj: &SparseBinaryMatrix,
    theta: f64,
    lambda: f64,
    n_samples: u32,
    seed: u64,
    theta_mode: ThetaMode,
) -> BoundReport {
    let cost_bound = 2.0 * theta * ((lambda + 1.0) / lambda) * true_objective(r_star, lambda);
    let mut good = 0u32;
    for s in 0..n_samples {
        let entries = sample_stream(r_star, theta, seed, s as u64);
        let assignment =
            SparseBinaryMatrix::from_entries(r_star.n_rows(), r_star.n_cols(), entries)
                .expect("in range");
        if binary_cost(&assignment, lambda) <= cost_bound
            && covers(&assignment, edge_cand, edge_traj)
        {
            good += 1;
        }
    }
    let n_seqs = edge_traj.n_cols();
    let empirical_p = good as f64 / n_samples.max(1) as f64;
    let theoretical_lower_bound = 0.5 - n_seqs as f64 * libm::exp(-theta);
    let vacuous = theoretical_lower_bound <= 0.0;
    let var = (empirical_p * (1.0 - empirical_p)).max(0.25 / n_samples.max(1) as f64);
    let sigma = libm::sqrt(var / n_samples.max(1) as f64);
    let pass = vacuous || empirical_p >= theoretical_lower_bound - 3.0 * sigma;
    BoundReport {
        theta,
        lambda,
        n_samples,
        empirical_p,
        theoretical_lower_bound,
        pass,
        vacuous,
        theta_mode: String::from(theta_mode.as_str()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{build_matrices, enumerate_candidates};
    use crate::model::Trajectory;

    fn traj(id: u64, seq: &[u32]) -> Trajectory {
        Trajectory {
            traj_id: id,
            edge_seq: seq.to_vec(),
        }
    }

    fn origin() -> DictionaryOrigin {
        DictionaryOrigin {
            lambda: 0.1,
            theta: 1.0,
            seed: 0,
            level: 0,
            cell: None,
            config_hash: None,
        }
    }

    #[test]
    fn zero_marginals_never_fire_and_clipped_marginals_always_fire() {
        let mut r = DenseMatrix::zeros(2, 2);
        r.set(0, 0, 0.0);
        r.set(1, 1, 0.6);
        for seed in 0..50 {
            let s = randomized_round(&r, 2.0, seed);
            assert!(!s.get(0, 0), "zero marginal fired");
            assert!(s.get(1, 1), "clipped marginal at 1.2 must always fire");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut r = DenseMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                r.set(i, j, 0.3 + 0.1 * (i as f64));
            }
        }
        let a = randomized_round(&r, 1.3, 99);
        let b = randomized_round(&r, 1.3, 99);
        assert_eq!(a, b);
        let c = randomized_round(&r, 1.3, 100);
        assert_ne!(a, c, "different seeds should differ on a 16-entry matrix");
    }

    #[test]
    fn empirical_frequency_matches_marginal() {
        let mut r = DenseMatrix::zeros(1, 1);
        r.set(0, 0, 0.3);
        let theta = 2.0;
        let n = 10_000u32;
        let mut hits = 0;
        for s in 0..n {
            let entries = sample_stream(&r, theta, 4242, s as u64);
            hits += entries.len() as u32;
        }
        let freq = hits as f64 / n as f64;
        assert!(
            (freq - 0.6).abs() <= 0.015,
            "frequency {freq} outside 0.6 +/- 0.015"
        );
    }

    #[test]
    fn binary_feasible_r_star_is_returned_unchanged() {
        let trajs = [traj(0, &[0, 1])];
        let cands = enumerate_candidates(&trajs, 2, 1);
        let mats = build_matrices(&trajs, &cands, 2).unwrap();
        // R* already binary: the pair candidate covers the only trajectory
        let mut r = DenseMatrix::zeros(cands.len(), 1);
        let pair = cands.seqs().iter().position(|s| s.len() == 2).unwrap();
        r.set(pair, 0, 1.0);
        let sol = round_until_good(
            &r,
            &mats.edge_cand,
            &mats.edge_traj,
            &cands,
            0.1,
            &RoundingConfig {
                theta: 1.5,
                max_attempts: 3,
                seed: 5,
            },
        );
        assert!(sol.feasible && sol.good_event && !sol.repaired);
        assert_eq!(sol.attempts_used, 1);
        assert!(sol.assignment.get(pair as u32, 0));
        assert_eq!(sol.assignment.nnz(), 1);
    }

    #[test]
    fn adversarial_zero_r_star_is_repaired_with_singletons() {
        let trajs = [traj(0, &[0, 1, 2])];
        let cands = enumerate_candidates(&trajs, 3, 1);
        let mats = build_matrices(&trajs, &cands, 3).unwrap();
        let r = DenseMatrix::zeros(cands.len(), 1);
        let sol = round_until_good(
            &r,
            &mats.edge_cand,
            &mats.edge_traj,
            &cands,
            0.1,
            &RoundingConfig {
                theta: 1.0,
                max_attempts: 3,
                seed: 1,
            },
        );
        assert!(sol.feasible);
        assert!(sol.repaired);
        assert!(!sol.good_event);
        // exactly the three singletons are set
        assert_eq!(sol.assignment.nnz(), 3);
        for e in 0..3u32 {
            let p = cands.singleton_row(e).unwrap();
            assert!(sol.assignment.get(p, 0));
        }
    }

    #[test]
    fn extract_dictionary_keeps_used_rows_only() {
        let trajs = [traj(0, &[0, 1])];
        let cands = enumerate_candidates(&trajs, 2, 1);
        let assignment = SparseBinaryMatrix::from_entries(
            cands.len(),
            1,
            [(cands.singleton_row(0).unwrap(), 0), (cands.singleton_row(1).unwrap(), 0)],
        )
        .unwrap();
        let sol = BinarySolution {
            assignment,
            feasible: true,
            cost: 2.2,
            attempts_used: 1,
            seed: 0,
            repaired: false,
            good_event: true,
        };
        let dict = extract_dictionary(&sol, &cands, origin()).unwrap();
        assert_eq!(dict.size(), 2);
        assert!(dict.validate());
        assert!(dict.pathlets.iter().all(|p| p.edge_seq.len() == 1));
        // independent row scan matches the extracted size
        let used = (0..cands.len())
            .filter(|&p| !sol.assignment.row(p as u32).is_empty())
            .count();
        assert_eq!(dict.size(), used);
    }

    #[test]
    fn extract_dictionary_rejects_infeasible() {
        let trajs = [traj(0, &[0])];
        let cands = enumerate_candidates(&trajs, 1, 1);
        let sol = BinarySolution {
            assignment: SparseBinaryMatrix::zeros(cands.len(), 1),
            feasible: false,
            cost: 0.0,
            attempts_used: 3,
            seed: 0,
            repaired: false,
            good_event: false,
        };
        assert_eq!(
            extract_dictionary(&sol, &cands, origin()).unwrap_err(),
            RoundingError::InfeasibleSolution
        );
    }

    #[test]
    fn empty_solution_on_empty_instance_gives_empty_dictionary() {
        let cands = enumerate_candidates(&[], 2, 1);
        let sol = BinarySolution {
            assignment: SparseBinaryMatrix::zeros(0, 0),
            feasible: true,
            cost: 0.0,
            attempts_used: 1,
            seed: 0,
            repaired: false,
            good_event: true,
        };
        let dict = extract_dictionary(&sol, &cands, origin()).unwrap();
        assert_eq!(dict.size(), 0);
    }

    #[test]
    fn vacuous_bound_at_ln_2t_is_flagged() {
        let trajs = [traj(0, &[0, 1])];
        let cands = enumerate_candidates(&trajs, 2, 1);
        let mats = build_matrices(&trajs, &cands, 2).unwrap();
        let r = DenseMatrix::zeros(cands.len(), 1);
        let n_t = 1usize;
        let theta = libm::log((2 * n_t) as f64);
        let report = verify_bound(
            &r,
            &mats.edge_cand,
            &mats.edge_traj,
            theta,
            0.1,
            1000,
            3,
            ThetaMode::Ln2T,
        );
        assert!(report.vacuous, "bound at ln(2|T|) is exactly zero");
        assert!(report.pass);
        assert!((report.theoretical_lower_bound).abs() < 1e-12);
    }

    #[test]
    fn ln_4t_bound_is_one_quarter() {
        let n_t = 3usize;
        let theta = libm::log((4 * n_t) as f64);
        let lower = 0.5 - n_t as f64 * libm::exp(-theta);
        assert!((lower - 0.25).abs() < 1e-12);
    }
}
