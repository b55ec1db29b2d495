//! Tiny-instance checks against an exhaustive oracle: the relaxed optimum
//! lower-bounds the exhaustive binary optimum (up to smoothing slack), and
//! the rounded solution is always feasible with cost inside the
//! probabilistic bound for almost every seed.

use pathlet_core::candidates::{build_matrices, enumerate_candidates, CandidateSet};
use pathlet_core::model::Trajectory;
use pathlet_core::rounding::{round_until_good, RoundingConfig};
use pathlet_core::solver::{solve_relaxed, true_objective, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct TinyInstance {
    trajs: Vec<Trajectory>,
    n_symbols: usize,
}

/// Random sub-ranges of a short chain; at most 4 trajectories and, with the
/// length cap below, at most 10 candidates.
fn tiny_instance(seed: u64) -> TinyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain_len = rng.random_range(3..=5usize);
    let n_trajs = rng.random_range(1..=4usize);
    let trajs = (0..n_trajs)
        .map(|i| {
            let len = rng.random_range(2..=chain_len);
            let start = rng.random_range(0..=chain_len - len);
            Trajectory {
                traj_id: i as u64,
                edge_seq: (start as u32..(start + len) as u32).collect(),
            }
        })
        .collect();
    TinyInstance {
        trajs,
        n_symbols: chain_len,
    }
}

/// Minimum segmentation count of `seq` using only candidate rows in `allowed`,
/// or None when it cannot be segmented.
fn min_segmentation(seq: &[u32], cands: &CandidateSet, allowed: u32) -> Option<usize> {
    let n = seq.len();
    let mut dp = vec![usize::MAX; n + 1];
    dp[n] = 0;
    for i in (0..n).rev() {
        for p in 0..cands.len() {
            if allowed & (1 << p) == 0 {
                continue;
            }
            let cand = cands.seq(p as u32);
            if i + cand.len() <= n && &seq[i..i + cand.len()] == cand && dp[i + cand.len()] != usize::MAX
            {
                dp[i] = dp[i].min(1 + dp[i + cand.len()]);
            }
        }
    }
    (dp[0] != usize::MAX).then_some(dp[0])
}

/// Exhaustive optimum of the binary selection problem under exact
/// segmentation semantics: enumerate every candidate subset and give each
/// trajectory its cheapest segmentation within the subset.
fn exhaustive_optimum(trajs: &[Trajectory], cands: &CandidateSet, lambda: f64) -> f64 {
    assert!(cands.len() <= 16, "oracle is exponential in candidates");
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << cands.len()) {
        let mut cost = (subset.count_ones()) as f64;
        let mut feasible = true;
        for t in trajs {
            match min_segmentation(&t.edge_seq, cands, subset) {
                Some(rc) => cost += lambda * rc as f64,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && cost < best {
            best = cost;
        }
    }
    best
}

#[test]
fn relaxation_lower_bounds_exhaustive_binary_optimum() {
    let lambda = 0.1;
    for seed in 0..10 {
        let inst = tiny_instance(seed);
        let cands = enumerate_candidates(&inst.trajs, 2, 1);
        assert!(cands.len() <= 10, "instance grew past the candidate cap");
        let mats = build_matrices(&inst.trajs, &cands, inst.n_symbols).unwrap();
        let sol = solve_relaxed(&mats, &SolverConfig::default()).unwrap();
        let c_star = true_objective(&sol.assignment, lambda);
        let c_opt = exhaustive_optimum(&inst.trajs, &cands, lambda);
        assert!(c_opt.is_finite(), "singletons make every instance feasible");
        assert!(
            c_star <= c_opt + 0.05,
            "seed {seed}: relaxed objective {c_star} above binary optimum {c_opt}"
        );
    }
}

#[test]
fn rounded_cost_meets_probabilistic_bound_on_most_seeds() {
    let lambda = 0.1;
    let mut within_bound = 0;
    let total = 50;
    for seed in 0..total {
        let inst = tiny_instance(1000 + seed);
        let cands = enumerate_candidates(&inst.trajs, 2, 1);
        let mats = build_matrices(&inst.trajs, &cands, inst.n_symbols).unwrap();
        let sol = solve_relaxed(&mats, &SolverConfig::default()).unwrap();
        let theta = ((2 * inst.trajs.len()) as f64).ln();
        let rounded = round_until_good(
            &sol.assignment,
            &mats.edge_cand,
            &mats.edge_traj,
            &cands,
            lambda,
            &RoundingConfig {
                theta,
                max_attempts: 3,
                seed: 9000 + seed,
            },
        );
        assert!(rounded.feasible, "seed {seed}: infeasible after repair");
        let c_opt = exhaustive_optimum(&inst.trajs, &cands, lambda);
        let bound = 2.0 * theta * ((lambda + 1.0) / lambda) * c_opt;
        if rounded.cost <= bound {
            within_bound += 1;
        }
    }
    assert!(
        within_bound * 10 >= total * 9,
        "only {within_bound}/{total} runs met the cost bound"
    );
}
