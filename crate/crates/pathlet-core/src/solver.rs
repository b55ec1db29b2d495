//! Relaxed selection problem: minimize the number of dictionary rows plus a
//! weighted count of assignments, subject to the incidence constraint, over
//! fractional assignments in `[0, 1]`.
//!
//! The exact objective `sum_i max(R_i,:) + lambda * sum R` is non-smooth in
//! the row maxima and the equality constraint `D R = M` is not handled by
//! plain clipping, so the solver descends a smooth surrogate: a soft row-max
//! (log-sum-exp with temperature `tau`, or a p-norm) plus a quadratic
//! penalty `mu * ||D R - M||_F^2`. The penalty weight grows on a schedule
//! until the worst residual entry is within tolerance; the temperature is
//! annealed when the objective plateaus. Iterates are clipped into the box
//! after every step, and the step size backtracks on surrogate increase.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, ProblemMatrices};
use crate::matrix::{DenseMatrix, SparseBinaryMatrix};
use crate::model::{PathletId, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("shape mismatch: D is {d_rows}x{d_cols}, R is {r_rows}x{r_cols}, M is {m_rows}x{m_cols}")]
    ShapeMismatch {
        d_rows: usize,
        d_cols: usize,
        r_rows: usize,
        r_cols: usize,
        m_rows: usize,
        m_cols: usize,
    },
    #[error("invalid solver config: {0}")]
    InvalidConfig(&'static str),
    #[error("sequence {0} cannot be segmented from the candidate set")]
    Uncoverable(usize),
}

/// Differentiable stand-in for the row-max term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothing {
    /// `tau * ln(sum exp(x_i / tau))`; overestimates the max by at most
    /// `tau * ln(n)`.
    LogSumExp { tau: f64 },
    /// `(sum x_i^p)^(1/p)` on nonnegative entries.
    PNorm { p: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::LogSumExp { tau: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Trade-off between dictionary size and assignment count.
    pub lambda: f64,
    /// Base step size; halved within an iteration until the surrogate stops
    /// increasing.
    pub learning_rate: f64,
    /// Convergence tolerance on successive true-objective values.
    pub epsilon: f64,
    /// Initial constraint penalty weight.
    pub penalty_start: f64,
    /// Multiplier applied to the penalty weight on schedule.
    pub penalty_growth: f64,
    /// Double the penalty every this many iterations while infeasible.
    pub penalty_interval: u32,
    /// Worst-entry residual threshold for declaring the constraint met.
    pub feasibility_tol: f64,
    pub smoothing: Smoothing,
    /// Anneal floor for the log-sum-exp temperature.
    pub tau_min: f64,
    pub max_iters: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 0.05,
            epsilon: 1e-5,
            penalty_start: 1.0,
            penalty_growth: 2.0,
            penalty_interval: 200,
            feasibility_tol: 1e-3,
            smoothing: Smoothing::default(),
            tau_min: 0.004,
            max_iters: 4000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lambda > 0.0) {
            return Err(SolverError::InvalidConfig("lambda must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(SolverError::InvalidConfig("learning_rate must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(SolverError::InvalidConfig("epsilon must be positive"));
        }
        if !(self.penalty_start > 0.0) {
            return Err(SolverError::InvalidConfig("penalty_start must be positive"));
        }
        if self.max_iters < 1 {
            return Err(SolverError::InvalidConfig("max_iters must be at least 1"));
        }
        match self.smoothing {
            Smoothing::LogSumExp { tau } if !(tau > 0.0) => {
                Err(SolverError::InvalidConfig("tau must be positive"))
            }
            Smoothing::PNorm { p } if !(p > 1.0) => {
                Err(SolverError::InvalidConfig("p must exceed 1"))
            }
            _ => Ok(()),
        }
    }
}

/// One row of the solver trace; `residual` is the worst-entry constraint
/// violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u32,
    pub true_objective: f64,
    pub surrogate: f64,
    pub residual: f64,
}

/// Fractional solution of the relaxed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    /// `n_candidates x n_sequences` assignment weights in `[0, 1]`.
    pub assignment: DenseMatrix,
    pub objective_trace: Vec<TraceRow>,
    pub converged: bool,
    pub config: SolverConfig,
    /// Worst-entry residual of `D R - M` at the final iterate.
    pub residual_max: f64,
    /// Frobenius norm of `D R - M` at the final iterate.
    pub residual_fro: f64,
    /// Upper bound on the per-row gap between the smoothed and exact row max.
    pub smoothing_gap_per_row: f64,
}

/// Exact selection objective: `sum_i max(R_i,:) + lambda * sum R`.
pub fn true_objective(assignment: &DenseMatrix, lambda: f64) -> f64 {
    let mut total = 0.0;
    let mut sum = 0.0;
    for i in 0..assignment.n_rows() {
        let row = assignment.row(i);
        let mut row_max = 0.0f64;
        for &v in row {
            row_max = row_max.max(v);
            sum += v;
        }
        total += row_max;
    }
    total + lambda * sum
}

fn smooth_row(row: &[f64], smoothing: Smoothing, weights: Option<&mut [f64]>) -> f64 {
    if row.is_empty() {
        if let Some(w) = weights {
            w.fill(0.0);
        }
        return 0.0;
    }
    match smoothing {
        Smoothing::LogSumExp { tau } => {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for &v in row {
                s += libm::exp((v - m) / tau);
            }
            if let Some(w) = weights {
                for (wi, &v) in w.iter_mut().zip(row) {
                    *wi = libm::exp((v - m) / tau) / s;
                }
            }
            m + tau * libm::log(s)
        }
        Smoothing::PNorm { p } => {
            let mut s = 0.0;
            for &v in row {
                s += libm::pow(v.max(0.0), p);
            }
            let val = if s > 0.0 { libm::pow(s, 1.0 / p) } else { 0.0 };
            if let Some(w) = weights {
                if s > 0.0 {
                    for (wi, &v) in w.iter_mut().zip(row) {
                        *wi = val * libm::pow(v.max(0.0), p - 1.0) / s;
                    }
                } else {
                    w.fill(0.0);
                }
            }
            val
        }
    }
}

/// Dense residual `D R - M`, written into `out` (`n_symbols x n_seqs`).
fn residual_into(
    d: &SparseBinaryMatrix,
    m: &SparseBinaryMatrix,
    r: &DenseMatrix,
    out: &mut DenseMatrix,
) {
    out.fill(0.0);
    let n_cols = r.n_cols();
    for e in 0..d.n_rows() {
        // split borrows: rows of `out` and `r` never alias (distinct matrices)
        for &p in d.row(e as u32) {
            let src = r.row(p as usize);
            let dst = out.row_mut(e);
            for j in 0..n_cols {
                dst[j] += src[j];
            }
        }
        let dst = out.row_mut(e);
        for &t in m.row(e as u32) {
            dst[t as usize] -= 1.0;
        }
    }
}

fn check_shapes(
    d: &SparseBinaryMatrix,
    m: &SparseBinaryMatrix,
    r: &DenseMatrix,
) -> Result<(), SolverError> {
    if d.n_cols() != r.n_rows() || d.n_rows() != m.n_rows() || r.n_cols() != m.n_cols() {
        return Err(SolverError::ShapeMismatch {
            d_rows: d.n_rows(),
            d_cols: d.n_cols(),
            r_rows: r.n_rows(),
            r_cols: r.n_cols(),
            m_rows: m.n_rows(),
            m_cols: m.n_cols(),
        });
    }
    Ok(())
}

struct Workspace {
    residual: DenseMatrix,
    weights: Vec<f64>,
}

impl Workspace {
    fn new(n_symbols: usize, n_seqs: usize) -> Self {
        Self {
            residual: DenseMatrix::zeros(n_symbols, n_seqs),
            weights: vec![0.0; n_seqs],
        }
    }

    /// Surrogate value, optionally with its gradient.
    fn eval(
        &mut self,
        r: &DenseMatrix,
        d: &SparseBinaryMatrix,
        m: &SparseBinaryMatrix,
        lambda: f64,
        mu: f64,
        smoothing: Smoothing,
        mut grad: Option<&mut DenseMatrix>,
    ) -> f64 {
        let mut value = 0.0;
        for i in 0..r.n_rows() {
            let w = if grad.is_some() {
                Some(&mut self.weights[..])
            } else {
                None
            };
            value += smooth_row(r.row(i), smoothing, w);
            if let Some(g) = grad.as_deref_mut() {
                let row = g.row_mut(i);
                for (gj, &wj) in row.iter_mut().zip(self.weights.iter()) {
                    *gj = wj + lambda;
                }
            }
        }
        value += lambda * r.as_slice().iter().sum::<f64>();

        residual_into(d, m, r, &mut self.residual);
        let penalty: f64 = self.residual.as_slice().iter().map(|v| v * v).sum();
        value += mu * penalty;
        if let Some(g) = grad {
            // d/dR of mu*||DR - M||^2 is 2*mu * D^T (DR - M)
            for e in 0..d.n_rows() {
                let res_row = self.residual.row(e);
                for &p in d.row(e as u32) {
                    let dst = g.row_mut(p as usize);
                    for (gj, rj) in dst.iter_mut().zip(res_row.iter()) {
                        *gj += 2.0 * mu * rj;
                    }
                }
            }
        }
        value
    }

    fn residual_stats(&self) -> (f64, f64) {
        let mut worst = 0.0f64;
        let mut sq = 0.0;
        for &v in self.residual.as_slice() {
            worst = worst.max(v.abs());
            sq += v * v;
        }
        (worst, libm::sqrt(sq))
    }
}

/// Surrogate objective and its gradient at `assignment`.
pub fn surrogate_objective_and_gradient(
    assignment: &DenseMatrix,
    mats: &ProblemMatrices,
    lambda: f64,
    mu: f64,
    smoothing: Smoothing,
) -> Result<(f64, DenseMatrix), SolverError> {
    let d = &mats.edge_cand;
    let m = &mats.edge_traj;
    check_shapes(d, m, assignment)?;
    let mut ws = Workspace::new(m.n_rows(), m.n_cols());
    let mut grad = DenseMatrix::zeros(assignment.n_rows(), assignment.n_cols());
    let value = ws.eval(assignment, d, m, lambda, mu, smoothing, Some(&mut grad));
    Ok((value, grad))
}

const BACKTRACK_LIMIT: u32 = 60;
const PLATEAU_RUN: u32 = 5;
// Armijo sufficient-decrease coefficient for the projected step.
const ARMIJO_C: f64 = 1e-4;
// Safeguards for the spectral (Barzilai-Borwein) trial step.
const STEP_MIN: f64 = 1e-8;
const STEP_MAX: f64 = 1e2;

/// Solve the relaxed problem by projected gradient descent from the zero
/// matrix. Returns a flagged (never failing) solution; `converged` is false
/// when the iteration budget ran out first.
pub fn solve_relaxed(
    mats: &ProblemMatrices,
    config: &SolverConfig,
) -> Result<FractionalSolution, SolverError> {
    config.validate()?;
    let d = &mats.edge_cand;
    let m = &mats.edge_traj;
    let n_cands = d.n_cols();
    let n_seqs = m.n_cols();
    let mut r = DenseMatrix::zeros(n_cands, n_seqs);
    check_shapes(d, m, &r)?;

    let mut ws = Workspace::new(m.n_rows(), n_seqs);
    let mut grad = DenseMatrix::zeros(n_cands, n_seqs);
    let mut mu = config.penalty_start;
    let mut smoothing = config.smoothing;
    let lambda = config.lambda;

    let mut trace = Vec::new();
    let value0 = ws.eval(&r, d, m, lambda, mu, smoothing, None);
    let (res_max0, _) = ws.residual_stats();
    trace.push(TraceRow {
        iter: 0,
        true_objective: true_objective(&r, lambda),
        surrogate: value0,
        residual: res_max0,
    });

    let mut converged = false;
    let mut plateau_run = 0u32;
    let mut candidate = r.clone();
    // previous accepted iterate and its gradient, for the spectral step
    let mut prev: Option<(DenseMatrix, DenseMatrix)> = None;

    for iter in 1..=config.max_iters {
        let value = ws.eval(&r, d, m, lambda, mu, smoothing, Some(&mut grad));
        // Barzilai-Borwein trial step from the last accepted move; it adapts
        // to local curvature and crosses flat valleys that a fixed step
        // crawls through. Falls back to the configured rate at phase starts.
        let bb_step = prev.as_ref().and_then(|(pr, pg)| {
            let mut dx_dx = 0.0;
            let mut dx_dg = 0.0;
            for ((x, px), (g, pg)) in r
                .as_slice()
                .iter()
                .zip(pr.as_slice())
                .zip(grad.as_slice().iter().zip(pg.as_slice()))
            {
                let dx = x - px;
                dx_dx += dx * dx;
                dx_dg += dx * (g - pg);
            }
            (dx_dg > 0.0 && dx_dx > 0.0).then(|| (dx_dx / dx_dg).clamp(STEP_MIN, STEP_MAX))
        });
        let mut step = bb_step.unwrap_or(config.learning_rate);
        let mut accepted = false;
        for _ in 0..BACKTRACK_LIMIT {
            candidate.as_mut_slice().copy_from_slice(r.as_slice());
            for (c, g) in candidate
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice().iter())
            {
                *c -= step * g;
            }
            candidate.clip(0.0, 1.0);
            // Armijo along the projection arc: accept only with sufficient
            // decrease relative to g . (R' - R), which is negative for any
            // productive projected step
            let dir_dot_grad: f64 = candidate
                .as_slice()
                .iter()
                .zip(r.as_slice())
                .zip(grad.as_slice())
                .map(|((c, rr), g)| g * (c - rr))
                .sum();
            if dir_dot_grad < 0.0 {
                let next_value = ws.eval(&candidate, d, m, lambda, mu, smoothing, None);
                if next_value <= value + ARMIJO_C * dir_dot_grad {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted {
            // candidate currently holds the accepted iterate; keep the old
            // iterate and gradient for the next spectral step
            core::mem::swap(&mut r, &mut candidate);
            prev = Some((candidate.clone(), grad.clone()));
        }
        // residual workspace currently holds the last evaluated candidate;
        // recompute at the accepted iterate for an accurate trace row
        let surrogate = ws.eval(&r, d, m, lambda, mu, smoothing, None);
        let (res_max, _) = ws.residual_stats();
        let objective = true_objective(&r, lambda);
        let last = trace.last().unwrap();
        let delta_true = (objective - last.true_objective).abs();
        let delta_surr = (surrogate - last.surrogate).abs();
        trace.push(TraceRow {
            iter,
            true_objective: objective,
            surrogate,
            residual: res_max,
        });
        if !surrogate.is_finite() {
            break;
        }

        // the true objective can wander along near-flat cover exchanges
        // while the (monotone) surrogate certifies stationarity, so either
        // signal counts toward the plateau
        if delta_true < config.epsilon || delta_surr < config.epsilon {
            plateau_run += 1;
        } else {
            plateau_run = 0;
        }
        let stuck = !accepted || plateau_run >= PLATEAU_RUN;
        if stuck {
            plateau_run = 0;
            if res_max > config.feasibility_tol {
                mu *= config.penalty_growth;
                prev = None;
                continue;
            }
            if let Smoothing::LogSumExp { tau } = smoothing {
                if tau > config.tau_min {
                    smoothing = Smoothing::LogSumExp { tau: tau * 0.5 };
                    prev = None;
                    continue;
                }
            }
            if delta_true < config.epsilon {
                converged = true;
                break;
            }
        }
        if iter % config.penalty_interval == 0 && res_max > config.feasibility_tol {
            mu *= config.penalty_growth;
            prev = None;
        }
    }

    let final_value = ws.eval(&r, d, m, lambda, mu, smoothing, None);
    let (residual_max, residual_fro) = ws.residual_stats();
    debug_assert!(final_value.is_finite() || !converged);
    let smoothing_gap_per_row = match smoothing {
        Smoothing::LogSumExp { tau } => {
            if n_seqs > 0 {
                tau * libm::log(n_seqs as f64)
            } else {
                0.0
            }
        }
        Smoothing::PNorm { p } => {
            if n_seqs > 0 {
                libm::pow(n_seqs as f64, 1.0 / p) - 1.0
            } else {
                0.0
            }
        }
    };
    Ok(FractionalSolution {
        assignment: r,
        objective_trace: trace,
        converged,
        config: config.clone(),
        residual_max,
        residual_fro,
        smoothing_gap_per_row,
    })
}

/// Per-sequence assignment chosen by the weighted lower-bound baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSolution {
    /// For each input sequence, the candidate rows of its chosen segmentation,
    /// in path order.
    pub assignments: Vec<Vec<PathletId>>,
    /// Total weighted objective over all sequences.
    pub objective: f64,
}

/// Decouple the problem per sequence: each candidate use costs
/// `lambda + 1 / support`, and every sequence independently picks its
/// minimum-weight segmentation by dynamic programming over positions.
/// Weight ties break toward the lexicographically smallest pathlet sequence.
pub fn baseline_per_trajectory(
    trajs: &[Trajectory],
    candidates: &CandidateSet,
    lambda: f64,
) -> Result<BaselineSolution, SolverError> {
    // index candidates by first symbol for the position DP
    let mut by_first: alloc::collections::BTreeMap<u32, Vec<PathletId>> =
        alloc::collections::BTreeMap::new();
    for (p, seq) in candidates.seqs().iter().enumerate() {
        by_first.entry(seq[0]).or_default().push(p as PathletId);
    }
    let weight = |p: PathletId| lambda + 1.0 / candidates.support(p) as f64;

    let mut assignments = Vec::with_capacity(trajs.len());
    let mut objective = 0.0;
    for (ti, t) in trajs.iter().enumerate() {
        let n = t.edge_seq.len();
        let mut best = vec![f64::INFINITY; n + 1];
        best[n] = 0.0;
        for i in (0..n).rev() {
            if let Some(ps) = by_first.get(&t.edge_seq[i]) {
                for &p in ps {
                    let seq = candidates.seq(p);
                    if i + seq.len() <= n && &t.edge_seq[i..i + seq.len()] == seq {
                        let w = weight(p) + best[i + seq.len()];
                        if w < best[i] {
                            best[i] = w;
                        }
                    }
                }
            }
        }
        if !best[0].is_finite() {
            return Err(SolverError::Uncoverable(ti));
        }
        // reconstruct front-first; candidate order within a bucket is by
        // ascending row id, which is (length, lex) order, so the first
        // optimal hit is the lexicographically smallest pathlet sequence
        let mut chosen = Vec::new();
        let mut i = 0;
        while i < n {
            let ps = &by_first[&t.edge_seq[i]];
            let mut picked = None;
            for &p in ps {
                let seq = candidates.seq(p);
                if i + seq.len() <= n && &t.edge_seq[i..i + seq.len()] == seq {
                    let w = weight(p) + best[i + seq.len()];
                    if (w - best[i]).abs() <= 1e-12 {
                        picked = Some(p);
                        break;
                    }
                }
            }
            let p = picked.expect("DP invariant: an optimal continuation exists");
            objective += weight(p);
            i += candidates.seq(p).len();
            chosen.push(p);
        }
        assignments.push(chosen);
    }
    Ok(BaselineSolution {
        assignments,
        objective,
    })
}
