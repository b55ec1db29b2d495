//! Metric suite: dictionary compactness, representation cost, cover ratios,
//! an MDL compression score, the lambda sweep and partial-reconstruction
//! harnesses, and the departure-time feature encoding.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::decomposer::Decomposer;
use crate::model::{Pathlet, Trajectory};
use crate::pipeline::{learn_flat, LearnParams, PipelineError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("metric requires a nonempty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Provenance stamped on reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub lambda: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Dictionary size divided by the training corpus size.
    pub dictionary_size_over_t: f64,
    /// Mean pathlet count over fully covered trajectories.
    pub mean_representation_cost: f64,
    pub trajectory_cover: f64,
    pub edge_cover: f64,
    pub mdl_score: f64,
    pub covered_count: usize,
    pub total_count: usize,
    pub provenance: Provenance,
}

/// Evaluate a dictionary on the train and test splits. The size ratio uses
/// the training corpus size on both reports; cost averages covered
/// trajectories only and the covered/total counts are reported beside it.
pub fn evaluate(
    pathlets: &[Pathlet],
    train: &[Trajectory],
    test: &[Trajectory],
    n_symbols: usize,
    provenance: &Provenance,
) -> Result<(EvalReport, EvalReport), EvalError> {
    let decomposer = Decomposer::new(pathlets);
    let train_report = report_for(pathlets, &decomposer, train, train.len(), n_symbols, provenance)?;
    let test_report = report_for(pathlets, &decomposer, test, train.len(), n_symbols, provenance)?;
    Ok((train_report, test_report))
}

fn report_for(
    pathlets: &[Pathlet],
    decomposer: &Decomposer,
    trajs: &[Trajectory],
    n_train: usize,
    n_symbols: usize,
    provenance: &Provenance,
) -> Result<EvalReport, EvalError> {
    if trajs.is_empty() {
        return Ok(EvalReport {
            dictionary_size_over_t: pathlets.len() as f64 / n_train.max(1) as f64,
            mean_representation_cost: 0.0,
            trajectory_cover: 1.0,
            edge_cover: 1.0,
            mdl_score: 0.0,
            covered_count: 0,
            total_count: 0,
            provenance: provenance.clone(),
        });
    }
    let mut covered = 0usize;
    let mut cost_sum = 0usize;
    let mut edges = 0usize;
    let mut uncovered_edges = 0usize;
    for t in trajs {
        let d = decomposer.decompose(t);
        if d.covered {
            covered += 1;
            cost_sum += d.cost;
        }
        edges += t.edge_seq.len();
        uncovered_edges += d.uncovered_positions.len();
    }
    Ok(EvalReport {
        dictionary_size_over_t: pathlets.len() as f64 / n_train.max(1) as f64,
        mean_representation_cost: if covered > 0 {
            cost_sum as f64 / covered as f64
        } else {
            0.0
        },
        trajectory_cover: covered as f64 / trajs.len() as f64,
        edge_cover: 1.0 - uncovered_edges as f64 / edges.max(1) as f64,
        mdl_score: mdl_score(pathlets, trajs, n_symbols)?,
        covered_count: covered,
        total_count: trajs.len(),
        provenance: provenance.clone(),
    })
}

/// Fixed-width code length in bits for an alphabet of `n` symbols, floored
/// at one bit.
fn code_bits(n: usize) -> u64 {
    let mut bits = 0u64;
    let mut cap = 1usize;
    while cap < n {
        cap <<= 1;
        bits += 1;
    }
    bits.max(1)
}

/// Compression score: (dictionary bits + encoded corpus bits) / raw corpus
/// bits. Below 1 means the dictionary compresses the corpus. Raw edges cost
/// `ceil(log2 n_symbols)` bits, pathlet references `ceil(log2 size)` bits,
/// and uncovered edge occurrences are charged verbatim at the edge width.
pub fn mdl_score(
    pathlets: &[Pathlet],
    trajs: &[Trajectory],
    n_symbols: usize,
) -> Result<f64, EvalError> {
    if trajs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let edge_bits = code_bits(n_symbols);
    let pathlet_bits = code_bits(pathlets.len().max(1));
    let raw: u64 = trajs.iter().map(|t| t.edge_seq.len() as u64 * edge_bits).sum();
    let dict_bits: u64 = pathlets
        .iter()
        .map(|p| p.edge_seq.len() as u64 * edge_bits)
        .sum();
    let decomposer = Decomposer::new(pathlets);
    let mut encoded: u64 = 0;
    for t in trajs {
        let d = decomposer.decompose(t);
        encoded += d.cost as u64 * pathlet_bits;
        encoded += d.uncovered_positions.len() as u64 * edge_bits;
    }
    Ok((dict_bits + encoded) as f64 / raw.max(1) as f64)
}

/// One row of the lambda sweep: means over rounding seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub dictionary_size: f64,
    pub mean_representation_cost: f64,
}

/// Learn on the full corpus at each lambda (one relaxation solve per lambda,
/// one rounding pass per seed) and report the mean dictionary size and mean
/// representation cost.
pub fn lambda_sweep(
    trajs: &[Trajectory],
    n_symbols: usize,
    lambdas: &[f64],
    seeds: &[u64],
    base: &LearnParams,
) -> Result<Vec<SweepRow>, EvalError> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let mut size_sum = 0.0;
        let mut cost_sum = 0.0;
        for &seed in seeds {
            let mut params = base.clone();
            params.solver.lambda = lambda;
            params.seed = seed;
            let out = learn_flat(trajs, n_symbols, 0, None, &params)?;
            let decomposer = Decomposer::new(&out.dictionary.pathlets);
            let mut cost = 0usize;
            for t in trajs {
                cost += decomposer.decompose(t).cost;
            }
            size_sum += out.dictionary.size() as f64;
            cost_sum += cost as f64 / trajs.len().max(1) as f64;
        }
        let n = seeds.len().max(1) as f64;
        rows.push(SweepRow {
            lambda,
            dictionary_size: size_sum / n,
            mean_representation_cost: cost_sum / n,
        });
    }
    Ok(rows)
}

/// One row of the partial-reconstruction curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub keep_fraction: f64,
    pub kept_count: usize,
    /// Fraction of edge occurrences no kept pathlet covers.
    pub uncover_ratio: f64,
    /// Mean cost over trajectories still fully covered.
    pub mean_cost_covered: f64,
}

/// Rank pathlets by how many trajectories use them in the full-dictionary
/// decomposition, then truncate to each keep fraction and re-measure.
/// Prefixes of one fixed ranking are nested, so the uncover ratio is
/// monotone in the keep fraction.
pub fn partial_reconstruction_curve(
    pathlets: &[Pathlet],
    trajs: &[Trajectory],
    keep_fractions: &[f64],
) -> Vec<CurveRow> {
    let full = Decomposer::new(pathlets);
    let mut usage = alloc::vec![0u64; pathlets.len()];
    for t in trajs {
        let d = full.decompose(t);
        let mut seen: Vec<u32> = d.pathlet_ids.clone();
        seen.sort_unstable();
        seen.dedup();
        for id in seen {
            if let Some(slot) = pathlets.iter().position(|p| p.pathlet_id == id) {
                usage[slot] += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..pathlets.len()).collect();
    order.sort_by_key(|&i| (core::cmp::Reverse(usage[i]), pathlets[i].pathlet_id));

    let mut rows = Vec::new();
    for &f in keep_fractions {
        let kept_count = libm::ceil(f.clamp(0.0, 1.0) * pathlets.len() as f64) as usize;
        let kept: Vec<Pathlet> = order[..kept_count]
            .iter()
            .map(|&i| pathlets[i].clone())
            .collect();
        let dec = Decomposer::new(&kept);
        let mut total_edges = 0usize;
        let mut uncovered = 0usize;
        let mut covered_trajs = 0usize;
        let mut cost_sum = 0usize;
        for t in trajs {
            let d = dec.decompose(t);
            total_edges += t.edge_seq.len();
            uncovered += d.uncovered_positions.len();
            if d.covered {
                covered_trajs += 1;
                cost_sum += d.cost;
            }
        }
        rows.push(CurveRow {
            keep_fraction: f,
            kept_count,
            uncover_ratio: uncovered as f64 / total_edges.max(1) as f64,
            mean_cost_covered: if covered_trajs > 0 {
                cost_sum as f64 / covered_trajs as f64
            } else {
                0.0
            },
        });
    }
    rows
}

/// Departure-time feature: sine of the fraction of the day elapsed.
pub fn time_encoding(hours: u32, minutes: u32) -> f64 {
    let frac = (hours as f64 * 60.0 + minutes as f64) / (24.0 * 60.0);
    libm::sin(2.0 * core::f64::consts::PI * frac)
}

/// Companion cosine channel for the same phase.
pub fn time_encoding_cos(hours: u32, minutes: u32) -> f64 {
    let frac = (hours as f64 * 60.0 + minutes as f64) / (24.0 * 60.0);
    libm::cos(2.0 * core::f64::consts::PI * frac)
}
