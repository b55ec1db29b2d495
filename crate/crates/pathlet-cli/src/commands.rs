//! Subcommand implementations. Every command writes its artifacts under a
//! run directory together with a manifest listing them; artifacts embed the
//! seed and config hash and are byte-identical across reruns of the same
//! configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pathlet_core::decomposer::Decomposer;
use pathlet_core::evalkit::{
    evaluate, lambda_sweep, partial_reconstruction_curve, Provenance,
};
use pathlet_core::hierarchy::{learn_hierarchical, unify, CellOutcome, MultiScaleDictionary};
use pathlet_core::model::{RoadGraph, Trajectory};
use pathlet_core::pipeline::{derive_seed, encode_relaxed, learn_flat, FlatOutcome};
use pathlet_core::rounding::{theta_value, verify_bound, BoundReport};
use pathlet_core::synth::{gen_synthetic, SynthParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::geojson::export_top_pathlets;
use crate::io::{
    load_dictionary, load_graph, load_trajectories, write_graph_csv, write_json,
    write_trajectories_jsonl, DictionaryFile, IdRemap, IngestStats,
};

/// ChaCha stream reserved for the train/test split.
const SPLIT_STREAM: u64 = 0x53504C49;
/// Seed salt for bound-verification sampling, so it never reuses the
/// rounding stream of the same instance.
const BOUND_SALT: u64 = 0xB0B0_0000_0000_0001;

/// Pipeline health, mapped to the process exit code (0 / 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Every solve converged and every rounding met the good event.
    Converged,
    /// The pipeline completed but at least one instance needed repair or ran
    /// out of iterations.
    Repaired,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::Repaired => 2,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Repaired => "repaired",
        }
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out_dir
        .clone()
        .context("an output directory is required (set --out or out_dir)")?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_inputs(cfg: &RunConfig) -> Result<(RoadGraph, Option<IdRemap>, Vec<Trajectory>, IngestStats)> {
    let gpath = cfg.graph.as_ref().context("a graph CSV is required")?;
    let tpath = cfg
        .trajectories
        .as_ref()
        .context("a trajectories JSONL is required")?;
    let (graph, remap) = load_graph(gpath)?;
    let (trajs, stats) = load_trajectories(tpath, &graph, remap.as_ref(), cfg.min_traj_len)?;
    Ok((graph, remap, trajs, stats))
}

/// Seeded-uniform split; both sides keep the input order.
fn split_train_test(
    trajs: &[Trajectory],
    test_fraction: f64,
    seed: u64,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut idx: Vec<usize> = (0..trajs.len()).collect();
    idx.shuffle(&mut rng);
    let n_test = (test_fraction * trajs.len() as f64).floor() as usize;
    let mut test_idx: Vec<usize> = idx[..n_test].to_vec();
    let mut train_idx: Vec<usize> = idx[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |ids: &[usize]| ids.iter().map(|&i| trajs[i].clone()).collect();
    (pick(&train_idx), pick(&test_idx))
}

#[derive(Serialize)]
struct SolutionRecord {
    level: u32,
    cell: Option<u32>,
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(u32, u32)>,
    cost: f64,
    feasible: bool,
    repaired: bool,
    good_event: bool,
    attempts_used: u32,
    seed: u64,
}

#[derive(Serialize)]
struct CandidateRecord {
    level: u32,
    cell: Option<u32>,
    items: Vec<serde_json::Value>,
}

#[derive(Serialize)]
struct InstanceBound {
    level: u32,
    cell: Option<u32>,
    #[serde(flatten)]
    report: BoundReport,
}

struct ArtifactWriter {
    dir: PathBuf,
    names: Vec<String>,
}

impl ArtifactWriter {
    fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            names: Vec::new(),
        }
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(value, &self.dir.join(name))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn finish_manifest(
        mut self,
        command: &str,
        cfg: &RunConfig,
        status: Option<RunStatus>,
        ingest: Option<&IngestStats>,
    ) -> Result<()> {
        let mut artifacts = self.names.clone();
        artifacts.push("manifest.json".to_string());
        artifacts.sort();
        let manifest = json!({
            "command": command,
            "config": cfg,
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "status": status.map(RunStatus::as_str),
            "split_at_edge_revisit": true,
            "ingest": ingest,
            "artifacts": artifacts,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn trace_csv(outcome: &FlatOutcome) -> String {
    let mut text = String::from("iter,true_objective,surrogate,residual\n");
    for row in &outcome.fractional.objective_trace {
        writeln!(
            text,
            "{},{},{},{}",
            row.iter, row.true_objective, row.surrogate, row.residual
        )
        .expect("string write");
    }
    text
}

fn instance_name(level: u32, cell: Option<u32>) -> String {
    match cell {
        Some(c) => format!("level{level}_cell{c}"),
        None => format!("level{level}_global"),
    }
}

fn write_instance_artifacts(
    writer: &mut ArtifactWriter,
    cfg: &RunConfig,
    seed: u64,
    instances: &[CellOutcome],
) -> Result<RunStatus> {
    let mut solutions = Vec::new();
    let mut candidate_records = Vec::new();
    let mut bounds = Vec::new();
    let mut status = RunStatus::Converged;
    for inst in instances {
        let o = &inst.outcome;
        if !o.clean() {
            status = RunStatus::Repaired;
        }
        writer.write_text(
            &format!("traces/{}.csv", instance_name(inst.level, inst.cell)),
            &trace_csv(o),
        )?;
        solutions.push(SolutionRecord {
            level: inst.level,
            cell: inst.cell,
            n_rows: o.binary.assignment.n_rows(),
            n_cols: o.binary.assignment.n_cols(),
            entries: o.binary.assignment.entries().collect(),
            cost: o.binary.cost,
            feasible: o.binary.feasible,
            repaired: o.binary.repaired,
            good_event: o.binary.good_event,
            attempts_used: o.binary.attempts_used,
            seed: o.binary.seed,
        });
        candidate_records.push(CandidateRecord {
            level: inst.level,
            cell: inst.cell,
            items: (0..o.candidates.len())
                .map(|p| {
                    json!({
                        "id": p,
                        "edge_seq": o.candidates.seq(p as u32),
                        "support": o.candidates.support(p as u32),
                    })
                })
                .collect(),
        });
        bounds.push(InstanceBound {
            level: inst.level,
            cell: inst.cell,
            report: verify_bound(
                &o.fractional.assignment,
                &o.matrices.edge_cand,
                &o.matrices.edge_traj,
                o.theta,
                cfg.lambda,
                cfg.bound_samples,
                derive_seed(seed ^ BOUND_SALT, inst.level, inst.cell.unwrap_or(u32::MAX)),
                cfg.theta_mode()?,
            ),
        });
    }
    writer.write_json("solution.json", &solutions)?;
    writer.write_json("candidates.json", &candidate_records)?;
    writer.write_json("bound_reports.json", &bounds)?;
    Ok(status)
}

fn dictionary_file(cfg: &RunConfig, seed: u64, multi_scale: MultiScaleDictionary) -> DictionaryFile {
    DictionaryFile {
        config_hash: cfg.config_hash(),
        seed,
        lambda: cfg.lambda,
        theta_mode: cfg.theta_mode.clone(),
        split_at_edge_revisit: true,
        multi_scale,
    }
}

pub fn run_learn(cfg: &RunConfig) -> Result<RunStatus> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let out_dir = ensure_out_dir(cfg)?;
    let (graph, remap, trajs, ingest) = load_inputs(cfg)?;
    if trajs.is_empty() {
        bail!("no trajectories survived ingestion");
    }
    let (train, test) = split_train_test(&trajs, cfg.test_fraction, seed);
    let params = cfg.learn_params()?;

    let (multi_scale, instances) = if cfg.depth == 0 {
        let outcome = learn_flat(&train, graph.n_edges(), 0, None, &params)?;
        let unified = unify(vec![outcome.dictionary.clone()], &graph)?;
        (
            unified,
            vec![CellOutcome {
                cell: None,
                level: 0,
                outcome,
            }],
        )
    } else {
        learn_hierarchical(&train, &graph, cfg.depth, cfg.levels, &params)?
    };

    let mut writer = ArtifactWriter::new(out_dir);
    let status = write_instance_artifacts(&mut writer, cfg, seed, &instances)?;

    let columns = multi_scale.column_pathlets();
    let provenance = Provenance {
        seed,
        lambda: cfg.lambda,
        theta: theta_value(cfg.theta_mode()?, cfg.theta, train.len()),
        config_hash: Some(cfg.config_hash()),
    };
    let (train_report, test_report) =
        evaluate(&columns, &train, &test, graph.n_edges(), &provenance)?;
    writer.write_json("report_train.json", &train_report)?;
    writer.write_json("report_test.json", &test_report)?;
    writer.write_json(
        "split.json",
        &json!({
            "test_fraction": cfg.test_fraction,
            "seed": seed,
            "train_ids": train.iter().map(|t| t.traj_id).collect::<Vec<_>>(),
            "test_ids": test.iter().map(|t| t.traj_id).collect::<Vec<_>>(),
        }),
    )?;
    if let Some(remap) = &remap {
        writer.write_json("id_remap.json", remap)?;
    }
    writer.write_json("dictionary.json", &dictionary_file(cfg, seed, multi_scale))?;
    writer.finish_manifest("learn", cfg, Some(status), Some(&ingest))?;
    Ok(status)
}

pub fn run_eval(cfg: &RunConfig, dictionary: &Path) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let dict = load_dictionary(dictionary)?;
    let (graph, remap, trajs, ingest) = load_inputs(cfg)?;
    let _ = remap;
    let columns = dict.multi_scale.column_pathlets();
    let provenance = Provenance {
        seed: dict.seed,
        lambda: dict.lambda,
        theta: 0.0,
        config_hash: Some(dict.config_hash.clone()),
    };
    let (report, _) = evaluate(&columns, &trajs, &[], graph.n_edges(), &provenance)?;
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_json("report.json", &report)?;
    writer.finish_manifest("eval", cfg, None, Some(&ingest))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMethod {
    /// Exact minimum-support cover by position DP (default).
    Dp,
    /// Relax-and-round over the fixed dictionary, for fidelity experiments.
    Relaxed,
}

pub fn run_encode(cfg: &RunConfig, dictionary: &Path, method: EncodeMethod) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let dict = load_dictionary(dictionary)?;
    let gpath = cfg.graph.as_ref().context("a graph CSV is required")?;
    let tpath = cfg
        .trajectories
        .as_ref()
        .context("a trajectories JSONL is required")?;
    let (graph, remap) = load_graph(gpath)?;
    // encoding accepts any length; the learning minimum does not apply
    let (trajs, ingest) = load_trajectories(tpath, &graph, remap.as_ref(), 1)?;
    let columns = dict.multi_scale.column_pathlets();

    let vectors = match method {
        EncodeMethod::Dp => {
            let decomposer = Decomposer::new(&columns);
            trajs.iter().map(|t| decomposer.encode(t)).collect()
        }
        EncodeMethod::Relaxed => {
            let seed = cfg.require_seed()?;
            let theta = theta_value(cfg.theta_mode()?, cfg.theta, trajs.len());
            encode_relaxed(
                &trajs,
                &columns,
                graph.n_edges(),
                &cfg.solver_config(),
                theta,
                cfg.max_attempts,
                seed,
            )?
        }
    };

    let mut jsonl = String::new();
    let mut covered = 0usize;
    for v in &vectors {
        if v.uncovered_edges.is_empty() {
            covered += 1;
        }
        writeln!(jsonl, "{}", serde_json::to_string(v).expect("serializes"))?;
    }
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_text("vectors.jsonl", &jsonl)?;
    writer.write_json(
        "encode_report.json",
        &json!({
            "inputs": trajs.len(),
            "lines": vectors.len(),
            "fully_covered": covered,
            "with_uncovered_edges": vectors.len() - covered,
            "method": match method {
                EncodeMethod::Dp => "dp",
                EncodeMethod::Relaxed => "relaxed",
            },
            "dictionary_config_hash": dict.config_hash,
        }),
    )?;
    writer.finish_manifest("encode", cfg, None, Some(&ingest))?;
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig, lambdas: &[f64], seeds: &[u64]) -> Result<()> {
    cfg.validate()?;
    if lambdas.is_empty() || seeds.is_empty() {
        bail!("sweep needs at least one lambda and one seed");
    }
    let out_dir = ensure_out_dir(cfg)?;
    let (graph, _, trajs, ingest) = load_inputs(cfg)?;
    let params = cfg.learn_params()?;
    let rows = lambda_sweep(&trajs, graph.n_edges(), lambdas, seeds, &params)?;
    let mut csv = String::from("lambda,dictionary_size,mean_representation_cost\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{}",
            r.lambda, r.dictionary_size, r.mean_representation_cost
        )?;
    }
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_text("sweep.csv", &csv)?;
    writer.finish_manifest("sweep", cfg, None, Some(&ingest))?;
    Ok(())
}

pub fn run_curve(cfg: &RunConfig, dictionary: &Path, keep_fractions: &[f64]) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let dict = load_dictionary(dictionary)?;
    let (_graph, _, trajs, ingest) = load_inputs(cfg)?;
    let columns = dict.multi_scale.column_pathlets();
    let rows = partial_reconstruction_curve(&columns, &trajs, keep_fractions);
    let mut csv = String::from("keep_fraction,kept_count,uncover_ratio,mean_cost_covered\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{}",
            r.keep_fraction, r.kept_count, r.uncover_ratio, r.mean_cost_covered
        )?;
    }
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_text("curve.csv", &csv)?;
    writer.finish_manifest("curve", cfg, None, Some(&ingest))?;
    Ok(())
}

pub fn run_export_geojson(cfg: &RunConfig, dictionary: &Path, top_k: usize) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let dict = load_dictionary(dictionary)?;
    let gpath = cfg.graph.as_ref().context("a graph CSV is required")?;
    let (graph, _) = load_graph(gpath)?;
    if !graph.has_geometry() {
        bail!("geojson export requires edge geometry in the graph CSV");
    }
    let fc = export_top_pathlets(&dict.multi_scale, &graph, top_k);
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_json("pathlets.geojson", &fc)?;
    writer.finish_manifest("export-geojson", cfg, None, None)?;
    Ok(())
}

pub fn run_verify_bound(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let out_dir = ensure_out_dir(cfg)?;
    let (graph, _, trajs, ingest) = load_inputs(cfg)?;
    let params = cfg.learn_params()?;
    let outcome = learn_flat(&trajs, graph.n_edges(), 0, None, &params)?;
    let report = verify_bound(
        &outcome.fractional.assignment,
        &outcome.matrices.edge_cand,
        &outcome.matrices.edge_traj,
        outcome.theta,
        cfg.lambda,
        cfg.bound_samples,
        seed ^ BOUND_SALT,
        cfg.theta_mode()?,
    );
    let mut writer = ArtifactWriter::new(out_dir);
    writer.write_json("bound_report.json", &report)?;
    writer.finish_manifest("verify-bound", cfg, None, Some(&ingest))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GenArgs {
    pub grid: u32,
    pub corridors: u32,
    pub corridor_len: u32,
    pub trajs: u32,
    pub noise: f64,
    pub seed: u64,
    pub spacing: f64,
}

pub fn run_gen_synthetic(out_dir: &Path, args: &GenArgs) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let corpus = gen_synthetic(&SynthParams {
        grid: args.grid,
        n_corridors: args.corridors,
        corridor_len: args.corridor_len,
        n_trajs: args.trajs,
        noise: args.noise,
        seed: args.seed,
        spacing: args.spacing,
    });
    write_graph_csv(&corpus.graph, &out_dir.join("graph.csv"))?;
    write_trajectories_jsonl(&corpus.trajectories, &out_dir.join("trajectories.jsonl"))?;
    write_json(&corpus.corridors, &out_dir.join("corridors.json"))?;
    let manifest = json!({
        "command": "gen-synthetic",
        "params": args,
        "seed": args.seed,
        "artifacts": ["corridors.json", "graph.csv", "manifest.json", "trajectories.jsonl"],
    });
    write_json(&manifest, &out_dir.join("manifest.json"))?;
    Ok(())
}

/// Parse a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| anyhow!("invalid list entry {s:?}: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_ordered() {
        let trajs: Vec<Trajectory> = (0..10)
            .map(|i| Trajectory {
                traj_id: i,
                edge_seq: vec![0],
            })
            .collect();
        let (tr1, te1) = split_train_test(&trajs, 0.3, 42);
        let (tr2, te2) = split_train_test(&trajs, 0.3, 42);
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(te1.len(), 3);
        assert_eq!(tr1.len(), 7);
        // both sides preserve input order
        let ids: Vec<u64> = tr1.iter().map(|t| t.traj_id).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
        let (tr3, _) = split_train_test(&trajs, 0.3, 43);
        assert_ne!(tr1, tr3, "different seed should alter the split");
    }

    #[test]
    fn list_parsing() {
        let xs: Vec<f64> = parse_list("0.01, 0.1,1,10").unwrap();
        assert_eq!(xs, vec![0.01, 0.1, 1.0, 10.0]);
        assert!(parse_list::<f64>("a,b").is_err());
    }
}
