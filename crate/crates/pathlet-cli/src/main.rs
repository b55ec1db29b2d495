use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pathlet_cli::commands::{
    self, parse_list, EncodeMethod, GenArgs, RunStatus,
};
use pathlet_cli::config::RunConfig;

/// Pathlet dictionary learning for network-constrained trajectories.
#[derive(Parser)]
#[command(name = "pathlets", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared input/parameter flags. Flags override the config file.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// TOML config file providing defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph CSV (edge_id,from_node,to_node[,x1,y1,x2,y2]).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Trajectories JSONL ({"traj_id":int,"edge_seq":[int,...]}).
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Run output directory.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// quarter_ln2t | ln2t | explicit
    #[arg(long)]
    theta_mode: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    c_min: Option<u32>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_traj_len: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// lse | pnorm
    #[arg(long)]
    smoothing: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_iters: Option<u32>,
    #[arg(long)]
    max_attempts: Option<u32>,
    /// Partition depth (0 = flat learning).
    #[arg(long)]
    depth: Option<u32>,
    /// Number of dictionary levels (finest plus lifts).
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Monte-Carlo samples for bound reports.
    #[arg(long)]
    samples: Option<u32>,
}

impl CommonOpts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = Some(v.clone()); })*
            };
        }
        take!(graph, trajectories, out_dir);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.theta {
            cfg.theta = Some(v);
        }
        set!(
            lambda,
            theta_mode,
            c_min,
            max_len,
            min_traj_len,
            alpha,
            epsilon,
            smoothing,
            tau,
            max_iters,
            max_attempts,
            depth,
            levels,
            test_fraction
        );
        if let Some(v) = self.samples {
            cfg.bound_samples = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a pathlet dictionary and write all run artifacts.
    Learn {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Encode trajectories over a learned dictionary.
    Encode {
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        dictionary: PathBuf,
        /// dp (exact) | relaxed (relax-and-round fidelity mode)
        #[arg(long, default_value = "dp")]
        method: String,
    },
    /// Evaluate a dictionary on a corpus.
    Eval {
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        dictionary: PathBuf,
    },
    /// Learn across a list of lambdas and summarize size/cost per value.
    Sweep {
        #[command(flatten)]
        opts: CommonOpts,
        /// Comma-separated lambda values.
        #[arg(long)]
        lambdas: String,
        /// Comma-separated rounding seeds.
        #[arg(long)]
        seeds: String,
    },
    /// Partial-reconstruction curve over kept-dictionary fractions.
    Curve {
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        dictionary: PathBuf,
        /// Comma-separated keep fractions in [0, 1].
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        keep_fractions: String,
    },
    /// Export the most-supported pathlets as GeoJSON.
    ExportGeojson {
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long, default_value_t = 300)]
        top_k: usize,
    },
    /// Generate a synthetic grid corpus with ground-truth corridors.
    GenSynthetic {
        #[arg(long = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        grid: u32,
        #[arg(long, default_value_t = 3)]
        corridors: u32,
        #[arg(long, default_value_t = 8)]
        corridor_len: u32,
        #[arg(long, default_value_t = 200)]
        trajs: u32,
        /// Maximum extra edges on each side of a corridor.
        #[arg(long, default_value_t = 2.0)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100.0)]
        spacing: f64,
    },
    /// Solve the relaxation and Monte-Carlo check the rounding guarantee.
    VerifyBound {
        #[command(flatten)]
        opts: CommonOpts,
    },
}

fn run(cli: Cli) -> Result<RunStatus> {
    match cli.command {
        Command::Learn { opts } => commands::run_learn(&opts.resolve()?),
        Command::Encode {
            opts,
            dictionary,
            method,
        } => {
            let method = match method.as_str() {
                "dp" => EncodeMethod::Dp,
                "relaxed" => EncodeMethod::Relaxed,
                other => anyhow::bail!("unknown encode method {other:?} (dp | relaxed)"),
            };
            commands::run_encode(&opts.resolve()?, &dictionary, method)?;
            Ok(RunStatus::Converged)
        }
        Command::Eval { opts, dictionary } => {
            commands::run_eval(&opts.resolve()?, &dictionary)?;
            Ok(RunStatus::Converged)
        }
        Command::Sweep {
            opts,
            lambdas,
            seeds,
        } => {
            commands::run_sweep(
                &opts.resolve()?,
                &parse_list::<f64>(&lambdas)?,
                &parse_list::<u64>(&seeds)?,
            )?;
            Ok(RunStatus::Converged)
        }
        Command::Curve {
            opts,
            dictionary,
            keep_fractions,
        } => {
            commands::run_curve(
                &opts.resolve()?,
                &dictionary,
                &parse_list::<f64>(&keep_fractions)?,
            )?;
            Ok(RunStatus::Converged)
        }
        Command::ExportGeojson {
            opts,
            dictionary,
            top_k,
        } => {
            commands::run_export_geojson(&opts.resolve()?, &dictionary, top_k)?;
            Ok(RunStatus::Converged)
        }
        Command::GenSynthetic {
            out_dir,
            grid,
            corridors,
            corridor_len,
            trajs,
            noise,
            seed,
            spacing,
        } => {
            commands::run_gen_synthetic(
                &out_dir,
                &GenArgs {
                    grid,
                    corridors,
                    corridor_len,
                    trajs,
                    noise,
                    seed,
                    spacing,
                },
            )?;
            Ok(RunStatus::Converged)
        }
        Command::VerifyBound { opts } => {
            commands::run_verify_bound(&opts.resolve()?)?;
            Ok(RunStatus::Converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(err) => {
            let payload = serde_json::json!({
                "error": {
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}
