//! Run configuration: TOML file plus flag overrides, flags winning.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pathlet_core::pipeline::LearnParams;
use pathlet_core::rounding::ThetaMode;
use pathlet_core::solver::{Smoothing, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn d_lambda() -> f64 {
    0.1
}
fn d_theta_mode() -> String {
    "quarter_ln2t".into()
}
fn d_c_min() -> u32 {
    3
}
fn d_max_len() -> usize {
    10
}
fn d_min_traj_len() -> usize {
    2
}
fn d_alpha() -> f64 {
    0.05
}
fn d_epsilon() -> f64 {
    1e-5
}
fn d_mu_start() -> f64 {
    1.0
}
fn d_mu_growth() -> f64 {
    2.0
}
fn d_mu_interval() -> u32 {
    200
}
fn d_feasibility_tol() -> f64 {
    1e-3
}
fn d_smoothing() -> String {
    "lse".into()
}
fn d_tau() -> f64 {
    0.05
}
fn d_tau_min() -> f64 {
    0.004
}
fn d_p_norm() -> f64 {
    8.0
}
fn d_max_iters() -> u32 {
    4000
}
fn d_max_attempts() -> u32 {
    3
}
fn d_levels() -> u32 {
    2
}
fn d_test_fraction() -> f64 {
    0.30
}
fn d_bound_samples() -> u32 {
    1000
}

/// Resolved run configuration. Serialized into the manifest and hashed for
/// artifact provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// `quarter_ln2t`, `ln2t`, or `explicit` (requires `theta`).
    #[serde(default = "d_theta_mode")]
    pub theta_mode: String,
    pub theta: Option<f64>,
    #[serde(default = "d_c_min")]
    pub c_min: u32,
    #[serde(default = "d_max_len")]
    pub max_len: usize,
    /// Trajectories shorter than this are dropped at ingestion.
    #[serde(default = "d_min_traj_len")]
    pub min_traj_len: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_mu_start")]
    pub mu_start: f64,
    #[serde(default = "d_mu_growth")]
    pub mu_growth: f64,
    #[serde(default = "d_mu_interval")]
    pub mu_interval: u32,
    #[serde(default = "d_feasibility_tol")]
    pub feasibility_tol: f64,
    /// `lse` or `pnorm`.
    #[serde(default = "d_smoothing")]
    pub smoothing: String,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_tau_min")]
    pub tau_min: f64,
    #[serde(default = "d_p_norm")]
    pub p_norm: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: u32,
    #[serde(default = "d_max_attempts")]
    pub max_attempts: u32,
    /// Partition depth; 0 learns flat on the whole map.
    #[serde(default)]
    pub depth: u32,
    /// Number of dictionary levels (1 = finest only); capped at depth + 1.
    #[serde(default = "d_levels")]
    pub levels: u32,
    /// Mandatory for every randomized command.
    pub seed: Option<u64>,
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "d_bound_samples")]
    pub bound_samples: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn theta_mode(&self) -> Result<ThetaMode> {
        Ok(match self.theta_mode.as_str() {
            "quarter_ln2t" => ThetaMode::QuarterLn2T,
            "ln2t" => ThetaMode::Ln2T,
            "explicit" => ThetaMode::Explicit,
            other => bail!("unknown theta_mode {other:?} (quarter_ln2t | ln2t | explicit)"),
        })
    }

    pub fn smoothing(&self) -> Result<Smoothing> {
        Ok(match self.smoothing.as_str() {
            "lse" => Smoothing::LogSumExp { tau: self.tau },
            "pnorm" => Smoothing::PNorm { p: self.p_norm },
            other => bail!("unknown smoothing {other:?} (lse | pnorm)"),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            bail!("test_fraction must lie in [0, 1)");
        }
        if self.theta_mode()? == ThetaMode::Explicit && self.theta.is_none() {
            bail!("theta_mode = \"explicit\" requires a theta value");
        }
        if self.min_traj_len < 1 {
            bail!("min_traj_len must be at least 1");
        }
        self.smoothing()?;
        self.solver_config().validate().map_err(anyhow::Error::new)?;
        Ok(())
    }

    /// Seed, or an error for commands that sample.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .context("a seed is mandatory for randomized runs (set --seed or seed = N)")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            learning_rate: self.alpha,
            epsilon: self.epsilon,
            penalty_start: self.mu_start,
            penalty_growth: self.mu_growth,
            penalty_interval: self.mu_interval,
            feasibility_tol: self.feasibility_tol,
            smoothing: self.smoothing().unwrap_or_default(),
            tau_min: self.tau_min,
            max_iters: self.max_iters,
        }
    }

    pub fn learn_params(&self) -> Result<LearnParams> {
        Ok(LearnParams {
            solver: self.solver_config(),
            theta_mode: self.theta_mode()?,
            theta_explicit: self.theta,
            c_min: self.c_min,
            max_len: self.max_len,
            max_attempts: self.max_attempts,
            seed: self.require_seed()?,
        })
    }

    /// Stable digest of the resolved configuration (paths excluded, so the
    /// same parameters on relocated inputs hash identically).
    pub fn config_hash(&self) -> String {
        let mut hashable = self.clone();
        hashable.graph = None;
        hashable.trajectories = None;
        hashable.out_dir = None;
        let bytes = serde_json::to_vec(&hashable).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            use std::fmt::Write;
            write!(hex, "{b:02x}").unwrap();
        }
        hex
    }
}
