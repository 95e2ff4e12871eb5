//! Config-driven experiments and their artifacts.
//!
//! A config is a TOML file with a top-level `experiment` key, an optional
//! `seed` and `output_dir`, a `[problem]` block and one block named after the
//! experiment. Every run writes into a fresh directory named by the config
//! hash; on failure nothing is left behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counterterms::CtMode;
use crate::diagnostics::{directional_smoothness, discretization_error, endpoint_error, fit_order, OrderFamily};
use crate::discrete::{format_num, hb_step, run_discrete, DiscreteState, Optimizer, Trajectory};
use crate::error::{Error, Result};
use crate::flows::{run_flow, FlowConfig, Integrator};
use crate::implicit_bias::{bias_report, run_dln_flow, scaled_init, sparse_regression, train_discrete, DlnFlowConfig};
use crate::plot::{LinePlot, Series};
use crate::problems::{DiagonalNet, MlpProblem, Problem, QuadraticProblem, RegressionData, TwoDModel};

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_ENV: &str = "HBFLOW_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "hbflow-runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TwodTrajectories,
    ErrorCurves,
    OrderSweep,
    Smoothness,
    DlnBias,
    DlnError,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::TwodTrajectories => "twod_trajectories",
            Self::ErrorCurves => "error_curves",
            Self::OrderSweep => "order_sweep",
            Self::Smoothness => "smoothness",
            Self::DlnBias => "dln_bias",
            Self::DlnError => "dln_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    TwoD {
        x: f64,
        y: f64,
    },
    Quadratic {
        /// Row-major symmetric matrix.
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Option<Vec<f64>>,
    },
    Dln {
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        features: Option<usize>,
        #[serde(default = "default_nonzeros")]
        nonzeros: usize,
        /// CSV with columns `x_1..x_d, y`; replaces the synthetic data.
        #[serde(default)]
        csv: Option<PathBuf>,
        #[serde(default)]
        init_scale: Option<f64>,
        #[serde(default = "one")]
        theta: f64,
    },
    Mlp {
        samples: usize,
        input_dim: usize,
        hidden: usize,
        #[serde(default = "one")]
        input_scale: f64,
        #[serde(default = "one")]
        target_scale: f64,
    },
}

fn default_nonzeros() -> usize {
    5
}

fn one() -> f64 {
    1.0
}

fn default_substeps() -> usize {
    10
}

fn default_alphas() -> Vec<usize> {
    vec![2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesBlock {
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    pub eta: f64,
    pub mu: f64,
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub mode: CtMode,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorCurvesBlock {
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    pub eta: f64,
    pub mu: f64,
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "both_modes")]
    pub modes: Vec<CtMode>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<usize>,
}

fn both_modes() -> Vec<CtMode> {
    vec![CtMode::FiniteK, CtMode::Asymptotic]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSweepBlock {
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    pub mu: f64,
    pub eta_grid: Vec<f64>,
    pub t_total: f64,
    #[serde(default = "order_alphas")]
    pub alphas: Vec<usize>,
    #[serde(default = "twenty")]
    pub substeps: usize,
    #[serde(default = "rk4")]
    pub integrator: Integrator,
    #[serde(default)]
    pub mode: CtMode,
}

fn order_alphas() -> Vec<usize> {
    vec![1, 2, 3]
}

fn twenty() -> usize {
    20
}

fn rk4() -> Integrator {
    Integrator::Rk4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessBlock {
    pub eta: f64,
    pub mus: Vec<f64>,
    pub epochs: usize,
    /// Number of final epochs averaged in the summary.
    pub late_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DlnBiasBlock {
    pub scales: Vec<f64>,
    pub mus: Vec<f64>,
    pub eta: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub max_time: f64,
    #[serde(default = "hundred")]
    pub record_every: usize,
    /// Also train the discrete optimizers and report their generalization.
    #[serde(default)]
    pub discrete: bool,
    #[serde(default = "discrete_iters")]
    pub discrete_max_iter: usize,
}

fn hundred() -> usize {
    100
}

fn discrete_iters() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub twod_trajectories: Option<TrajectoriesBlock>,
    #[serde(default)]
    pub error_curves: Option<ErrorCurvesBlock>,
    #[serde(default)]
    pub order_sweep: Option<OrderSweepBlock>,
    #[serde(default)]
    pub smoothness: Option<SmoothnessBlock>,
    #[serde(default)]
    pub dln_bias: Option<DlnBiasBlock>,
    #[serde(default)]
    pub dln_error: Option<ErrorCurvesBlock>,
}

/// Parses a config, reporting the field path of any type error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let cfg = parse_config(&text)?;
    Ok((cfg, config_hash(&text)))
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

fn momentum(path: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(path, format!("must lie in [0, 1), got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(path, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn alphas(path: &str, v: &[usize]) -> Result<()> {
    if v.is_empty() || v.iter().any(|a| !(1..=3).contains(a)) {
        Err(Error::config(path, "alphas must be non-empty and each in 1..=3"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let name = self.experiment.name();
        let present = [
            ("twod_trajectories", self.twod_trajectories.is_some()),
            ("error_curves", self.error_curves.is_some()),
            ("order_sweep", self.order_sweep.is_some()),
            ("smoothness", self.smoothness.is_some()),
            ("dln_bias", self.dln_bias.is_some()),
            ("dln_error", self.dln_error.is_some()),
        ];
        for (block, there) in present {
            if block == name && !there {
                return Err(Error::config(block, format!("block `[{block}]` is required for this experiment")));
            }
            if block != name && there {
                return Err(Error::config(block, format!("block `[{block}]` does not belong to experiment `{name}`")));
            }
        }
        self.validate_problem()?;
        let needs_seed = matches!(self.problem, ProblemConfig::Mlp { .. })
            || matches!(self.problem, ProblemConfig::Dln { csv: None, .. });
        if needs_seed && self.seed.is_none() {
            return Err(Error::config("seed", "a seed is required for randomized problems"));
        }
        let dim = self.problem_dim();
        let check_beta0 = |path: &str, b: &Option<Vec<f64>>| -> Result<()> {
            match (b, self.default_beta0()) {
                (Some(b), _) => match dim {
                    Some(d) if d != b.len() => Err(Error::config(path, format!("expected {d} entries, got {}", b.len()))),
                    _ => Ok(()),
                },
                (None, Some(_)) => Ok(()),
                (None, None) => Err(Error::config(path, "a start point is required for this problem")),
            }
        };
        match self.experiment {
            ExperimentKind::TwodTrajectories => {
                let b = self.twod_trajectories.as_ref().expect("checked above");
                check_beta0("twod_trajectories.beta0", &b.beta0)?;
                positive("twod_trajectories.eta", b.eta)?;
                momentum("twod_trajectories.mu", b.mu)?;
                nonzero("twod_trajectories.substeps", b.substeps)?;
                alphas("twod_trajectories.alphas", &b.alphas)?;
            }
            ExperimentKind::ErrorCurves | ExperimentKind::DlnError => {
                let (b, p) = if self.experiment == ExperimentKind::ErrorCurves {
                    (self.error_curves.as_ref().expect("checked"), "error_curves")
                } else {
                    (self.dln_error.as_ref().expect("checked"), "dln_error")
                };
                if self.experiment == ExperimentKind::DlnError && !matches!(self.problem, ProblemConfig::Dln { .. }) {
                    return Err(Error::config("problem.kind", "dln_error needs a `dln` problem"));
                }
                check_beta0(&format!("{p}.beta0"), &b.beta0)?;
                positive(&format!("{p}.eta"), b.eta)?;
                momentum(&format!("{p}.mu"), b.mu)?;
                nonzero(&format!("{p}.substeps"), b.substeps)?;
                alphas(&format!("{p}.alphas"), &b.alphas)?;
                if b.modes.is_empty() {
                    return Err(Error::config(format!("{p}.modes"), "at least one mode is required"));
                }
            }
            ExperimentKind::OrderSweep => {
                let b = self.order_sweep.as_ref().expect("checked");
                check_beta0("order_sweep.beta0", &b.beta0)?;
                momentum("order_sweep.mu", b.mu)?;
                positive("order_sweep.t_total", b.t_total)?;
                nonzero("order_sweep.substeps", b.substeps)?;
                alphas("order_sweep.alphas", &b.alphas)?;
                if b.eta_grid.len() < 4 {
                    return Err(Error::config("order_sweep.eta_grid", "at least 4 step sizes are required"));
                }
                for (i, e) in b.eta_grid.iter().enumerate() {
                    positive(&format!("order_sweep.eta_grid[{i}]"), *e)?;
                }
            }
            ExperimentKind::Smoothness => {
                let b = self.smoothness.as_ref().expect("checked");
                if !matches!(self.problem, ProblemConfig::Mlp { .. }) {
                    return Err(Error::config("problem.kind", "smoothness needs an `mlp` problem"));
                }
                positive("smoothness.eta", b.eta)?;
                for (i, m) in b.mus.iter().enumerate() {
                    momentum(&format!("smoothness.mus[{i}]"), *m)?;
                }
                nonzero("smoothness.epochs", b.epochs)?;
                if b.late_window == 0 || b.late_window > b.epochs {
                    return Err(Error::config("smoothness.late_window", "must be in 1..=epochs"));
                }
            }
            ExperimentKind::DlnBias => {
                let b = self.dln_bias.as_ref().expect("checked");
                if !matches!(self.problem, ProblemConfig::Dln { .. }) {
                    return Err(Error::config("problem.kind", "dln_bias needs a `dln` problem"));
                }
                if b.scales.is_empty() {
                    return Err(Error::config("dln_bias.scales", "at least one scale is required"));
                }
                for (i, s) in b.scales.iter().enumerate() {
                    positive(&format!("dln_bias.scales[{i}]"), *s)?;
                }
                for (i, m) in b.mus.iter().enumerate() {
                    momentum(&format!("dln_bias.mus[{i}]"), *m)?;
                }
                positive("dln_bias.eta", b.eta)?;
                positive("dln_bias.theta", b.theta)?;
                positive("dln_bias.max_time", b.max_time)?;
                if b.substeps < 2 || !b.substeps.is_multiple_of(2) {
                    return Err(Error::config("dln_bias.substeps", "must be even and at least 2"));
                }
                nonzero("dln_bias.record_every", b.record_every)?;
            }
        }
        Ok(())
    }

    fn validate_problem(&self) -> Result<()> {
        match &self.problem {
            ProblemConfig::TwoD { x, y } => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::config("problem", "x and y must be finite"));
                }
            }
            ProblemConfig::Quadratic { matrix, linear } => {
                let d = matrix.len();
                if d == 0 {
                    return Err(Error::config("problem.matrix", "must be non-empty"));
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != d {
                        return Err(Error::config(format!("problem.matrix[{i}]"), format!("expected {d} entries")));
                    }
                    for j in 0..d {
                        if (row[j] - matrix[j][i]).abs() > 1e-12 {
                            return Err(Error::config("problem.matrix", "must be symmetric"));
                        }
                    }
                }
                if let Some(l) = linear {
                    if l.len() != d {
                        return Err(Error::config("problem.linear", format!("expected {d} entries")));
                    }
                }
            }
            ProblemConfig::Dln {
                samples,
                features,
                nonzeros,
                csv,
                init_scale,
                theta,
            } => {
                if csv.is_none() {
                    let n = samples.ok_or_else(|| Error::config("problem.samples", "required without `csv`"))?;
                    let d = features.ok_or_else(|| Error::config("problem.features", "required without `csv`"))?;
                    nonzero("problem.samples", n)?;
                    if *nonzeros > d {
                        return Err(Error::config("problem.nonzeros", "cannot exceed features"));
                    }
                }
                if let Some(s) = init_scale {
                    positive("problem.init_scale", *s)?;
                }
                positive("problem.theta", *theta)?;
            }
            ProblemConfig::Mlp {
                samples,
                input_dim,
                hidden,
                input_scale,
                target_scale,
            } => {
                nonzero("problem.samples", *samples)?;
                nonzero("problem.input_dim", *input_dim)?;
                if !(1..=64).contains(hidden) {
                    return Err(Error::config("problem.hidden", "must be in 1..=64"));
                }
                positive("problem.input_scale", *input_scale)?;
                positive("problem.target_scale", *target_scale)?;
            }
        }
        Ok(())
    }

    fn problem_dim(&self) -> Option<usize> {
        match &self.problem {
            ProblemConfig::TwoD { .. } => Some(2),
            ProblemConfig::Quadratic { matrix, .. } => Some(matrix.len()),
            ProblemConfig::Dln { features, csv: None, .. } => features.map(|d| 2 * d),
            ProblemConfig::Dln { .. } => None,
            ProblemConfig::Mlp { input_dim, hidden, .. } => Some(hidden * (input_dim + 2) + 1),
        }
    }

    fn default_beta0(&self) -> Option<Vec<f64>> {
        match &self.problem {
            ProblemConfig::Dln {
                features: Some(d),
                init_scale: Some(s),
                theta,
                csv: None,
                ..
            } => {
                let (p, m) = scaled_init(*s, *theta, *d);
                Some(p.into_iter().chain(m).collect())
            }
            _ => None,
        }
    }
}

/// A problem instance built from config, with any ground truth it carries.
pub struct Built {
    pub problem: Box<dyn Problem>,
    pub w_star: Option<Vec<f64>>,
    pub data: Option<RegressionData>,
    pub default_beta0: Option<Vec<f64>>,
    /// Initial MLP parameters.
    pub init: Option<Vec<f64>>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Built> {
    let seed = cfg.seed.unwrap_or(0);
    Ok(match &cfg.problem {
        ProblemConfig::TwoD { x, y } => Built {
            problem: Box::new(TwoDModel::new(*x, *y)),
            w_star: None,
            data: None,
            default_beta0: None,
            init: None,
        },
        ProblemConfig::Quadratic { matrix, linear } => {
            let d = matrix.len();
            let a = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
            let b = linear.clone().map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(d));
            Built {
                problem: Box::new(QuadraticProblem::new(a, b)?),
                w_star: None,
                data: None,
                default_beta0: None,
                init: None,
            }
        }
        ProblemConfig::Dln {
            samples,
            features,
            nonzeros,
            csv,
            init_scale,
            theta,
        } => {
            let (data, w_star) = match csv {
                Some(path) => (RegressionData::from_csv(path)?, None),
                None => {
                    let inst = sparse_regression(samples.unwrap_or(0), features.unwrap_or(0), *nonzeros, seed)?;
                    (inst.data, Some(inst.w_star))
                }
            };
            let default_beta0 = init_scale.map(|s| {
                let (p, m) = scaled_init(s, *theta, data.d());
                p.into_iter().chain(m).collect()
            });
            Built {
                problem: Box::new(DiagonalNet::new(data.clone())),
                w_star,
                data: Some(data),
                default_beta0,
                init: None,
            }
        }
        ProblemConfig::Mlp {
            samples,
            input_dim,
            hidden,
            input_scale,
            target_scale,
        } => {
            let (mlp, init) = synthetic_mlp(*samples, *input_dim, *hidden, *input_scale, *target_scale, seed)?;
            Built {
                problem: Box::new(mlp),
                w_star: None,
                data: None,
                default_beta0: Some(init.clone()),
                init: Some(init),
            }
        }
    })
}

/// Synthetic regression task for a tanh MLP: inputs `N(0, scale²)`, targets
/// a sum of four random sinusoidal features, standard fan-in initialization.
pub fn synthetic_mlp(
    samples: usize,
    input_dim: usize,
    hidden: usize,
    input_scale: f64,
    target_scale: f64,
    seed: u64,
) -> Result<(MlpProblem, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let inputs = DMatrix::from_fn(samples, input_dim, |_, _| input_scale * normal());
    let teacher = DMatrix::from_fn(input_dim, 4, |_, _| normal());
    let proj = &inputs * &teacher / (input_dim as f64).sqrt();
    let targets = DVector::from_fn(samples, |i, _| target_scale * proj.row(i).iter().map(|v| v.sin()).sum::<f64>());
    let mut init = Vec::with_capacity(hidden * (input_dim + 2) + 1);
    init.extend((0..hidden * input_dim).map(|_| normal() / (input_dim as f64).sqrt()));
    init.extend(std::iter::repeat_n(0.0, hidden));
    init.extend((0..hidden).map(|_| normal() / (hidden as f64).sqrt()));
    init.push(0.0);
    Ok((MlpProblem::new(inputs, targets, hidden)?, init))
}

// ---------------------------------------------------------------------------
// Running

/// Result of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub wall_time_seconds: f64,
    pub jobs: usize,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub hbflow: String,
    pub target: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
}

/// Collects artifacts in memory until the run succeeds.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Loads, validates and runs a config; returns the run directory.
pub fn run_experiment(config_path: &Path, root: &Path, jobs: usize) -> Result<PathBuf> {
    let (cfg, hash) = load_config(config_path)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let artifacts = pool.install(|| execute(&cfg, &hash))?;
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        versions: Versions {
            hbflow: env!("CARGO_PKG_VERSION").to_string(),
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        },
        wall_time_seconds: start.elapsed().as_secs_f64(),
        jobs: jobs.max(1),
        artifacts: artifacts
            .files
            .iter()
            .map(|(n, b)| ArtifactEntry {
                name: n.clone(),
                sha256: hex::encode(Sha256::digest(b)),
            })
            .collect(),
    };
    let parent = root.join(cfg.output_dir.as_deref().unwrap_or(cfg.experiment.name()));
    let final_dir = parent.join(format!("{}-{}", cfg.experiment.name(), &hash[..12]));
    write_atomically(&parent, &final_dir, &artifacts, &manifest)?;
    Ok(final_dir)
}

fn write_atomically(parent: &Path, final_dir: &Path, artifacts: &Artifacts, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".tmp-{}-{}", std::process::id(), &manifest.config_hash[..12]));
    let result = (|| -> Result<()> {
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        for (name, bytes) in &artifacts.files {
            fs::write(tmp.join(name), bytes)?;
        }
        fs::write(tmp.join("manifest.json"), serde_json::to_vec_pretty(manifest)?)?;
        if final_dir.exists() {
            fs::remove_dir_all(final_dir)?;
        }
        fs::rename(&tmp, final_dir)?;
        Ok(())
    })();
    if result.is_err() && tmp.exists() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

/// Runs the experiment and returns its artifacts without touching disk.
pub fn execute(cfg: &ExperimentConfig, hash: &str) -> Result<Artifacts> {
    let built = build_problem(cfg)?;
    let mut art = Artifacts::default();
    match cfg.experiment {
        ExperimentKind::TwodTrajectories => {
            trajectories(cfg.twod_trajectories.as_ref().expect("validated"), &built, hash, &mut art)?
        }
        ExperimentKind::ErrorCurves => error_curves(cfg.error_curves.as_ref().expect("validated"), &built, hash, &mut art)?,
        ExperimentKind::DlnError => error_curves(cfg.dln_error.as_ref().expect("validated"), &built, hash, &mut art)?,
        ExperimentKind::OrderSweep => order_sweep(cfg.order_sweep.as_ref().expect("validated"), &built, hash, &mut art)?,
        ExperimentKind::Smoothness => smoothness(cfg.smoothness.as_ref().expect("validated"), &built, hash, &mut art)?,
        ExperimentKind::DlnBias => dln_bias(cfg.dln_bias.as_ref().expect("validated"), &built, hash, &mut art)?,
    }
    Ok(art)
}

fn start_point(given: &Option<Vec<f64>>, built: &Built) -> Result<Vec<f64>> {
    given
        .clone()
        .or_else(|| built.default_beta0.clone())
        .ok_or_else(|| Error::config("beta0", "a start point is required"))
}

fn with_hash(mut t: Trajectory, hash: &str) -> Trajectory {
    t.meta.config_hash = hash.to_string();
    t
}

fn trajectory_csv(art: &mut Artifacts, t: &Trajectory) -> Result<()> {
    art.csv(&format!("trajectory_{}.csv", t.meta.label), |buf| t.write_csv(buf))
}

fn trajectories(b: &TrajectoriesBlock, built: &Built, hash: &str, art: &mut Artifacts) -> Result<()> {
    let p = built.problem.as_ref();
    let beta0 = start_point(&b.beta0, built)?;
    let mut flows = vec![FlowConfig::rgf(b.mu, b.eta)];
    flows.extend(b.alphas.iter().filter(|a| **a >= 2).map(|&a| FlowConfig::hbf(a, b.mu, b.eta).with_mode(b.mode)));
    let flow_runs: Vec<Result<Trajectory>> = flows
        .par_iter()
        .map(|f| {
            let f = f.clone().with_integrator(b.integrator, b.substeps);
            run_flow(p, &beta0, &f, b.steps)
        })
        .collect();
    let mut runs = vec![
        with_hash(run_discrete(Optimizer::Gd, p, &beta0, b.eta, 0.0, b.steps)?, hash),
        with_hash(run_discrete(Optimizer::Hb, p, &beta0, b.eta, b.mu, b.steps)?, hash),
    ];
    runs[1].meta.label = "hb".into();
    for r in flow_runs {
        runs.push(with_hash(r?, hash));
    }
    let mut summary = csv::Writer::from_writer(Vec::new());
    let d = beta0.len();
    let mut header = vec!["run".to_string()];
    header.extend((0..d).map(|i| format!("beta_{i}")));
    header.push("distance_to_hb".into());
    summary.write_record(&header)?;
    let hb_end = runs[1].last().to_vec();
    for r in &runs {
        trajectory_csv(art, r)?;
        let mut row = vec![r.meta.label.clone()];
        row.extend(r.last().iter().map(|v| format_num(*v)));
        row.push(format_num(crate::linalg::distance(r.last(), &hb_end)));
        summary.write_record(&row)?;
    }
    art.add("endpoints.csv", summary.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    if d >= 2 {
        let mut plot = LinePlot::new("trajectories", "beta_0", "beta_1");
        for r in &runs {
            plot.add(Series::new(r.meta.label.clone(), r.points.iter().map(|p| (p[0], p[1])).collect()));
        }
        art.add("trajectories.svg", plot.to_svg(hash).into_bytes());
    }
    Ok(())
}

fn error_curves(b: &ErrorCurvesBlock, built: &Built, hash: &str, art: &mut Artifacts) -> Result<()> {
    let p = built.problem.as_ref();
    let beta0 = start_point(&b.beta0, built)?;
    let hb = run_discrete(Optimizer::Hb, p, &beta0, b.eta, b.mu, b.steps)?;
    let mut flows: Vec<(String, FlowConfig)> = vec![("rgf".into(), FlowConfig::rgf(b.mu, b.eta))];
    for mode in &b.modes {
        let tag = match mode {
            CtMode::FiniteK => "finite",
            CtMode::Asymptotic => "asym",
        };
        for &a in &b.alphas {
            if a >= 2 {
                flows.push((format!("hbf{a}_{tag}"), FlowConfig::hbf(a, b.mu, b.eta).with_mode(*mode)));
            }
        }
    }
    let results: Vec<Result<(String, crate::diagnostics::ErrorSeries)>> = flows
        .par_iter()
        .map(|(name, f)| {
            let f = f.clone().with_integrator(b.integrator, b.substeps);
            let mut t = run_flow(p, &beta0, &f, b.steps)?;
            t.meta.label = name.clone();
            Ok((name.clone(), discretization_error(&hb, &t)?))
        })
        .collect();
    let mut plot = LinePlot::new("discretization error", "k", "|eps_k|").log_y();
    for r in results {
        let (name, series) = r?;
        art.csv(&format!("error_{name}.csv"), |buf| series.write_csv(buf))?;
        plot.add(Series::new(
            name,
            series.k.iter().zip(&series.eps_norm).map(|(k, e)| (*k as f64, *e)).collect(),
        ));
    }
    art.add("error_curves.svg", plot.to_svg(hash).into_bytes());
    Ok(())
}

fn order_sweep(b: &OrderSweepBlock, built: &Built, hash: &str, art: &mut Artifacts) -> Result<()> {
    let p = built.problem.as_ref();
    let beta0 = start_point(&b.beta0, built)?;
    let cells: Vec<(usize, f64)> = b
        .alphas
        .iter()
        .flat_map(|&a| b.eta_grid.iter().map(move |&e| (a, e)))
        .collect();
    let family = |alpha: usize| OrderFamily {
        reference: Optimizer::Hb,
        mu: b.mu,
        flow: if alpha == 1 {
            FlowConfig::rgf(b.mu, 1.0)
        } else {
            FlowConfig::hbf(alpha, b.mu, 1.0).with_mode(b.mode)
        }
        .with_integrator(b.integrator, b.substeps),
    };
    let results: Vec<Result<(usize, f64)>> = cells
        .par_iter()
        .map(|&(a, eta)| endpoint_error(p, &beta0, &family(a), eta, b.t_total))
        .collect();
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(["alpha", "slope", "points", "excluded"])?;
    let mut plot = LinePlot::new("order sweep", "log10 eta", "|eps_N|").log_y();
    let mut results = results.into_iter();
    for &a in &b.alphas {
        let chunk: Vec<(f64, Result<(usize, f64)>)> = b.eta_grid.iter().map(|&e| (e, results.next().expect("one per cell"))).collect();
        let fit = fit_order(&b.eta_grid, chunk)?;
        art.csv(&format!("order_alpha{a}.csv"), |buf| fit.write_csv(buf))?;
        table.write_record([
            a.to_string(),
            format_num(fit.slope),
            fit.points.len().to_string(),
            fit.excluded.len().to_string(),
        ])?;
        plot.add(Series::new(
            format!("alpha={a} slope={:.2}", fit.slope),
            fit.points.iter().map(|pt| (pt.eta.log10(), pt.eps_final)).collect(),
        ));
    }
    art.add("slopes.csv", table.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    art.add("order_sweep.svg", plot.to_svg(hash).into_bytes());
    Ok(())
}

/// `𝒟` along a discrete run; epochs where it is undefined are `None`.
pub fn smoothness_trace(problem: &dyn Problem, init: &[f64], eta: f64, mu: f64, epochs: usize) -> Result<Vec<Option<f64>>> {
    let mut state = DiscreteState::new(init.to_vec(), eta, mu)?;
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        out.push(match directional_smoothness(problem, &state.beta, eta) {
            Ok(v) => Some(v),
            Err(Error::VanishingGradient(_)) => None,
            Err(e) => return Err(e),
        });
        state = hb_step(&state, problem)?;
    }
    Ok(out)
}

/// Mean of the defined values among the last `window` entries.
pub fn late_mean(trace: &[Option<f64>], window: usize) -> Option<f64> {
    let vals: Vec<f64> = trace[trace.len().saturating_sub(window)..].iter().flatten().cloned().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn smoothness(b: &SmoothnessBlock, built: &Built, hash: &str, art: &mut Artifacts) -> Result<()> {
    let p = built.problem.as_ref();
    let init = built.init.as_ref().expect("mlp problems carry an init");
    let traces: Vec<Result<Vec<Option<f64>>>> = b.mus.par_iter().map(|&mu| smoothness_trace(p, init, b.eta, mu, b.epochs)).collect();
    let traces: Vec<Vec<Option<f64>>> = traces.into_iter().collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["epoch".to_string()];
    header.extend(b.mus.iter().map(|m| format!("D_mu{m}")));
    w.write_record(&header)?;
    for e in 0..b.epochs {
        let mut row = vec![e.to_string()];
        row.extend(traces.iter().map(|t| t[e].map(format_num).unwrap_or_default()));
        w.write_record(&row)?;
    }
    art.add("smoothness.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    let mut s = csv::Writer::from_writer(Vec::new());
    s.write_record(["mu", "late_mean_D", "two_over_eta"])?;
    let mut plot = LinePlot::new("directional smoothness", "epoch", "D");
    for (mu, t) in b.mus.iter().zip(&traces) {
        s.write_record([
            format_num(*mu),
            late_mean(t, b.late_window).map(format_num).unwrap_or_default(),
            format_num(2.0 / b.eta),
        ])?;
        plot.add(Series::new(
            format!("mu={mu}"),
            t.iter().enumerate().filter_map(|(e, v)| v.map(|v| (e as f64, v))).collect(),
        ));
    }
    art.add("smoothness_summary.csv", s.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    art.add("smoothness.svg", plot.to_svg(hash).into_bytes());
    Ok(())
}

fn dln_bias(b: &DlnBiasBlock, built: &Built, hash: &str, art: &mut Artifacts) -> Result<()> {
    let data = built.data.as_ref().expect("dln problems carry data");
    let w_star = built
        .w_star
        .clone()
        .ok_or_else(|| Error::config("problem.csv", "dln_bias needs a synthetic instance with known w*"))?;
    let cells: Vec<(f64, f64)> = b.scales.iter().flat_map(|&s| b.mus.iter().map(move |&m| (s, m))).collect();
    let results: Vec<Result<(f64, f64, crate::implicit_bias::BiasReport, Option<f64>)>> = cells
        .par_iter()
        .map(|&(s, mu)| {
            let (p, m) = scaled_init(s, b.theta, data.d());
            let cfg = DlnFlowConfig {
                mu,
                eta: b.eta,
                substeps: b.substeps,
                integrator: Integrator::Rk4,
                correction: true,
                max_time: b.max_time,
                loss_rtol: 1e-10,
                record_every: b.record_every,
            };
            let cell = |e: Error| match e {
                Error::NotConverged(msg) => Error::NotConverged(format!("cell s={s}, mu={mu}: {msg}")),
                other => other,
            };
            let run = run_dln_flow(data, &p, &m, &cfg).map_err(cell)?;
            let report = bias_report(&run, &w_star).map_err(cell)?;
            let discrete = if b.discrete {
                let fit = train_discrete(data, &p, &m, b.eta, mu, b.discrete_max_iter, 1e-10)?;
                Some(crate::linalg::distance(&fit.w, &w_star))
            } else {
                None
            };
            Ok((s, mu, report, discrete))
        })
        .collect();
    let mut agg = csv::Writer::from_writer(Vec::new());
    agg.write_record(["s", "mu", "generalization", "kkt_residual", "mean_kappa_ratio", "discrete_generalization"])?;
    for r in results {
        let (s, mu, report, discrete) = r?;
        let ratio = report.kappa_inf.iter().zip(&report.kappa0).map(|(a, b)| a / b).sum::<f64>() / report.kappa0.len() as f64;
        agg.write_record([
            format_num(s),
            format_num(mu),
            format_num(report.generalization),
            format_num(report.kkt_residual),
            format_num(ratio),
            discrete.map(format_num).unwrap_or_default(),
        ])?;
        let mut json = serde_json::to_value(&report)?;
        json["config_hash"] = serde_json::Value::String(hash.to_string());
        art.add(format!("bias_s{s}_mu{mu}.json"), serde_json::to_vec_pretty(&json)?);
    }
    art.add("dln_bias.csv", agg.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    Ok(())
}
