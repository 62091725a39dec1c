//! JSON experiment configuration.
//!
//! Every config names its experiment in an `"experiment"` field. Seeds have
//! no defaults, and paths are resolved against the directory holding the
//! config file and must exist when it is loaded.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wfw_core::dual::OracleMode;
use wfw_core::frank_wolfe::{FWConfig, ScheduleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Deconv(DeconvConfig),
    MmdFlow(MmdFlowConfig),
    Fw(FwRunConfig),
    TrustRegion(TrustRegionConfig),
}

/// Constants behind the step and tolerance schedule. Missing Hölder and
/// smoothness constants are read off the first derivative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau: f64,
    pub theta: f64,
    pub alpha: f64,
    pub hoelder_constant: Option<f64>,
    pub smoothness: Option<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
    pub k_max: usize,
    /// Failure probability of the sampled inner oracle; full batch when absent.
    pub gamma: Option<f64>,
    pub max_wall_secs: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            theta: 1.0,
            alpha: 1.0,
            hoelder_constant: None,
            smoothness: None,
            delta1: 1.0,
            delta2: 1.0,
            epsilon: 1e-3,
            k_max: 500,
            gamma: None,
            max_wall_secs: None,
        }
    }
}

impl ScheduleConfig {
    /// Builds the loop configuration; `model_smoothness` fills unset constants.
    pub fn fw_config(&self, model_smoothness: f64, seed: u64) -> Result<FWConfig> {
        let l = self.smoothness.unwrap_or(model_smoothness);
        let params = ScheduleParams {
            tau: self.tau,
            theta: self.theta,
            hoelder_constant: self.hoelder_constant.unwrap_or(l),
            alpha: self.alpha,
            delta1: self.delta1,
            delta2: self.delta2,
            smoothness: l,
            epsilon: self.epsilon,
        };
        let mut cfg = FWConfig::from_schedule(&params, seed)?;
        cfg.k_max = self.k_max;
        cfg.inner = match self.gamma {
            Some(gamma) => OracleMode::HighProbability { gamma },
            None => OracleMode::FullBatch,
        };
        if let Some(secs) = self.max_wall_secs {
            if !(secs > 0.0 && secs.is_finite()) {
                bail!("max_wall_secs must be positive");
            }
            cfg.max_wall = Some(std::time::Duration::from_secs_f64(secs));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_modes() -> usize {
    4
}
fn default_radius() -> f64 {
    2.0
}
fn default_fifty() -> usize {
    50
}
fn default_sigma2() -> f64 {
    0.5
}
fn default_deconv_iterations() -> usize {
    20
}
fn default_snapshot_every() -> usize {
    5
}
fn default_mmd_dim() -> usize {
    2
}
fn default_batch() -> usize {
    200
}
fn default_mmd_iterations() -> usize {
    200
}
fn default_baseline_steps() -> usize {
    2000
}
fn default_one() -> f64 {
    1.0
}

/// Deconvolution of a noisy latent mixture in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvConfig {
    /// Seed of the synthetic observations.
    pub data_seed: u64,
    /// One run per seed; each seeds both the initial cloud and the loop.
    pub seeds: Vec<u64>,
    /// Observations to fit instead of synthetic ones.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_fifty")]
    pub observations: usize,
    #[serde(default = "default_fifty")]
    pub particles: usize,
    /// Observation noise variance, also the entropic regularization.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    /// Scale of the Gaussian initial clouds.
    #[serde(default = "default_one")]
    pub init_scale: f64,
    #[serde(default = "default_deconv_iterations")]
    pub iterations: usize,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Student-teacher fit under a random-feature MMD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdFlowConfig {
    /// Seeds the feature batches and the teacher.
    pub teacher_seed: u64,
    /// Seeds the initial student and the loop.
    pub student_seed: u64,
    #[serde(default)]
    pub teacher: Option<PathBuf>,
    #[serde(default)]
    pub student: Option<PathBuf>,
    #[serde(default = "default_mmd_dim")]
    pub dim: usize,
    #[serde(default = "default_fifty")]
    pub particles: usize,
    #[serde(default = "default_batch")]
    pub train_batch: usize,
    #[serde(default = "default_batch")]
    pub val_batch: usize,
    #[serde(default = "default_mmd_iterations")]
    pub iterations: usize,
    #[serde(default = "default_baseline_steps")]
    pub baseline_steps: usize,
    /// Euler step of the gradient-flow baseline; `1/L` of the first model when absent.
    #[serde(default)]
    pub baseline_step: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Single Frank-Wolfe run on a named functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FwRunConfig {
    pub seed: u64,
    pub input: PathBuf,
    #[serde(default)]
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalConfig {
    Potential {
        #[serde(default = "default_potential")]
        v: String,
        #[serde(default = "default_interaction")]
        w: String,
    },
    Mmd {
        target: PathBuf,
        #[serde(default = "default_kernel")]
        kernel: String,
        #[serde(default = "default_one")]
        sigma: f64,
        #[serde(default = "default_imq_beta")]
        beta: f64,
    },
    Deconv {
        data: PathBuf,
        sigma2: f64,
    },
}

fn default_potential() -> String {
    "quadratic".into()
}
fn default_interaction() -> String {
    "zero".into()
}
fn default_kernel() -> String {
    "gaussian".into()
}
fn default_imq_beta() -> f64 {
    0.5
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig::Potential {
            v: default_potential(),
            w: default_interaction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub seed: u64,
    pub input: PathBuf,
    pub objective: String,
    pub delta: f64,
    pub eps: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).context("malformed experiment config")?;
        cfg.resolve(base);
        cfg.check_inputs()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            ExperimentConfig::Deconv(c) => {
                c.data.as_mut().map(fix);
                c.output_dir.as_mut().map(fix);
            }
            ExperimentConfig::MmdFlow(c) => {
                c.teacher.as_mut().map(fix);
                c.student.as_mut().map(fix);
                c.output_dir.as_mut().map(fix);
            }
            ExperimentConfig::Fw(c) => {
                fix(&mut c.input);
                c.trace.as_mut().map(fix);
                c.output.as_mut().map(fix);
                match &mut c.functional {
                    FunctionalConfig::Mmd { target, .. } => fix(target),
                    FunctionalConfig::Deconv { data, .. } => fix(data),
                    FunctionalConfig::Potential { .. } => {}
                }
            }
            ExperimentConfig::TrustRegion(c) => {
                fix(&mut c.input);
                c.output.as_mut().map(fix);
            }
        }
    }

    /// Paths read by the experiment.
    pub fn inputs(&self) -> Vec<&Path> {
        match self {
            ExperimentConfig::Deconv(c) => c.data.iter().map(PathBuf::as_path).collect(),
            ExperimentConfig::MmdFlow(c) => c.teacher.iter().chain(&c.student).map(PathBuf::as_path).collect(),
            ExperimentConfig::Fw(c) => {
                let mut v = vec![c.input.as_path()];
                match &c.functional {
                    FunctionalConfig::Mmd { target, .. } => v.push(target),
                    FunctionalConfig::Deconv { data, .. } => v.push(data),
                    FunctionalConfig::Potential { .. } => {}
                }
                v
            }
            ExperimentConfig::TrustRegion(c) => vec![c.input.as_path()],
        }
    }

    fn check_inputs(&self) -> Result<()> {
        for p in self.inputs() {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if let ExperimentConfig::Deconv(c) = self {
            if c.seeds.is_empty() {
                bail!("deconv needs at least one seed");
            }
        }
        Ok(())
    }
}
