//! Experiment runners: deconvolution, student-teacher MMD, single runs of the
//! outer loop and of the trust-region step.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wfw_core::dual::{trust_region_step, DualSolveReport, OracleMode};
use wfw_core::frank_wolfe::{run_frank_wolfe_observed, write_trace_csv, FWOutcome, FWRecord, FWStatus};
use wfw_core::functional::mmd_squared;
use wfw_core::kernel::{Kernel, RandomFeatureMap};
use wfw_core::objective::from_registry;
use wfw_core::{Functional, Interaction, ParticleCloud, SmoothObjective};

use crate::config::{DeconvConfig, FunctionalConfig, FwRunConfig, MmdFlowConfig, TrustRegionConfig};

/// Standard deviation of each latent mode around its center.
pub const LATENT_SPREAD: f64 = 0.1;

/// `n` noisy draws from a latent mixture whose modes sit on a regular polygon.
///
/// Point `i` belongs to mode `i mod modes`, so every mode is populated. The
/// latent point is the mode center plus `LATENT_SPREAD` Gaussian jitter, and
/// the observation adds centered Gaussian noise of variance `noise_var`.
pub fn mixture_observations<R: Rng + ?Sized>(
    modes: usize,
    radius: f64,
    n: usize,
    noise_var: f64,
    rng: &mut R,
) -> Result<ParticleCloud> {
    ensure!(modes >= 1 && n >= 1, "need at least one mode and one observation");
    ensure!(noise_var >= 0.0, "noise variance must be nonnegative");
    let sd = noise_var.sqrt();
    let points: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let angle = std::f64::consts::TAU * (i % modes) as f64 / modes as f64;
            let mut p = [radius * angle.cos(), radius * angle.sin()];
            for c in p.iter_mut() {
                let latent: f64 = StandardNormal.sample(rng);
                let noise: f64 = StandardNormal.sample(rng);
                *c += LATENT_SPREAD * latent + sd * noise;
            }
            p
        })
        .collect();
    Ok(ParticleCloud::from_points(&points)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Trace rows with the Sinkhorn marginal error appended.
pub fn deconv_trace_csv(trace: &[FWRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "J", "s", "delta", "zeta", "samples", "wall_ms", "marginal_error"])?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.objective.to_string(),
            r.s.to_string(),
            r.delta.to_string(),
            r.zeta.to_string(),
            r.samples.to_string(),
            r.wall_ms.to_string(),
            r.marginal_error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Clone)]
pub struct DeconvRun {
    pub seed: u64,
    pub outcome: FWOutcome,
    /// `J` after `k` steps, `k = 0..=iterations`.
    pub objective: Vec<f64>,
    pub snapshots: Vec<(usize, ParticleCloud)>,
}

#[derive(Debug, Clone)]
pub struct DeconvReport {
    pub data: ParticleCloud,
    pub runs: Vec<DeconvRun>,
    /// Mean over seeds of `J` after `k` steps.
    pub averaged: Vec<f64>,
    /// Largest Sinkhorn marginal error over every oracle call.
    pub max_marginal_error: f64,
    pub files: Vec<PathBuf>,
}

pub fn run_deconv(cfg: &DeconvConfig) -> Result<DeconvReport> {
    ensure!(cfg.iterations >= 1, "iterations must be at least 1");
    ensure!(cfg.snapshot_every >= 1, "snapshot_every must be at least 1");
    let data = match &cfg.data {
        Some(path) => ParticleCloud::read_csv(path, false)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
            mixture_observations(cfg.modes, cfg.radius, cfg.observations, cfg.sigma2, &mut rng)?
        }
    };
    let functional = Functional::entropic_deconv(cfg.sigma2, data.clone())?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut max_marginal_error: f64 = 0.0;
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu0 = ParticleCloud::gaussian(cfg.particles, data.dim(), cfg.init_scale, &mut rng)?.with_seed(seed);
        let first = functional.derivative_oracle(&mu0, cfg.schedule.epsilon)?;
        if let Some(e) = first.marginal_error() {
            max_marginal_error = max_marginal_error.max(e);
        }
        let mut fw = cfg.schedule.fw_config(first.smoothness(), seed)?;
        fw.k_max = cfg.iterations;
        let mut objective = Vec::new();
        let mut snapshots = Vec::new();
        let outcome = run_frank_wolfe_observed(&functional, &mu0, &fw, |rec, mu| {
            objective.push(rec.objective);
            let k = rec.iter - 1;
            if k % cfg.snapshot_every == 0 {
                snapshots.push((k, mu.clone()));
            }
        })?;
        for r in &outcome.trace {
            if let Some(e) = r.marginal_error {
                max_marginal_error = max_marginal_error.max(e);
            }
        }
        if outcome.status != FWStatus::Converged {
            objective.push(outcome.final_objective);
        }
        // the final iterate is always kept
        let last = objective.len() - 1;
        if snapshots.last().map(|s| s.0) != Some(last) {
            snapshots.push((last, outcome.cloud.clone()));
        }
        runs.push(DeconvRun {
            seed,
            outcome,
            objective,
            snapshots,
        });
    }
    let len = runs.iter().map(|r| r.objective.len()).max().unwrap_or(0);
    let averaged = (0..len)
        .map(|k| {
            // runs that stopped early hold their last value
            runs.iter()
                .map(|r| r.objective.get(k).or(r.objective.last()).copied().unwrap_or(f64::NAN))
                .sum::<f64>()
                / runs.len() as f64
        })
        .collect();
    let mut report = DeconvReport {
        data,
        runs,
        averaged,
        max_marginal_error,
        files: Vec::new(),
    };
    if let Some(dir) = &cfg.output_dir {
        report.files = write_deconv_outputs(&report, dir)?;
    }
    Ok(report)
}

fn write_deconv_outputs(report: &DeconvReport, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut files = Vec::new();
    let path = dir.join("deconv_data.csv");
    report.data.write_csv(&path, false)?;
    files.push(path);
    for run in &report.runs {
        let path = dir.join(format!("deconv_trace_seed{}.csv", run.seed));
        write_file(&path, &deconv_trace_csv(&run.outcome.trace)?)?;
        files.push(path);
        for (k, cloud) in &run.snapshots {
            let path = dir.join(format!("deconv_seed{}_iter{k}.csv", run.seed));
            cloud.write_csv(&path, false)?;
            files.push(path);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "J"])?;
    for (k, j) in report.averaged.iter().enumerate() {
        w.write_record([k.to_string(), j.to_string()])?;
    }
    let path = dir.join("deconv_average.csv");
    write_file(&path, &w.into_inner()?)?;
    files.push(path);
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmdTraceRow {
    pub iter: usize,
    /// Gradient evaluations spent before this iterate.
    pub grad_evals: u64,
    pub train_mmd2: f64,
    pub val_mmd2: f64,
}

pub fn mmd_trace_csv(rows: &[MmdTraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "grad_evals", "train_mmd2", "val_mmd2"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.grad_evals.to_string(),
            r.train_mmd2.to_string(),
            r.val_mmd2.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Clone)]
pub struct MmdFlowReport {
    pub teacher: ParticleCloud,
    pub student: ParticleCloud,
    pub fw: FWOutcome,
    pub fw_rows: Vec<MmdTraceRow>,
    pub baseline_rows: Vec<MmdTraceRow>,
    pub baseline_step: f64,
    pub baseline_cloud: ParticleCloud,
    pub files: Vec<PathBuf>,
}

/// Student-teacher problem: frozen train and validation feature batches,
/// teacher cloud and initial student.
pub struct MmdProblem {
    pub train: Kernel,
    pub val: Kernel,
    pub teacher: ParticleCloud,
    pub student: ParticleCloud,
}

impl MmdProblem {
    pub fn from_config(cfg: &MmdFlowConfig) -> Result<Self> {
        ensure!(cfg.dim >= 1 && cfg.particles >= 1, "dimension and particle count must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.teacher_seed);
        let train = RandomFeatureMap::sample(cfg.dim, cfg.train_batch, &mut rng)?;
        let val = RandomFeatureMap::sample(cfg.dim, cfg.val_batch, &mut rng)?;
        let teacher = match &cfg.teacher {
            Some(p) => ParticleCloud::read_csv(p, false)?,
            None => ParticleCloud::gaussian(cfg.particles, cfg.dim, 1.0, &mut rng)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.student_seed);
        let student = match &cfg.student {
            Some(p) => ParticleCloud::read_csv(p, false)?,
            None => ParticleCloud::gaussian(cfg.particles, cfg.dim, 1.0, &mut rng)?,
        };
        ensure!(
            teacher.dim() == cfg.dim && student.dim() == cfg.dim,
            "teacher and student must live in dimension {}",
            cfg.dim
        );
        ensure!(
            teacher.len() == student.len(),
            "student ({}) and teacher ({}) must have equal size",
            student.len(),
            teacher.len()
        );
        Ok(Self {
            train: Kernel::RandomFeature(Arc::new(train)),
            val: Kernel::RandomFeature(Arc::new(val)),
            teacher,
            student,
        })
    }

    pub fn functional(&self) -> Functional {
        Functional::mmd(self.train.clone(), self.teacher.clone())
    }

    pub fn row(&self, iter: usize, grad_evals: u64, train_mmd2: f64, mu: &ParticleCloud) -> Result<MmdTraceRow> {
        Ok(MmdTraceRow {
            iter,
            grad_evals,
            train_mmd2,
            val_mmd2: mmd_squared(&self.val, mu, &self.teacher)?,
        })
    }
}

/// Explicit Euler steps `x <- x - step grad phi_mu(x)` on the derivative model.
///
/// Every step evaluates one gradient per particle.
pub fn mmd_gradient_flow(
    problem: &MmdProblem,
    step: f64,
    steps: usize,
) -> Result<(Vec<MmdTraceRow>, ParticleCloud)> {
    ensure!(step > 0.0 && step.is_finite(), "baseline step must be positive");
    let functional = problem.functional();
    let mut mu = problem.student.clone();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut evals = 0u64;
    for k in 0..=steps {
        let phi = functional.derivative_oracle(&mu, 0.0)?;
        rows.push(problem.row(k, evals, phi.functional_value(), &mu)?);
        if k == steps {
            break;
        }
        mu = mu.map_points(|x| {
            let g = phi.gradient_vec(x);
            x.iter().zip(&g).map(|(a, b)| a - step * b).collect()
        })?;
        evals += mu.len() as u64;
    }
    Ok((rows, mu))
}

pub fn run_mmd_flow(cfg: &MmdFlowConfig) -> Result<MmdFlowReport> {
    let problem = MmdProblem::from_config(cfg)?;
    let functional = problem.functional();
    let first = functional.derivative_oracle(&problem.student, cfg.schedule.epsilon)?;
    let mut fw = cfg.schedule.fw_config(first.smoothness(), cfg.student_seed)?;
    fw.k_max = cfg.iterations;
    let mut fw_rows = Vec::new();
    let mut spent = 0u64;
    let mut failure = None;
    let outcome = run_frank_wolfe_observed(&functional, &problem.student, &fw, |rec, mu| {
        match problem.row(rec.iter - 1, spent, rec.objective, mu) {
            Ok(row) => fw_rows.push(row),
            Err(e) => failure = failure.take().or(Some(e)),
        }
        spent += rec.grad_evals;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if outcome.status != FWStatus::Converged {
        fw_rows.push(problem.row(
            outcome.trace.len(),
            outcome.total_grad_evals(),
            outcome.final_objective,
            &outcome.cloud,
        )?);
    }
    let step = match cfg.baseline_step {
        Some(s) => s,
        None if first.smoothness() > 0.0 => 1.0 / first.smoothness(),
        None => 1.0,
    };
    let (baseline_rows, baseline_cloud) = mmd_gradient_flow(&problem, step, cfg.baseline_steps)?;
    let mut report = MmdFlowReport {
        teacher: problem.teacher,
        student: problem.student,
        fw: outcome,
        fw_rows,
        baseline_rows,
        baseline_step: step,
        baseline_cloud,
        files: Vec::new(),
    };
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        let outputs: [(&str, Vec<u8>); 3] = [
            ("mmd_fw.csv", mmd_trace_csv(&report.fw_rows)?),
            ("mmd_flow.csv", mmd_trace_csv(&report.baseline_rows)?),
            ("mmd_fw_trace.csv", {
                let mut buf = Vec::new();
                write_trace_csv(&report.fw.trace, &mut buf)?;
                buf
            }),
        ];
        for (name, bytes) in outputs {
            let path = dir.join(name);
            write_file(&path, &bytes)?;
            report.files.push(path);
        }
        for (name, cloud) in [
            ("mmd_teacher.csv", &report.teacher),
            ("mmd_student_final.csv", &report.fw.cloud),
        ] {
            let path = dir.join(name);
            cloud.write_csv(&path, false)?;
            report.files.push(path);
        }
    }
    Ok(report)
}

/// Instantiates the functional a config describes, in dimension `dim`.
pub fn build_functional(config: &FunctionalConfig, dim: usize) -> Result<Functional> {
    Ok(match config {
        FunctionalConfig::Potential { v, w } => {
            let interaction = match w.split_once(':') {
                Some(("quadratic", s)) => Interaction::Quadratic {
                    strength: s.parse().with_context(|| format!("bad interaction strength {s:?}"))?,
                },
                _ => Interaction::from_name(w)?,
            };
            Functional::potential(from_registry(v, dim)?, interaction)
        }
        FunctionalConfig::Mmd {
            target,
            kernel,
            sigma,
            beta,
        } => {
            let target = ParticleCloud::read_csv(target, false)?;
            Functional::mmd(Kernel::from_name(kernel, *sigma, *beta, None)?, target)
        }
        FunctionalConfig::Deconv { data, sigma2 } => {
            Functional::entropic_deconv(*sigma2, ParticleCloud::read_csv(data, false)?)?
        }
    })
}

pub fn run_fw(cfg: &FwRunConfig) -> Result<FWOutcome> {
    let mu0 = ParticleCloud::read_csv(&cfg.input, cfg.header)?.with_seed(cfg.seed);
    let functional = build_functional(&cfg.functional, mu0.dim())?;
    let first = functional.derivative_oracle(&mu0, cfg.schedule.epsilon)?;
    let fw = cfg.schedule.fw_config(first.smoothness(), cfg.seed)?;
    let outcome = run_frank_wolfe_observed(&functional, &mu0, &fw, |_, _| {})?;
    if let Some(path) = &cfg.trace {
        let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(&outcome.trace, &mut f)?;
        f.flush()?;
    }
    if let Some(path) = &cfg.output {
        outcome.cloud.write_csv(path, cfg.header)?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrustRegionOutput {
    #[serde(flatten)]
    pub report: DualSolveReport,
    pub delta: f64,
    pub mean_cost: f64,
}

pub fn run_trust_region(cfg: &TrustRegionConfig) -> Result<TrustRegionOutput> {
    let mu = ParticleCloud::read_csv(&cfg.input, cfg.header)?.with_seed(cfg.seed);
    let f: Arc<dyn SmoothObjective> = from_registry(&cfg.objective, mu.dim())?;
    let mode = match cfg.gamma {
        Some(gamma) => OracleMode::HighProbability { gamma },
        None => OracleMode::FullBatch,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (sampler, mut report) = trust_region_step(f, &mu, cfg.delta, cfg.eps, mode, &mut rng)?;
    let pushed = sampler.materialize()?;
    report.grad_evals += pushed.grad_evals;
    if let Some(path) = &cfg.output {
        pushed.cloud.write_csv(path, cfg.header)?;
    }
    Ok(TrustRegionOutput {
        report,
        delta: cfg.delta,
        mean_cost: pushed.mean_cost,
    })
}
