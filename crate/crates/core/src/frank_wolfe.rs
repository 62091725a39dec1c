//! Frank-Wolfe over Wasserstein space with trust-region linear minimization.
//!
//! Each iteration linearizes the functional at the current cloud, estimates
//! the norm `s` of the derivative's gradient field, and moves to the minimizer
//! of the linearization over a Wasserstein ball whose radius follows
//! `delta = min(beta1, beta2 s, beta3 s^(1/alpha))`.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{mean_squared_gradient_norm, ParticleCloud};
use crate::dual::{trust_region_step, OracleMode, PushforwardSampler};
use crate::error::{Error, Result};
use crate::functional::{Functional, GradientModel};
use crate::objective::{dot, SmoothObjective};

/// Clouds up to this size get the exact gradient norm.
pub const FULL_BATCH_NORM_LIMIT: usize = 4096;
/// One-sided normal quantile used by the subsampled norm estimate.
const NORM_CONFIDENCE_Z: f64 = 2.326;
const MAX_DELTA_HALVINGS: usize = 8;

/// Problem constants from which the step and tolerance schedule is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// Gradient-dominance constant and exponent: `tau r^theta <= |grad|`.
    pub tau: f64,
    pub theta: f64,
    /// Hölder constant and exponent of the functional's derivative.
    pub hoelder_constant: f64,
    pub alpha: f64,
    /// Radii within which the richness and dominance assumptions hold.
    pub delta1: f64,
    pub delta2: f64,
    /// Smoothness of the derivative oracles.
    pub smoothness: f64,
    /// Target accuracy.
    pub epsilon: f64,
}

/// How the iterate is represented between steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IterateMode {
    /// One prox image per atom, giving a new cloud of the same size.
    Materialized,
    /// Keep the chain of prox maps and resample `draws` atoms of the initial
    /// cloud through it at every iteration.
    Chained { draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub r: f64,
    pub eps_hat: f64,
    pub eps_bar: f64,
    pub eps_tilde: f64,
    pub k_max: usize,
    pub alpha: f64,
    pub seed: u64,
    pub inner: OracleMode,
    pub iterate: IterateMode,
    pub max_wall: Option<Duration>,
    /// Fill the `wall_ms` column; off by default so traces are reproducible.
    pub record_wall_time: bool,
}

impl FWConfig {
    pub fn from_schedule(p: &ScheduleParams, seed: u64) -> Result<Self> {
        let positive = [p.tau, p.theta, p.hoelder_constant, p.delta1, p.delta2, p.smoothness, p.epsilon];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("schedule constants must be positive and finite".into()));
        }
        if !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1]", p.alpha)));
        }
        let a = p.alpha;
        let a_star = (1.0 + a) / a;
        let r = p.tau * p.epsilon.powf(p.theta) / 2.0;
        let cfg = FWConfig {
            beta1: p.delta1.min(p.delta2),
            beta2: a / (4.0 * p.smoothness),
            beta3: (1.0 - a / 2.0).powf(1.0 / a) * p.hoelder_constant.powf(-1.0 / a),
            r,
            eps_hat: r / (2.0 * a_star),
            eps_bar: a * r / 2.0,
            eps_tilde: r / (4.0 * a_star),
            k_max: 500,
            alpha: a,
            seed,
            inner: OracleMode::FullBatch,
            iterate: IterateMode::Materialized,
            max_wall: None,
            record_wall_time: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let budgets = [
            self.beta1,
            self.beta2,
            self.beta3,
            self.r,
            self.eps_hat,
            self.eps_bar,
            self.eps_tilde,
        ];
        if budgets.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("step multipliers and budgets must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        Ok(())
    }

    /// `min(beta1, beta2 s, beta3 s^(1/alpha))`
    pub fn step_radius(&self, s: f64) -> f64 {
        self.beta1.min(self.beta2 * s).min(self.beta3 * s.powf(1.0 / self.alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FWRecord {
    pub iter: usize,
    /// Functional value at the iterate the step starts from.
    pub objective: f64,
    pub s: f64,
    /// Scheduled radius; zero on the stopping row.
    pub delta: f64,
    pub zeta: f64,
    /// Radius actually used after halvings.
    pub delta_used: f64,
    pub halvings: usize,
    pub lambda: f64,
    pub gap: f64,
    /// Draws from the current iterate made by the inner solver.
    pub samples: u64,
    /// Draws from the initial cloud that the same step costs when every
    /// sample is pushed through the full chain of maps.
    pub chain_samples: u64,
    pub grad_evals: u64,
    pub marginal_error: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FWStatus {
    Converged,
    IterationBudget,
    WallClockBudget,
}

#[derive(Debug, Clone)]
pub struct FWOutcome {
    pub cloud: ParticleCloud,
    pub trace: Vec<FWRecord>,
    pub status: FWStatus,
    pub final_objective: f64,
}

impl FWOutcome {
    pub fn total_grad_evals(&self) -> u64 {
        self.trace.iter().map(|r| r.grad_evals).sum()
    }
}

/// Writes `iter,J,s,delta,zeta,samples,wall_ms`.
pub fn write_trace_csv<W: Write>(trace: &[FWRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "J", "s", "delta", "zeta", "samples", "wall_ms"])?;
    for r in trace {
        w.write_record([
            r.iter.to_string(),
            r.objective.to_string(),
            r.s.to_string(),
            r.delta.to_string(),
            r.zeta.to_string(),
            r.samples.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the conditional-gradient loop from `mu0`.
pub fn run_frank_wolfe(functional: &Functional, mu0: &ParticleCloud, cfg: &FWConfig) -> Result<FWOutcome> {
    run_frank_wolfe_observed(functional, mu0, cfg, |_, _| {})
}

/// [`run_frank_wolfe`], calling `observe` with every trace row and the
/// iterate that row was computed at.
pub fn run_frank_wolfe_observed<F>(
    functional: &Functional,
    mu0: &ParticleCloud,
    cfg: &FWConfig,
    mut observe: F,
) -> Result<FWOutcome>
where
    F: FnMut(&FWRecord, &ParticleCloud),
{
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mu = mu0.clone();
    let mut chain: Vec<PushforwardSampler> = Vec::new();
    let mut trace = Vec::new();
    let mut status = FWStatus::IterationBudget;
    for iter in 1..=cfg.k_max {
        if let Some(limit) = cfg.max_wall {
            if start.elapsed() >= limit {
                status = FWStatus::WallClockBudget;
                break;
            }
        }
        let mut chain_samples = 0;
        if let IterateMode::Chained { draws } = cfg.iterate {
            if !chain.is_empty() {
                mu = resample_chain(mu0, &chain, draws, &mut rng)?;
                chain_samples += (draws * chain.len()) as u64;
            }
        }
        let phi = functional.derivative_oracle(&mu, cfg.eps_hat)?;
        let s = estimate_gradient_norm(&phi, &mu, cfg.eps_bar, &mut rng);
        let mut grad_evals = if mu.len() <= FULL_BATCH_NORM_LIMIT { mu.len() as u64 } else { 0 };
        let mut record = FWRecord {
            iter,
            objective: phi.functional_value(),
            s,
            delta: 0.0,
            zeta: 0.0,
            delta_used: 0.0,
            halvings: 0,
            lambda: f64::NAN,
            gap: f64::NAN,
            samples: 0,
            chain_samples,
            grad_evals,
            marginal_error: phi.marginal_error(),
            wall_ms: 0,
        };
        if s <= cfg.r {
            record.wall_ms = wall_ms(cfg, start);
            observe(&record, &mu);
            trace.push(record);
            status = FWStatus::Converged;
            break;
        }
        let delta = cfg.step_radius(s);
        let zeta = delta * cfg.eps_tilde;
        let phi: Arc<dyn SmoothObjective> = Arc::new(phi);
        let mut radius = delta;
        let mut halvings = 0;
        let (sampler, report) = loop {
            match trust_region_step(phi.clone(), &mu, radius, zeta, cfg.inner, &mut rng) {
                Ok(step) => break step,
                Err(Error::DeltaTooLarge { .. }) if halvings < MAX_DELTA_HALVINGS => {
                    halvings += 1;
                    radius *= 0.5;
                }
                Err(Error::DeltaTooLarge { delta, .. }) => {
                    return Err(Error::StepRejected {
                        retries: halvings,
                        delta,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        let next = sampler.materialize()?;
        grad_evals += report.grad_evals + next.grad_evals;
        record.delta = delta;
        record.zeta = zeta;
        record.delta_used = radius;
        record.halvings = halvings;
        record.lambda = report.lambda_star;
        record.gap = report.gap.unwrap_or(f64::NAN);
        record.samples = report.samples_drawn + mu.len() as u64;
        record.chain_samples += record.samples;
        record.grad_evals = grad_evals;
        record.wall_ms = wall_ms(cfg, start);
        observe(&record, &mu);
        trace.push(record);
        mu = next.cloud;
        if let IterateMode::Chained { .. } = cfg.iterate {
            chain.push(sampler);
        }
    }
    let cloud = match cfg.iterate {
        IterateMode::Chained { .. } if !chain.is_empty() => push_through_chain(mu0, &chain)?,
        _ => mu,
    };
    let final_objective = functional.value(&cloud)?;
    Ok(FWOutcome {
        cloud,
        trace,
        status,
        final_objective,
    })
}

fn wall_ms(cfg: &FWConfig, start: Instant) -> u64 {
    if cfg.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn push_through_chain(mu0: &ParticleCloud, chain: &[PushforwardSampler]) -> Result<ParticleCloud> {
    mu0.map_points(|x| {
        let mut y = x.to_vec();
        for map in chain {
            match map.push(&y) {
                Ok(p) => y = p.y,
                Err(_) => return vec![f64::NAN; x.len()],
            }
        }
        y
    })
}

fn resample_chain<R: Rng + ?Sized>(
    mu0: &ParticleCloud,
    chain: &[PushforwardSampler],
    draws: usize,
    rng: &mut R,
) -> Result<ParticleCloud> {
    let idx: Vec<usize> = (0..draws).map(|_| rng.random_range(0..mu0.len())).collect();
    let picked: Vec<&[f64]> = idx.iter().map(|&i| mu0.point(i)).collect();
    push_through_chain(&ParticleCloud::from_points(&picked)?, chain)
}

/// Lower estimate of `|grad phi|_{L2(mu)}` within `eps_bar`.
pub fn estimate_gradient_norm<R: Rng + ?Sized>(
    phi: &GradientModel,
    mu: &ParticleCloud,
    eps_bar: f64,
    rng: &mut R,
) -> f64 {
    estimate_gradient_norm_with(phi, mu, eps_bar, rng, FULL_BATCH_NORM_LIMIT)
}

/// As [`estimate_gradient_norm`], subsampling once the cloud exceeds `full_batch_limit`.
///
/// The subsampled path grows a uniform sample until the confidence band on
/// the root mean square is narrower than `eps_bar`, then returns its lower end.
pub fn estimate_gradient_norm_with<R: Rng + ?Sized>(
    phi: &dyn SmoothObjective,
    mu: &ParticleCloud,
    eps_bar: f64,
    rng: &mut R,
    full_batch_limit: usize,
) -> f64 {
    if mu.len() <= full_batch_limit {
        return mean_squared_gradient_norm(mu, phi);
    }
    const BATCH: usize = 256;
    let cap = (64 * mu.len()).max(100_000);
    let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    loop {
        for _ in 0..BATCH {
            let g = phi.gradient_vec(mu.point(rng.random_range(0..mu.len())));
            let v = dot(&g, &g);
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
        }
        let sd = (m2 / (count - 1) as f64).sqrt();
        let h = NORM_CONFIDENCE_Z * sd / (count as f64).sqrt();
        let lo = (mean - h).max(0.0).sqrt();
        let hi = (mean + h).sqrt();
        if hi - lo <= eps_bar || count >= cap {
            return lo;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessProbe {
    pub alpha_hat: f64,
    pub t_hat: f64,
    /// No measurable remainder; the fit carries no information.
    pub degenerate: bool,
}

/// Fits `|J(nu) - J(mu) - <grad phi, v>| ~ T W^(1+alpha)/(1+alpha)` over
/// displacements `nu = (id + t v)_# mu` with `|v|_{L2(mu)} = 1`.
///
/// Each random direction `v` is swept over ten scales `t` in `[1e-4, 1e-2]`;
/// the exponent is the median of the per-direction log-log slopes, so one
/// direction of vanishing curvature cannot drag the estimate.
pub fn smoothness_probe<R: Rng + ?Sized>(
    functional: &Functional,
    mu: &ParticleCloud,
    trials: usize,
    rng: &mut R,
) -> Result<SmoothnessProbe> {
    const SCALES: usize = 10;
    if trials < SCALES {
        return Err(Error::InvalidConfig("smoothness probe needs at least 10 trials".into()));
    }
    let phi = functional.derivative_oracle(mu, 1e-12)?;
    let j0 = functional.value(mu)?;
    let n = mu.len() as f64;
    let mut slopes = Vec::new();
    let mut pts = Vec::new();
    for _ in 0..trials / SCALES {
        let v = ParticleCloud::gaussian(mu.len(), mu.dim(), 1.0, rng)?;
        let norm = (v.coords().iter().map(|a| a * a).sum::<f64>() / n).sqrt();
        let linear: f64 = mu
            .points()
            .zip(v.points())
            .map(|(x, d)| dot(&phi.gradient_vec(x), d) / norm)
            .sum::<f64>()
            / n;
        let mut line = Vec::new();
        for k in 0..SCALES {
            let t = 10f64.powf(-4.0 + 2.0 * k as f64 / (SCALES - 1) as f64);
            let coords: Vec<f64> = mu.coords().iter().zip(v.coords()).map(|(x, d)| x + t * d / norm).collect();
            let nu = ParticleCloud::new(mu.dim(), coords)?;
            let rem = (functional.value(&nu)? - j0 - t * linear).abs();
            if rem > 1e-13 * (1.0 + j0.abs()) {
                line.push((t.ln(), rem.ln(), t, rem));
            }
        }
        if line.len() >= 3 {
            slopes.push(log_log_slope(&line));
            pts.extend(line);
        }
    }
    if slopes.is_empty() {
        return Ok(SmoothnessProbe {
            alpha_hat: f64::NAN,
            t_hat: 0.0,
            degenerate: true,
        });
    }
    slopes.sort_by(f64::total_cmp);
    let mid = slopes.len() / 2;
    let slope = if slopes.len() % 2 == 1 {
        slopes[mid]
    } else {
        0.5 * (slopes[mid - 1] + slopes[mid])
    };
    let alpha_hat = slope - 1.0;
    let e = 1.0 + alpha_hat;
    let t_hat = pts.iter().map(|p| p.3 * e / p.2.powf(e)).fold(0.0, f64::max);
    Ok(SmoothnessProbe {
        alpha_hat,
        t_hat,
        degenerate: false,
    })
}

fn log_log_slope(pts: &[(f64, f64, f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Interaction;
    use crate::objective::{Linear, Quadratic};

    fn schedule() -> ScheduleParams {
        ScheduleParams {
            tau: 1.0,
            theta: 1.0,
            hoelder_constant: 1.0,
            alpha: 1.0,
            delta1: 1.0,
            delta2: 2.0,
            smoothness: 1.0,
            epsilon: 1e-3,
        }
    }

    #[test]
    fn schedule_formulas() {
        let c = FWConfig::from_schedule(&schedule(), 0).unwrap();
        assert_eq!(c.beta1, 1.0);
        assert_eq!(c.beta2, 0.25);
        assert_eq!(c.beta3, 0.5);
        assert_eq!(c.r, 5e-4);
        assert_eq!(c.eps_hat, 5e-4 / 4.0);
        assert_eq!(c.eps_bar, 2.5e-4);
        assert_eq!(c.eps_tilde, 5e-4 / 8.0);
        assert_eq!(c.k_max, 500);
        let mut bad = schedule();
        bad.alpha = 1.5;
        assert!(FWConfig::from_schedule(&bad, 0).is_err());
    }

    #[test]
    fn constant_field_norm_band() {
        let mu = ParticleCloud::new(2, (0..20_000).map(|k| k as f64 * 1e-4).collect()).unwrap();
        let f = Linear::new(vec![3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = estimate_gradient_norm_with(&f, &mu, 0.01, &mut rng, 100);
        assert!((4.99..=5.0).contains(&s), "{s}");
    }

    #[test]
    fn probe_flags_zero_functional() {
        let j = Functional::potential(Arc::new(crate::objective::Constant { dim: 2, value: 0.0 }), Interaction::Zero);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu = ParticleCloud::gaussian(10, 2, 1.0, &mut rng).unwrap();
        assert!(smoothness_probe(&j, &mu, 12, &mut rng).unwrap().degenerate);
    }

    #[test]
    fn probe_sees_quadratic_remainder() {
        let j = Functional::potential(Arc::new(Quadratic::isotropic(2)), Interaction::Zero);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu = ParticleCloud::gaussian(10, 2, 1.0, &mut rng).unwrap();
        let p = smoothness_probe(&j, &mu, 12, &mut rng).unwrap();
        assert!((p.alpha_hat - 1.0).abs() < 1e-3, "{p:?}");
        assert!((p.t_hat - 1.0).abs() < 1e-3, "{p:?}");
    }
}
