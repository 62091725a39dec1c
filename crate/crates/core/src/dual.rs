//! One-dimensional dual solvers for transport-penalized problems
//!
//! `inf_pi  int f dpi + psi(int 1/2 |y - x|^2 dpi)`
//!
//! over couplings with first marginal `mu`, through the concave dual
//! `sup_lambda g(lambda) - psi*(lambda)`, and the trust-region step used by
//! Frank-Wolfe.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{mean_squared_gradient, ParticleCloud};
use crate::error::{Error, Result};
use crate::moreau::{
    agd_prox, fourth_moment_of_gradient, g_value_and_grad_fullbatch, prox_cloud, supergradient_hp,
    GEvaluation, ProxResult, K_CAP,
};
use crate::objective::SmoothObjective;

/// Hard stop for bisection loops; far beyond double precision resolution.
const MAX_BISECTION_STEPS: usize = 400;
/// Halvings of `l - rho` tried when the optimum lies left of the interval.
const MAX_BRACKET_EXTENSIONS: usize = 60;

/// Convex conjugate of a penalty on the transport cost.
pub trait ConjugatePenalty {
    /// `psi(x)`, possibly `+inf`.
    fn penalty(&self, x: f64) -> f64;
    /// `psi*(lambda)`
    fn conjugate(&self, lambda: f64) -> f64;
    fn right_derivative(&self, lambda: f64) -> f64;
    fn left_derivative(&self, lambda: f64) -> f64;
    /// Lipschitz constant of the conjugate's derivative on `[l, u]`.
    fn conjugate_smoothness(&self, l: f64, u: f64) -> f64;

    /// Closest point to `eta` in the subdifferential at `lambda`.
    fn project_subdifferential(&self, lambda: f64, eta: f64) -> f64 {
        eta.clamp(self.left_derivative(lambda), self.right_derivative(lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Penalty {
    /// Indicator of `[0, delta^2/2]`: a Wasserstein ball of radius `delta`.
    TrustRegionIndicator { delta: f64 },
    /// `x^(1+alpha) / (1+alpha)`
    PowerPenalty { alpha: f64 },
}

impl Penalty {
    pub fn trust_region(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        Ok(Penalty::TrustRegionIndicator { delta })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Penalty::PowerPenalty { alpha })
    }

    /// Largest cost with finite penalty.
    pub fn budget(&self) -> f64 {
        match self {
            Penalty::TrustRegionIndicator { delta } => 0.5 * delta * delta,
            Penalty::PowerPenalty { .. } => f64::INFINITY,
        }
    }
}

impl ConjugatePenalty for Penalty {
    fn penalty(&self, x: f64) -> f64 {
        match *self {
            Penalty::TrustRegionIndicator { delta } => {
                if (0.0..=0.5 * delta * delta).contains(&x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Penalty::PowerPenalty { alpha } => {
                if x < 0.0 {
                    f64::INFINITY
                } else {
                    x.powf(1.0 + alpha) / (1.0 + alpha)
                }
            }
        }
    }

    fn conjugate(&self, lambda: f64) -> f64 {
        let lp = lambda.max(0.0);
        match *self {
            Penalty::TrustRegionIndicator { delta } => 0.5 * delta * delta * lp,
            Penalty::PowerPenalty { alpha } => alpha / (1.0 + alpha) * lp.powf((1.0 + alpha) / alpha),
        }
    }

    fn right_derivative(&self, lambda: f64) -> f64 {
        match *self {
            Penalty::TrustRegionIndicator { delta } => {
                if lambda >= 0.0 {
                    0.5 * delta * delta
                } else {
                    0.0
                }
            }
            Penalty::PowerPenalty { alpha } => lambda.max(0.0).powf(1.0 / alpha),
        }
    }

    fn left_derivative(&self, lambda: f64) -> f64 {
        match *self {
            Penalty::TrustRegionIndicator { delta } => {
                if lambda > 0.0 {
                    0.5 * delta * delta
                } else {
                    0.0
                }
            }
            Penalty::PowerPenalty { alpha } => lambda.max(0.0).powf(1.0 / alpha),
        }
    }

    fn conjugate_smoothness(&self, l: f64, u: f64) -> f64 {
        match *self {
            Penalty::TrustRegionIndicator { .. } => 0.0,
            Penalty::PowerPenalty { alpha } => {
                let e = 1.0 / alpha - 1.0;
                let at = |x: f64| if x > 0.0 { x.powf(e) / alpha } else if e == 0.0 { 1.0 / alpha } else { 0.0 };
                at(l.max(0.0)).max(at(u.max(0.0)))
            }
        }
    }
}

/// Estimates of `g'(lambda)`.
pub trait SupergradientOracle {
    fn supergradient(&mut self, lambda: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OracleCounters {
    pub calls: u64,
    pub samples: u64,
    pub grad_evals: u64,
}

/// Exact full-batch derivative with memoized evaluations.
pub struct FullBatchOracle<'a> {
    f: &'a dyn SmoothObjective,
    mu: &'a ParticleCloud,
    eps: f64,
    cache: Vec<(f64, GEvaluation)>,
    pub counters: OracleCounters,
}

impl<'a> FullBatchOracle<'a> {
    pub fn new(f: &'a dyn SmoothObjective, mu: &'a ParticleCloud, eps: f64) -> Self {
        Self {
            f,
            mu,
            eps,
            cache: Vec::new(),
            counters: OracleCounters::default(),
        }
    }

    pub fn evaluate(&mut self, lambda: f64) -> Result<GEvaluation> {
        if let Some((_, e)) = self.cache.iter().find(|(l, _)| *l == lambda) {
            return Ok(*e);
        }
        let e = g_value_and_grad_fullbatch(self.f, self.mu, lambda, self.eps)?;
        self.counters.calls += 1;
        self.counters.samples += self.mu.len() as u64;
        self.counters.grad_evals += e.grad_evals;
        self.cache.push((lambda, e));
        Ok(e)
    }
}

impl SupergradientOracle for FullBatchOracle<'_> {
    fn supergradient(&mut self, lambda: f64) -> Result<f64> {
        Ok(self.evaluate(lambda)?.gprime)
    }
}

/// Mean of `K` sampled prox displacements, accurate to `eps/max(lambda - rho, 1)`
/// with probability `1 - delta`.
pub struct HighProbabilityOracle<'a, R: Rng> {
    f: &'a dyn SmoothObjective,
    mu: &'a ParticleCloud,
    eps: f64,
    delta: f64,
    rng: &'a mut R,
    pub counters: OracleCounters,
}

impl<'a, R: Rng> HighProbabilityOracle<'a, R> {
    pub fn new(f: &'a dyn SmoothObjective, mu: &'a ParticleCloud, eps: f64, delta: f64, rng: &'a mut R) -> Self {
        Self {
            f,
            mu,
            eps,
            delta,
            rng,
            counters: OracleCounters::default(),
        }
    }
}

impl<R: Rng> SupergradientOracle for HighProbabilityOracle<'_, R> {
    fn supergradient(&mut self, lambda: f64) -> Result<f64> {
        let est = supergradient_hp(self.f, self.mu, lambda, self.eps, self.delta, self.rng, K_CAP)?;
        self.counters.calls += 1;
        self.counters.samples += est.samples;
        self.counters.grad_evals += est.grad_evals;
        Ok(est.value)
    }
}

/// Displacement of one sampled atom; unbiased for `g'` up to prox error `eps`.
pub struct SingleSampleOracle<'a, R: Rng> {
    f: &'a dyn SmoothObjective,
    mu: &'a ParticleCloud,
    eps: f64,
    rng: &'a mut R,
    pub counters: OracleCounters,
}

impl<'a, R: Rng> SingleSampleOracle<'a, R> {
    pub fn new(f: &'a dyn SmoothObjective, mu: &'a ParticleCloud, eps: f64, rng: &'a mut R) -> Self {
        Self {
            f,
            mu,
            eps,
            rng,
            counters: OracleCounters::default(),
        }
    }
}

impl<R: Rng> SupergradientOracle for SingleSampleOracle<'_, R> {
    fn supergradient(&mut self, lambda: f64) -> Result<f64> {
        let i = self.rng.random_range(0..self.mu.len());
        let p = agd_prox(self.f, self.mu.point(i), lambda, self.eps)?;
        self.counters.calls += 1;
        self.counters.samples += 1;
        self.counters.grad_evals += p.grad_evals();
        Ok(p.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualInterval {
    pub l: f64,
    pub u: f64,
    /// Regularization constant used to place `u`.
    pub c: f64,
}

/// `[rho + 1, rho + 1 + sqrt(2 C)]`
pub fn interval_from_c(rho: f64, c: f64) -> (f64, f64) {
    (rho + 1.0, rho + 1.0 + (2.0 * c).sqrt())
}

/// Bracket for the dual maximizer.
///
/// `C` is the largest value for which the penalty regularizes at `l`, namely
/// `E|grad f|^2 / psi*'_-(l)`; the problem is rejected when that falls below
/// `8 L^2`. With this `C` the prox displacement bound forces
/// `g'(u) <= psi*'(u)`.
pub fn dual_interval(f: &dyn SmoothObjective, mu: &ParticleCloud, penalty: &Penalty) -> Result<DualInterval> {
    let rho = f.semiconvexity();
    let lip = f.smoothness();
    let l = rho + 1.0;
    let m2 = mean_squared_gradient(mu, f);
    if m2 == 0.0 {
        return Err(Error::DegenerateObjective);
    }
    let slope = penalty.left_derivative(l);
    let max_slope = if lip > 0.0 {
        m2 / (8.0 * lip * lip)
    } else {
        f64::INFINITY
    };
    if slope > max_slope {
        let max_delta = match penalty {
            Penalty::TrustRegionIndicator { .. } => Some((2.0 * max_slope).sqrt()),
            Penalty::PowerPenalty { .. } => None,
        };
        return Err(Error::RegularizationTooWeak {
            slope,
            max_slope,
            max_delta,
        });
    }
    if slope <= 0.0 {
        return Err(Error::InvalidConfig("penalty conjugate is flat at l".into()));
    }
    let c = m2 / slope;
    let (l, u) = interval_from_c(rho, c);
    Ok(DualInterval { l, u, c })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome {
    pub lambda: f64,
    pub l: f64,
    pub u: f64,
    pub iterations: usize,
}

/// Primal-dual bisection on `[l, u]`; returns the right end.
///
/// After the width test passes, `more(oracle, u)` may ask for further halvings.
pub fn bisect_primal_dual<O, P, F>(
    oracle: &mut O,
    penalty: &P,
    l: f64,
    u: f64,
    eps: f64,
    width: f64,
    mut more: F,
) -> Result<BisectionOutcome>
where
    O: SupergradientOracle + ?Sized,
    P: ConjugatePenalty + ?Sized,
    F: FnMut(&mut O, f64) -> Result<bool>,
{
    if l > u {
        return Err(Error::IntervalEmpty { l, u });
    }
    let b = l;
    let (mut l, mut u) = (l, u);
    let mut iterations = 0;
    while iterations < MAX_BISECTION_STEPS {
        if u - l <= width && !more(oracle, u)? {
            break;
        }
        if u - l <= f64::EPSILON * u.abs().max(1.0) {
            break;
        }
        let lambda = 0.5 * (l + u);
        let eta = oracle.supergradient(lambda)? - penalty.right_derivative(lambda);
        if eta < -eps / (lambda - b).max(1.0) {
            u = lambda;
        } else {
            l = lambda;
        }
        iterations += 1;
    }
    Ok(BisectionOutcome {
        lambda: u,
        l,
        u,
        iterations,
    })
}

/// Bisection that stops as soon as the projected supergradient is small.
pub fn bisect_stochastic<O, P>(oracle: &mut O, penalty: &P, l: f64, u: f64, eps: f64, width: f64) -> Result<BisectionOutcome>
where
    O: SupergradientOracle + ?Sized,
    P: ConjugatePenalty + ?Sized,
{
    if l > u {
        return Err(Error::IntervalEmpty { l, u });
    }
    let b = l;
    let (mut l, mut u) = (l, u);
    let mut lambda = 0.5 * (l + u);
    let mut eta = f64::INFINITY;
    let mut iterations = 0;
    while eta.abs() > eps / (lambda - b).max(1.0) && u - l > width && iterations < MAX_BISECTION_STEPS {
        lambda = 0.5 * (l + u);
        let theta = oracle.supergradient(lambda)?;
        eta = theta - penalty.project_subdifferential(lambda, theta);
        if eta > 0.0 {
            l = lambda;
        } else {
            u = lambda;
        }
        iterations += 1;
    }
    Ok(BisectionOutcome {
        lambda,
        l,
        u,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorOutcome {
    pub lambda_bar: f64,
    /// `lambda_1 .. lambda_k`
    pub iterates: Vec<f64>,
}

/// Projected supergradient ascent with step `alpha (u - l) / sqrt(2k)`,
/// returning the average of the first `k` iterates.
pub fn mirror_ascent_with<O, P>(
    oracle: &mut O,
    penalty: &P,
    l: f64,
    u: f64,
    lambda1: f64,
    alpha: f64,
    k: usize,
) -> Result<MirrorOutcome>
where
    O: SupergradientOracle + ?Sized,
    P: ConjugatePenalty + ?Sized,
{
    if l > u {
        return Err(Error::IntervalEmpty { l, u });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("mirror ascent needs k >= 1".into()));
    }
    let step = alpha * (u - l) / (2.0 * k as f64).sqrt();
    let mut lambda = lambda1.clamp(l, u);
    let mut iterates = Vec::with_capacity(k);
    for i in 0..k {
        iterates.push(lambda);
        if i + 1 == k {
            break;
        }
        let eta = oracle.supergradient(lambda)?;
        let xi = penalty.project_subdifferential(lambda, eta);
        lambda = (lambda + step * (eta - xi)).clamp(l, u);
    }
    let lambda_bar = iterates.iter().sum::<f64>() / k as f64;
    Ok(MirrorOutcome { lambda_bar, iterates })
}

/// Envelope on the expected suboptimality of the averaged mirror iterate.
pub fn mirror_ascent_bound(l: f64, u: f64, c: f64, d: f64, k: usize, eps: f64) -> f64 {
    (u - l) * ((2.0 * (c * c + d * d) / k as f64).sqrt() + eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OracleMode {
    /// Exact `g'` from a prox of every atom.
    FullBatch,
    /// Averaged sampled displacements; `gamma` is the overall failure probability.
    HighProbability { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolveReport {
    pub lambda_star: f64,
    pub dual_value: f64,
    pub primal_value: Option<f64>,
    pub gap: Option<f64>,
    pub oracle_calls: u64,
    pub samples_drawn: u64,
    pub grad_evals: u64,
    pub iterations: u64,
    /// Bracket actually searched.
    pub interval: (f64, f64),
}

/// Primal value, dual value and gap at `lambda`, from one full-batch evaluation.
fn certify<P: ConjugatePenalty + ?Sized>(e: &GEvaluation, lambda: f64, penalty: &P) -> (f64, f64, f64) {
    let dual = e.g - penalty.conjugate(lambda);
    let primal = e.g - lambda * e.gprime + penalty.penalty(e.gprime);
    // Fenchel-Young residual, computed without cancellation in g
    let gap = penalty.penalty(e.gprime) + penalty.conjugate(lambda) - lambda * e.gprime;
    (primal, dual, gap)
}

/// Moves `l` towards `rho` while the optimum lies to its left.
fn extend_lower_bracket(
    oracle: &mut FullBatchOracle<'_>,
    penalty: &Penalty,
    rho: f64,
    mut l: f64,
    mut u: f64,
) -> Result<(f64, f64, GEvaluation)> {
    let mut at_l = oracle.evaluate(l)?;
    for _ in 0..MAX_BRACKET_EXTENSIONS {
        if at_l.gprime >= penalty.right_derivative(l) {
            break;
        }
        u = l;
        l = rho + 0.5 * (l - rho);
        at_l = oracle.evaluate(l)?;
    }
    Ok((l, u, at_l))
}

fn prox_eps(eps: f64, u: f64, rho: f64) -> f64 {
    eps / (4.0 * (u - rho).max(1.0))
}

/// Bisection that keeps a primal-feasible pushforward and drives the
/// primal-dual gap below `eps`.
///
/// The internal tolerance is `eps / (4 + l)` and the termination width uses
/// `B = max(M, 4 g'(l)^2, 16 (E|grad f|^2)^2)`. With the full-batch oracle the
/// search continues past that width until the exactly evaluated gap at `u` is
/// at most `eps`.
pub fn primal_dual_bisection<R: Rng>(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    penalty: &Penalty,
    eps: f64,
    mode: OracleMode,
    rng: &mut R,
) -> Result<DualSolveReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let interval = dual_interval(f, mu, penalty)?;
    let rho = f.semiconvexity();
    let m2 = mean_squared_gradient(mu, f);
    let mut full = FullBatchOracle::new(f, mu, prox_eps(eps, interval.u, rho) * 1e-3);
    let (l, u, at_l) = extend_lower_bracket(&mut full, penalty, rho, interval.l, interval.u)?;
    let inner_eps = eps / (4.0 + l);
    let width_b = penalty
        .conjugate_smoothness(l, u)
        .max(4.0 * at_l.gprime * at_l.gprime)
        .max(16.0 * m2 * m2);
    let width = inner_eps / width_b;

    let (outcome, mut counters) = match mode {
        OracleMode::FullBatch => {
            let out = bisect_primal_dual(&mut full, penalty, l, u, inner_eps, width, |o, u| {
                let e = o.evaluate(u)?;
                Ok(certify(&e, u, penalty).2 > eps)
            })?;
            (out, full.counters)
        }
        OracleMode::HighProbability { gamma } => {
            let steps = (((u - l) / width).log2().ceil().max(0.0) + 1.0).min(MAX_BISECTION_STEPS as f64);
            let mut hp = HighProbabilityOracle::new(f, mu, 0.5 * inner_eps, gamma / steps, rng);
            let out = bisect_primal_dual(&mut hp, penalty, l, u, inner_eps, width, |_, _| Ok(false))?;
            let mut c = hp.counters;
            c.calls += full.counters.calls;
            c.samples += full.counters.samples;
            c.grad_evals += full.counters.grad_evals;
            (out, c)
        }
    };
    let before = full.counters;
    let e = full.evaluate(outcome.lambda)?;
    counters.calls += full.counters.calls - before.calls;
    counters.grad_evals += full.counters.grad_evals - before.grad_evals;
    counters.samples += full.counters.samples - before.samples;
    let (primal, dual, gap) = certify(&e, outcome.lambda, penalty);
    Ok(DualSolveReport {
        lambda_star: outcome.lambda,
        dual_value: dual,
        primal_value: Some(primal),
        gap: Some(gap),
        oracle_calls: counters.calls,
        samples_drawn: counters.samples,
        grad_evals: counters.grad_evals,
        iterations: outcome.iterations as u64,
        interval: (l, u),
    })
}

/// Bisection for the dual value only, with `B = 2 E|grad f|^2 + D`.
pub fn stochastic_bisection<R: Rng>(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    penalty: &Penalty,
    eps: f64,
    mode: OracleMode,
    rng: &mut R,
) -> Result<DualSolveReport> {
    let interval = dual_interval(f, mu, penalty)?;
    let (l, u) = (interval.l, interval.u);
    let rho = f.semiconvexity();
    let m2 = mean_squared_gradient(mu, f);
    let d = penalty.right_derivative(u);
    let width = eps / (2.0 * m2 + d);
    let mut full = FullBatchOracle::new(f, mu, prox_eps(eps, u, rho) * 1e-3);
    let (outcome, mut counters) = match mode {
        OracleMode::FullBatch => {
            let out = bisect_stochastic(&mut full, penalty, l, u, eps, width)?;
            (out, full.counters)
        }
        OracleMode::HighProbability { gamma } => {
            let steps = (4.0 * (2.0 * m2 + d) * (u - l) / eps).log2().max(0.0) + 1.0;
            let mut hp = HighProbabilityOracle::new(f, mu, 0.25 * eps, gamma / steps, rng);
            let out = bisect_stochastic(&mut hp, penalty, l, u, eps, width)?;
            (out, hp.counters)
        }
    };
    let before = full.counters;
    let e = full.evaluate(outcome.lambda)?;
    counters.calls += full.counters.calls - before.calls;
    counters.grad_evals += full.counters.grad_evals - before.grad_evals;
    counters.samples += full.counters.samples - before.samples;
    Ok(DualSolveReport {
        lambda_star: outcome.lambda,
        dual_value: e.g - penalty.conjugate(outcome.lambda),
        primal_value: None,
        gap: None,
        oracle_calls: counters.calls,
        samples_drawn: counters.samples,
        grad_evals: counters.grad_evals,
        iterations: outcome.iterations as u64,
        interval: (l, u),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MirrorReport {
    pub lambda_bar: f64,
    pub dual_value: f64,
    /// Second-moment bound `C` on the single-sample oracle.
    pub c: f64,
    /// Bound `D` on the conjugate's right derivative over the interval.
    pub d: f64,
    pub bound: f64,
    pub interval: (f64, f64),
    pub counters: OracleCounters,
    pub iterates: Vec<f64>,
}

/// Stochastic mirror ascent on the dual with single-sample oracles, started at `l`.
pub fn mirror_ascent<R: Rng>(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    penalty: &Penalty,
    eps: f64,
    k: usize,
    rng: &mut R,
) -> Result<MirrorReport> {
    let interval = dual_interval(f, mu, penalty)?;
    let (l, u) = (interval.l, interval.u);
    let c = 16.0 * fourth_moment_of_gradient(f, mu).sqrt();
    let d = penalty.right_derivative(u);
    let alpha = 1.0 / (c * c + d * d).sqrt();
    let inner = if u > l { eps / (4.0 * (u - l)) } else { eps };
    let mut oracle = SingleSampleOracle::new(f, mu, inner, rng);
    let out = mirror_ascent_with(&mut oracle, penalty, l, u, l, alpha, k)?;
    let mut counters = oracle.counters;
    let e = g_value_and_grad_fullbatch(f, mu, out.lambda_bar, inner * 1e-3)?;
    counters.grad_evals += e.grad_evals;
    Ok(MirrorReport {
        lambda_bar: out.lambda_bar,
        dual_value: e.g - penalty.conjugate(out.lambda_bar),
        c,
        d,
        bound: mirror_ascent_bound(l, u, c, d, k, eps),
        interval: (l, u),
        counters,
        iterates: out.iterates,
    })
}

/// `int f dpi + psi(cost) - (g(lambda) - psi*(lambda))` for the prox pushforward at `lambda`.
pub fn primal_dual_gap(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    penalty: &Penalty,
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    let e = g_value_and_grad_fullbatch(f, mu, lambda, eps)?;
    if !penalty.penalty(e.gprime).is_finite() {
        return Err(Error::InfeasiblePrimal {
            cost: e.gprime,
            budget: penalty.budget(),
        });
    }
    Ok(certify(&e, lambda, penalty).2)
}

/// The map `x -> prox_{f/lambda}(x)` applied to draws from a source cloud.
#[derive(Clone)]
pub struct PushforwardSampler {
    f: Arc<dyn SmoothObjective>,
    source: ParticleCloud,
    lambda: f64,
    eps: f64,
}

#[derive(Debug, Clone)]
pub struct Materialized {
    pub cloud: ParticleCloud,
    /// `(1/n) sum 1/2 |m(x_i) - x_i|^2`
    pub mean_cost: f64,
    pub grad_evals: u64,
}

impl PushforwardSampler {
    pub fn new(f: Arc<dyn SmoothObjective>, source: ParticleCloud, lambda: f64, eps: f64) -> Self {
        Self {
            f,
            source,
            lambda,
            eps,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source(&self) -> &ParticleCloud {
        &self.source
    }

    pub fn push(&self, x: &[f64]) -> Result<ProxResult> {
        agd_prox(self.f.as_ref(), x, self.lambda, self.eps)
    }

    /// Draws a source atom uniformly and returns it with its image.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, ProxResult)> {
        let x = self.source.point(rng.random_range(0..self.source.len())).to_vec();
        let p = self.push(&x)?;
        Ok((x, p))
    }

    /// One image per source atom, in source order.
    pub fn materialize(&self) -> Result<Materialized> {
        let proxes = prox_cloud(self.f.as_ref(), &self.source, self.lambda, self.eps)?;
        let n = proxes.len() as f64;
        let mean_cost = proxes.iter().map(|p| p.theta).sum::<f64>() / n;
        let grad_evals = proxes.iter().map(|p| p.grad_evals()).sum();
        let points: Vec<Vec<f64>> = proxes.into_iter().map(|p| p.y).collect();
        Ok(Materialized {
            cloud: ParticleCloud::from_points(&points)?,
            mean_cost,
            grad_evals,
        })
    }
}

/// Largest trust radius the step accepts: `|grad f|_{L2(mu)} / (2L)`.
pub fn admissible_delta(f: &dyn SmoothObjective, mu: &ParticleCloud) -> f64 {
    let norm = mean_squared_gradient(mu, f).sqrt();
    let lip = f.smoothness();
    if norm == 0.0 {
        0.0
    } else if lip == 0.0 {
        f64::INFINITY
    } else {
        norm / (2.0 * lip)
    }
}

/// Minimizes `int f dnu` over the Wasserstein ball of radius `delta` around
/// `mu`, returning the optimal prox pushforward and the dual certificate.
pub fn trust_region_step<R: Rng>(
    f: Arc<dyn SmoothObjective>,
    mu: &ParticleCloud,
    delta: f64,
    eps: f64,
    mode: OracleMode,
    rng: &mut R,
) -> Result<(PushforwardSampler, DualSolveReport)> {
    let bound = admissible_delta(f.as_ref(), mu);
    if !(delta > 0.0) || delta > bound {
        return Err(Error::DeltaTooLarge { delta, bound });
    }
    let penalty = Penalty::trust_region(delta)?;
    // the bracket applies the same bound in squared form; rounding can put a
    // radius exactly at the bound on either side
    let mut report = match primal_dual_bisection(f.as_ref(), mu, &penalty, eps, mode, rng) {
        Err(Error::RegularizationTooWeak { .. }) => return Err(Error::DeltaTooLarge { delta, bound }),
        other => other?,
    };
    let rho = f.semiconvexity();
    let prox_accuracy = prox_eps(eps, report.interval.1, rho) * 1e-3;
    let mut lambda = report.lambda_star;
    let budget = penalty.budget();
    // certified feasibility of the materialized images; a stochastic solve may
    // land slightly left of the feasible region
    let mut check = g_value_and_grad_fullbatch(f.as_ref(), mu, lambda, prox_accuracy)?;
    report.grad_evals += check.grad_evals;
    let mut tries = 0;
    while check.gprime > budget * (1.0 + 1e-6) && tries < 60 {
        lambda = rho + 2.0 * (lambda - rho);
        check = g_value_and_grad_fullbatch(f.as_ref(), mu, lambda, prox_accuracy)?;
        report.grad_evals += check.grad_evals;
        tries += 1;
    }
    if check.gprime > budget * (1.0 + 1e-6) {
        return Err(Error::InfeasiblePrimal {
            cost: check.gprime,
            budget,
        });
    }
    if lambda != report.lambda_star {
        let (primal, dual, gap) = certify(&check, lambda, &penalty);
        report.lambda_star = lambda;
        report.primal_value = Some(primal);
        report.dual_value = dual;
        report.gap = Some(gap);
    }
    Ok((PushforwardSampler::new(f, mu.clone(), lambda, prox_accuracy), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_examples() {
        assert_eq!(interval_from_c(0.0, 8.0), (1.0, 5.0));
        assert_eq!(interval_from_c(2.0, 32.0), (3.0, 11.0));
    }

    #[test]
    fn power_penalty_conjugate_pair() {
        let p = Penalty::power(0.5).unwrap();
        // Fenchel-Young equality at lambda = psi'(x)
        let x = 0.7f64;
        let lambda = x.powf(0.5);
        let lhs = p.penalty(x) + p.conjugate(lambda);
        assert!((lhs - lambda * x).abs() < 1e-12);
        assert!((p.right_derivative(lambda) - x).abs() < 1e-12);
    }

    #[test]
    fn indicator_conjugate() {
        let p = Penalty::trust_region(0.5).unwrap();
        assert_eq!(p.conjugate(2.0), 0.25);
        assert_eq!(p.conjugate(-1.0), 0.0);
        assert_eq!(p.penalty(0.2), f64::INFINITY);
        assert_eq!(p.project_subdifferential(0.0, 0.1), 0.1);
        assert_eq!(p.project_subdifferential(1.0, 0.0), 0.125);
    }

    #[test]
    fn interval_rejects_large_delta_for_curved_objectives() {
        let f = crate::objective::Quadratic::isotropic(1);
        let mu = ParticleCloud::from_points(&[[1.0], [-1.0]]).unwrap();
        let p = Penalty::trust_region(1.0).unwrap();
        match dual_interval(&f, &mu, &p) {
            Err(Error::RegularizationTooWeak { max_delta: Some(d), .. }) => assert!((d - 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_gap_closed_forms() {
        let f = Linear::new(vec![0.6, 0.8]);
        let mu = ParticleCloud::from_points(&[[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let delta = 0.25;
        let p = Penalty::trust_region(delta).unwrap();
        let gap = primal_dual_gap(&f, &mu, &p, 2.0 / delta, 1e-12).unwrap();
        assert!((gap - 0.75 * delta).abs() < 1e-12);
        assert!(matches!(
            primal_dual_gap(&f, &mu, &p, 0.5 / delta, 1e-12),
            Err(Error::InfeasiblePrimal { .. })
        ));
    }

    #[test]
    fn trust_region_rejects_flat_objective() {
        let f: Arc<dyn SmoothObjective> = Arc::new(crate::objective::Constant { dim: 1, value: 2.0 });
        let mu = ParticleCloud::from_points(&[[1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            trust_region_step(f, &mu, 0.1, 1e-3, OracleMode::FullBatch, &mut rng),
            Err(Error::DeltaTooLarge { .. })
        ));
    }

    #[test]
    fn mirror_ascent_single_step_returns_start() {
        struct Never;
        impl SupergradientOracle for Never {
            fn supergradient(&mut self, _: f64) -> Result<f64> {
                panic!("oracle must not be queried")
            }
        }
        let p = Penalty::trust_region(1.0).unwrap();
        let out = mirror_ascent_with(&mut Never, &p, 1.0, 3.0, 2.5, 1.0, 1).unwrap();
        assert_eq!(out.lambda_bar, 2.5);
        assert!(matches!(
            mirror_ascent_with(&mut Never, &p, 3.0, 1.0, 2.0, 1.0, 1),
            Err(Error::IntervalEmpty { .. })
        ));
    }
}
