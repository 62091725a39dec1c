//! Moreau envelopes through accelerated gradient descent, and the concave dual
//! function
//!
//! `g(lambda) = E_mu min_y [ f(y) + lambda/2 |y - x|^2 ]`
//!
//! whose derivative is the mean half squared prox displacement.

use rand::Rng;
use rayon::prelude::*;

use crate::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::objective::{dot, SmoothObjective};

/// Default cap on the number of samples averaged by [`supergradient_hp`].
pub const K_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    /// Approximate minimizer of `f(y) + lambda/2 |y - x|^2`.
    pub y: Vec<f64>,
    /// `1/2 |y - x|^2`
    pub theta: f64,
    /// Number of accelerated steps taken.
    pub iters: u64,
}

impl ProxResult {
    /// Gradient evaluations spent: one at `x` to size the run, one per step.
    pub fn grad_evals(&self) -> u64 {
        self.iters + 1
    }
}

/// Iteration count of the accelerated scheme for a given start gradient norm.
pub fn agd_iteration_count(kappa: f64, grad_norm: f64, eps: f64) -> u64 {
    if grad_norm == 0.0 {
        return 0;
    }
    let k = (4.0 * kappa * (12.0 * kappa * grad_norm / eps).ln()).ceil();
    if k > 0.0 {
        k as u64
    } else {
        0
    }
}

/// Accelerated gradient descent on `y -> f(y) + lambda/2 |y - x|^2` started at `x`.
///
/// Uses step `1/(lambda + L)` with momentum `(kappa - 1)/(kappa + 1)`,
/// `kappa = sqrt((lambda + L)/(lambda - rho))`.
pub fn agd_prox(f: &dyn SmoothObjective, x: &[f64], lambda: f64, eps: f64) -> Result<ProxResult> {
    let rho = f.semiconvexity();
    if !(lambda > rho) {
        return Err(Error::LambdaTooSmall { lambda, rho });
    }
    let l = f.smoothness();
    let kappa = ((lambda + l) / (lambda - rho)).sqrt();
    let mut grad = f.gradient_vec(x);
    let k = agd_iteration_count(kappa, dot(&grad, &grad).sqrt(), eps);
    let step = 1.0 / (lambda + l);
    let momentum = (kappa - 1.0) / (kappa + 1.0);
    let mut y = x.to_vec();
    let mut z_prev = x.to_vec();
    let mut z = vec![0.0; x.len()];
    for i in 0..k {
        if i > 0 {
            f.gradient(&y, &mut grad);
        }
        for j in 0..x.len() {
            z[j] = y[j] - step * (grad[j] + lambda * (y[j] - x[j]));
        }
        for j in 0..x.len() {
            y[j] = z[j] + momentum * (z[j] - z_prev[j]);
        }
        std::mem::swap(&mut z, &mut z_prev);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate);
        }
    }
    let theta = 0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    Ok(ProxResult { y, theta, iters: k })
}

/// Prox of every atom in the cloud, in atom order.
pub fn prox_cloud(f: &dyn SmoothObjective, mu: &ParticleCloud, lambda: f64, eps: f64) -> Result<Vec<ProxResult>> {
    mu.coords()
        .par_chunks_exact(mu.dim())
        .map(|x| agd_prox(f, x, lambda, eps))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GEvaluation {
    pub g: f64,
    pub gprime: f64,
    pub grad_evals: u64,
}

/// Full-batch `g(lambda)` and `g'(lambda)` with prox accuracy `eps` per atom.
pub fn g_value_and_grad_fullbatch(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    lambda: f64,
    eps: f64,
) -> Result<GEvaluation> {
    let proxes = prox_cloud(f, mu, lambda, eps)?;
    let n = proxes.len() as f64;
    let mut g = 0.0;
    let mut gp = 0.0;
    let mut evals = 0;
    for p in &proxes {
        g += f.value(&p.y) + lambda * p.theta;
        gp += p.theta;
        evals += p.grad_evals();
    }
    Ok(GEvaluation {
        g: g / n,
        gprime: gp / n,
        grad_evals: evals,
    })
}

/// `(1/n) sum |grad f(x_i)|^4`
pub fn fourth_moment_of_gradient(f: &dyn SmoothObjective, mu: &ParticleCloud) -> f64 {
    let v: Vec<f64> = mu
        .coords()
        .par_chunks_exact(mu.dim())
        .map(|x| {
            let g = f.gradient_vec(x);
            let s = dot(&g, &g);
            s * s
        })
        .collect();
    v.iter().sum::<f64>() / mu.len() as f64
}

/// Sample count that turns single-draw estimates into an
/// `(eps_tilde, delta)` high-probability supergradient.
pub fn supergradient_sample_count(fourth_moment: f64, lambda: f64, rho: f64, eps_tilde: f64, delta: f64) -> f64 {
    let gap = lambda - rho;
    (64.0 * fourth_moment / (gap * gap * (gap * gap).min(1.0) * delta * eps_tilde * eps_tilde)).ceil()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupergradientEstimate {
    pub value: f64,
    pub samples: u64,
    pub grad_evals: u64,
}

/// Mean of `K` single-draw prox displacements at `lambda`.
///
/// Indices are drawn sequentially from `rng` before the parallel prox pass, and
/// the mean is reduced in draw order, so the result depends only on the seed.
pub fn supergradient_hp<R: Rng + ?Sized>(
    f: &dyn SmoothObjective,
    mu: &ParticleCloud,
    lambda: f64,
    eps_tilde: f64,
    delta: f64,
    rng: &mut R,
    cap: u64,
) -> Result<SupergradientEstimate> {
    let rho = f.semiconvexity();
    if !(lambda > rho) {
        return Err(Error::LambdaTooSmall { lambda, rho });
    }
    if !(eps_tilde > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need eps > 0 and delta in (0, 1), got {eps_tilde}, {delta}"
        )));
    }
    let m4 = fourth_moment_of_gradient(f, mu);
    let k = supergradient_sample_count(m4, lambda, rho, eps_tilde, delta).max(1.0);
    if k > cap as f64 {
        return Err(Error::KCapExceeded {
            required: if k >= u64::MAX as f64 { u64::MAX } else { k as u64 },
            cap,
        });
    }
    let k = k as u64;
    let inner_eps = eps_tilde / (2.0 * (lambda - rho).max(1.0));
    let n = mu.len();
    let draws: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
    let proxes: Vec<(f64, u64)> = draws
        .par_iter()
        .map(|&i| agd_prox(f, mu.point(i), lambda, inner_eps).map(|p| (p.theta, p.grad_evals())))
        .collect::<Result<_>>()?;
    let sum: f64 = proxes.iter().map(|p| p.0).sum();
    let evals: u64 = proxes.iter().map(|p| p.1).sum::<u64>() + n as u64;
    Ok(SupergradientEstimate {
        value: sum / k as f64,
        samples: k,
        grad_evals: evals,
    })
}
