//! Log-domain Sinkhorn iterations for entropic transport between equal-weight
//! clouds, with cost `1/2 |x - y|^2` and penalty `sigma2 * KL(pi | mu x nu)`.

use crate::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::objective::sq_dist;

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    /// Potential on the first cloud.
    pub u: Vec<f64>,
    /// Potential on the second cloud.
    pub v: Vec<f64>,
    /// Dual objective, equal to the entropic transport value at convergence.
    pub value: f64,
    /// `sum_i |sum_j pi_ij - 1/n|` after the last sweep.
    pub marginal_error: f64,
    pub iterations: usize,
    sigma2: f64,
}

impl SinkhornSolution {
    /// Coupling `pi_ij = exp((u_i + v_j - c_ij) / sigma2) / (n m)`.
    pub fn coupling(&self, mu: &ParticleCloud, nu: &ParticleCloud) -> Vec<Vec<f64>> {
        let nm = (mu.len() * nu.len()) as f64;
        (0..mu.len())
            .map(|i| {
                (0..nu.len())
                    .map(|j| {
                        let c = 0.5 * sq_dist(mu.point(i), nu.point(j));
                        ((self.u[i] + self.v[j] - c) / self.sigma2).exp() / nm
                    })
                    .collect()
            })
            .collect()
    }
}

fn log_mean_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let mut count = 0usize;
    let s: f64 = values
        .map(|a| {
            count += 1;
            (a - max).exp()
        })
        .sum();
    max + (s / count as f64).ln()
}

/// Solves the entropic dual until the first-marginal L1 error is at most `tol`.
///
/// Potentials are shifted so that `mean(u) = mean(v)`.
pub fn sinkhorn_dual(
    mu: &ParticleCloud,
    nu: &ParticleCloud,
    sigma2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornSolution> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (n, m) = (mu.len(), nu.len());
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| 0.5 * sq_dist(mu.point(i), nu.point(j)))
        .collect();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            u[i] = -sigma2 * log_mean_exp(v.iter().zip(row).map(|(vj, c)| (vj - c) / sigma2));
        }
        for j in 0..m {
            v[j] = -sigma2 * log_mean_exp((0..n).map(|i| (u[i] - cost[i * m + j]) / sigma2));
        }
        if u.iter().chain(&v).any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteDual);
        }
        err = (0..n)
            .map(|i| {
                let row = &cost[i * m..(i + 1) * m];
                let mass: f64 = v
                    .iter()
                    .zip(row)
                    .map(|(vj, c)| ((u[i] + vj - c) / sigma2).exp())
                    .sum::<f64>()
                    / (n * m) as f64;
                (mass - 1.0 / n as f64).abs()
            })
            .sum();
        if err <= tol {
            break;
        }
    }
    if err > tol {
        return Err(Error::SinkhornNotConverged {
            iterations,
            marginal_error: err,
        });
    }
    let mean_u = u.iter().sum::<f64>() / n as f64;
    let mean_v = v.iter().sum::<f64>() / m as f64;
    let shift = 0.5 * (mean_u - mean_v);
    u.iter_mut().for_each(|a| *a -= shift);
    v.iter_mut().for_each(|b| *b += shift);
    // the v-sweep makes the coupling's total mass exactly one, so the
    // exponential term of the dual vanishes
    let value = mean_u + mean_v;
    Ok(SinkhornSolution {
        u,
        v,
        value,
        marginal_error: err,
        iterations,
        sigma2,
    })
}

/// Entropic primal cost `sum pi c + sigma2 KL(pi | mu x nu)` of an arbitrary coupling.
pub fn entropic_primal(mu: &ParticleCloud, nu: &ParticleCloud, sigma2: f64, pi: &[Vec<f64>]) -> f64 {
    let nm = (mu.len() * nu.len()) as f64;
    let mut total = 0.0;
    for (i, row) in pi.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                total += p * 0.5 * sq_dist(mu.point(i), nu.point(j)) + sigma2 * p * (p * nm).ln();
            }
        }
    }
    total
}
