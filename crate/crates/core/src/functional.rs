//! Functionals on equal-weight clouds and their Wasserstein derivative oracles.
//!
//! `derivative_oracle` returns a [`GradientModel`]: the first variation of the
//! functional at the current cloud, as a smooth function on R^d with declared
//! curvature constants.

use std::sync::Arc;

use crate::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, RandomFeatureMap};
use crate::objective::{sq_dist, SmoothObjective};
use crate::sinkhorn::{sinkhorn_dual, SinkhornSolution};

pub const DEFAULT_SINKHORN_TOL: f64 = 1e-7;
pub const DEFAULT_SINKHORN_MAX_ITER: usize = 100_000;

/// Pairwise interaction `w(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interaction {
    Zero,
    /// `strength/2 |x - y|^2`
    Quadratic { strength: f64 },
}

impl Interaction {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Interaction::Zero),
            "quadratic" => Ok(Interaction::Quadratic { strength: 1.0 }),
            other => Err(Error::InvalidConfig(format!("unknown interaction {other:?}"))),
        }
    }

    fn strength(&self) -> f64 {
        match self {
            Interaction::Zero => 0.0,
            Interaction::Quadratic { strength } => *strength,
        }
    }
}

#[derive(Clone)]
pub enum Functional {
    /// Squared maximum mean discrepancy to a fixed target (V-statistic).
    MmdSquared { kernel: Kernel, target: ParticleCloud },
    /// Entropic transport cost to observed data, used for deconvolution.
    EntropicDeconv {
        sigma2: f64,
        data: ParticleCloud,
        data_diameter: f64,
        sinkhorn_tol: f64,
        sinkhorn_max_iter: usize,
    },
    /// `(1/n) sum v(x_i) + (1/n^2) sum_ij w(x_i, x_j)`
    PotentialInteraction {
        potential: Arc<dyn SmoothObjective>,
        interaction: Interaction,
    },
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Functional::MmdSquared { kernel, target } => f
                .debug_struct("MmdSquared")
                .field("kernel", kernel)
                .field("target_len", &target.len())
                .finish(),
            Functional::EntropicDeconv { sigma2, data, .. } => f
                .debug_struct("EntropicDeconv")
                .field("sigma2", sigma2)
                .field("data_len", &data.len())
                .finish(),
            Functional::PotentialInteraction { interaction, .. } => f
                .debug_struct("PotentialInteraction")
                .field("interaction", interaction)
                .finish(),
        }
    }
}

impl Functional {
    pub fn mmd(kernel: Kernel, target: ParticleCloud) -> Self {
        Functional::MmdSquared { kernel, target }
    }

    pub fn entropic_deconv(sigma2: f64, data: ParticleCloud) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
        }
        let mut diam2 = 0.0f64;
        for i in 0..data.len() {
            for j in i + 1..data.len() {
                diam2 = diam2.max(sq_dist(data.point(i), data.point(j)));
            }
        }
        Ok(Functional::EntropicDeconv {
            sigma2,
            data,
            data_diameter: diam2.sqrt(),
            sinkhorn_tol: DEFAULT_SINKHORN_TOL,
            sinkhorn_max_iter: DEFAULT_SINKHORN_MAX_ITER,
        })
    }

    pub fn potential(potential: Arc<dyn SmoothObjective>, interaction: Interaction) -> Self {
        Functional::PotentialInteraction {
            potential,
            interaction,
        }
    }

    /// Only the three functional families above are supported; divergence-type
    /// functionals have no smooth derivative on particle clouds.
    pub fn from_kind(kind: &str) -> Result<&'static str> {
        match kind {
            "mmd" => Ok("mmd"),
            "deconv" => Ok("deconv"),
            "potential" => Ok("potential"),
            other => Err(Error::UnsupportedFunctional(other.to_string())),
        }
    }

    pub fn value(&self, mu: &ParticleCloud) -> Result<f64> {
        match self {
            Functional::MmdSquared { kernel, target } => mmd_squared(kernel, mu, target),
            Functional::EntropicDeconv { .. } => Ok(self.solve_entropic(mu, 0.0)?.value),
            Functional::PotentialInteraction {
                potential,
                interaction,
            } => {
                check_dim(potential.dim(), mu.dim())?;
                let n = mu.len() as f64;
                let v: f64 = mu.points().map(|x| potential.value(x)).sum::<f64>() / n;
                let s = interaction.strength();
                let w = if s == 0.0 {
                    0.0
                } else {
                    // (1/n^2) sum_ij s/2 |x_i - x_j|^2 = s (E|x|^2 - |E x|^2)
                    let m = mu.mean();
                    let q = mu.points().map(|x| x.iter().map(|a| a * a).sum::<f64>()).sum::<f64>() / n;
                    s * (q - m.iter().map(|a| a * a).sum::<f64>())
                };
                Ok(v + w)
            }
        }
    }

    fn solve_entropic(&self, mu: &ParticleCloud, eps: f64) -> Result<SinkhornSolution> {
        match self {
            Functional::EntropicDeconv {
                sigma2,
                data,
                sinkhorn_tol,
                sinkhorn_max_iter,
                ..
            } => {
                let tol = if eps > 0.0 { sinkhorn_tol.min(eps) } else { *sinkhorn_tol };
                sinkhorn_dual(mu, data, *sigma2, tol, *sinkhorn_max_iter)
            }
            _ => unreachable!("entropic solve on a non-entropic functional"),
        }
    }

    /// First variation at `mu`, computed to accuracy `eps` where it applies.
    pub fn derivative_oracle(&self, mu: &ParticleCloud, eps: f64) -> Result<GradientModel> {
        match self {
            Functional::MmdSquared { kernel, target } => {
                check_dim(target.dim(), mu.dim())?;
                let smoothness = 4.0 * kernel.hessian_bound();
                let value = mmd_squared(kernel, mu, target)?;
                let kind = match kernel {
                    Kernel::RandomFeature(map) => {
                        let a = map.mean_embedding(mu);
                        let b = map.mean_embedding(target);
                        let coeffs = a.iter().zip(&b).map(|(x, y)| 2.0 * (x - y)).collect();
                        ModelKind::FeatureWitness {
                            map: map.clone(),
                            coeffs,
                        }
                    }
                    _ => ModelKind::Witness {
                        kernel: kernel.clone(),
                        source: mu.clone(),
                        target: target.clone(),
                    },
                };
                Ok(GradientModel {
                    kind,
                    dim: mu.dim(),
                    smoothness,
                    semiconvexity: smoothness,
                    value,
                    marginal_error: None,
                })
            }
            Functional::EntropicDeconv {
                sigma2,
                data,
                data_diameter,
                ..
            } => {
                check_dim(data.dim(), mu.dim())?;
                let sol = self.solve_entropic(mu, eps)?;
                let spread = data_diameter * data_diameter / (4.0 * sigma2) - 1.0;
                Ok(GradientModel {
                    kind: ModelKind::Entropic {
                        data: data.clone(),
                        v: sol.v.clone(),
                        sigma2: *sigma2,
                    },
                    dim: mu.dim(),
                    smoothness: spread.max(1.0),
                    semiconvexity: spread.max(0.0),
                    value: sol.value,
                    marginal_error: Some(sol.marginal_error),
                })
            }
            Functional::PotentialInteraction {
                potential,
                interaction,
            } => {
                check_dim(potential.dim(), mu.dim())?;
                let s = interaction.strength();
                let n = mu.len() as f64;
                let q = mu.points().map(|x| x.iter().map(|a| a * a).sum::<f64>()).sum::<f64>() / n;
                Ok(GradientModel {
                    kind: ModelKind::Potential {
                        potential: potential.clone(),
                        strength: s,
                        mean: mu.mean(),
                        second_moment: q,
                    },
                    dim: mu.dim(),
                    smoothness: potential.smoothness() + 2.0 * s.abs(),
                    semiconvexity: potential.semiconvexity() + (-2.0 * s).max(0.0),
                    value: self.value(mu)?,
                    marginal_error: None,
                })
            }
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// V-statistic `E k(x, x') + E k(y, y') - 2 E k(x, y)`.
pub fn mmd_squared(kernel: &Kernel, mu: &ParticleCloud, nu: &ParticleCloud) -> Result<f64> {
    check_dim(mu.dim(), nu.dim())?;
    if let Kernel::RandomFeature(map) = kernel {
        let a = map.mean_embedding(mu);
        let b = map.mean_embedding(nu);
        let b_size = map.batch_size() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / b_size);
    }
    let mean_k = |p: &ParticleCloud, q: &ParticleCloud| {
        let mut s = 0.0;
        for x in p.points() {
            for y in q.points() {
                s += kernel.eval(x, y);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    Ok(mean_k(mu, mu) + mean_k(nu, nu) - 2.0 * mean_k(mu, nu))
}

#[derive(Clone)]
enum ModelKind {
    Witness {
        kernel: Kernel,
        source: ParticleCloud,
        target: ParticleCloud,
    },
    FeatureWitness {
        map: Arc<RandomFeatureMap>,
        coeffs: Vec<f64>,
    },
    Entropic {
        data: ParticleCloud,
        v: Vec<f64>,
        sigma2: f64,
    },
    Potential {
        potential: Arc<dyn SmoothObjective>,
        strength: f64,
        mean: Vec<f64>,
        second_moment: f64,
    },
}

/// The derivative of a functional at a fixed cloud, as a function on R^d.
#[derive(Clone)]
pub struct GradientModel {
    kind: ModelKind,
    dim: usize,
    smoothness: f64,
    semiconvexity: f64,
    value: f64,
    marginal_error: Option<f64>,
}

impl GradientModel {
    /// Functional value at the cloud the model was built from.
    pub fn functional_value(&self) -> f64 {
        self.value
    }

    /// First-marginal error of the transport solve behind this model, if any.
    pub fn marginal_error(&self) -> Option<f64> {
        self.marginal_error
    }

    /// Entropic models: the softmax weights of the data points seen from `x`.
    fn entropic_weights(data: &ParticleCloud, v: &[f64], sigma2: f64, x: &[f64]) -> (Vec<f64>, f64) {
        let a: Vec<f64> = data
            .points()
            .zip(v)
            .map(|(y, vj)| (vj - 0.5 * sq_dist(x, y)) / sigma2)
            .collect();
        let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = a.iter().map(|ai| (ai - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let lme = max + (total / a.len() as f64).ln();
        (w.into_iter().map(|wi| wi / total).collect(), lme)
    }
}

impl SmoothObjective for GradientModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Witness {
                kernel,
                source,
                target,
            } => {
                let a: f64 = source.points().map(|z| kernel.eval(z, x)).sum::<f64>() / source.len() as f64;
                let b: f64 = target.points().map(|z| kernel.eval(z, x)).sum::<f64>() / target.len() as f64;
                2.0 * (a - b)
            }
            ModelKind::FeatureWitness { map, coeffs } => map.combine(coeffs, x),
            ModelKind::Entropic { data, v, sigma2 } => {
                let (_, lme) = Self::entropic_weights(data, v, *sigma2, x);
                -sigma2 * lme
            }
            ModelKind::Potential {
                potential,
                strength,
                mean,
                second_moment,
            } => {
                let xx: f64 = x.iter().map(|a| a * a).sum();
                let xm: f64 = x.iter().zip(mean).map(|(a, b)| a * b).sum();
                potential.value(x) + strength * (xx - 2.0 * xm + second_moment)
            }
        }
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        match &self.kind {
            ModelKind::Witness {
                kernel,
                source,
                target,
            } => {
                grad.fill(0.0);
                let a = 2.0 / source.len() as f64;
                for z in source.points() {
                    kernel.accumulate_gradient(x, z, a, grad);
                }
                let b = -2.0 / target.len() as f64;
                for z in target.points() {
                    kernel.accumulate_gradient(x, z, b, grad);
                }
            }
            ModelKind::FeatureWitness { map, coeffs } => {
                grad.fill(0.0);
                map.combine_gradient(coeffs, x, 1.0, grad);
            }
            ModelKind::Entropic { data, v, sigma2 } => {
                let (w, _) = Self::entropic_weights(data, v, *sigma2, x);
                grad.copy_from_slice(x);
                for (y, wj) in data.points().zip(&w) {
                    for (g, yk) in grad.iter_mut().zip(y) {
                        *g -= wj * yk;
                    }
                }
            }
            ModelKind::Potential {
                potential,
                strength,
                mean,
                ..
            } => {
                potential.gradient(x, grad);
                for ((g, a), m) in grad.iter_mut().zip(x).zip(mean) {
                    *g += 2.0 * strength * (a - m);
                }
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn semiconvexity(&self) -> f64 {
        self.semiconvexity
    }
}
