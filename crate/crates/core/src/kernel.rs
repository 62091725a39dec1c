//! Positive-definite kernels with explicit gradient-Lipschitz bounds.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::objective::{dot, sq_dist};

/// `sup |tanh''|`, attained at `tanh(z) = 1/sqrt(3)`.
const TANH_SECOND_DERIVATIVE_MAX: f64 = 0.769_800_358_919_501;

/// Neuron features `psi_b(theta) = tanh(<x_b, theta>)` on a frozen input batch.
///
/// The induced kernel `k(s, t) = (1/B) sum_b psi_b(s) psi_b(t)` is the `L^2`
/// inner product of two single-neuron networks over the batch.
#[derive(Debug, Clone)]
pub struct RandomFeatureMap {
    dim: usize,
    inputs: Vec<f64>,
    hessian_bound: f64,
}

impl RandomFeatureMap {
    pub fn new(dim: usize, inputs: Vec<f64>) -> Result<Self> {
        if dim == 0 || inputs.is_empty() || !inputs.len().is_multiple_of(dim) {
            return Err(Error::InvalidKernel("feature batch must be a nonempty B x d table".into()));
        }
        let b = inputs.len() / dim;
        let second_moment = DMatrix::from_fn(dim, dim, |r, c| {
            (0..b).map(|k| inputs[k * dim + r] * inputs[k * dim + c]).sum::<f64>() / b as f64
        });
        let top = SymmetricEigen::new(second_moment)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        Ok(Self {
            dim,
            inputs,
            hessian_bound: TANH_SECOND_DERIVATIVE_MAX * top,
        })
    }

    /// Batch of `batch` standard normal inputs.
    pub fn sample<R: Rng + ?Sized>(dim: usize, batch: usize, rng: &mut R) -> Result<Self> {
        let inputs = (0..dim * batch).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(dim, inputs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.len() / self.dim
    }

    fn input(&self, b: usize) -> &[f64] {
        &self.inputs[b * self.dim..(b + 1) * self.dim]
    }

    pub fn features(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.batch_size()).map(|b| dot(self.input(b), theta).tanh()).collect()
    }

    /// `(1/n) sum_i psi(theta_i)`
    pub fn mean_embedding(&self, cloud: &ParticleCloud) -> Vec<f64> {
        let mut acc = vec![0.0; self.batch_size()];
        for p in cloud.points() {
            for (a, f) in acc.iter_mut().zip(self.features(p)) {
                *a += f;
            }
        }
        let n = cloud.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// `(1/B) sum_b c_b psi_b(theta)`
    pub fn combine(&self, coeffs: &[f64], theta: &[f64]) -> f64 {
        let f = self.features(theta);
        dot(coeffs, &f) / self.batch_size() as f64
    }

    /// Adds `scale * grad_theta (1/B) sum_b c_b psi_b(theta)` to `out`.
    pub fn combine_gradient(&self, coeffs: &[f64], theta: &[f64], scale: f64, out: &mut [f64]) {
        let inv_b = scale / self.batch_size() as f64;
        for (b, &c) in coeffs.iter().enumerate() {
            let x = self.input(b);
            let t = dot(x, theta).tanh();
            let w = inv_b * c * (1.0 - t * t);
            for (o, xi) in out.iter_mut().zip(x) {
                *o += w * xi;
            }
        }
    }

    /// Bound on `|grad^2_theta sum_b c_b psi_b| / B` per unit of `max |c_b|`.
    pub fn hessian_bound(&self) -> f64 {
        self.hessian_bound
    }
}

#[derive(Debug, Clone)]
pub enum Kernel {
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `(c^2 + |x - y|^2)^(-beta)`
    InverseMultiquadric { c: f64, beta: f64 },
    RandomFeature(Arc<RandomFeatureMap>),
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(format!("bandwidth {sigma} must be positive")));
        }
        Ok(Kernel::Gaussian { sigma })
    }

    pub fn inverse_multiquadric(c: f64, beta: f64) -> Result<Self> {
        if !(c > 0.0 && beta > 0.0 && c.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidKernel(format!("need c > 0 and beta > 0, got {c}, {beta}")));
        }
        Ok(Kernel::InverseMultiquadric { c, beta })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Gaussian { sigma } => (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp(),
            Kernel::InverseMultiquadric { c, beta } => (c * c + sq_dist(x, y)).powf(-beta),
            Kernel::RandomFeature(map) => {
                dot(&map.features(x), &map.features(y)) / map.batch_size() as f64
            }
        }
    }

    /// Adds `scale * grad_x k(x, y)` to `out`.
    pub fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Kernel::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let w = -scale * (-sq_dist(x, y) / (2.0 * s2)).exp() / s2;
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += w * (a - b);
                }
            }
            Kernel::InverseMultiquadric { c, beta } => {
                let base = c * c + sq_dist(x, y);
                let w = -2.0 * scale * beta * base.powf(-beta - 1.0);
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += w * (a - b);
                }
            }
            Kernel::RandomFeature(map) => {
                let fy = map.features(y);
                map.combine_gradient(&fy, x, scale, out);
            }
        }
    }

    /// Upper bound on `sup_{x,y} |grad^2_x k(x, y)|` (operator norm).
    pub fn hessian_bound(&self) -> f64 {
        match self {
            Kernel::Gaussian { sigma } => 1.0 / (sigma * sigma),
            Kernel::InverseMultiquadric { c, beta } => {
                2.0 * beta * (2.0 * beta + 1.0) * c.powf(-2.0 * (beta + 1.0))
            }
            Kernel::RandomFeature(map) => map.hessian_bound(),
        }
    }

    /// Parses `gaussian`, `imq` or `random-feature` with their numeric settings.
    pub fn from_name(name: &str, sigma: f64, imq_beta: f64, features: Option<Arc<RandomFeatureMap>>) -> Result<Self> {
        match name {
            "gaussian" => Self::gaussian(sigma),
            "imq" => Self::inverse_multiquadric(sigma, imq_beta),
            "random-feature" => features
                .map(Kernel::RandomFeature)
                .ok_or_else(|| Error::InvalidKernel("random-feature kernel needs a feature table".into())),
            other => Err(Error::InvalidKernel(format!("unknown kernel {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kernels() -> Vec<Kernel> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        vec![
            Kernel::gaussian(0.7).unwrap(),
            Kernel::inverse_multiquadric(1.3, 0.5).unwrap(),
            Kernel::RandomFeature(Arc::new(RandomFeatureMap::sample(3, 16, &mut rng).unwrap())),
        ]
    }

    #[test]
    fn gradient_matches_differences() {
        let x = [0.3, -0.2, 0.9];
        let y = [-0.5, 0.1, 0.4];
        let h = 1e-6;
        for k in kernels() {
            let mut g = vec![0.0; 3];
            k.accumulate_gradient(&x, &y, 1.0, &mut g);
            for i in 0..3 {
                let mut xp = x;
                xp[i] += h;
                let mut xm = x;
                xm[i] -= h;
                let fd = (k.eval(&xp, &y) - k.eval(&xm, &y)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "{k:?} coord {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn hessian_bound_dominates_sampled_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-4;
        for k in kernels() {
            let bound = k.hessian_bound();
            for _ in 0..200 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nv = dot(&v, &v).sqrt();
                let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b / nv).collect();
                let mut g0 = vec![0.0; 3];
                let mut g1 = vec![0.0; 3];
                k.accumulate_gradient(&x, &y, 1.0, &mut g0);
                k.accumulate_gradient(&xp, &y, 1.0, &mut g1);
                let slope = sq_dist(&g0, &g1).sqrt() / h;
                assert!(slope <= bound * (1.0 + 1e-3), "{k:?}: {slope} > {bound}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::inverse_multiquadric(1.0, -1.0).is_err());
        assert!(Kernel::from_name("laplace", 1.0, 0.5, None).is_err());
        assert!(Kernel::from_name("random-feature", 1.0, 0.5, None).is_err());
    }
}
