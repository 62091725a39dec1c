//! Smooth objectives on R^d together with their declared curvature constants.
//!
//! `smoothness` is a Lipschitz constant `L` of the gradient and `semiconvexity`
//! is the smallest `rho` such that `f + rho/2 |x|^2` is convex. Every
//! implementation keeps `L >= rho >= 0`.

use std::sync::Arc;

use crate::error::{Error, Result};

pub trait SmoothObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn smoothness(&self) -> f64;
    fn semiconvexity(&self) -> f64;

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }
}

impl<T: SmoothObjective + ?Sized> SmoothObjective for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (**self).gradient(x, grad)
    }
    fn smoothness(&self) -> f64 {
        (**self).smoothness()
    }
    fn semiconvexity(&self) -> f64 {
        (**self).semiconvexity()
    }
}

/// `f(y) = a . y`
#[derive(Debug, Clone)]
pub struct Linear {
    pub a: Vec<f64>,
}

impl Linear {
    pub fn new(a: Vec<f64>) -> Self {
        Self { a }
    }
}

impl SmoothObjective for Linear {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x)
    }
    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&self.a);
    }
    fn smoothness(&self) -> f64 {
        0.0
    }
    fn semiconvexity(&self) -> f64 {
        0.0
    }
}

/// Separable quadratic `f(y) = 1/2 sum_i a_i y_i^2 + b . y`.
///
/// Negative curvatures are allowed and show up in `semiconvexity`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvature: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvature: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        if curvature.len() != shift.len() {
            return Err(Error::DimensionMismatch {
                expected: curvature.len(),
                found: shift.len(),
            });
        }
        Ok(Self { curvature, shift })
    }

    /// `1/2 |y|^2`
    pub fn isotropic(dim: usize) -> Self {
        Self {
            curvature: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    /// Exact minimizer of `f(y) + lambda/2 |y - x|^2`, valid for `lambda > rho`.
    pub fn prox(&self, x: &[f64], lambda: f64) -> Vec<f64> {
        x.iter()
            .zip(&self.curvature)
            .zip(&self.shift)
            .map(|((&xi, &a), &b)| (lambda * xi - b) / (a + lambda))
            .collect()
    }
}

impl SmoothObjective for Quadratic {
    fn dim(&self) -> usize {
        self.curvature.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.curvature)
            .zip(&self.shift)
            .map(|((&xi, &a), &b)| 0.5 * a * xi * xi + b * xi)
            .sum()
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.curvature[i] * x[i] + self.shift[i];
        }
    }
    fn smoothness(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
    fn semiconvexity(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, &a| m.max(-a))
    }
}

/// `f(x) = 1/2 |x|^2 - 1/2 log cosh(2 x_1)`: two wells near `x_1 = +-0.957`.
///
/// The Hessian is diagonal with first entry `1 - 2 sech^2(2 x_1)`, so it stays in
/// `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    pub dim: usize,
}

impl SmoothObjective for DoubleWell {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, x) - 0.5 * log_cosh(2.0 * x[0])
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(x);
        grad[0] -= (2.0 * x[0]).tanh();
    }
    fn smoothness(&self) -> f64 {
        1.0
    }
    fn semiconvexity(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl SmoothObjective for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
    }
    fn smoothness(&self) -> f64 {
        0.0
    }
    fn semiconvexity(&self) -> f64 {
        0.0
    }
}

/// Builds a named objective: `quadratic`, `double-well`, `zero`,
/// `linear:a1,a2,...` or `constant:c`.
pub fn from_registry(name: &str, dim: usize) -> Result<Arc<dyn SmoothObjective>> {
    let (head, args) = match name.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (name, None),
    };
    let obj: Arc<dyn SmoothObjective> = match (head, args) {
        ("quadratic", None) => Arc::new(Quadratic::isotropic(dim)),
        ("double-well", None) => Arc::new(DoubleWell { dim }),
        ("zero", None) => Arc::new(Constant { dim, value: 0.0 }),
        ("constant", Some(c)) => Arc::new(Constant {
            dim,
            value: parse_list(c)?.first().copied().unwrap_or(0.0),
        }),
        ("linear", Some(a)) => {
            let a = parse_list(a)?;
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                });
            }
            Arc::new(Linear::new(a))
        }
        _ => return Err(Error::InvalidConfig(format!("unknown objective {name:?}"))),
    };
    Ok(obj)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: 0,
                value: t.to_string(),
            })
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Largest finite-difference gradient error relative to `1 + |g|`, over the given points.
pub fn finite_difference_error(f: &dyn SmoothObjective, points: &[Vec<f64>], h: f64) -> f64 {
    let mut worst = 0.0f64;
    for x in points {
        let g = f.gradient_vec(x);
        let norm = dot(&g, &g).sqrt();
        let mut xp = x.clone();
        let mut diff = 0.0;
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = f.value(&xp);
            xp[i] = x[i] - h;
            let fm = f.value(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            diff += (fd - g[i]).powi(2);
        }
        worst = worst.max(diff.sqrt() / (1.0 + norm));
    }
    worst
}
