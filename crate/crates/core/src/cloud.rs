//! Equal-weight particle clouds and their CSV representation.
//!
//! A cloud with `n` points stands for the empirical measure that puts mass
//! `1/n` on every point. Coordinates are stored row-major.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::SmoothObjective;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    coords: Vec<f64>,
    seed: Option<u64>,
}

impl ParticleCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index: k / dim });
        }
        Ok(Self {
            dim,
            coords,
            seed: None,
        })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyCloud)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// Standard normal points scaled by `scale`.
    pub fn gaussian<R: Rng + ?Sized>(n: usize, dim: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let coords = (0..n * dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        Self::new(dim, coords)
    }

    /// Points drawn uniformly from `[lo, hi]^dim`.
    pub fn uniform_box<R: Rng + ?Sized>(n: usize, dim: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let coords = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
        Self::new(dim, coords)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Applies `map` to every point in parallel; the output keeps input order.
    pub fn map_points<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
    {
        let mapped: Vec<Vec<f64>> = self.coords.par_chunks_exact(self.dim).map(map).collect();
        Self::from_points(&mapped)
    }

    pub fn from_csv_reader<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut coords = Vec::new();
        let mut dim = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            match dim {
                None => dim = Some(rec.len()),
                Some(d) if d != rec.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: rec.len(),
                    })
                }
                _ => {}
            }
            for field in rec.iter() {
                let v = field.parse::<f64>().map_err(|_| Error::Parse {
                    line: line + 1,
                    value: field.to_string(),
                })?;
                coords.push(v);
            }
        }
        Self::new(dim.ok_or(Error::EmptyCloud)?, coords)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        if header {
            wtr.write_record((0..self.dim).map(|k| format!("x{k}")))?;
        }
        for p in self.points() {
            wtr.write_record(p.iter().map(|v| format!("{v:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, header: bool) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, header)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, header: bool) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?, header)
    }
}

/// `sqrt((1/n) sum_i |grad phi(x_i)|^2)`
pub fn mean_squared_gradient_norm(cloud: &ParticleCloud, phi: &dyn SmoothObjective) -> f64 {
    mean_squared_gradient(cloud, phi).sqrt()
}

/// `(1/n) sum_i |grad phi(x_i)|^2`, reduced in a fixed order.
pub fn mean_squared_gradient(cloud: &ParticleCloud, phi: &dyn SmoothObjective) -> f64 {
    let sq: Vec<f64> = cloud
        .coords()
        .par_chunks_exact(cloud.dim())
        .map(|x| {
            let g = phi.gradient_vec(x);
            g.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    sq.iter().sum::<f64>() / cloud.len() as f64
}
