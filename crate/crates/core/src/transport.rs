//! Exact optimal transport between equal-weight clouds for the squared
//! Euclidean cost, and displacement interpolation along the optimal plan.
//!
//! Equal sizes reduce to an assignment problem (Hungarian method). Unequal
//! sizes are solved as an integral transportation problem in units of
//! `1/lcm(n, m)` by successive shortest paths with Johnson potentials.

use crate::cloud::ParticleCloud;
use crate::error::{Error, Result};
use crate::objective::sq_dist;

/// Default cap on `n * m` for exact solves.
pub const EXACT_SIZE_CAP: usize = 1_000_000;
/// Default cap on the number of particles produced by interpolation.
pub const GEODESIC_SIZE_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub units: u64,
}

/// A coupling of two equal-weight clouds with rational masses
/// `units / total_units`.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    source: ParticleCloud,
    target: ParticleCloud,
    total_units: u64,
    entries: Vec<PlanEntry>,
}

impl TransportPlan {
    pub fn new(
        source: ParticleCloud,
        target: ParticleCloud,
        total_units: u64,
        mut entries: Vec<PlanEntry>,
    ) -> Result<Self> {
        let (n, m) = (source.len() as u64, target.len() as u64);
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        if total_units == 0 || !total_units.is_multiple_of(n) || !total_units.is_multiple_of(m) {
            return Err(Error::InvalidPlan(format!(
                "{total_units} units cannot split evenly over {n} x {m}"
            )));
        }
        let mut row = vec![0u64; n as usize];
        let mut col = vec![0u64; m as usize];
        for e in &entries {
            if e.source >= n as usize || e.target >= m as usize {
                return Err(Error::InvalidPlan("entry index out of range".into()));
            }
            row[e.source] += e.units;
            col[e.target] += e.units;
        }
        if row.iter().any(|&r| r != total_units / n) || col.iter().any(|&c| c != total_units / m) {
            return Err(Error::InvalidPlan("marginals do not match".into()));
        }
        entries.retain(|e| e.units > 0);
        entries.sort_by_key(|e| (e.source, e.target));
        Ok(Self {
            source,
            target,
            total_units,
            entries,
        })
    }

    pub fn source(&self) -> &ParticleCloud {
        &self.source
    }

    pub fn target(&self) -> &ParticleCloud {
        &self.target
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn total_units(&self) -> u64 {
        self.total_units
    }

    pub fn weight(&self, e: &PlanEntry) -> f64 {
        e.units as f64 / self.total_units as f64
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.target.len()]; self.source.len()];
        for e in &self.entries {
            w[e.source][e.target] += self.weight(e);
        }
        w
    }

    /// `sum_ij w_ij |x_i - y_j|^2`
    pub fn cost(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| self.weight(e) * sq_dist(self.source.point(e.source), self.target.point(e.target)))
            .sum()
    }

    /// True when each source is sent whole to a single target.
    pub fn is_permutation(&self) -> bool {
        self.source.len() == self.target.len() && self.entries.len() == self.source.len()
    }
}

/// Exact 2-Wasserstein distance and an optimal plan.
pub fn wasserstein2_exact(a: &ParticleCloud, b: &ParticleCloud) -> Result<(f64, TransportPlan)> {
    wasserstein2_exact_capped(a, b, EXACT_SIZE_CAP)
}

pub fn wasserstein2_exact_capped(
    a: &ParticleCloud,
    b: &ParticleCloud,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (n, m) = (a.len(), b.len());
    if n.saturating_mul(m) > cap {
        return Err(Error::SizeCapExceeded { size: n * m, cap });
    }
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(a.point(i), b.point(j)))
        .collect();
    let plan = if n == m {
        let assign = hungarian(&cost, n);
        let entries = assign
            .iter()
            .enumerate()
            .map(|(i, &j)| PlanEntry {
                source: i,
                target: j,
                units: 1,
            })
            .collect();
        TransportPlan::new(a.clone(), b.clone(), n as u64, entries)?
    } else {
        let g = gcd(n as u64, m as u64);
        let total = n as u64 / g * m as u64;
        let entries = transportation(&cost, n, m, m as u64 / g, n as u64 / g);
        TransportPlan::new(a.clone(), b.clone(), total, entries)?
    };
    Ok((plan.cost().max(0.0).sqrt(), plan))
}

/// Minimum-cost perfect matching on a dense `n x n` cost matrix.
/// Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based potentials u (rows), v (columns); p[j] = row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Integral transportation problem with uniform supplies and demands.
fn transportation(cost: &[f64], n: usize, m: usize, supply: u64, demand: u64) -> Vec<PlanEntry> {
    let mut flow = vec![0u64; n * m];
    let mut left = vec![supply; n];
    let mut need = vec![demand; m];
    // node k < n is a source, n + j is a target
    let nodes = n + m;
    let mut pot = vec![0.0f64; nodes];
    let mut remaining = supply * n as u64;
    while remaining > 0 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        for i in 0..n {
            if left[i] > 0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for k in 0..nodes {
                if !done[k] && dist[k] < bd {
                    bd = dist[k];
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let t = n + j;
                    if done[t] {
                        continue;
                    }
                    let nd = bd + cost[i * m + j] + pot[i] - pot[t];
                    if nd < dist[t] {
                        dist[t] = nd;
                        prev[t] = i;
                    }
                }
            } else {
                let j = best - n;
                for i in 0..n {
                    if done[i] || flow[i * m + j] == 0 {
                        continue;
                    }
                    let nd = bd - cost[i * m + j] + pot[best] - pot[i];
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = best;
                    }
                }
            }
        }
        let sink = (0..m)
            .filter(|&j| need[j] > 0 && dist[n + j].is_finite())
            .min_by(|&x, &y| dist[n + x].total_cmp(&dist[n + y]))
            .expect("transportation problem is always feasible");
        // bottleneck along the path
        let mut amount = need[sink];
        let mut node = n + sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p >= n {
                amount = amount.min(flow[node * m + (p - n)]);
            }
            node = p;
        }
        amount = amount.min(left[node]);
        let start = node;
        let mut node = n + sink;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p < n {
                flow[p * m + (node - n)] += amount;
            } else {
                flow[node * m + (p - n)] -= amount;
            }
            node = p;
        }
        left[start] -= amount;
        need[sink] -= amount;
        remaining -= amount;
        let cap = dist.iter().cloned().filter(|d| d.is_finite()).fold(0.0, f64::max);
        for k in 0..nodes {
            pot[k] += if dist[k].is_finite() { dist[k] } else { cap };
        }
    }
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i * m + j] > 0 {
                entries.push(PlanEntry {
                    source: i,
                    target: j,
                    units: flow[i * m + j],
                });
            }
        }
    }
    entries
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Displacement interpolation `((1-t) x + t y)_# plan` as an equal-weight cloud.
///
/// Each plan entry with `k` units becomes `k` coincident particles.
pub fn geodesic_point(plan: &TransportPlan, t: f64) -> Result<ParticleCloud> {
    geodesic_point_capped(plan, t, GEODESIC_SIZE_CAP)
}

pub fn geodesic_point_capped(plan: &TransportPlan, t: f64, cap: usize) -> Result<ParticleCloud> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TOutOfRange(t));
    }
    let size = plan.total_units() as usize;
    if size > cap {
        return Err(Error::SizeCapExceeded { size, cap });
    }
    let d = plan.source().dim();
    let mut coords = Vec::with_capacity(size * d);
    for e in plan.entries() {
        let x = plan.source().point(e.source);
        let y = plan.target().point(e.target);
        for _ in 0..e.units {
            coords.extend(x.iter().zip(y).map(|(a, b)| (1.0 - t) * a + t * b));
        }
    }
    ParticleCloud::new(d, coords)
}
