//! Discrete optimal transport for the quadratic cost: an exact network simplex,
//! log-domain Sinkhorn (dense and separable on tensor grids) and Brenier potentials
//! recovered from dual variables.

mod grid;
mod potential;
mod simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DensityGrid;

pub use grid::{grid_self_transport, grid_sinkhorn, grid_sinkhorn_divergence, GridDivergence, GridMeasure, GridSinkhornResult};
pub use potential::{brenier_from_duals, brenier_from_grid, HessianClamp, PotentialField};
pub use sinkhorn::{self_transport_objective, sinkhorn, SinkhornOptions, SinkhornResult};

/// Largest support the exact solver accepts on either side.
pub const EXACT_SIZE_CAP: usize = 4000;

/// Weighted point cloud in ℝ^dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub dim: usize,
    /// Row-major coordinates, `dim` numbers per point.
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(Error::DimensionError(format!(
                "{} coordinates do not describe {} points in dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("point set".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::RangeError(format!("negative or non-finite weight {w}")));
        }
        Ok(PointSet { dim, coords, weights })
    }

    /// Nodes of a density's mesh with positive cell volume, weighted by value × volume.
    /// Also returns the mesh index of every point.
    pub fn from_density(f: &DensityGrid) -> (PointSet, Vec<usize>) {
        let dim = f.dim();
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        let mut index = Vec::new();
        for (k, ((p, &v), &w)) in f.domain().nodes().iter().zip(f.values()).zip(f.domain().volumes()).enumerate() {
            if w > 0.0 {
                coords.extend_from_slice(&[p.x, p.y][..dim]);
                weights.push(v * w);
                index.push(k);
            }
        }
        (PointSet { dim, coords, weights }, index)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn sq_dist(&self, i: usize, other: &PointSet, j: usize) -> f64 {
        self.point(i).iter().zip(other.point(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Sparse coupling between two point sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub source: PointSet,
    pub target: PointSet,
    /// `(source index, target index, mass)`, sorted by indices.
    pub entries: Vec<(usize, usize, f64)>,
    /// ⟨c, π⟩ with c the squared Euclidean distance.
    pub cost: f64,
}

impl TransportPlan {
    pub(crate) fn from_entries(source: PointSet, target: PointSet, entries: Vec<(usize, usize, f64)>) -> Self {
        let cost = entries.iter().map(|&(i, j, w)| w * source.sq_dist(i, &target, j)).sum();
        TransportPlan { source, target, entries, cost }
    }

    pub fn atoms(&self) -> usize {
        self.entries.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.source.len()];
        for &(i, _, w) in &self.entries {
            r[i] += w;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.target.len()];
        for &(_, j, w) in &self.entries {
            c[j] += w;
        }
        c
    }

    /// Largest absolute deviation of either marginal from the prescribed weights.
    pub fn marginal_violation(&self) -> f64 {
        let r = self.row_sums().iter().zip(&self.source.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(&self.target.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    /// Conditional mean of the target coordinates given each source point.
    pub fn barycentric_map(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.target.dim;
        let mut acc = vec![vec![0.0; d]; self.source.len()];
        let mut mass = vec![0.0; self.source.len()];
        for &(i, j, w) in &self.entries {
            mass[i] += w;
            for (a, y) in acc[i].iter_mut().zip(self.target.point(j)) {
                *a += w * y;
            }
        }
        for (i, (a, m)) in acc.iter_mut().zip(&mass).enumerate() {
            if !(*m > 0.0) {
                if self.source.weights[i] > 0.0 {
                    return Err(Error::UnmappedPoint(i));
                }
                continue;
            }
            for x in a.iter_mut() {
                *x /= m;
            }
        }
        Ok(acc)
    }

    /// The plan as a weighted point set in ℝ^{2d} (source and target coordinates concatenated).
    pub fn as_point_set(&self) -> PointSet {
        let d = self.source.dim + self.target.dim;
        let mut coords = Vec::with_capacity(d * self.entries.len());
        let mut weights = Vec::with_capacity(self.entries.len());
        for &(i, j, w) in &self.entries {
            coords.extend_from_slice(self.source.point(i));
            coords.extend_from_slice(self.target.point(j));
            weights.push(w);
        }
        PointSet { dim: d, coords, weights }
    }
}

/// Kantorovich potentials with α_i + β_j ≤ |x_i − y_j|², gauged so that Σ α_i μ_i = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Entropic regularization the potentials come from (0 for the exact solver).
    pub eps: f64,
}

impl DualPotentials {
    pub(crate) fn gauged(mut alpha: Vec<f64>, mut beta: Vec<f64>, mu: &PointSet, eps: f64) -> Self {
        let mass = mu.mass();
        let shift = alpha.iter().zip(&mu.weights).map(|(a, w)| a * w).sum::<f64>() / mass;
        alpha.iter_mut().for_each(|a| *a -= shift);
        beta.iter_mut().for_each(|b| *b += shift);
        DualPotentials { alpha, beta, eps }
    }

    /// Σ α μ + Σ β ν.
    pub fn objective(&self, mu: &PointSet, nu: &PointSet) -> f64 {
        self.alpha.iter().zip(&mu.weights).map(|(a, w)| a * w).sum::<f64>()
            + self.beta.iter().zip(&nu.weights).map(|(b, w)| b * w).sum::<f64>()
    }

    /// Most negative reduced cost c_ij − α_i − β_j over all pairs.
    pub fn min_reduced_cost(&self, mu: &PointSet, nu: &PointSet) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                worst = worst.min(mu.sq_dist(i, nu, j) - self.alpha[i] - self.beta[j]);
            }
        }
        worst
    }
}

/// Exact optimal plan and potentials for the squared Euclidean cost.
pub fn solve_exact(mu: &PointSet, nu: &PointSet) -> Result<(TransportPlan, DualPotentials)> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionError(format!("point sets live in dimensions {} and {}", mu.dim, nu.dim)));
    }
    for s in [mu, nu] {
        if s.len() > EXACT_SIZE_CAP {
            return Err(Error::SizeCap { size: s.len(), cap: EXACT_SIZE_CAP });
        }
    }
    let (ms, mt) = (mu.mass(), nu.mass());
    if (ms - mt).abs() > 1e-10 * ms.max(mt).max(1.0) {
        return Err(Error::MassError { source_mass: ms, target_mass: mt });
    }
    let demand: Vec<f64> = nu.weights.iter().map(|w| w * ms / mt).collect();
    let cap = 200 * (mu.len() + nu.len()) * (mu.len() + nu.len()).max(64);
    let sol = simplex::solve(&mu.weights, &demand, |i, j| mu.sq_dist(i, nu, j), cap)?;
    let plan = TransportPlan::from_entries(mu.clone(), nu.clone(), sol.flows);
    let duals = DualPotentials::gauged(sol.alpha, sol.beta, mu, 0.0);
    Ok((plan, duals))
}

/// d₂ between two plans viewed as measures on ℝ^{2d}.
pub fn plan_distance(p0: &TransportPlan, p1: &TransportPlan) -> Result<f64> {
    for p in [p0, p1] {
        if p.atoms() > EXACT_SIZE_CAP {
            return Err(Error::SizeCap { size: p.atoms(), cap: EXACT_SIZE_CAP });
        }
    }
    let (a, b) = (p0.as_point_set(), p1.as_point_set());
    let (plan, _) = solve_exact(&a, &b)?;
    Ok(plan.cost.max(0.0).sqrt())
}

/// Which solver computes d₂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Sinkhorn { eps: f64 },
}

/// Above this regularization reported d₂ values are debiased.
pub const DEBIAS_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2Report {
    pub d2: f64,
    pub backend: String,
    pub eps: Option<f64>,
    pub debiased: bool,
    pub marginal_violation: f64,
    pub atoms: usize,
}

/// d₂ between two point sets with the chosen backend. Sinkhorn values with
/// ε > 1e-3 are debiased: OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν) with OT_ε the dual objective.
pub fn d2_points(mu: &PointSet, nu: &PointSet, backend: Backend, tol: f64) -> Result<D2Report> {
    d2_points_with(mu, nu, backend, &SinkhornOptions { tol, ..SinkhornOptions::default() })
}

/// [`d2_points`] with explicit Sinkhorn options; `opts.eps` is replaced by the backend's.
pub fn d2_points_with(mu: &PointSet, nu: &PointSet, backend: Backend, opts: &SinkhornOptions) -> Result<D2Report> {
    match backend {
        Backend::Exact => {
            let (plan, _) = solve_exact(mu, nu)?;
            Ok(D2Report {
                d2: plan.cost.max(0.0).sqrt(),
                backend: "exact".into(),
                eps: None,
                debiased: false,
                marginal_violation: plan.marginal_violation(),
                atoms: plan.atoms(),
            })
        }
        Backend::Sinkhorn { eps } => {
            let opts = SinkhornOptions { eps, ..*opts };
            if mu == nu {
                let value = self_transport_objective(mu, &opts)?;
                let debiased = eps > DEBIAS_THRESHOLD;
                return Ok(D2Report {
                    d2: if debiased { 0.0 } else { value.max(0.0).sqrt() },
                    backend: "sinkhorn".into(),
                    eps: Some(eps),
                    debiased,
                    marginal_violation: 0.0,
                    atoms: mu.len() * nu.len(),
                });
            }
            let debiased = eps > DEBIAS_THRESHOLD;
            let (value, r) = if debiased {
                sinkhorn_divergence(mu, nu, &opts)?
            } else {
                let r = sinkhorn(mu, nu, &opts)?;
                (r.plan.cost, r)
            };
            Ok(D2Report {
                d2: value.max(0.0).sqrt(),
                backend: "sinkhorn".into(),
                eps: Some(eps),
                debiased,
                marginal_violation: r.violation,
                atoms: r.plan.atoms(),
            })
        }
    }
}

/// Debiased entropic cost OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν) and the cross solve.
pub fn sinkhorn_divergence(mu: &PointSet, nu: &PointSet, opts: &SinkhornOptions) -> Result<(f64, SinkhornResult)> {
    let r = sinkhorn(mu, nu, opts)?;
    let a = self_transport_objective(mu, opts)?;
    let b = self_transport_objective(nu, opts)?;
    Ok((r.dual_objective - 0.5 * a - 0.5 * b, r))
}
