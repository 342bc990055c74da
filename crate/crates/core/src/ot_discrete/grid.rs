//! Sinkhorn on tensor grids. The Gaussian kernel factorizes over the two
//! axes, so every log-sum-exp over the target grid is two one-dimensional passes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sinkhorn::relax;
use super::SinkhornOptions;
use crate::error::{Error, Result};
use crate::measures::{DensityGrid, Layout, Vec2};

/// Weighted measure on the nodes of a 2D tensor grid (row-major, first axis outer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub axes: [Vec<f64>; 2],
    pub weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(axes: [Vec<f64>; 2], weights: Vec<f64>) -> Result<Self> {
        if axes[0].len() * axes[1].len() != weights.len() || weights.is_empty() {
            return Err(Error::DimensionError(format!(
                "{} weights for a {}×{} grid",
                weights.len(),
                axes[0].len(),
                axes[1].len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::RangeError(format!("negative weight {w}")));
        }
        Ok(GridMeasure { axes, weights })
    }

    /// Node masses value × cell volume of a density on a tensor-layout mesh.
    pub fn from_density(f: &DensityGrid) -> Result<Self> {
        match *f.domain().mesh().layout() {
            Layout::Tensor { lo, h, n } => {
                let axes = [
                    (0..n[0]).map(|i| lo[0] + (i as f64 + 0.5) * h[0]).collect(),
                    (0..n[1]).map(|j| lo[1] + (j as f64 + 0.5) * h[1]).collect(),
                ];
                let weights = f.values().iter().zip(f.domain().volumes()).map(|(v, w)| v * w).collect();
                GridMeasure::new(axes, weights)
            }
            _ => Err(Error::DimensionError("grid Sinkhorn needs a tensor-layout mesh".into())),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> Vec2 {
        let n2 = self.axes[1].len();
        Vec2::new(self.axes[0][k / n2], self.axes[1][k % n2])
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSinkhornResult {
    /// Source potential at every source node (zero-weight nodes get the soft c-transform).
    pub f: Vec<f64>,
    /// Target potential at every target node.
    pub g: Vec<f64>,
    /// Row masses of the plan.
    pub row_mass: Vec<f64>,
    /// Conditional mean of the target given each source node.
    pub barycenters: Vec<Vec2>,
    /// ⟨c, π⟩.
    pub cost: f64,
    pub dual_objective: f64,
    pub violation: f64,
    pub iterations: usize,
    pub stage_costs: Vec<(f64, f64)>,
    pub eps: f64,
}

struct SoftMin {
    lse: Vec<f64>,
    mean: Option<Vec<Vec2>>,
}

/// Terms more than this far below the maximum of a log-sum-exp are dropped (e^{-50} ≈ 2e-22).
const LSE_CUTOFF: f64 = 50.0;

/// Log-sum-exp of `v` with the softmax mean of `y` when requested.
fn lse_with_mean(v: &[f64], y: Option<&[f64]>) -> (f64, f64) {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return (mx, 0.0);
    }
    let mut s = 0.0;
    let mut sy = 0.0;
    for (j, &x) in v.iter().enumerate() {
        let d = x - mx;
        if d > -LSE_CUTOFF {
            let e = d.exp();
            s += e;
            if let Some(y) = y {
                sy += e * y[j];
            }
        }
    }
    (mx + s.ln(), sy / s)
}

/// For every source node i: LSE_j (h_j − |x_i − y_j|²)/ε, and optionally the
/// corresponding softmax mean of y_j.
fn soft_min(src: &[Vec<f64>; 2], tgt: &[Vec<f64>; 2], h: &[f64], eps: f64, means: bool) -> SoftMin {
    let (s1, s2) = (src[0].len(), src[1].len());
    let (t1, t2) = (tgt[0].len(), tgt[1].len());
    let k2: Vec<f64> = (0..s2 * t2)
        .map(|k| {
            let d = src[1][k / t2] - tgt[1][k % t2];
            d * d / eps
        })
        .collect();
    // first pass over the second target axis: a[j1][i2], with the softmax mean of y2
    let pass1: Vec<(Vec<f64>, Vec<f64>)> = (0..t1)
        .into_par_iter()
        .map(|j1| {
            let row: Vec<f64> = h[j1 * t2..(j1 + 1) * t2].iter().map(|v| v / eps).collect();
            let mut a = vec![f64::NEG_INFINITY; s2];
            let mut m2 = vec![0.0; s2];
            let mut v = vec![0.0; t2];
            for i2 in 0..s2 {
                let kk = &k2[i2 * t2..(i2 + 1) * t2];
                for j2 in 0..t2 {
                    v[j2] = row[j2] - kk[j2];
                }
                let (l, m) = lse_with_mean(&v, if means { Some(&tgt[1]) } else { None });
                a[i2] = l;
                m2[i2] = m;
            }
            (a, m2)
        })
        .collect();
    // transpose so that the second pass reads contiguous memory
    let mut a_t = vec![0.0; s2 * t1];
    let mut m_t = vec![0.0; if means { s2 * t1 } else { 0 }];
    for (j1, (a, m)) in pass1.iter().enumerate() {
        for i2 in 0..s2 {
            a_t[i2 * t1 + j1] = a[i2];
            if means {
                m_t[i2 * t1 + j1] = m[i2];
            }
        }
    }
    let k1: Vec<f64> = (0..s1 * t1)
        .map(|k| {
            let d = src[0][k / t1] - tgt[0][k % t1];
            d * d / eps
        })
        .collect();
    let pass2: Vec<Vec<(f64, Vec2)>> = (0..s1)
        .into_par_iter()
        .map(|i1| {
            let kk = &k1[i1 * t1..(i1 + 1) * t1];
            let mut v = vec![0.0; t1];
            (0..s2)
                .map(|i2| {
                    let a = &a_t[i2 * t1..(i2 + 1) * t1];
                    for j1 in 0..t1 {
                        v[j1] = a[j1] - kk[j1];
                    }
                    if !means {
                        return (lse_with_mean(&v, None).0, Vec2::zeros());
                    }
                    let (l, y1) = lse_with_mean(&v, Some(&tgt[0]));
                    let (_, y2) = lse_with_mean(&v, Some(&m_t[i2 * t1..(i2 + 1) * t1]));
                    (l, Vec2::new(y1, y2))
                })
                .collect()
        })
        .collect();
    let flat: Vec<(f64, Vec2)> = pass2.into_iter().flatten().collect();
    SoftMin {
        lse: flat.iter().map(|p| p.0).collect(),
        mean: if means { Some(flat.iter().map(|p| p.1).collect()) } else { None },
    }
}

/// Log-domain Sinkhorn between grid measures with ε-scaling.
/// `warm` optionally provides starting potentials `(f, g)`; the schedule then starts at `opts.eps_start`.
pub fn grid_sinkhorn(mu: &GridMeasure, nu: &GridMeasure, opts: &SinkhornOptions, warm: Option<(&[f64], &[f64])>) -> Result<GridSinkhornResult> {
    opts.check()?;
    let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = nu.weights.iter().map(|w| w.ln()).collect();
    let (mut f, mut g) = match warm {
        Some((f0, g0)) if f0.len() == mu.len() && g0.len() == nu.len() => (f0.to_vec(), g0.to_vec()),
        Some(_) => return Err(Error::DimensionError("warm-start potentials have the wrong length".into())),
        None => (vec![0.0; mu.len()], vec![0.0; nu.len()]),
    };
    let schedule = opts.schedule();
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut stage_costs = Vec::new();
    let mut final_state = None;
    for (stage, &eps) in schedule.iter().enumerate() {
        let stage_tol = opts.stage_tol(stage + 1 == schedule.len());
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, violation });
            }
            iterations += 1;
            let hf: Vec<f64> = f.iter().zip(&log_mu).map(|(a, l)| a + eps * l).collect();
            g = soft_min(&nu.axes, &mu.axes, &hf, eps, false).lse.into_iter().map(|v| -eps * v).collect();
            let hg: Vec<f64> = g.iter().zip(&log_nu).map(|(b, l)| b + eps * l).collect();
            let f_hat: Vec<f64> = soft_min(&mu.axes, &nu.axes, &hg, eps, false).lse.into_iter().map(|v| -eps * v).collect();
            violation = (0..mu.len())
                .filter(|&i| mu.weights[i] > 0.0)
                .map(|i| mu.weights[i] * (((f[i] - f_hat[i]) / eps).exp() - 1.0).abs())
                .sum();
            if violation <= stage_tol {
                // zero-weight source nodes carry the soft c-transform of g
                for i in 0..mu.len() {
                    if mu.weights[i] == 0.0 {
                        f[i] = f_hat[i];
                    }
                }
                break;
            }
            relax(&mut f, f_hat, opts.relaxation);
        }
        let hg: Vec<f64> = g.iter().zip(&log_nu).map(|(b, l)| b + eps * l).collect();
        let sm = soft_min(&mu.axes, &nu.axes, &hg, eps, true);
        let bary = sm.mean.unwrap();
        let row_mass: Vec<f64> = (0..mu.len())
            .map(|i| if mu.weights[i] > 0.0 { mu.weights[i] * ((f[i] + eps * sm.lse[i]) / eps).exp() } else { 0.0 })
            .collect();
        let mut cost = 0.0;
        for i in 0..mu.len() {
            if row_mass[i] > 0.0 {
                let x = mu.point(i);
                cost += row_mass[i] * (x.norm_squared() - 2.0 * x.dot(&bary[i]));
            }
        }
        for j in 0..nu.len() {
            cost += nu.weights[j] * nu.point(j).norm_squared();
        }
        stage_costs.push((eps, cost));
        if stage + 1 == schedule.len() {
            final_state = Some((row_mass, bary, cost));
        }
    }
    let (row_mass, barycenters, cost) = final_state.expect("schedule is never empty");
    let eps = opts.eps;
    let plan_mass: f64 = row_mass.iter().sum();
    let dual_objective = f.iter().zip(&mu.weights).filter(|(_, w)| **w > 0.0).map(|(a, w)| a * w).sum::<f64>()
        + g.iter().zip(&nu.weights).filter(|(_, w)| **w > 0.0).map(|(b, w)| b * w).sum::<f64>()
        - eps * (plan_mass - mu.mass() * nu.mass());
    Ok(GridSinkhornResult { f, g, row_mass, barycenters, cost, dual_objective, violation, iterations, stage_costs, eps })
}

/// Entropic self-transport OT_ε(μ, μ) on a grid through the averaged symmetric
/// iteration. Returns the objective and the final potential.
pub fn grid_self_transport(mu: &GridMeasure, opts: &SinkhornOptions, warm: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    opts.check()?;
    let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let mut f = match warm {
        Some(f0) if f0.len() == mu.len() => f0.to_vec(),
        Some(_) => return Err(Error::DimensionError("warm-start potential has the wrong length".into())),
        None => vec![0.0; mu.len()],
    };
    let transform = |f: &[f64], eps: f64| -> Vec<f64> {
        let hf: Vec<f64> = f.iter().zip(&log_mu).map(|(a, l)| a + eps * l).collect();
        soft_min(&mu.axes, &mu.axes, &hf, eps, false).lse.into_iter().map(|v| -eps * v).collect()
    };
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let schedule = opts.schedule();
    for (stage, &eps) in schedule.iter().enumerate() {
        let stage_tol = opts.stage_tol(stage + 1 == schedule.len());
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, violation });
            }
            iterations += 1;
            let t = transform(&f, eps);
            violation = (0..mu.len())
                .filter(|&i| mu.weights[i] > 0.0)
                .map(|i| mu.weights[i] * (((f[i] - t[i]) / eps).exp() - 1.0).abs())
                .sum();
            f = f.iter().zip(&t).map(|(a, b)| 0.5 * (a + b)).collect();
            if violation <= stage_tol {
                break;
            }
        }
    }
    let eps = opts.eps;
    let t = transform(&f, eps);
    let mut plan_mass = 0.0;
    let mut linear = 0.0;
    for i in 0..mu.len() {
        if mu.weights[i] > 0.0 {
            plan_mass += mu.weights[i] * ((f[i] - t[i]) / eps).exp();
            linear += f[i] * mu.weights[i];
        }
    }
    let mass = mu.mass();
    Ok((2.0 * linear - eps * (plan_mass - mass * mass), f))
}

/// Debiased entropic transport cost between grid measures with its parts.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDivergence {
    /// OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν).
    pub value: f64,
    pub cross: GridSinkhornResult,
    pub self_mu: Vec<f64>,
    pub self_nu: Vec<f64>,
}

/// Sinkhorn divergence between grid measures; `warm` reuses the potentials of an earlier call.
pub fn grid_sinkhorn_divergence(mu: &GridMeasure, nu: &GridMeasure, opts: &SinkhornOptions, warm: Option<&GridDivergence>) -> Result<GridDivergence> {
    let cross = grid_sinkhorn(mu, nu, opts, warm.map(|w| (w.cross.f.as_slice(), w.cross.g.as_slice())))?;
    let (a, self_mu) = grid_self_transport(mu, opts, warm.map(|w| w.self_mu.as_slice()))?;
    let (b, self_nu) = grid_self_transport(nu, opts, warm.map(|w| w.self_nu.as_slice()))?;
    Ok(GridDivergence { value: cross.dual_objective - 0.5 * a - 0.5 * b, cross, self_mu, self_nu })
}
