use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DualPotentials, PointSet, TransportPlan};
use crate::error::{Error, Result};

/// Marginal tolerance of the intermediate ε-scaling stages.
pub const STAGE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Target regularization.
    pub eps: f64,
    /// First regularization of the ε-scaling schedule (halved each stage).
    pub eps_start: f64,
    /// L¹ tolerance on the row marginal (columns are exact after each update).
    pub tol: f64,
    /// Iteration cap over all stages.
    pub max_iter: usize,
    /// Over-relaxation ω ∈ [1, 2) of the source potential update (1 is plain Sinkhorn).
    #[serde(default = "unit_relaxation")]
    pub relaxation: f64,
}

fn unit_relaxation() -> f64 {
    1.0
}

/// Replace `f` by f + ω(f̂ − f); non-finite entries take f̂.
pub(crate) fn relax(f: &mut [f64], f_hat: Vec<f64>, omega: f64) {
    for (a, b) in f.iter_mut().zip(f_hat) {
        *a = if a.is_finite() && omega != 1.0 { *a + omega * (b - *a) } else { b };
    }
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions { eps: 1e-2, eps_start: 1.0, tol: 1e-6, max_iter: 200_000, relaxation: 1.0 }
    }
}

impl SinkhornOptions {
    pub(crate) fn check(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::RangeError(format!("regularization eps = {} must be positive", self.eps)));
        }
        if !(1.0..2.0).contains(&self.relaxation) {
            return Err(Error::RangeError(format!("relaxation {} outside [1, 2)", self.relaxation)));
        }
        Ok(())
    }

    /// Tolerance of a stage: `tol` on the last one, at most [`STAGE_TOL`] before.
    pub fn stage_tol(&self, last: bool) -> f64 {
        if last {
            self.tol
        } else {
            self.tol.max(STAGE_TOL)
        }
    }

    /// Regularization of every stage, ending exactly at `eps`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut e = self.eps_start;
        while e > self.eps {
            out.push(e);
            e *= 0.5;
        }
        out.push(self.eps);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    /// `(ε, ⟨c, π_ε⟩)` at the end of every stage.
    pub stage_costs: Vec<(f64, f64)>,
    pub iterations: usize,
    /// Final L¹ row-marginal violation.
    pub violation: f64,
    /// Entropic dual objective OT_ε(μ, ν).
    pub dual_objective: f64,
}

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn with ε-scaling for the squared Euclidean cost.
pub fn sinkhorn(mu: &PointSet, nu: &PointSet, opts: &SinkhornOptions) -> Result<SinkhornResult> {
    opts.check()?;
    if mu.dim != nu.dim {
        return Err(Error::DimensionError(format!("point sets live in dimensions {} and {}", mu.dim, nu.dim)));
    }
    let (m, n) = (mu.len(), nu.len());
    let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = nu.weights.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut stage_costs = Vec::new();
    let mut violation = f64::INFINITY;
    let schedule = opts.schedule();
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let stage_tol = opts.stage_tol(last);
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence { iterations, violation });
            }
            iterations += 1;
            g = (0..n)
                .into_par_iter()
                .map(|j| -eps * lse((0..m).map(|i| (f[i] - mu.sq_dist(i, nu, j)) / eps + log_mu[i])))
                .collect();
            let f_hat: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|i| -eps * lse((0..n).map(|j| (g[j] - mu.sq_dist(i, nu, j)) / eps + log_nu[j])))
                .collect();
            violation = (0..m).map(|i| mu.weights[i] * (((f[i] - f_hat[i]) / eps).exp() - 1.0).abs()).sum();
            if violation <= stage_tol {
                break;
            }
            relax(&mut f, f_hat, opts.relaxation);
        }
        let cost = primal_cost(mu, nu, &f, &g, eps);
        stage_costs.push((eps, cost));
        if last {
            break;
        }
    }
    let eps = opts.eps;
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ws: Vec<f64> = (0..n)
                .map(|j| ((f[i] + g[j] - mu.sq_dist(i, nu, j)) / eps).exp() * mu.weights[i] * nu.weights[j])
                .collect();
            let cut = 1e-15 * ws.iter().cloned().fold(0.0, f64::max);
            ws.into_iter().enumerate().filter(|&(_, w)| w > cut).map(|(j, w)| (i, j, w)).collect()
        })
        .collect();
    let entries: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    let plan_mass: f64 = entries.iter().map(|e| e.2).sum();
    let dual = f.iter().zip(&mu.weights).map(|(a, w)| a * w).sum::<f64>()
        + g.iter().zip(&nu.weights).map(|(b, w)| b * w).sum::<f64>()
        - eps * (plan_mass - mu.mass() * nu.mass());
    let plan = TransportPlan::from_entries(mu.clone(), nu.clone(), entries);
    let duals = DualPotentials::gauged(f, g, mu, eps);
    Ok(SinkhornResult { plan, duals, stage_costs, iterations, violation, dual_objective: dual })
}

fn primal_cost(mu: &PointSet, nu: &PointSet, f: &[f64], g: &[f64], eps: f64) -> f64 {
    (0..mu.len())
        .into_par_iter()
        .map(|i| {
            (0..nu.len())
                .map(|j| {
                    let c = mu.sq_dist(i, nu, j);
                    ((f[i] + g[j] - c) / eps).exp() * mu.weights[i] * nu.weights[j] * c
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Entropic dual objective OT_ε(μ, μ) through the averaged symmetric iteration
/// f ← ½(f + T_ε f), which does not oscillate like the alternating one.
pub fn self_transport_objective(mu: &PointSet, opts: &SinkhornOptions) -> Result<f64> {
    opts.check()?;
    let m = mu.len();
    let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; m];
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
            let t: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|i| -eps * lse((0..m).map(|k| (f[k] - mu.sq_dist(i, mu, k)) / eps + log_mu[k])))
                .collect();
            violation = (0..m).map(|i| mu.weights[i] * (((f[i] - t[i]) / eps).exp() - 1.0).abs()).sum();
            f = f.iter().zip(&t).map(|(a, b)| 0.5 * (a + b)).collect();
            if violation <= stage_tol {
                break;
            }
        }
    }
    let eps = opts.eps;
    let plan_mass: f64 = (0..m)
        .into_par_iter()
        .map(|i| (0..m).map(|k| ((f[i] + f[k] - mu.sq_dist(i, mu, k)) / eps).exp() * mu.weights[i] * mu.weights[k]).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let mass = mu.mass();
    Ok(2.0 * f.iter().zip(&mu.weights).map(|(a, w)| a * w).sum::<f64>() - eps * (plan_mass - mass * mass))
}
