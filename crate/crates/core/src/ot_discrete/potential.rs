use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DualPotentials, GridSinkhornResult, TransportPlan};
use crate::error::{Error, Result};
use crate::measures::{integrate, Domain, Mat2, ScalarField, Shape, SpdField, Vec2, VectorField};
use crate::ot1d::Map1D;

/// Eigenvalue bracket applied to discrete Hessians of Brenier potentials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianClamp {
    pub lambda_floor: f64,
    pub lambda_cap: f64,
}

impl HessianClamp {
    /// λ_cap = 10·diam(Ω*)/diam(Ω) and λ_floor = (a / sup g)·λ_cap^{1−d},
    /// with `a` the floor of the source density and `sup_g` the sup of the target density.
    pub fn from_data(source: &Shape, target: &Shape, a: f64, sup_g: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::FloorError(a));
        }
        let cap = 10.0 * target.diameter() / source.diameter();
        let d = source.dim() as i32;
        let floor = (a / sup_g) * cap.powi(1 - d);
        Ok(HessianClamp { lambda_floor: floor.min(cap), lambda_cap: cap })
    }
}

/// Brenier potential sampled on a mesh with its gradient and clamped Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField {
    pub phi: ScalarField,
    pub grad: VectorField,
    pub hess: SpdField,
    /// Fraction of nodes where the Hessian clamp changed the matrix.
    pub clamp_rate: f64,
}

impl PotentialField {
    /// Assemble from values, gradient and an unclamped Hessian.
    pub fn from_parts(phi: ScalarField, grad: VectorField, hess: Vec<Mat2>, clamp: HessianClamp) -> Result<Self> {
        crate::measures::check_same(phi.domain(), grad.domain())?;
        let (hess, clamp_rate) = SpdField::clamped(phi.domain().clone(), hess, clamp.lambda_floor, clamp.lambda_cap)?;
        Ok(PotentialField { phi, grad, hess, clamp_rate })
    }

    /// Closed-form potential, gradient and Hessian.
    pub fn analytic(
        domain: Arc<Domain>,
        phi: impl Fn(Vec2) -> f64,
        grad: impl Fn(Vec2) -> Vec2,
        hess: impl Fn(Vec2) -> Mat2,
        clamp: HessianClamp,
    ) -> Result<Self> {
        let h = domain.nodes().iter().map(|&p| hess(p)).collect();
        let phi = ScalarField::from_fn(domain.clone(), phi);
        let grad = VectorField::from_fn(domain, grad);
        Self::from_parts(phi, grad, h, clamp)
    }

    /// Gradient and Hessian by finite differences of the nodal values.
    pub fn from_values(phi: ScalarField, clamp: HessianClamp) -> Result<Self> {
        let grad = phi.gradient();
        Self::from_gradient(phi, grad, clamp)
    }

    /// Hessian by symmetrized finite differences of a given gradient.
    pub fn from_gradient(phi: ScalarField, grad: VectorField, clamp: HessianClamp) -> Result<Self> {
        let jac = phi.domain().mesh().jacobian_of(grad.values());
        let hess = jac.into_iter().map(|m| 0.5 * (m + m.transpose())).collect();
        Self::from_parts(phi, grad, hess, clamp)
    }

    /// Potential of a 1D monotone map: φ' = T, φ'' = T' (finite differences), zero mean.
    pub fn from_map_1d(map: &Map1D, clamp: HessianClamp) -> Result<Self> {
        let phi = map.potential();
        let domain = map.source().clone();
        let grad = VectorField::new(domain, map.values().iter().map(|&t| Vec2::new(t, 0.0)).collect())?;
        Self::from_gradient(phi, grad, clamp)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.phi.domain()
    }
}

fn zero_mean(domain: &Domain, mut phi: Vec<f64>) -> Vec<f64> {
    let vol: f64 = domain.volumes().iter().sum();
    let m = integrate(domain, &phi) / vol;
    phi.iter_mut().for_each(|v| *v -= m);
    phi
}

/// Brenier potential φ = (|x|² − α)/2 from dual variables, with ∇φ the barycentric map of
/// the plan. `index[k]` is the mesh node of source point `k`; mesh nodes without a source
/// point are filled with the (soft, if ε > 0) Legendre transform of the target potential.
pub fn brenier_from_duals(duals: &DualPotentials, plan: &TransportPlan, domain: &Arc<Domain>, index: &[usize], clamp: HessianClamp) -> Result<PotentialField> {
    if index.len() != plan.source.len() || duals.alpha.len() != plan.source.len() {
        return Err(Error::DimensionError("source points, duals and index map disagree".into()));
    }
    let bary = plan.barycentric_map()?;
    let dim = plan.source.dim;
    let nodes = domain.nodes();
    let mut phi = vec![f64::NAN; domain.len()];
    let mut grad = vec![Vec2::zeros(); domain.len()];
    for (k, &node) in index.iter().enumerate() {
        let x = nodes[node];
        phi[node] = 0.5 * (x.norm_squared() - duals.alpha[k]);
        grad[node] = Vec2::new(bary[k][0], if dim > 1 { bary[k][1] } else { 0.0 });
    }
    let target = &plan.target;
    let psi: Vec<f64> = (0..target.len())
        .map(|j| {
            let y = target.point(j);
            0.5 * (y.iter().map(|v| v * v).sum::<f64>() - duals.beta[j])
        })
        .collect();
    for node in 0..domain.len() {
        if !phi[node].is_nan() {
            continue;
        }
        let x = nodes[node];
        let xs = [x.x, x.y];
        let scores: Vec<f64> = (0..target.len())
            .map(|j| target.point(j).iter().zip(&xs).map(|(y, x)| y * x).sum::<f64>() - psi[j])
            .collect();
        let to_vec = |y: &[f64]| Vec2::new(y[0], if dim > 1 { y[1] } else { 0.0 });
        if duals.eps > 0.0 {
            // φ = (ε/2) log Σ ν_j exp(2 score_j / ε)
            let e = 0.5 * duals.eps;
            let logs: Vec<f64> = scores.iter().zip(&target.weights).map(|(s, w)| s / e + w.ln()).collect();
            let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
            let total: f64 = ws.iter().sum();
            phi[node] = e * (mx + total.ln());
            let mut g = Vec2::zeros();
            for (j, w) in ws.iter().enumerate() {
                g += to_vec(target.point(j)) * (w / total);
            }
            grad[node] = g;
        } else {
            let (jbest, best) = scores.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &s)| if s > acc.1 { (j, s) } else { acc });
            phi[node] = best;
            grad[node] = to_vec(target.point(jbest));
        }
    }
    let phi = ScalarField::new(domain.clone(), zero_mean(domain, phi))?;
    let grad = VectorField::new(domain.clone(), grad)?;
    PotentialField::from_gradient(phi, grad, clamp)
}

/// Brenier potential from a grid Sinkhorn solve on the source mesh (tensor layout, same node order).
pub fn brenier_from_grid(result: &GridSinkhornResult, domain: &Arc<Domain>, clamp: HessianClamp) -> Result<PotentialField> {
    if result.f.len() != domain.len() {
        return Err(Error::DimensionError("grid potentials do not match the mesh".into()));
    }
    let phi: Vec<f64> = domain.nodes().iter().zip(&result.f).map(|(x, a)| 0.5 * (x.norm_squared() - a)).collect();
    let phi = ScalarField::new(domain.clone(), zero_mean(domain, phi))?;
    let grad = VectorField::new(domain.clone(), result.barycenters.clone())?;
    PotentialField::from_gradient(phi, grad, clamp)
}
