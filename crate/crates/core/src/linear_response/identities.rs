use crate::error::{Error, Result};
use crate::measures::{check_same, DensityGrid, Mat2, ScalarField, Shape, Vec2, VectorField};
use crate::ot_discrete::PotentialField;

/// Boundary images farther than this fraction of diam(Ω*) from ∂Ω* are rejected.
pub const COLLAR_FRACTION: f64 = 0.25;

/// L² norm over interior nodes of
/// f(tr[(D²φ)⁻¹D²ξ] + ⟨∇g(∇φ), ∇ξ⟩/g(∇φ)) − div(f(D²φ)⁻¹∇ξ).
pub fn magic_residual(f: &DensityGrid, g: &DensityGrid, phi: &PotentialField, xi: &ScalarField) -> Result<f64> {
    check_same(f.domain(), phi.domain())?;
    check_same(f.domain(), xi.domain())?;
    let domain = f.domain();
    let hinv = phi.hess.inverses();
    let dxi = xi.gradient();
    let d2xi = xi.hessian();
    let dg = g.as_field().gradient();
    let g_low = g.inf();
    let flux: Vec<Vec2> = (0..domain.len()).map(|k| hinv[k] * dxi.values()[k] * f.values()[k]).collect();
    let div = domain.mesh().divergence(&flux);
    let mut acc = 0.0;
    for k in domain.mesh().interior_nodes(2) {
        let y = phi.grad.values()[k];
        let gy = g.interpolate(y).max(g_low);
        let lhs = f.values()[k] * ((hinv[k] * d2xi[k]).trace() + dg.interpolate(y).dot(&dxi.values()[k]) / gy);
        let r = lhs - div[k];
        acc += domain.volumes()[k] * r * r;
    }
    Ok(acc.sqrt())
}

/// Row-wise divergence of the cofactor matrix det(D²φ)(D²φ)⁻¹.
pub fn cofactor_divergence(phi: &PotentialField) -> Result<VectorField> {
    let domain = phi.domain();
    if domain.dim() != 2 {
        return Err(Error::DimensionError("cofactor divergence needs a 2D potential".into()));
    }
    let cof: Vec<Mat2> = phi.hess.values().iter().map(|h| Mat2::new(h[(1, 1)], -h[(0, 1)], -h[(1, 0)], h[(0, 0)])).collect();
    let row = |r: usize| -> Vec<f64> {
        let v: Vec<Vec2> = cof.iter().map(|c| Vec2::new(c[(r, 0)], c[(r, 1)])).collect();
        domain.mesh().divergence(&v)
    };
    let (r0, r1) = (row(0), row(1));
    VectorField::new(domain.clone(), r0.into_iter().zip(r1).map(|(a, b)| Vec2::new(a, b)).collect())
}

/// Largest angle over boundary faces between the target normal at ∇φ(x) and (D²φ)⁻¹n(x).
pub fn boundary_normal_residual(phi: &PotentialField, target: &Shape) -> Result<f64> {
    let domain = phi.domain();
    let faces = domain.mesh().boundary_faces();
    if faces.is_empty() {
        return Err(Error::DomainError("the mesh has no boundary faces".into()));
    }
    let gx: Vec<f64> = phi.grad.values().iter().map(|v| v.x).collect();
    let gy: Vec<f64> = phi.grad.values().iter().map(|v| v.y).collect();
    let collar = COLLAR_FRACTION * target.diameter();
    let hinv = phi.hess.inverses();
    let mut worst: f64 = 0.0;
    for (k, face) in faces.iter().enumerate() {
        let mesh = domain.mesh();
        let y = if domain.dim() == 1 {
            Vec2::new(mesh.interpolate(&gx, face.point), 0.0)
        } else {
            Vec2::new(mesh.interpolate(&gx, face.point), mesh.interpolate(&gy, face.point))
        };
        if target.defining_function(y).abs() > collar {
            return Err(Error::RangeError(format!("boundary face {k} maps to ({}, {}), outside the collar of the target", y.x, y.y)));
        }
        let ns = target.outer_normal(y);
        let w = hinv[face.cell] * face.normal;
        let cross = ns.x * w.y - ns.y * w.x;
        worst = worst.max(cross.abs().atan2(ns.dot(&w)));
    }
    Ok(worst)
}
