use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linear_response::{boundary_normal_residual, cofactor_divergence, magic_residual};
use crate::measures::{integrate, DensityGrid, Domain, Mat2, Resolution, ScalarField, Shape, Vec2};
use crate::ot_discrete::{HessianClamp, PotentialField};

/// Residuals of the structural identities over a sequence of polar disk meshes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// Radial ring counts of the meshes.
    pub resolutions: Vec<usize>,
    /// Magic-identity residual for φ = |x|²/2 + 0.1cos(x₁)sin(x₂) with f = g(∇φ)det D²φ.
    pub magic_residuals: Vec<f64>,
    /// log₂ ratios of consecutive residuals.
    pub magic_slopes: Vec<f64>,
    /// Same potential with an unrelated source density (does not converge).
    pub magic_inconsistent: Vec<f64>,
    /// Largest cofactor divergence for a quadratic potential.
    pub cofactor_quadratic: f64,
    /// L² cofactor divergence for φ = x₁³/6 + |x|²/2.
    pub cofactor_cubic: Vec<f64>,
    /// Boundary normal residual of the identity map on the disk.
    pub boundary_identity: f64,
}

fn disk(nr: usize) -> Result<std::sync::Arc<Domain>> {
    Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Polar { nr, ntheta: 4 * nr })
}

fn clamp(target: &Shape) -> HessianClamp {
    HessianClamp { lambda_floor: 1e-3, lambda_cap: 10.0 * target.diameter() / 2.0 }
}

fn magic(nr: usize, consistent: bool) -> Result<f64> {
    let d = disk(nr)?;
    let grad = |x: Vec2| Vec2::new(x.x - 0.1 * x.x.sin() * x.y.sin(), x.y + 0.1 * x.x.cos() * x.y.cos());
    let hess = |x: Vec2| {
        let (c, s) = (x.x.cos() * x.y.sin(), x.x.sin() * x.y.cos());
        Mat2::new(1.0 - 0.1 * c, -0.1 * s, -0.1 * s, 1.0 - 0.1 * c)
    };
    let gfun = |y: Vec2| 1.0 + 0.2 * y.x + 0.1 * y.y * y.y;
    let target = Shape::Rectangle { lo: [-1.3, -1.3], hi: [1.3, 1.3] };
    let tdom = Domain::new(target.clone(), Resolution::Tensor { n: [8 * nr, 8 * nr] })?;
    let g = DensityGrid::from_fn(tdom, gfun, 0.1)?;
    let f = if consistent {
        DensityGrid::from_fn(d.clone(), |x| gfun(grad(x)) * hess(x).determinant(), 0.1)?
    } else {
        DensityGrid::from_fn(d.clone(), |x| 1.0 + 0.5 * x.x, 0.1)?
    };
    let phi = PotentialField::analytic(d.clone(), |x| 0.5 * x.norm_squared() + 0.1 * x.x.cos() * x.y.sin(), grad, hess, clamp(&target))?;
    let xi = ScalarField::from_fn(d, |x| x.x.sin() * (2.0 * x.y).cos());
    magic_residual(&f, &g, &phi, &xi)
}

fn cofactor_cubic(nr: usize) -> Result<f64> {
    let d = disk(nr)?;
    let target = Shape::Disk { center: [0.0, 0.0], radius: 1.0 };
    let phi = PotentialField::analytic(
        d.clone(),
        |x| x.x.powi(3) / 6.0 + 0.5 * x.norm_squared(),
        |x| Vec2::new(0.5 * x.x * x.x + x.x, x.y),
        |x| Mat2::new(1.0 + x.x, 0.0, 0.0, 1.0),
        clamp(&target),
    )?;
    let div = cofactor_divergence(&phi)?;
    let e: Vec<f64> = div.values().iter().map(|v| v.norm_squared()).collect();
    Ok(integrate(&d, &e).sqrt())
}

/// Run every identity check on polar disk meshes with the given ring counts.
pub fn identity_suite(resolutions: &[usize]) -> Result<IdentityReport> {
    let magic_residuals = resolutions.par_iter().map(|&n| magic(n, true)).collect::<Result<Vec<_>>>()?;
    let magic_inconsistent = resolutions.par_iter().map(|&n| magic(n, false)).collect::<Result<Vec<_>>>()?;
    let cofactor = resolutions.par_iter().map(|&n| cofactor_cubic(n)).collect::<Result<Vec<_>>>()?;
    let magic_slopes = magic_residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    let nr = resolutions.iter().copied().max().unwrap_or(8);
    let d = disk(nr)?;
    let unit = Shape::Disk { center: [0.0, 0.0], radius: 1.0 };
    let a = Mat2::new(1.5, 0.2, 0.2, 0.7);
    let quad = PotentialField::analytic(d.clone(), |x| 0.5 * x.dot(&(a * x)), |x| a * x, |_| a, clamp(&unit))?;
    let cofactor_quadratic = cofactor_divergence(&quad)?.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let id = PotentialField::analytic(d, |x| 0.5 * x.norm_squared(), |x| x, |_| Mat2::identity(), clamp(&unit))?;
    let boundary_identity = boundary_normal_residual(&id, &unit)?;
    Ok(IdentityReport {
        resolutions: resolutions.to_vec(),
        magic_residuals,
        magic_slopes,
        magic_inconsistent,
        cofactor_quadratic,
        cofactor_cubic: cofactor,
        boundary_identity,
    })
}
