use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_same, Domain, Mat2, Resolution, ScalarField, Shape, SpdField, Vec2};

/// Eigenvalue floor applied to the discrete Hessian of F.
pub const BL_CLAMP_FLOOR: f64 = 1e-8;
/// Largest fraction of clamped nodes before F is declared non-convex.
pub const MAX_CLAMP_RATE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrascampLieb {
    /// Var_{μ_F}(u).
    pub lhs: f64,
    /// ∫⟨(D²F)⁻¹∇u, ∇u⟩dμ_F.
    pub rhs: f64,
    /// rhs − lhs.
    pub margin: f64,
    pub clamp_rate: f64,
}

/// Both sides of the variance bound for μ_F ∝ e^{−F} on the mesh of `f`, by nodal quadrature.
pub fn brascamp_lieb_check(f: &ScalarField, u: &ScalarField) -> Result<BrascampLieb> {
    check_same(f.domain(), u.domain())?;
    let domain = f.domain();
    let one_d = domain.dim() == 1;
    let vol = domain.volumes();
    let support: Vec<usize> = (0..domain.len()).filter(|&k| vol[k] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::EmptyInput("mesh has no cells of positive volume".into()));
    }
    let hess: Vec<Mat2> = f.hessian().into_iter().map(|m| 0.5 * (m + m.transpose())).collect();
    let lowest = |m: &Mat2| if one_d { m[(0, 0)] } else { SymmetricEigen::new(*m).eigenvalues.min() };
    let clamped = support.iter().filter(|&&k| lowest(&hess[k]) < BL_CLAMP_FLOOR).count();
    let clamp_rate = clamped as f64 / support.len() as f64;
    if clamp_rate > MAX_CLAMP_RATE {
        return Err(Error::ConvexityError { clamp_rate });
    }
    let (spd, _) = SpdField::clamped(domain.clone(), hess, BL_CLAMP_FLOOR, f64::INFINITY)?;
    let inv = spd.inverses();
    let grad = u.gradient();
    let fmin = support.iter().map(|&k| f.values()[k]).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = support.iter().map(|&k| vol[k] * (-(f.values()[k] - fmin)).exp()).collect();
    let z: f64 = w.iter().sum();
    let (mut m1, mut m2, mut rhs) = (0.0, 0.0, 0.0);
    for (&k, wk) in support.iter().zip(&w) {
        let p = wk / z;
        let v = u.values()[k];
        let g = grad.values()[k];
        m1 += p * v;
        m2 += p * v * v;
        rhs += p * g.dot(&(inv[k] * g));
    }
    let lhs = (m2 - m1 * m1).max(0.0);
    Ok(BrascampLieb { lhs, rhs, margin: rhs - lhs, clamp_rate })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrascampLiebSuite {
    pub seed: u64,
    pub count: usize,
    pub resolution: Resolution,
    pub instances: Vec<BrascampLieb>,
    pub min_margin: f64,
}

struct Draw {
    q: Mat2,
    bump: f64,
    center: Vec2,
    waves: [(f64, Vec2, f64); 3],
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    let theta = rng.random_range(0.0..PI);
    let (c, s) = (theta.cos(), theta.sin());
    let r = Mat2::new(c, -s, s, c);
    let l = Mat2::from_diagonal(&Vec2::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)));
    let q = r * l * r.transpose();
    let bump = rng.random_range(0.0..1.0);
    let rho = 0.5 * rng.random_range(0.0f64..1.0).sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    let center = Vec2::new(rho * phi.cos(), rho * phi.sin());
    let mut wave = || (rng.random_range(-1.0..1.0), Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)), rng.random_range(0.0..2.0 * PI));
    let waves = [wave(), wave(), wave()];
    Draw { q, bump, center, waves }
}

/// Seeded instances on the unit disk: F = ½xᵀQx + c|x − x₀|⁴ with Q SPD, u a random trigonometric polynomial.
pub fn brascamp_lieb_suite(seed: u64, count: usize, nr: usize) -> Result<BrascampLiebSuite> {
    let resolution = Resolution::Polar { nr, ntheta: 4 * nr };
    let domain = Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Draw> = (0..count).map(|_| draw(&mut rng)).collect();
    let instances = draws
        .par_iter()
        .map(|d| {
            let f = ScalarField::from_fn(domain.clone(), |x| 0.5 * x.dot(&(d.q * x)) + d.bump * (x - d.center).norm_squared().powi(2));
            let u = ScalarField::from_fn(domain.clone(), |x| d.waves.iter().map(|(a, k, b)| a * (k.dot(&x) + b).sin()).sum());
            brascamp_lieb_check(&f, &u)
        })
        .collect::<Result<Vec<_>>>()?;
    let min_margin = instances.iter().map(|b| b.margin).fold(f64::INFINITY, f64::min);
    Ok(BrascampLiebSuite { seed, count, resolution, instances, min_margin })
}
