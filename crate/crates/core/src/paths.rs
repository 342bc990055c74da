//! Curves of densities: displacement geodesics, linear interpolation and
//! multiplicative perturbations, with time derivatives, geodesic velocities
//! and Benamou–Brenier actions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_same, integrate, DensityGrid, Domain, Mat2, ScalarField, Shape, Vec2, VectorField};
use crate::ot1d::{self, Cdf1D};
use crate::ot_discrete::{
    brenier_from_duals, brenier_from_grid, grid_sinkhorn, sinkhorn, solve_exact, Backend, GridMeasure, HessianClamp, PointSet,
    PotentialField, SinkhornOptions,
};

/// Tolerance on ∫h·f for multiplicative perturbations.
pub const MEAN_TOL: f64 = 1e-8;
/// Default number of midpoint nodes in time for action integrals.
pub const BB_NODES: usize = 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Geodesic,
    Linear,
    Multiplicative,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::Geodesic => "geodesic",
            PathKind::Linear => "linear",
            PathKind::Multiplicative => "multiplicative",
        }
    }
}

impl std::str::FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(PathKind::Geodesic),
            "linear" => Ok(PathKind::Linear),
            "multiplicative" => Ok(PathKind::Multiplicative),
            _ => Err(Error::Parse(format!("unknown path kind `{s}`"))),
        }
    }
}

/// Velocity ∇u_t of a path at one time, on the mesh of the slice f_t.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySample {
    pub t: f64,
    pub field: VectorField,
}

#[derive(Clone, Debug)]
struct Geodesic {
    f0: DensityGrid,
    f1: DensityGrid,
    zeta0: PotentialField,
    clamp: HessianClamp,
    floor: f64,
    cdfs: Option<(Cdf1D, Cdf1D)>,
    // nodal components of ∇ζ₀ and D²ζ₀ for interpolation
    grad: [Vec<f64>; 2],
    hess: [Vec<f64>; 3],
}

#[derive(Clone, Debug)]
enum PathData {
    Linear { f0: DensityGrid, f1: DensityGrid },
    Multiplicative { f: DensityGrid, h: ScalarField, sup_h: f64 },
    Geodesic(Box<Geodesic>),
}

/// A curve t ↦ f_t of probability densities.
#[derive(Clone, Debug)]
pub struct DensityPath {
    data: PathData,
}

/// Linear interpolation f_t = (1−t)f0 + t f1.
pub fn linear_path(f0: &DensityGrid, f1: &DensityGrid) -> Result<DensityPath> {
    check_same(f0.domain(), f1.domain())?;
    Ok(DensityPath { data: PathData::Linear { f0: f0.clone(), f1: f1.clone() } })
}

/// Multiplicative perturbation f_t = f(1 + t h); requires ∫h f = 0.
pub fn multiplicative_path(f: &DensityGrid, h: &ScalarField) -> Result<DensityPath> {
    check_same(f.domain(), h.domain())?;
    let hf: Vec<f64> = h.values().iter().zip(f.values()).map(|(a, b)| a * b).collect();
    let mean = integrate(f.domain(), &hf);
    if mean.abs() > MEAN_TOL {
        return Err(Error::MeanError { mean });
    }
    let sup_h = h
        .values()
        .iter()
        .zip(f.domain().volumes())
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max);
    Ok(DensityPath { data: PathData::Multiplicative { f: f.clone(), h: h.clone(), sup_h } })
}

/// Displacement interpolation between f0 and f1 with the Brenier potential computed by `backend`
/// (ignored in 1D, where the monotone rearrangement is exact).
pub fn geodesic(f0: &DensityGrid, f1: &DensityGrid, backend: Backend) -> Result<DensityPath> {
    let clamp = HessianClamp::from_data(f0.domain().shape(), f1.domain().shape(), f0.floor(), f1.sup())?;
    if f0.dim() == 1 {
        let map = ot1d::brenier_map_1d(f0, f1)?;
        let zeta0 = PotentialField::from_map_1d(&map, clamp)?;
        return geodesic_with_potential(f0, f1, zeta0);
    }
    let zeta0 = match backend {
        Backend::Exact => {
            let (mu, index) = PointSet::from_density(f0);
            let (nu, _) = PointSet::from_density(f1);
            let (plan, duals) = solve_exact(&mu, &nu)?;
            brenier_from_duals(&duals, &plan, f0.domain(), &index, clamp)?
        }
        Backend::Sinkhorn { eps } => {
            let opts = SinkhornOptions { eps, ..SinkhornOptions::default() };
            match (GridMeasure::from_density(f0), GridMeasure::from_density(f1)) {
                (Ok(mu), Ok(nu)) => brenier_from_grid(&grid_sinkhorn(&mu, &nu, &opts, None)?, f0.domain(), clamp)?,
                _ => {
                    let (mu, index) = PointSet::from_density(f0);
                    let (nu, _) = PointSet::from_density(f1);
                    let r = sinkhorn(&mu, &nu, &opts)?;
                    brenier_from_duals(&r.duals, &r.plan, f0.domain(), &index, clamp)?
                }
            }
        }
    };
    geodesic_with_potential(f0, f1, zeta0)
}

/// Displacement interpolation along a given Brenier potential ζ₀ on the mesh of f0.
pub fn geodesic_with_potential(f0: &DensityGrid, f1: &DensityGrid, zeta0: PotentialField) -> Result<DensityPath> {
    check_same(f0.domain(), zeta0.domain())?;
    if f0.dim() != f1.dim() {
        return Err(Error::DimensionError("geodesic endpoints live in different dimensions".into()));
    }
    let clamp = HessianClamp::from_data(f0.domain().shape(), f1.domain().shape(), f0.floor(), f1.sup())?;
    // slice meshes are built on interpolated shapes; reject pairs without one
    interpolate_shape(f0.domain().shape(), f1.domain().shape(), 0.5)?;
    let d = f0.dim() as i32;
    let floor = f0.floor().min(f1.floor()) / clamp.lambda_cap.powi(d);
    let cdfs = if f0.dim() == 1 { Some((ot1d::cdf(f0)?, ot1d::cdf(f1)?)) } else { None };
    let g = zeta0.grad.values();
    let h = zeta0.hess.values();
    let grad = [g.iter().map(|v| v.x).collect(), g.iter().map(|v| v.y).collect()];
    let hess = [h.iter().map(|m| m[(0, 0)]).collect(), h.iter().map(|m| m[(0, 1)]).collect(), h.iter().map(|m| m[(1, 1)]).collect()];
    Ok(DensityPath {
        data: PathData::Geodesic(Box::new(Geodesic { f0: f0.clone(), f1: f1.clone(), zeta0, clamp, floor, cdfs, grad, hess })),
    })
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

fn lerp2(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [lerp(a[0], b[0], t), lerp(a[1], b[1], t)]
}

/// Support of the displacement interpolant when the endpoint shapes are related by a
/// diagonal affine map (the same shape, translates, axis-aligned dilations).
fn interpolate_shape(a: &Shape, b: &Shape, t: f64) -> Result<Shape> {
    if a == b {
        return Ok(a.clone());
    }
    let radii = |s: &Shape| match *s {
        Shape::Disk { center, radius } => Some((center, [radius, radius])),
        Shape::Ellipse { center, radii } => Some((center, radii)),
        _ => None,
    };
    match (a, b) {
        (Shape::Interval { a: a0, b: b0 }, Shape::Interval { a: a1, b: b1 }) => Ok(Shape::Interval { a: lerp(*a0, *a1, t), b: lerp(*b0, *b1, t) }),
        (Shape::Rectangle { lo: l0, hi: h0 }, Shape::Rectangle { lo: l1, hi: h1 }) => Ok(Shape::Rectangle { lo: lerp2(*l0, *l1, t), hi: lerp2(*h0, *h1, t) }),
        (Shape::Disk { center: c0, radius: r0 }, Shape::Disk { center: c1, radius: r1 }) => {
            Ok(Shape::Disk { center: lerp2(*c0, *c1, t), radius: lerp(*r0, *r1, t) })
        }
        _ => match (radii(a), radii(b)) {
            (Some((c0, r0)), Some((c1, r1))) => Ok(Shape::Ellipse { center: lerp2(c0, c1, t), radii: lerp2(r0, r1, t) }),
            _ => Err(Error::DomainError(format!(
                "no displacement interpolation between a {} and a {} domain",
                a.kind_name(),
                b.kind_name()
            ))),
        },
    }
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::RangeError(format!("time {t} is outside [0, 1]")));
    }
    Ok(())
}

impl Geodesic {
    fn slice_domain(&self, t: f64) -> Result<Arc<Domain>> {
        if t == 0.0 {
            return Ok(self.f0.domain().clone());
        }
        let shape = interpolate_shape(self.f0.domain().shape(), self.f1.domain().shape(), t)?;
        if shape == *self.f0.domain().shape() {
            return Ok(self.f0.domain().clone());
        }
        Domain::new(shape, self.f0.domain().mesh().resolution())
    }

    /// Quantile level s with Q_t(s) = z, where Q_t = (1−t)Q₀ + tQ₁.
    fn level_1d(&self, t: f64, z: f64) -> f64 {
        let (c0, c1) = self.cdfs.as_ref().expect("1D geodesic");
        let q = |s: f64| lerp(c0.quantile_unchecked(s), c1.quantile_unchecked(s), t);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if q(mid) < z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn grad_at(&self, x: Vec2) -> Vec2 {
        let m = self.f0.domain().mesh();
        Vec2::new(m.interpolate(&self.grad[0], x), m.interpolate(&self.grad[1], x))
    }

    fn hess_at(&self, x: Vec2) -> Mat2 {
        let m = self.f0.domain().mesh();
        let (a, b, c) = (m.interpolate(&self.hess[0], x), m.interpolate(&self.hess[1], x), m.interpolate(&self.hess[2], x));
        let (h, _) = crate::measures::clamp_matrix(Mat2::new(a, b, b, c), self.clamp.lambda_floor, self.clamp.lambda_cap, false);
        h
    }

    /// Newton solve of (1−t)x + t∇ζ₀(x) = z from `x`.
    fn newton(&self, t: f64, z: Vec2, mut x: Vec2) -> Option<Vec2> {
        let scale = 1.0 + z.norm();
        for _ in 0..100 {
            let r = (1.0 - t) * x + t * self.grad_at(x) - z;
            if r.norm() <= 1e-11 * scale {
                return Some(x);
            }
            let j = (1.0 - t) * Mat2::identity() + t * self.hess_at(x);
            x -= j.try_inverse()? * r;
            if !x.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        None
    }

    /// Preimages under ∇ζ_t of every node of the slice mesh.
    fn preimages(&self, t: f64, domain: &Domain) -> Vec<Vec2> {
        let src = self.f0.domain();
        let support: Vec<usize> = (0..src.len()).filter(|&k| src.volumes()[k] > 0.0).collect();
        let images: Vec<Vec2> = support.iter().map(|&k| (1.0 - t) * src.nodes()[k] + t * self.grad_at(src.nodes()[k])).collect();
        domain
            .nodes()
            .par_iter()
            .map(|&z| {
                self.newton(t, z, z).unwrap_or_else(|| {
                    // restart from the source node whose image lies closest to z
                    let best = (0..support.len())
                        .min_by(|&a, &b| (images[a] - z).norm_squared().total_cmp(&(images[b] - z).norm_squared()))
                        .expect("non-empty support");
                    let x0 = src.nodes()[support[best]];
                    self.newton(t, z, x0).unwrap_or(x0)
                })
            })
            .collect()
    }

    fn slice(&self, t: f64) -> Result<DensityGrid> {
        check_unit_time(t)?;
        let domain = self.slice_domain(t)?;
        let values: Vec<f64> = if self.cdfs.is_some() {
            let (c0, c1) = self.cdfs.as_ref().unwrap();
            domain
                .nodes()
                .par_iter()
                .map(|z| {
                    let s = self.level_1d(t, z.x);
                    let a = self.f0.interpolate(Vec2::new(c0.quantile_unchecked(s), 0.0));
                    let b = self.f1.interpolate(Vec2::new(c1.quantile_unchecked(s), 0.0));
                    1.0 / ((1.0 - t) / a + t / b)
                })
                .collect()
        } else {
            let xs = self.preimages(t, &domain);
            xs.par_iter()
                .map(|&x| {
                    let j = (1.0 - t) * Mat2::identity() + t * self.hess_at(x);
                    self.f0.interpolate(x) / j.determinant()
                })
                .collect()
        };
        DensityGrid::new(domain, values, self.floor)
    }

    fn velocity(&self, t: f64) -> Result<VelocitySample> {
        check_unit_time(t)?;
        let domain = self.slice_domain(t)?;
        let values: Vec<Vec2> = if self.cdfs.is_some() {
            let (c0, c1) = self.cdfs.as_ref().unwrap();
            domain
                .nodes()
                .par_iter()
                .map(|z| {
                    let s = self.level_1d(t, z.x);
                    Vec2::new(c1.quantile_unchecked(s) - c0.quantile_unchecked(s), 0.0)
                })
                .collect()
        } else {
            self.preimages(t, &domain).iter().map(|&x| self.grad_at(x) - x).collect()
        };
        Ok(VelocitySample { t, field: VectorField::new(domain, values)? })
    }
}

impl DensityPath {
    pub fn kind(&self) -> PathKind {
        match self.data {
            PathData::Linear { .. } => PathKind::Linear,
            PathData::Multiplicative { .. } => PathKind::Multiplicative,
            PathData::Geodesic(_) => PathKind::Geodesic,
        }
    }

    /// Endpoints of a geodesic or linear path; base density and perturbation of a multiplicative one.
    pub fn start(&self) -> &DensityGrid {
        match &self.data {
            PathData::Linear { f0, .. } => f0,
            PathData::Multiplicative { f, .. } => f,
            PathData::Geodesic(g) => &g.f0,
        }
    }

    pub fn end(&self) -> Option<&DensityGrid> {
        match &self.data {
            PathData::Linear { f1, .. } => Some(f1),
            PathData::Multiplicative { .. } => None,
            PathData::Geodesic(g) => Some(&g.f1),
        }
    }

    pub fn perturbation(&self) -> Option<&ScalarField> {
        match &self.data {
            PathData::Multiplicative { h, .. } => Some(h),
            _ => None,
        }
    }

    /// Brenier potential ζ₀ between the endpoints of a geodesic.
    pub fn potential(&self) -> Option<&PotentialField> {
        match &self.data {
            PathData::Geodesic(g) => Some(&g.zeta0),
            _ => None,
        }
    }

    /// Admissible times: [0, 1] for geodesic and linear paths, |t|·sup|h| < 1 for multiplicative ones.
    pub fn check_time(&self, t: f64) -> Result<()> {
        match &self.data {
            PathData::Multiplicative { sup_h, .. } => {
                if !t.is_finite() || t.abs() * sup_h >= 1.0 {
                    return Err(Error::RangeError(format!("t = {t} with sup|h| = {sup_h} leaves the positivity range")));
                }
                Ok(())
            }
            _ => check_unit_time(t),
        }
    }

    /// The density f_t.
    pub fn at(&self, t: f64) -> Result<DensityGrid> {
        self.check_time(t)?;
        match &self.data {
            PathData::Linear { f0, f1 } => {
                if t == 0.0 {
                    return Ok(f0.clone());
                }
                if t == 1.0 {
                    return Ok(f1.clone());
                }
                let v = f0.values().iter().zip(f1.values()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                DensityGrid::from_normalized(f0.domain().clone(), v, f0.floor().min(f1.floor()))
            }
            PathData::Multiplicative { f, h, sup_h } => {
                if t == 0.0 {
                    return Ok(f.clone());
                }
                let v = f.values().iter().zip(h.values()).map(|(a, b)| a * (1.0 + t * b)).collect();
                DensityGrid::from_normalized(f.domain().clone(), v, f.floor() * (1.0 - t.abs() * sup_h))
            }
            PathData::Geodesic(g) => g.slice(t),
        }
    }

    /// Several slices, evaluated in parallel.
    pub fn slices(&self, ts: &[f64]) -> Result<Vec<DensityGrid>> {
        ts.par_iter().map(|&t| self.at(t)).collect()
    }

    /// ∂_t f_t on the mesh of f_t. Geodesics use the continuity equation −div(f_t ∇u_t).
    pub fn derivative(&self, t: f64) -> Result<ScalarField> {
        self.check_time(t)?;
        match &self.data {
            PathData::Linear { f0, f1 } => {
                ScalarField::new(f0.domain().clone(), f0.values().iter().zip(f1.values()).map(|(a, b)| b - a).collect())
            }
            PathData::Multiplicative { f, h, .. } => {
                ScalarField::new(f.domain().clone(), f.values().iter().zip(h.values()).map(|(a, b)| a * b).collect())
            }
            PathData::Geodesic(g) => {
                let ft = g.slice(t)?;
                let v = g.velocity(t)?;
                let flux: Vec<Vec2> = v.field.values().iter().zip(ft.values()).map(|(u, f)| u * *f).collect();
                let div = ft.domain().mesh().divergence(&flux);
                ScalarField::new(ft.domain().clone(), div.into_iter().map(|d| -d).collect())
            }
        }
    }

    /// Geodesic velocity ∇u_t, defined by ∇u_t((1−t)x + t∇ζ₀(x)) = ∇ζ₀(x) − x.
    pub fn velocity(&self, t: f64) -> Result<VelocitySample> {
        match &self.data {
            PathData::Geodesic(g) => g.velocity(t),
            _ => Err(Error::KindError { expected: "geodesic" }),
        }
    }

    /// A 1D velocity solving the continuity equation for any path kind:
    /// v_t = −(∫_a^x ∂_t f_t) / f_t, which has zero flux at both ends.
    pub fn continuity_velocity(&self, t: f64) -> Result<VelocitySample> {
        let ft = self.at(t)?;
        if ft.dim() != 1 {
            return Err(Error::DimensionError("continuity velocities are built in 1D only".into()));
        }
        let dt = self.derivative(t)?;
        check_same(ft.domain(), dt.domain())?;
        let nodes = ft.domain().nodes();
        let d = dt.values();
        let mut acc = 0.0;
        let mut v = Vec::with_capacity(nodes.len());
        v.push(Vec2::zeros());
        for k in 1..nodes.len() {
            acc += 0.5 * (nodes[k].x - nodes[k - 1].x) * (d[k] + d[k - 1]);
            v.push(Vec2::new(-acc / ft.values()[k], 0.0));
        }
        // the total derivative of the mass is zero, so the last flux vanishes up to quadrature error
        let last = v.len() - 1;
        v[last] = Vec2::zeros();
        Ok(VelocitySample { t, field: VectorField::new(ft.domain().clone(), v)? })
    }
}

/// Midpoint times (k + ½)/n of the action quadrature.
pub fn midpoint_times(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
}

/// ∫₀¹∫|∇u_t|² f_t by the composite midpoint rule on `nodes` times.
/// `velocities` must contain a sample at every midpoint time.
pub fn bb_action(path: &DensityPath, velocities: &[VelocitySample], nodes: usize) -> Result<f64> {
    if nodes == 0 {
        return Err(Error::IncompleteInput("the action needs at least one time node".into()));
    }
    let times = midpoint_times(nodes);
    let picked: Vec<&VelocitySample> = times
        .iter()
        .map(|&t| {
            velocities
                .iter()
                .find(|v| (v.t - t).abs() <= 1e-12)
                .ok_or_else(|| Error::IncompleteInput(format!("no velocity sample at t = {t}")))
        })
        .collect::<Result<_>>()?;
    let terms: Vec<f64> = picked
        .par_iter()
        .map(|v| {
            let ft = path.at(v.t)?;
            check_same(ft.domain(), v.field.domain())?;
            let e: Vec<f64> = v.field.values().iter().zip(ft.values()).map(|(u, f)| u.norm_squared() * f).collect();
            Ok(integrate(ft.domain(), &e))
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / nodes as f64)
}

/// Action of a geodesic along its own velocity field.
pub fn geodesic_action(path: &DensityPath, nodes: usize) -> Result<f64> {
    let vs: Vec<VelocitySample> = midpoint_times(nodes).par_iter().map(|&t| path.velocity(t)).collect::<Result<_>>()?;
    bb_action(path, &vs, nodes)
}
