//! The linearized Monge–Ampère problem in divergence form,
//!
//!   −div(A∇ξ) = p in Ω,   ⟨A∇ξ, n⟩ = |A n| q on ∂Ω,   ∫ξ = 0,
//!
//! with A = f·(D²φ)⁻¹. Solved in closed form in 1D and by a symmetric finite-volume
//! assembly plus deflated conjugate gradients in 2D.

mod identities;
mod sparse;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{check_same, integrate, polar_jacobian, DensityGrid, Domain, Layout, Mat2, ScalarField, Shape, SpdField, Vec2};
use crate::ot_discrete::PotentialField;
use crate::paths::DensityPath;

pub use identities::{boundary_normal_residual, cofactor_divergence, magic_residual, COLLAR_FRACTION};
pub use sparse::SparseMatrix;

/// Relative residual at which conjugate gradients stop.
pub const PCG_TOL: f64 = 1e-10;
/// Relative size of ∫p + ∫|An|q above which data are rejected.
pub const COMPAT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ClosedForm,
    Pcg,
}

/// Assembled linear system for one response problem.
#[derive(Clone, Debug)]
pub struct EllipticProblem {
    domain: Arc<Domain>,
    coefficient: Vec<Mat2>,
    rhs: ScalarField,
    boundary: Vec<f64>,
    matrix: SparseMatrix,
    load: Vec<f64>,
    unknowns: Vec<usize>,
    compatibility: f64,
    scale: f64,
    cross_limited: usize,
    /// Fraction of nodes where the Hessian clamp was active upstream.
    pub clamp_rate: f64,
}

/// Solution ξ of a response problem with solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseField {
    pub xi: ScalarField,
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
    /// ∫p + ∫|An|q of the data before projection.
    pub compatibility: f64,
    pub clamp_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub compatibility: f64,
    pub clamp_rate: f64,
}

impl ResponseField {
    pub fn diagnostics(&self) -> ResponseDiagnostics {
        ResponseDiagnostics {
            iterations: self.iterations,
            residual: self.residual,
            compatibility: self.compatibility,
            clamp_rate: self.clamp_rate,
        }
    }
}

/// Fraction of the segment p0–p1 inside a convex shape.
fn segment_fraction(shape: &Shape, p0: Vec2, p1: Vec2) -> f64 {
    let d = |t: f64| shape.defining_function(p0 + (p1 - p0) * t);
    if d(0.0) <= 0.0 && d(1.0) <= 0.0 {
        return 1.0;
    }
    // golden-section search for the minimum of the convex function d along the segment
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    for _ in 0..80 {
        if d(c) < d(e) {
            b = e;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        e = a + g * (b - a);
    }
    let tm = 0.5 * (a + b);
    if d(tm) >= 0.0 {
        return 0.0;
    }
    let edge = |mut inside: f64, mut outside: f64| {
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if d(mid) <= 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let lo = if d(0.0) <= 0.0 { 0.0 } else { edge(tm, 0.0) };
    let hi = if d(1.0) <= 0.0 { 1.0 } else { edge(tm, 1.0) };
    hi - lo
}

/// Cross term 2c·ā·b̄ on the four cells around a corner, where ā averages the two
/// differences along the first axis and b̄ the two along the second.
/// `cells` = [(0,0), (1,0), (0,1), (1,1)] in (first, second) axis offsets.
fn corner(b: &mut sparse::Builder, cells: [usize; 4], c: f64) {
    let u = [-0.5, 0.5, -0.5, 0.5];
    let v = [-0.5, -0.5, 0.5, 0.5];
    for x in 0..4 {
        for y in 0..4 {
            b.add(cells[x], cells[y], c * (u[x] * v[y] + v[x] * u[y]));
        }
    }
}

fn avg(ks: &[&Mat2]) -> Mat2 {
    ks.iter().fold(Mat2::zeros(), |acc, k| acc + **k) / ks.len() as f64
}

/// Cross coefficient limited so the corner energy stays nonnegative.
fn limit(c: f64, ta: [f64; 2], tb: [f64; 2], limited: &mut usize) -> f64 {
    let lim = (ta[0].min(ta[1]) * tb[0].min(tb[1])).max(0.0).sqrt();
    if c.abs() > lim {
        *limited += 1;
        c.signum() * lim
    } else {
        c
    }
}

impl EllipticProblem {
    /// Problem with A = f·(D²φ)⁻¹ from a density and a clamped Hessian field.
    pub fn assemble(f: &DensityGrid, hess: &SpdField, p: &ScalarField, q: &[f64]) -> Result<Self> {
        check_same(f.domain(), hess.domain())?;
        let coefficient = hess.inverses().into_iter().zip(f.values()).map(|(m, v)| m * *v).collect();
        Self::with_coefficient(f.domain().clone(), coefficient, p, q)
    }

    /// Problem with an explicit nodal coefficient field.
    pub fn with_coefficient(domain: Arc<Domain>, coefficient: Vec<Mat2>, p: &ScalarField, q: &[f64]) -> Result<Self> {
        check_same(&domain, p.domain())?;
        if coefficient.len() != domain.len() {
            return Err(Error::DimensionError(format!("{} coefficients for {} nodes", coefficient.len(), domain.len())));
        }
        let faces = domain.mesh().boundary_faces();
        if q.len() != faces.len() {
            return Err(Error::DimensionError(format!("{} boundary values for {} boundary faces", q.len(), faces.len())));
        }
        let vols = domain.volumes();
        let unknowns: Vec<usize> = (0..domain.len()).filter(|&k| vols[k] > 0.0).collect();
        let mut index = vec![usize::MAX; domain.len()];
        for (u, &k) in unknowns.iter().enumerate() {
            index[k] = u;
        }
        let mut builder = sparse::Builder::new(unknowns.len());
        let mut cross_limited = 0;
        let k = &coefficient;
        match *domain.mesh().layout() {
            Layout::Line { h, cells, .. } => {
                for i in 0..cells {
                    builder.edge(index[i], index[i + 1], 0.5 * (k[i][(0, 0)] + k[i + 1][(0, 0)]) / h);
                }
            }
            Layout::Tensor { lo, h, n } => {
                let cut = domain.mesh().is_cut();
                let shape = domain.shape();
                let at = |i: usize, j: usize| i * n[1] + j;
                let active = |i: usize, j: usize| vols[at(i, j)] > 0.0;
                let tx: Vec<f64> = (0..(n[0] - 1) * n[1])
                    .into_par_iter()
                    .map(|f| {
                        let (i, j) = (f / n[1], f % n[1]);
                        if !active(i, j) || !active(i + 1, j) {
                            return 0.0;
                        }
                        let x = lo[0] + (i + 1) as f64 * h[0];
                        let ap = if cut {
                            segment_fraction(shape, Vec2::new(x, lo[1] + j as f64 * h[1]), Vec2::new(x, lo[1] + (j + 1) as f64 * h[1]))
                        } else {
                            1.0
                        };
                        avg(&[&k[at(i, j)], &k[at(i + 1, j)]])[(0, 0)] * ap * h[1] / h[0]
                    })
                    .collect();
                let ty: Vec<f64> = (0..n[0] * (n[1] - 1))
                    .into_par_iter()
                    .map(|f| {
                        let (i, j) = (f / (n[1] - 1), f % (n[1] - 1));
                        if !active(i, j) || !active(i, j + 1) {
                            return 0.0;
                        }
                        let y = lo[1] + (j + 1) as f64 * h[1];
                        let ap = if cut {
                            segment_fraction(shape, Vec2::new(lo[0] + i as f64 * h[0], y), Vec2::new(lo[0] + (i + 1) as f64 * h[0], y))
                        } else {
                            1.0
                        };
                        avg(&[&k[at(i, j)], &k[at(i, j + 1)]])[(1, 1)] * ap * h[0] / h[1]
                    })
                    .collect();
                let txa = |i: usize, j: usize| tx[i * n[1] + j];
                let tya = |i: usize, j: usize| ty[i * (n[1] - 1) + j];
                for i in 0..n[0] - 1 {
                    for j in 0..n[1] {
                        if txa(i, j) > 0.0 {
                            builder.edge(index[at(i, j)], index[at(i + 1, j)], txa(i, j));
                        }
                    }
                }
                for i in 0..n[0] {
                    for j in 0..n[1] - 1 {
                        if tya(i, j) > 0.0 {
                            builder.edge(index[at(i, j)], index[at(i, j + 1)], tya(i, j));
                        }
                    }
                }
                let full = h[0] * h[1];
                for i in 0..n[0] - 1 {
                    for j in 0..n[1] - 1 {
                        let ta = [txa(i, j), txa(i, j + 1)];
                        let tb = [tya(i, j), tya(i + 1, j)];
                        if ta.iter().chain(&tb).any(|t| !(*t > 0.0)) {
                            continue;
                        }
                        let cells = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
                        let frac = cells.iter().map(|&c| vols[c] / full).fold(1.0, f64::min);
                        let kc = avg(&[&k[cells[0]], &k[cells[1]], &k[cells[2]], &k[cells[3]]]);
                        let c = limit(kc[(0, 1)] * frac, ta, tb, &mut cross_limited);
                        corner(&mut builder, cells.map(|c| index[c]), c);
                    }
                }
            }
            Layout::Polar { radii, nr, ntheta, .. } => {
                let dr = 1.0 / nr as f64;
                let dt = 2.0 * std::f64::consts::PI / ntheta as f64;
                let at = |i: usize, j: usize| i * ntheta + (j % ntheta);
                // coefficient in (rho, theta) coordinates: |J| J⁻¹ K J⁻ᵀ
                let computational = |kk: Mat2, rho: f64, th: f64| {
                    let jac = polar_jacobian(radii, rho, th);
                    let inv = jac.try_inverse().expect("regular away from the pole");
                    inv * kk * inv.transpose() * jac.determinant()
                };
                let tr: Vec<f64> = (0..(nr - 1) * ntheta)
                    .into_par_iter()
                    .map(|f| {
                        let (i, j) = (f / ntheta, f % ntheta);
                        let kk = avg(&[&k[at(i, j)], &k[at(i + 1, j)]]);
                        computational(kk, (i + 1) as f64 * dr, (j as f64 + 0.5) * dt)[(0, 0)] * dt / dr
                    })
                    .collect();
                let tt: Vec<f64> = (0..nr * ntheta)
                    .into_par_iter()
                    .map(|f| {
                        let (i, j) = (f / ntheta, f % ntheta);
                        let kk = avg(&[&k[at(i, j)], &k[at(i, j + 1)]]);
                        computational(kk, (i as f64 + 0.5) * dr, (j + 1) as f64 * dt)[(1, 1)] * dr / dt
                    })
                    .collect();
                for i in 0..nr - 1 {
                    for j in 0..ntheta {
                        builder.edge(index[at(i, j)], index[at(i + 1, j)], tr[i * ntheta + j]);
                    }
                }
                for i in 0..nr {
                    for j in 0..ntheta {
                        builder.edge(index[at(i, j)], index[at(i, j + 1)], tt[i * ntheta + j]);
                    }
                }
                for i in 0..nr - 1 {
                    for j in 0..ntheta {
                        let j1 = (j + 1) % ntheta;
                        let cells = [at(i, j), at(i + 1, j), at(i, j1), at(i + 1, j1)];
                        let kk = avg(&[&k[cells[0]], &k[cells[1]], &k[cells[2]], &k[cells[3]]]);
                        let kc = computational(kk, (i + 1) as f64 * dr, (j + 1) as f64 * dt);
                        let ta = [tr[i * ntheta + j], tr[i * ntheta + j1]];
                        let tb = [tt[i * ntheta + j], tt[(i + 1) * ntheta + j]];
                        let c = limit(kc[(0, 1)], ta, tb, &mut cross_limited);
                        corner(&mut builder, cells.map(|c| index[c]), c);
                    }
                }
            }
        }
        let matrix = builder.finish();
        let mut load: Vec<f64> = unknowns.iter().map(|&n| p.values()[n] * vols[n]).collect();
        for (face, qv) in faces.iter().zip(q) {
            let u = index[face.cell];
            if u != usize::MAX {
                load[u] += (k[face.cell] * face.normal).norm() * qv * face.area;
            }
        }
        let compatibility: f64 = load.iter().sum();
        let scale: f64 = load.iter().map(|v| v.abs()).sum();
        if compatibility.abs() > COMPAT_TOL * scale {
            return Err(Error::IncompatibleData { residual: compatibility, tolerance: COMPAT_TOL * scale });
        }
        // remove the admissible defect by a constant shift of p
        let vol: f64 = unknowns.iter().map(|&n| vols[n]).sum();
        for (l, &n) in load.iter_mut().zip(&unknowns) {
            *l -= compatibility * vols[n] / vol;
        }
        Ok(EllipticProblem {
            domain,
            coefficient,
            rhs: p.clone(),
            boundary: q.to_vec(),
            matrix,
            load,
            unknowns,
            compatibility,
            scale,
            cross_limited,
            clamp_rate: 0.0,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn coefficient(&self) -> &[Mat2] {
        &self.coefficient
    }

    pub fn rhs(&self) -> &ScalarField {
        &self.rhs
    }

    pub fn boundary_data(&self) -> &[f64] {
        &self.boundary
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Right-hand side of the linear system (after projection), one entry per unknown.
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Mesh node of every unknown (nodes with positive cell volume).
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// ∫p + ∫|An|q before projection, and the L¹ size of the load it is compared with.
    pub fn compatibility(&self) -> (f64, f64) {
        (self.compatibility, self.scale)
    }

    /// Number of corners whose cross coefficient was limited for positivity.
    pub fn cross_limited(&self) -> usize {
        self.cross_limited
    }

    fn restrict(&self, xi: &ScalarField) -> Vec<f64> {
        self.unknowns.iter().map(|&n| xi.values()[n]).collect()
    }

    /// Discrete energy ξᵀMξ ≈ ∫⟨A∇ξ, ∇ξ⟩.
    pub fn energy(&self, xi: &ScalarField) -> f64 {
        let x = self.restrict(xi);
        self.matrix.mul(&x).iter().zip(&x).map(|(a, b)| a * b).sum()
    }

    /// Discrete load ξᵀb ≈ ∫ξp + ∫|An|qξ.
    pub fn work(&self, xi: &ScalarField) -> f64 {
        let x = self.restrict(xi);
        self.load.iter().zip(&x).map(|(a, b)| a * b).sum()
    }

    /// Closed form in 1D, conjugate gradients otherwise.
    pub fn solve(&self) -> Result<ResponseField> {
        if self.domain.dim() == 1 {
            self.solve_closed_form()
        } else {
            self.solve_pcg()
        }
    }

    /// Deflated Jacobi-preconditioned CG with relative tolerance 1e-10 and at most 20·N iterations.
    pub fn solve_pcg(&self) -> Result<ResponseField> {
        let out = sparse::pcg(&self.matrix, &self.load, PCG_TOL, 20 * self.unknowns.len().max(1))?;
        let mut values = vec![f64::NAN; self.domain.len()];
        for (&n, v) in self.unknowns.iter().zip(&out.x) {
            values[n] = *v;
        }
        fill_inactive(&self.domain, &mut values);
        Ok(ResponseField {
            xi: ScalarField::new(self.domain.clone(), values)?.centered(),
            method: SolveMethod::Pcg,
            iterations: out.iterations,
            residual: out.residual,
            compatibility: self.compatibility,
            clamp_rate: self.clamp_rate,
        })
    }

    /// 1D: flux Aξ' = F(a) − ∫_a^x p, then ξ by cumulative trapezoidal integration.
    pub fn solve_closed_form(&self) -> Result<ResponseField> {
        let (h, cells) = match *self.domain.mesh().layout() {
            Layout::Line { h, cells, .. } => (h, cells),
            _ => return Err(Error::DimensionError("the closed-form response is one-dimensional".into())),
        };
        let vols = self.domain.volumes();
        // projected p recovered from the load, boundary terms entering through F(a) and F(b)
        let faces = self.domain.mesh().boundary_faces();
        let mut b = self.load.clone();
        for (face, qv) in faces.iter().zip(&self.boundary) {
            b[face.cell] -= self.coefficient[face.cell][(0, 0)] * qv * face.area;
        }
        let p: Vec<f64> = b.iter().zip(vols).map(|(l, v)| l / v).collect();
        let a = |k: usize| self.coefficient[k][(0, 0)];
        let mut flux = -a(0) * self.boundary[0];
        let mut dxi = vec![0.0; cells + 1];
        dxi[0] = flux / a(0);
        for k in 1..=cells {
            flux -= 0.5 * h * (p[k - 1] + p[k]);
            dxi[k] = flux / a(k);
        }
        let mut xi = vec![0.0; cells + 1];
        for k in 1..=cells {
            xi[k] = xi[k - 1] + 0.5 * h * (dxi[k - 1] + dxi[k]);
        }
        let field = ScalarField::new(self.domain.clone(), xi)?.centered();
        Ok(ResponseField {
            xi: field,
            method: SolveMethod::ClosedForm,
            iterations: 0,
            residual: 0.0,
            compatibility: self.compatibility,
            clamp_rate: self.clamp_rate,
        })
    }
}

/// Nodes without volume get the average of already known neighbours, layer by layer.
fn fill_inactive(domain: &Domain, values: &mut [f64]) {
    let n = match *domain.mesh().layout() {
        Layout::Tensor { n, .. } => n,
        _ => {
            values.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = 0.0);
            return;
        }
    };
    loop {
        let mut updates = Vec::new();
        for i in 0..n[0] {
            for j in 0..n[1] {
                if !values[i * n[1] + j].is_nan() {
                    continue;
                }
                let mut s = 0.0;
                let mut c = 0;
                let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
                for (a, b) in nbrs {
                    if a < n[0] && b < n[1] && !values[a * n[1] + b].is_nan() {
                        s += values[a * n[1] + b];
                        c += 1;
                    }
                }
                if c > 0 {
                    updates.push((i * n[1] + j, s / c as f64));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (k, v) in updates {
            values[k] = v;
        }
    }
    values.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = 0.0);
}

/// Right-hand side (∂g(∇φ)/g(∇φ) − ∂f/f)·f of the response problem and its integral.
pub fn response_rhs(f: &DensityGrid, df: &ScalarField, g: &DensityGrid, dg: &ScalarField, phi: &PotentialField) -> Result<(ScalarField, f64)> {
    check_same(f.domain(), df.domain())?;
    check_same(f.domain(), phi.domain())?;
    check_same(g.domain(), dg.domain())?;
    let g_low = g.inf();
    let values: Vec<f64> = phi
        .grad
        .values()
        .par_iter()
        .zip(f.values())
        .zip(df.values())
        .map(|((y, fv), dfv)| {
            let gy = g.interpolate(*y).max(g_low);
            dg.interpolate(*y) / gy * fv - dfv
        })
        .collect();
    let p = ScalarField::new(f.domain().clone(), values)?;
    let total = integrate(f.domain(), p.values());
    Ok((p, total))
}

/// Response ξ = ∂_t φ_t for given densities, time derivatives and potential, with no-flux boundary data.
/// The discrete compatibility defect of the right-hand side is reported and projected out.
pub fn response_from_data(f: &DensityGrid, df: &ScalarField, g: &DensityGrid, dg: &ScalarField, phi: &PotentialField) -> Result<ResponseField> {
    let (p, compatibility) = response_rhs(f, df, g, dg, phi)?;
    let vol: f64 = f.domain().volumes().iter().sum();
    let p = p.map(|v| v - compatibility / vol);
    let q = vec![0.0; f.domain().mesh().boundary_faces().len()];
    let mut problem = EllipticProblem::assemble(f, &phi.hess, &p, &q)?;
    problem.clamp_rate = phi.clamp_rate;
    let mut r = problem.solve()?;
    r.compatibility = compatibility;
    Ok(r)
}

/// ξ_t for the pair of paths t ↦ (f_t, g_t) at time t, given the potential φ_t from f_t to g_t.
pub fn solve_response(path_f: &DensityPath, path_g: &DensityPath, phi: &PotentialField, t: f64) -> Result<ResponseField> {
    let f = path_f.at(t)?;
    let df = path_f.derivative(t)?;
    let g = path_g.at(t)?;
    let dg = path_g.derivative(t)?;
    response_from_data(&f, &df, &g, &dg, phi)
}
