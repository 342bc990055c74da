use serde::{Deserialize, Serialize};

use super::{Mat2, Shape, Vec2};
use crate::error::{Error, Result};

/// Requested discretization of a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mesh", rename_all = "lowercase")]
pub enum Resolution {
    /// Uniform 1D grid with `cells` cells; nodes at the `cells + 1` vertices.
    Line { cells: usize },
    /// Cell-centered tensor grid with `n[0] × n[1]` cells.
    Tensor { n: [usize; 2] },
    /// Mapped polar grid with `nr` rings and `ntheta` sectors (cell-centered).
    Polar { nr: usize, ntheta: usize },
    /// Cell-centered tensor grid over the bounding box with cut-cell volumes.
    Cartesian { n: usize },
}

/// Structured node layout of a mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    Line { a: f64, h: f64, cells: usize },
    Tensor { lo: [f64; 2], h: [f64; 2], n: [usize; 2] },
    Polar { center: [f64; 2], radii: [f64; 2], nr: usize, ntheta: usize },
}

/// A boundary face: midpoint, outer unit normal and measure (length in 2D, 1 in 1D).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub point: Vec2,
    pub normal: Vec2,
    pub area: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    layout: Layout,
    nodes: Vec<Vec2>,
    volumes: Vec<f64>,
    boundary: Vec<BoundaryFace>,
    cut: bool,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.cut == other.cut && self.volumes == other.volumes
    }
}

impl Mesh {
    pub(crate) fn build(shape: &Shape, res: Resolution) -> Result<Mesh> {
        match (shape, res) {
            (&Shape::Interval { a, b }, Resolution::Line { cells }) => {
                if cells < 2 || !(b > a) {
                    return Err(Error::DomainError(format!("bad interval [{a}, {b}] with {cells} cells")));
                }
                let h = (b - a) / cells as f64;
                let nodes: Vec<Vec2> = (0..=cells).map(|i| Vec2::new(a + i as f64 * h, 0.0)).collect();
                let mut volumes = vec![h; cells + 1];
                volumes[0] = 0.5 * h;
                volumes[cells] = 0.5 * h;
                let boundary = vec![
                    BoundaryFace { cell: 0, point: Vec2::new(a, 0.0), normal: Vec2::new(-1.0, 0.0), area: 1.0 },
                    BoundaryFace { cell: cells, point: Vec2::new(b, 0.0), normal: Vec2::new(1.0, 0.0), area: 1.0 },
                ];
                Ok(Mesh { layout: Layout::Line { a, h, cells }, nodes, volumes, boundary, cut: false })
            }
            (&Shape::Rectangle { lo, hi }, Resolution::Tensor { n }) => {
                if n[0] < 3 || n[1] < 2 || !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return Err(Error::DomainError("bad rectangle mesh".into()));
                }
                let h = [(hi[0] - lo[0]) / n[0] as f64, (hi[1] - lo[1]) / n[1] as f64];
                let mut nodes = Vec::with_capacity(n[0] * n[1]);
                for i in 0..n[0] {
                    for j in 0..n[1] {
                        nodes.push(Vec2::new(lo[0] + (i as f64 + 0.5) * h[0], lo[1] + (j as f64 + 0.5) * h[1]));
                    }
                }
                let volumes = vec![h[0] * h[1]; n[0] * n[1]];
                let mut boundary = Vec::new();
                for j in 0..n[1] {
                    let y = lo[1] + (j as f64 + 0.5) * h[1];
                    boundary.push(BoundaryFace { cell: j, point: Vec2::new(lo[0], y), normal: Vec2::new(-1.0, 0.0), area: h[1] });
                    boundary.push(BoundaryFace {
                        cell: (n[0] - 1) * n[1] + j,
                        point: Vec2::new(hi[0], y),
                        normal: Vec2::new(1.0, 0.0),
                        area: h[1],
                    });
                }
                for i in 0..n[0] {
                    let x = lo[0] + (i as f64 + 0.5) * h[0];
                    boundary.push(BoundaryFace { cell: i * n[1], point: Vec2::new(x, lo[1]), normal: Vec2::new(0.0, -1.0), area: h[0] });
                    boundary.push(BoundaryFace {
                        cell: i * n[1] + n[1] - 1,
                        point: Vec2::new(x, hi[1]),
                        normal: Vec2::new(0.0, 1.0),
                        area: h[0],
                    });
                }
                Ok(Mesh { layout: Layout::Tensor { lo, h, n }, nodes, volumes, boundary, cut: false })
            }
            (Shape::Disk { .. } | Shape::Ellipse { .. }, Resolution::Polar { nr, ntheta }) => {
                let (center, radii) = ellipse_params(shape);
                if nr < 3 || ntheta < 8 || ntheta % 2 != 0 {
                    return Err(Error::DomainError("polar mesh needs nr >= 3 and an even ntheta >= 8".into()));
                }
                let dr = 1.0 / nr as f64;
                let dt = 2.0 * std::f64::consts::PI / ntheta as f64;
                let mut nodes = Vec::with_capacity(nr * ntheta);
                let mut volumes = Vec::with_capacity(nr * ntheta);
                for i in 0..nr {
                    let r0 = i as f64 * dr;
                    let r1 = r0 + dr;
                    let rc = r0 + 0.5 * dr;
                    let vol = radii[0] * radii[1] * 0.5 * (r1 * r1 - r0 * r0) * dt;
                    for j in 0..ntheta {
                        let th = (j as f64 + 0.5) * dt;
                        nodes.push(polar_point(center, radii, rc, th));
                        volumes.push(vol);
                    }
                }
                let mut boundary = Vec::with_capacity(ntheta);
                for j in 0..ntheta {
                    let th = (j as f64 + 0.5) * dt;
                    let p0 = polar_point(center, radii, 1.0, j as f64 * dt);
                    let p1 = polar_point(center, radii, 1.0, (j + 1) as f64 * dt);
                    let normal = Vec2::new(th.cos() / radii[0], th.sin() / radii[1]).normalize();
                    boundary.push(BoundaryFace {
                        cell: (nr - 1) * ntheta + j,
                        point: polar_point(center, radii, 1.0, th),
                        normal,
                        area: arc_length(center, radii, j as f64 * dt, (j + 1) as f64 * dt).max((p1 - p0).norm()),
                    });
                }
                Ok(Mesh { layout: Layout::Polar { center, radii, nr, ntheta }, nodes, volumes, boundary, cut: false })
            }
            (Shape::Disk { .. } | Shape::Ellipse { .. }, Resolution::Cartesian { n }) => {
                if n < 4 {
                    return Err(Error::DomainError("cartesian mesh needs n >= 4".into()));
                }
                let (lo, hi) = shape.bounding_box();
                let h = [(hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64];
                let mut nodes = Vec::with_capacity(n * n);
                let mut volumes = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let x = [lo[0] + i as f64 * h[0], lo[0] + (i + 1) as f64 * h[0]];
                        let y = [lo[1] + j as f64 * h[1], lo[1] + (j + 1) as f64 * h[1]];
                        nodes.push(Vec2::new(0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])));
                        volumes.push(shape.box_intersection_area(x, y));
                    }
                }
                Ok(Mesh { layout: Layout::Tensor { lo, h, n: [n, n] }, nodes, volumes, boundary: Vec::new(), cut: true })
            }
            _ => Err(Error::DomainError(format!("resolution {res:?} does not fit a {} domain", shape.kind_name()))),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Resolution that rebuilds a mesh of the same type on another shape.
    pub fn resolution(&self) -> Resolution {
        match self.layout {
            Layout::Line { cells, .. } => Resolution::Line { cells },
            Layout::Tensor { n, .. } if self.cut => Resolution::Cartesian { n: n[0] },
            Layout::Tensor { n, .. } => Resolution::Tensor { n },
            Layout::Polar { nr, ntheta, .. } => Resolution::Polar { nr, ntheta },
        }
    }

    pub fn dim(&self) -> usize {
        match self.layout {
            Layout::Line { .. } => 1,
            _ => 2,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    /// True for tensor grids over a curved domain whose cells carry cut volumes.
    pub fn is_cut(&self) -> bool {
        self.cut
    }

    /// Characteristic mesh spacing.
    pub fn spacing(&self) -> f64 {
        match self.layout {
            Layout::Line { h, .. } => h,
            Layout::Tensor { h, .. } => h[0].max(h[1]),
            Layout::Polar { radii, nr, ntheta, .. } => {
                let r = radii[0].max(radii[1]);
                (r / nr as f64).max(r * 2.0 * std::f64::consts::PI / ntheta as f64)
            }
        }
    }

    /// Indices of cells touching the boundary (cut cells for Cartesian meshes).
    pub fn boundary_cells(&self) -> Vec<usize> {
        if self.cut {
            let full = match self.layout {
                Layout::Tensor { h, .. } => h[0] * h[1],
                _ => unreachable!(),
            };
            return (0..self.len())
                .filter(|&i| self.volumes[i] > 0.0 && self.volumes[i] < full * (1.0 - 1e-12))
                .collect();
        }
        let mut cells: Vec<usize> = self.boundary.iter().map(|f| f.cell).collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Nodes away from the boundary: `depth` layers of cells are excluded
    /// (and, on polar meshes, the innermost ring).
    pub fn interior_nodes(&self, depth: usize) -> Vec<usize> {
        match self.layout {
            Layout::Line { cells, .. } => (depth + 1..cells.saturating_sub(depth)).collect(),
            Layout::Tensor { n, h, .. } => {
                let full = h[0] * h[1];
                let mut out = Vec::new();
                for i in depth..n[0].saturating_sub(depth) {
                    for j in depth..n[1].saturating_sub(depth) {
                        let k = i * n[1] + j;
                        if self.cut {
                            // all neighbours within `depth` must be full cells
                            let ok = (i - depth..=i + depth).all(|a| {
                                (j - depth..=j + depth).all(|b| self.volumes[a * n[1] + b] >= full * (1.0 - 1e-12))
                            });
                            if !ok {
                                continue;
                            }
                        }
                        out.push(k);
                    }
                }
                out
            }
            Layout::Polar { nr, ntheta, .. } => {
                let mut out = Vec::new();
                for i in 1..nr.saturating_sub(depth) {
                    for j in 0..ntheta {
                        out.push(i * ntheta + j);
                    }
                }
                out
            }
        }
    }

    /// Finite-difference gradient of nodal values (second order in the interior).
    pub fn gradient(&self, u: &[f64]) -> Vec<Vec2> {
        assert_eq!(u.len(), self.len());
        match self.layout {
            Layout::Line { h, cells, .. } => {
                let n = cells;
                (0..=n)
                    .map(|i| {
                        let d = if i == 0 {
                            (3.0 * (u[1] - u[0]) - (u[2] - u[1])) / (2.0 * h)
                        } else if i == n {
                            (3.0 * (u[n] - u[n - 1]) - (u[n - 1] - u[n - 2])) / (2.0 * h)
                        } else {
                            (u[i + 1] - u[i - 1]) / (2.0 * h)
                        };
                        Vec2::new(d, 0.0)
                    })
                    .collect()
            }
            Layout::Tensor { h, n, .. } => {
                let idx = |i: usize, j: usize| i * n[1] + j;
                let mut out = Vec::with_capacity(self.len());
                for i in 0..n[0] {
                    for j in 0..n[1] {
                        let dx = diff_1d(|k| u[idx(k, j)], i, n[0], h[0]);
                        let dy = diff_1d(|k| u[idx(i, k)], j, n[1], h[1]);
                        out.push(Vec2::new(dx, dy));
                    }
                }
                out
            }
            Layout::Polar { radii, nr, ntheta, .. } => {
                let dr = 1.0 / nr as f64;
                let dt = 2.0 * std::f64::consts::PI / ntheta as f64;
                let idx = |i: usize, j: usize| i * ntheta + j;
                let half = ntheta / 2;
                let mut out = Vec::with_capacity(self.len());
                for i in 0..nr {
                    let rho = (i as f64 + 0.5) * dr;
                    for j in 0..ntheta {
                        let th = (j as f64 + 0.5) * dt;
                        let u_r = if i == 0 {
                            // the node across the pole sits at rho = -dr/2
                            (u[idx(1, j)] - u[idx(0, (j + half) % ntheta)]) / (2.0 * dr)
                        } else if i == nr - 1 {
                            (3.0 * (u[idx(i, j)] - u[idx(i - 1, j)]) - (u[idx(i - 1, j)] - u[idx(i - 2, j)])) / (2.0 * dr)
                        } else {
                            (u[idx(i + 1, j)] - u[idx(i - 1, j)]) / (2.0 * dr)
                        };
                        let at = |k: usize| u[idx(i, (j + k) % ntheta)];
                        let u_t = (8.0 * (at(1) - at(ntheta - 1)) - (at(2) - at(ntheta - 2))) / (12.0 * dt);
                        let jt = polar_jacobian(radii, rho, th).transpose().try_inverse().unwrap();
                        out.push(jt * Vec2::new(u_r, u_t));
                    }
                }
                out
            }
        }
    }

    /// Symmetrized finite-difference Hessian (gradient of the gradient).
    pub fn hessian(&self, u: &[f64]) -> Vec<Mat2> {
        let g = self.gradient(u);
        self.jacobian_of(&g).into_iter().map(|m| 0.5 * (m + m.transpose())).collect()
    }

    /// Finite-difference Jacobian `D V` of a nodal vector field (rows = components).
    pub fn jacobian_of(&self, v: &[Vec2]) -> Vec<Mat2> {
        let gx = self.gradient(&v.iter().map(|p| p.x).collect::<Vec<_>>());
        if self.dim() == 1 {
            return gx.iter().map(|g| Mat2::new(g.x, 0.0, 0.0, 0.0)).collect();
        }
        let gy = self.gradient(&v.iter().map(|p| p.y).collect::<Vec<_>>());
        gx.iter().zip(&gy).map(|(a, b)| Mat2::new(a.x, a.y, b.x, b.y)).collect()
    }

    /// Finite-difference divergence of a nodal vector field.
    pub fn divergence(&self, v: &[Vec2]) -> Vec<f64> {
        self.jacobian_of(v).iter().map(|m| m.trace()).collect()
    }

    /// Interpolate nodal values at an arbitrary point (linear extrapolation outside the node hull).
    pub fn interpolate(&self, u: &[f64], p: Vec2) -> f64 {
        match self.layout {
            Layout::Line { a, h, cells } => {
                let s = (p.x - a) / h;
                let k = (s.floor().max(0.0) as usize).min(cells - 1);
                let w = s - k as f64;
                u[k] * (1.0 - w) + u[k + 1] * w
            }
            Layout::Tensor { lo, h, n } => {
                let sx = (p.x - lo[0]) / h[0] - 0.5;
                let sy = (p.y - lo[1]) / h[1] - 0.5;
                let i = (sx.floor().max(0.0) as usize).min(n[0] - 2);
                let j = (sy.floor().max(0.0) as usize).min(n[1] - 2);
                let wx = sx - i as f64;
                let wy = sy - j as f64;
                let at = |a: usize, b: usize| u[a * n[1] + b];
                (1.0 - wx) * ((1.0 - wy) * at(i, j) + wy * at(i, j + 1)) + wx * ((1.0 - wy) * at(i + 1, j) + wy * at(i + 1, j + 1))
            }
            Layout::Polar { center, radii, nr, ntheta } => {
                let (rho, th) = polar_coords(center, radii, p);
                let dr = 1.0 / nr as f64;
                let dt = 2.0 * std::f64::consts::PI / ntheta as f64;
                let angular = |ring: usize, theta: f64| {
                    let s = theta / dt - 0.5;
                    let j0 = s.floor();
                    let w = s - j0;
                    let j0 = j0.rem_euclid(ntheta as f64) as usize % ntheta;
                    let j1 = (j0 + 1) % ntheta;
                    u[ring * ntheta + j0] * (1.0 - w) + u[ring * ntheta + j1] * w
                };
                let r = rho / dr - 0.5;
                if r < 0.0 {
                    // linear through the pole between the two opposite first-ring nodes
                    let near = angular(0, th);
                    let far = angular(0, th + std::f64::consts::PI);
                    let t = r + 1.0;
                    far * (1.0 - t) + near * t
                } else {
                    let i = (r.floor() as usize).min(nr - 2);
                    let w = r - i as f64;
                    angular(i, th) * (1.0 - w) + angular(i + 1, th) * w
                }
            }
        }
    }

    pub fn interpolate_vec(&self, v: &[Vec2], p: Vec2) -> Vec2 {
        let xs: Vec<f64> = v.iter().map(|q| q.x).collect();
        let ys: Vec<f64> = v.iter().map(|q| q.y).collect();
        Vec2::new(self.interpolate(&xs, p), self.interpolate(&ys, p))
    }
}

pub(crate) fn ellipse_params(shape: &Shape) -> ([f64; 2], [f64; 2]) {
    match *shape {
        Shape::Disk { center, radius } => (center, [radius, radius]),
        Shape::Ellipse { center, radii } => (center, radii),
        _ => unreachable!("not an elliptic domain"),
    }
}

pub(crate) fn polar_point(center: [f64; 2], radii: [f64; 2], rho: f64, th: f64) -> Vec2 {
    Vec2::new(center[0] + radii[0] * rho * th.cos(), center[1] + radii[1] * rho * th.sin())
}

/// Mapped-polar coordinates `(rho, theta)` of a point, with theta in [0, 2π).
pub(crate) fn polar_coords(center: [f64; 2], radii: [f64; 2], p: Vec2) -> (f64, f64) {
    let x = (p.x - center[0]) / radii[0];
    let y = (p.y - center[1]) / radii[1];
    let th = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
    (x.hypot(y), th)
}

/// Jacobian of `(rho, theta) -> x`; columns are `∂x/∂rho` and `∂x/∂theta`.
pub(crate) fn polar_jacobian(radii: [f64; 2], rho: f64, th: f64) -> Mat2 {
    let (s, c) = th.sin_cos();
    Mat2::new(radii[0] * c, -radii[0] * rho * s, radii[1] * s, radii[1] * rho * c)
}

fn arc_length(center: [f64; 2], radii: [f64; 2], t0: f64, t1: f64) -> f64 {
    let steps = 16;
    let mut len = 0.0;
    let mut prev = polar_point(center, radii, 1.0, t0);
    for k in 1..=steps {
        let q = polar_point(center, radii, 1.0, t0 + (t1 - t0) * k as f64 / steps as f64);
        len += (q - prev).norm();
        prev = q;
    }
    len
}

fn diff_1d(u: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    if n < 3 {
        return if n == 2 { (u(1) - u(0)) / h } else { 0.0 };
    }
    if i == 0 {
        (3.0 * (u(1) - u(0)) - (u(2) - u(1))) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * (u(n - 1) - u(n - 2)) - (u(n - 2) - u(n - 3))) / (2.0 * h)
    } else {
        (u(i + 1) - u(i - 1)) / (2.0 * h)
    }
}
