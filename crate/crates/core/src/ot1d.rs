//! Exact one-dimensional optimal transport through distribution and quantile functions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DensityGrid, Domain, Layout, ScalarField};

/// Piecewise-linear cumulative distribution function on the nodes of an interval mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Cdf1D {
    domain: Arc<Domain>,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

fn line_of(domain: &Domain) -> Result<(f64, f64, usize)> {
    match *domain.mesh().layout() {
        Layout::Line { a, h, cells } => Ok((a, h, cells)),
        _ => Err(Error::DimensionError(format!("expected a 1D density, got a {} domain", domain.shape().kind_name()))),
    }
}

/// Trapezoidal cumulative integral, renormalized so the last value is exactly one.
pub fn cdf(f: &DensityGrid) -> Result<Cdf1D> {
    let (_, h, cells) = line_of(f.domain())?;
    let v = f.values();
    let mut values = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for k in 0..cells {
        acc += 0.5 * h * (v[k] + v[k + 1]);
        values.push(acc);
    }
    for x in values.iter_mut() {
        *x /= acc;
    }
    values[cells] = 1.0;
    let nodes = f.domain().nodes().iter().map(|p| p.x).collect();
    Ok(Cdf1D { domain: f.domain().clone(), nodes, values })
}

impl Cdf1D {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Evaluate F at any real x (0 left of the support, 1 right of it).
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return 0.0;
        }
        if x >= self.nodes[n - 1] {
            return 1.0;
        }
        let h = self.nodes[1] - self.nodes[0];
        let k = (((x - self.nodes[0]) / h).floor() as usize).min(n - 2);
        let w = (x - self.nodes[k]) / h;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Generalized inverse; flat stretches resolve to their leftmost point.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::RangeError(format!("quantile level {s} is outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(s))
    }

    pub(crate) fn quantile_unchecked(&self, s: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < s);
        if k == 0 {
            return self.nodes[0];
        }
        if k >= self.values.len() {
            return self.nodes[self.nodes.len() - 1];
        }
        let (f0, f1) = (self.values[k - 1], self.values[k]);
        let w = (s - f0) / (f1 - f0);
        self.nodes[k - 1] + w * (self.nodes[k] - self.nodes[k - 1])
    }
}

/// Free-function form of [`Cdf1D::quantile`].
pub fn quantile(f: &Cdf1D, s: f64) -> Result<f64> {
    f.quantile(s)
}

/// Monotone transport map sampled at the nodes of the source mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Map1D {
    source: Arc<Domain>,
    target: (f64, f64),
    values: Vec<f64>,
    min_slope: f64,
}

impl Map1D {
    pub fn source(&self) -> &Arc<Domain> {
        &self.source
    }

    pub fn target_interval(&self) -> (f64, f64) {
        self.target
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest difference quotient between neighbouring nodes (nonnegative for monotone maps).
    pub fn min_slope(&self) -> f64 {
        self.min_slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        let nodes = self.source.nodes();
        let n = nodes.len();
        let h = nodes[1].x - nodes[0].x;
        let s = ((x - nodes[0].x) / h).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    pub fn as_field(&self) -> ScalarField {
        ScalarField::new(self.source.clone(), self.values.clone()).expect("lengths agree")
    }

    /// Potential φ with φ' = T (trapezoidal integration) in the zero-mean gauge.
    pub fn potential(&self) -> ScalarField {
        let nodes = self.source.nodes();
        let mut phi = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        phi.push(0.0);
        for k in 1..nodes.len() {
            acc += 0.5 * (nodes[k].x - nodes[k - 1].x) * (self.values[k] + self.values[k - 1]);
            phi.push(acc);
        }
        ScalarField::new(self.source.clone(), phi).expect("lengths agree").centered()
    }
}

/// Brenier map T = G⁻¹∘F between two 1D densities.
pub fn brenier_map_1d(f: &DensityGrid, g: &DensityGrid) -> Result<Map1D> {
    let cf = cdf(f)?;
    let cg = cdf(g)?;
    let values: Vec<f64> = cf.values().iter().map(|&s| cg.quantile_unchecked(s)).collect();
    let nodes = f.domain().nodes();
    let min_slope = values
        .windows(2)
        .zip(nodes.windows(2))
        .map(|(v, x)| (v[1] - v[0]) / (x[1].x - x[0].x))
        .fold(f64::INFINITY, f64::min);
    Ok(Map1D { source: f.domain().clone(), target: cg.support(), values, min_slope })
}

fn quadrature_levels(n: usize) -> usize {
    4 * n
}

/// d₂ between two 1D densities by midpoint quadrature of the quantile difference.
pub fn d2_1d(f: &DensityGrid, g: &DensityGrid) -> Result<f64> {
    let cf = cdf(f)?;
    let cg = cdf(g)?;
    Ok(d2_from_cdfs(&cf, &cg))
}

pub(crate) fn d2_from_cdfs(cf: &Cdf1D, cg: &Cdf1D) -> f64 {
    let m = quadrature_levels(cf.nodes().len().max(cg.nodes().len()) - 1);
    let sum: f64 = (0..m)
        .map(|k| {
            let s = (k as f64 + 0.5) / m as f64;
            let d = cf.quantile_unchecked(s) - cg.quantile_unchecked(s);
            d * d
        })
        .sum();
    (sum / m as f64).sqrt()
}

/// L¹ distance between two 1D densities, possibly on different intervals
/// (each density is extended by zero outside its interval).
pub fn l1_distance_1d(f: &DensityGrid, g: &DensityGrid) -> Result<f64> {
    line_of(f.domain())?;
    line_of(g.domain())?;
    let mut cuts: Vec<f64> = f.domain().nodes().iter().chain(g.domain().nodes()).map(|p| p.x).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let eval = |d: &DensityGrid, x: f64, mid: f64| {
        let (lo, hi) = interval_of(d);
        if mid < lo || mid > hi {
            0.0
        } else {
            d.interpolate(crate::measures::Vec2::new(x, 0.0))
        }
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let mid = 0.5 * (x0 + x1);
        let d0 = eval(f, x0, mid) - eval(g, x0, mid);
        let d1 = eval(f, x1, mid) - eval(g, x1, mid);
        total += abs_linear_integral(d0, d1, x1 - x0);
    }
    Ok(total)
}

fn interval_of(d: &DensityGrid) -> (f64, f64) {
    let n = d.domain().nodes();
    (n[0].x, n[n.len() - 1].x)
}

/// ∫|ℓ| over an interval of length `len` where ℓ is linear with end values d0, d1.
fn abs_linear_integral(d0: f64, d1: f64, len: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * (d0.abs() + d1.abs()) * len
    } else {
        let t = d0.abs() / (d0.abs() + d1.abs());
        0.5 * (d0.abs() * t + d1.abs() * (1.0 - t)) * len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinftyL1Report {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Check ‖T₁−T₀‖_∞ ≤ (1/a)(‖f₁−f₀‖_{L¹} + ‖g₁−g₀‖_{L¹}) up to a slack of ten mesh cells.
pub fn verify_linfty_l1(f0: &DensityGrid, f1: &DensityGrid, g0: &DensityGrid, g1: &DensityGrid, a: f64) -> Result<LinftyL1Report> {
    if !(a > 0.0) {
        return Err(Error::FloorError(a));
    }
    for g in [g0, g1] {
        if g.inf() < a * (1.0 - 1e-12) {
            let node = g.values().iter().position(|&v| v < a * (1.0 - 1e-12)).unwrap_or(0);
            return Err(Error::FloorViolation { node, value: g.inf(), floor: a });
        }
    }
    let (cf0, cf1, cg0, cg1) = (cdf(f0)?, cdf(f1)?, cdf(g0)?, cdf(g1)?);
    let mut xs: Vec<f64> = cf0.nodes().iter().chain(cf1.nodes()).copied().collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let lhs = xs
        .iter()
        .map(|&x| (cg1.quantile_unchecked(cf1.eval(x)) - cg0.quantile_unchecked(cf0.eval(x))).abs())
        .fold(0.0, f64::max);
    let rhs = (l1_distance_1d(f0, f1)? + l1_distance_1d(g0, g1)?) / a;
    let h = [f0, f1, g0, g1].iter().map(|d| d.domain().spacing()).fold(0.0, f64::max);
    let slack = 10.0 * h;
    Ok(LinftyL1Report { lhs, rhs, slack, holds: lhs <= rhs + slack })
}

/// The degenerate family g_a of densities on [0,1] vanishing like |x−a|^p at a.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CounterexampleDensity {
    pub p: f64,
    pub a: f64,
}

impl CounterexampleDensity {
    pub fn new(p: f64, a: f64) -> Self {
        CounterexampleDensity { p, a }
    }

    /// Member of the family with a = 1/(2(1−ε)).
    pub fn from_eps(p: f64, eps: f64) -> Self {
        CounterexampleDensity { p, a: 0.5 / (1.0 - eps) }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (p, a) = (self.p, self.a);
        if x <= a {
            (p + 1.0) * a.powf(-p) * (a - x).max(0.0).powf(p)
        } else {
            (p + 1.0) * (1.0 - a).powf(-p) * (x - a).powf(p)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (p, a) = (self.p, self.a);
        let x = x.clamp(0.0, 1.0);
        if x <= a {
            a - a.powf(-p) * (a - x).powf(p + 1.0)
        } else {
            a + (1.0 - a).powf(-p) * (x - a).powf(p + 1.0)
        }
    }

    /// Closed-form inverse distribution function.
    pub fn quantile(&self, y: f64) -> f64 {
        let (p, a) = (self.p, self.a);
        if y <= a {
            a * (1.0 - (1.0 - y / a).max(0.0).powf(1.0 / (p + 1.0)))
        } else {
            a + (1.0 - a) * ((y - a) / (1.0 - a)).powf(1.0 / (p + 1.0))
        }
    }

    /// Sampled on a uniform grid of [0,1] (no floor: the density vanishes at a).
    pub fn grid(&self, cells: usize) -> Result<DensityGrid> {
        let d = Domain::interval(0.0, 1.0, cells)?;
        DensityGrid::from_fn(d, |q| self.density(q.x), 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub eps: f64,
    pub a: f64,
    /// ‖G_a⁻¹ − G_{1/2}⁻¹‖_∞
    pub map_gap: f64,
    /// ‖g_a − g_{1/2}‖_∞
    pub density_gap: f64,
    pub ratio: f64,
    /// |G_a⁻¹(1/2) − 1/2|
    pub midpoint_gap: f64,
}

const SWEEP_GRID: usize = 20_000;

/// Sup of |u − v| over [0,1]: dense grid plus golden-section refinement around the best node.
fn sup_gap(u: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64, extra: &[f64]) -> f64 {
    let gap = |x: f64| (u(x) - v(x)).abs();
    let mut best_x = 0.0;
    let mut best = gap(0.0);
    let grid = (0..=SWEEP_GRID).map(|k| k as f64 / SWEEP_GRID as f64);
    for x in grid.chain(extra.iter().copied()) {
        let g = gap(x);
        if g > best {
            best = g;
            best_x = x;
        }
    }
    let step = 1.0 / SWEEP_GRID as f64;
    let (mut lo, mut hi) = ((best_x - step).max(0.0), (best_x + step).min(1.0));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - r * (hi - lo);
        let m2 = lo + r * (hi - lo);
        if gap(m1) > gap(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.max(gap(0.5 * (lo + hi)))
}

/// Ratio table ‖G_a⁻¹−G_{1/2}⁻¹‖_∞ / ‖g_a−g_{1/2}‖_∞^η over a list of ε values, from closed forms.
pub fn counterexample_sweep(p: f64, eta: f64, eps_list: &[f64]) -> Result<Vec<SharpnessRow>> {
    if !(p > 1.0) {
        return Err(Error::RangeError(format!("exponent p = {p} must exceed 1")));
    }
    if !(eta > 1.0 / (p + 1.0) && eta < 1.0) {
        return Err(Error::ExponentError(format!("eta = {eta} must lie in (1/(p+1), 1) = ({}, 1)", 1.0 / (p + 1.0))));
    }
    for &eps in eps_list {
        if eps == 0.0 {
            return Err(Error::DegenerateEps(eps));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::RangeError(format!("eps = {eps} is outside (0, 1/2)")));
        }
    }
    let base = CounterexampleDensity::new(p, 0.5);
    Ok(eps_list
        .par_iter()
        .map(|&eps| {
            let fam = CounterexampleDensity::from_eps(p, eps);
            let marks = [0.5, fam.a];
            let map_gap = sup_gap(|y| fam.quantile(y), |y| base.quantile(y), &marks);
            let density_gap = sup_gap(|x| fam.density(x), |x| base.density(x), &marks);
            SharpnessRow {
                eps,
                a: fam.a,
                map_gap,
                density_gap,
                ratio: map_gap / density_gap.powf(eta),
                midpoint_gap: (fam.quantile(0.5) - 0.5).abs(),
            }
        })
        .collect())
}
