use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DensityGrid, Domain, Resolution, Shape, Vec2};

/// Cosine modes of the random smooth family.
const MODES: usize = 4;

/// Generators of density quadruples (f₀, f₁, g₀, g₁) indexed by a perturbation size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// f₀ = f₁ = g₀ = 0.8 + 0.4x on [0,1]; g₁ is g₀ shifted by s.
    Translation { cells: usize, sizes: Vec<f64> },
    /// f₀ = g₀ = g₁ = 1 on [0,1], f₁ = 1 + t·cos(πx).
    Multiplicative { cells: usize, sizes: Vec<f64> },
    /// Uniform f₀ = g₀ with discontinuous step perturbations of height s.
    PiecewiseConstant { cells: usize, sizes: Vec<f64> },
    /// Random cosine series with floor `floor`; f₁ − f₀ and g₁ − g₀ scale with a size drawn from `size_range`.
    RandomSmooth { cells: usize, seed: u64, count: usize, floor: f64, size_range: [f64; 2] },
    /// Uniform disk to uniform ellipse with radii (2, 1/2); f₁ = f₀(1 + s·x₁).
    Disk { n: usize, sizes: Vec<f64> },
    /// Degenerate targets vanishing like |x − a|^p, compared with the member a = 1/2.
    Counterexample { p: f64, eta: f64, eps: Vec<f64> },
}

/// One density quadruple with its perturbation size.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub size: f64,
    pub f0: DensityGrid,
    pub f1: DensityGrid,
    pub g0: DensityGrid,
    pub g1: DensityGrid,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Translation { .. } => "translation",
            Family::Multiplicative { .. } => "multiplicative",
            Family::PiecewiseConstant { .. } => "piecewise_constant",
            Family::RandomSmooth { .. } => "random_smooth",
            Family::Disk { .. } => "disk",
            Family::Counterexample { .. } => "counterexample",
        }
    }

    /// Hölder exponent of the family's densities; `None` for the degenerate negative control.
    pub fn holder_exponent(&self) -> Option<f64> {
        match self {
            Family::PiecewiseConstant { .. } => Some(0.0),
            Family::Counterexample { .. } => None,
            _ => Some(1.0),
        }
    }

    /// Number of rows the family produces.
    pub fn len(&self) -> usize {
        match self {
            Family::Translation { sizes, .. } | Family::Multiplicative { sizes, .. } | Family::PiecewiseConstant { sizes, .. } | Family::Disk { sizes, .. } => sizes.len(),
            Family::RandomSmooth { count, .. } => *count,
            Family::Counterexample { eps, .. } => eps.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Perturbation size of every row, in generation order.
    pub fn sizes(&self) -> Vec<f64> {
        match self {
            Family::Translation { sizes, .. } | Family::Multiplicative { sizes, .. } | Family::PiecewiseConstant { sizes, .. } | Family::Disk { sizes, .. } => sizes.clone(),
            Family::RandomSmooth { seed, count, floor, size_range, .. } => random_coefficients(*seed, *count, *floor, *size_range).into_iter().map(|c| c.size).collect(),
            Family::Counterexample { eps, .. } => eps.clone(),
        }
    }

    /// Build instance `index`.
    pub fn instance(&self, index: usize) -> Result<Instance> {
        if index >= self.len() {
            return Err(Error::RangeError(format!("instance {index} of a family with {} members", self.len())));
        }
        match self {
            Family::Translation { cells, sizes } => translation(*cells, sizes[index]),
            Family::Multiplicative { cells, sizes } => multiplicative(*cells, sizes[index]),
            Family::PiecewiseConstant { cells, sizes } => piecewise(*cells, sizes[index]),
            Family::RandomSmooth { cells, seed, count, floor, size_range } => {
                let c = random_coefficients(*seed, *count, *floor, *size_range).swap_remove(index);
                random_smooth(*cells, *floor, &c)
            }
            Family::Disk { n, sizes } => disk(*n, sizes[index]),
            Family::Counterexample { .. } => Err(Error::DomainError("the counterexample family has no density quadruples; it only enters the 1.3 sweep".into())),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self {
            Family::RandomSmooth { floor, size_range, .. } => {
                if !(*floor > 0.0 && *floor < 1.0) {
                    return Err(Error::FloorError(*floor));
                }
                if !(size_range[0] >= 0.0 && size_range[1] >= size_range[0] && size_range[1] <= 1.0) {
                    return Err(Error::RangeError(format!("size range {size_range:?} must lie in [0, 1]")));
                }
                Ok(())
            }
            Family::Counterexample { .. } => Ok(()),
            _ => {
                if let Some(s) = self.sizes().into_iter().find(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::RangeError(format!("perturbation size {s} must be finite and nonnegative")));
                }
                Ok(())
            }
        }
    }
}

fn line(cells: usize) -> Result<Arc<Domain>> {
    Domain::interval(0.0, 1.0, cells)
}

fn translation(cells: usize, s: f64) -> Result<Instance> {
    let d = line(cells)?;
    let base = |x: f64| 0.8 + 0.4 * x;
    let f = DensityGrid::from_fn(d.clone(), |x| base(x.x), 0.5)?;
    let g1 = if s == 0.0 {
        f.clone()
    } else {
        DensityGrid::from_fn(Domain::interval(s, 1.0 + s, cells)?, |y| base(y.x - s), 0.5)?
    };
    Ok(Instance { size: s, f0: f.clone(), f1: f.clone(), g0: f, g1 })
}

fn multiplicative(cells: usize, t: f64) -> Result<Instance> {
    if !(t < 1.0) {
        return Err(Error::RangeError(format!("amplitude {t} must stay below 1")));
    }
    let d = line(cells)?;
    let u = DensityGrid::uniform(d.clone());
    let f1 = if t == 0.0 { u.clone() } else { DensityGrid::from_fn(d, |x| 1.0 + t * (PI * x.x).cos(), 0.5 * (1.0 - t))? };
    Ok(Instance { size: t, f0: u.clone(), f1, g0: u.clone(), g1: u })
}

fn piecewise(cells: usize, s: f64) -> Result<Instance> {
    if !(s < 1.0) {
        return Err(Error::RangeError(format!("step height {s} must stay below 1")));
    }
    let d = line(cells)?;
    let u = DensityGrid::uniform(d.clone());
    if s == 0.0 {
        return Ok(Instance { size: s, f0: u.clone(), f1: u.clone(), g0: u.clone(), g1: u });
    }
    let floor = 0.5 * (1.0 - s);
    let f1 = DensityGrid::from_fn(d.clone(), |x| if x.x < 0.5 { 1.0 + s } else { 1.0 - s }, floor)?;
    let g1 = DensityGrid::from_fn(d, |y| if y.x < 1.0 / 3.0 { 1.0 - s } else { 1.0 + 0.5 * s }, floor)?;
    Ok(Instance { size: s, f0: u.clone(), f1, g0: u, g1 })
}

#[derive(Clone, Debug)]
struct Coefficients {
    size: f64,
    f: [f64; MODES],
    df: [f64; MODES],
    g: [f64; MODES],
    dg: [f64; MODES],
}

/// Draw coefficient vectors with Σ|base| = 0.7(1 − floor) and Σ|perturbation| = 0.3(1 − floor).
fn random_coefficients(seed: u64, count: usize, floor: f64, range: [f64; 2]) -> Vec<Coefficients> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |budget: f64, rng: &mut ChaCha8Rng| {
        let mut c = [0.0; MODES];
        for v in c.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let l1: f64 = c.iter().map(|v: &f64| v.abs()).sum();
        c.map(|v| budget * v / l1.max(1e-12))
    };
    let (base, pert) = (0.7 * (1.0 - floor), 0.3 * (1.0 - floor));
    (0..count)
        .map(|_| {
            let size = if range[1] > range[0] { rng.random_range(range[0]..range[1]) } else { range[0] };
            Coefficients { size, f: draw(base, &mut rng), df: draw(pert, &mut rng), g: draw(base, &mut rng), dg: draw(pert, &mut rng) }
        })
        .collect()
}

fn cosine_series(c: &[f64; MODES], d: &[f64; MODES], s: f64, x: f64) -> f64 {
    1.0 + (0..MODES).map(|k| (c[k] + s * d[k]) * ((k + 1) as f64 * PI * x).cos()).sum::<f64>()
}

fn random_smooth(cells: usize, floor: f64, c: &Coefficients) -> Result<Instance> {
    let d = line(cells)?;
    // the series stays ≥ 1 − (1 − floor) = floor before normalization, which moves the mass by O(h²)
    let lower = 0.99 * floor;
    let density = |a: &[f64; MODES], b: &[f64; MODES], s: f64| DensityGrid::from_fn(d.clone(), |x| cosine_series(a, b, s, x.x), lower);
    Ok(Instance {
        size: c.size,
        f0: density(&c.f, &c.df, 0.0)?,
        f1: density(&c.f, &c.df, c.size)?,
        g0: density(&c.g, &c.dg, 0.0)?,
        g1: density(&c.g, &c.dg, c.size)?,
    })
}

fn disk(n: usize, s: f64) -> Result<Instance> {
    if !(s < 1.0) {
        return Err(Error::RangeError(format!("amplitude {s} must stay below 1")));
    }
    let d = Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Cartesian { n })?;
    let t = Domain::new(Shape::Ellipse { center: [0.0, 0.0], radii: [2.0, 0.5] }, Resolution::Cartesian { n })?;
    let f0 = DensityGrid::uniform(d.clone());
    let f1 = if s == 0.0 { f0.clone() } else { DensityGrid::from_fn(d, |x: Vec2| 1.0 + s * x.x, 0.5 * (1.0 - s) / PI)? };
    let g = DensityGrid::uniform(t);
    Ok(Instance { size: s, f0, f1, g0: g.clone(), g1: g })
}

impl Instance {
    /// The quadruple pushed forward by x ↦ s·x (1D only).
    pub fn scaled(&self, s: f64) -> Result<Instance> {
        if !(s > 0.0) {
            return Err(Error::RangeError(format!("scale {s} must be positive")));
        }
        let scale = |d: &DensityGrid| -> Result<DensityGrid> {
            let (a, b, cells) = match (d.domain().shape(), d.domain().mesh().resolution()) {
                (&Shape::Interval { a, b }, Resolution::Line { cells }) => (a, b, cells),
                _ => return Err(Error::DimensionError("only 1D instances can be rescaled".into())),
            };
            let dom = Domain::interval(s * a, s * b, cells)?;
            let values = d.values().iter().map(|v| v / s).collect();
            DensityGrid::new(dom, values, d.floor() / s * (1.0 - 1e-9))
        };
        Ok(Instance { size: s * self.size, f0: scale(&self.f0)?, f1: scale(&self.f1)?, g0: scale(&self.g0)?, g1: scale(&self.g1)? })
    }
}
