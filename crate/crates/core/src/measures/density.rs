use std::sync::Arc;

use super::{integrate, Domain, ScalarField, Vec2};
use crate::error::{Error, Result};

/// Tolerance on the quadrature mass of a normalized density.
pub const MASS_TOL: f64 = 1e-8;

/// Probability density sampled at mesh nodes, with a lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    domain: Arc<Domain>,
    values: Vec<f64>,
    floor: f64,
    mass: f64,
}

impl DensityGrid {
    /// Normalize `values` to unit quadrature mass, then check the floor.
    pub fn new(domain: Arc<Domain>, values: Vec<f64>, floor: f64) -> Result<Self> {
        check_len(&domain, &values)?;
        let raw = integrate(&domain, &values);
        if !(raw > 0.0) || !raw.is_finite() {
            return Err(Error::RangeError(format!("density has non-positive mass {raw}")));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / raw).collect();
        Self::finish(domain, values, floor)
    }

    /// Accept values that already integrate to one (within 1e-8) without rescaling.
    pub fn from_normalized(domain: Arc<Domain>, values: Vec<f64>, floor: f64) -> Result<Self> {
        check_len(&domain, &values)?;
        let mass = integrate(&domain, &values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::RangeError(format!("density mass {mass} differs from 1")));
        }
        Self::finish(domain, values, floor)
    }

    pub fn from_fn(domain: Arc<Domain>, f: impl Fn(Vec2) -> f64, floor: f64) -> Result<Self> {
        let values = domain.sample(f);
        Self::new(domain, values, floor)
    }

    /// Uniform density; its floor is the density value itself.
    pub fn uniform(domain: Arc<Domain>) -> Self {
        let vol: f64 = domain.volumes().iter().sum();
        let values = vec![1.0 / vol; domain.len()];
        let floor = 1.0 / vol * (1.0 - 1e-12);
        Self::finish(domain, values, floor).expect("uniform density is valid")
    }

    fn finish(domain: Arc<Domain>, values: Vec<f64>, floor: f64) -> Result<Self> {
        if !(floor >= 0.0) || !floor.is_finite() {
            return Err(Error::FloorError(floor));
        }
        for (node, (&v, &w)) in values.iter().zip(domain.volumes()).enumerate() {
            if w > 0.0 && (v < floor || !v.is_finite()) {
                return Err(Error::FloorViolation { node, value: v, floor });
            }
        }
        let mass = integrate(&domain, &values);
        Ok(DensityGrid { domain, values, floor, mass })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Largest value over nodes with positive volume.
    pub fn sup(&self) -> f64 {
        self.support_values().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value over nodes with positive volume.
    pub fn inf(&self) -> f64 {
        self.support_values().fold(f64::INFINITY, f64::min)
    }

    fn support_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(self.domain.volumes()).filter(|(_, &w)| w > 0.0).map(|(&v, _)| v)
    }

    pub fn as_field(&self) -> ScalarField {
        ScalarField::new(self.domain.clone(), self.values.clone()).expect("lengths agree")
    }

    pub fn interpolate(&self, p: Vec2) -> f64 {
        self.domain.mesh().interpolate(&self.values, p)
    }

    /// Same values with a different floor (validated).
    pub fn with_floor(&self, floor: f64) -> Result<Self> {
        Self::finish(self.domain.clone(), self.values.clone(), floor)
    }
}

fn check_len(domain: &Domain, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput("density values".into()));
    }
    if values.len() != domain.len() {
        return Err(Error::DimensionError(format!("{} values for a mesh with {} nodes", values.len(), domain.len())));
    }
    Ok(())
}
