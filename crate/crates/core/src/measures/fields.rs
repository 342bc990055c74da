use std::sync::Arc;

use nalgebra::SymmetricEigen;

use super::{check_same, Domain, Mat2, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionError(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                domain.len()
            )));
        }
        Ok(ScalarField { domain, values })
    }

    pub fn from_fn(domain: Arc<Domain>, f: impl Fn(Vec2) -> f64) -> Self {
        let values = domain.sample(f);
        ScalarField { domain, values }
    }

    pub fn constant(domain: Arc<Domain>, c: f64) -> Self {
        let values = vec![c; domain.len()];
        ScalarField { domain, values }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { domain: self.domain.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        check_same(&self.domain, &other.domain)?;
        Ok(ScalarField {
            domain: self.domain.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn gradient(&self) -> VectorField {
        VectorField { domain: self.domain.clone(), values: self.domain.mesh().gradient(&self.values) }
    }

    pub fn hessian(&self) -> Vec<Mat2> {
        self.domain.mesh().hessian(&self.values)
    }

    pub fn interpolate(&self, p: Vec2) -> f64 {
        self.domain.mesh().interpolate(&self.values, p)
    }

    /// Quadrature mean (∫u / |Ω|).
    pub fn mean(&self) -> f64 {
        let vol: f64 = self.domain.volumes().iter().sum();
        super::integrate(&self.domain, &self.values) / vol
    }

    /// Copy with the quadrature mean subtracted.
    pub fn centered(&self) -> ScalarField {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    domain: Arc<Domain>,
    values: Vec<Vec2>,
}

impl VectorField {
    pub fn new(domain: Arc<Domain>, values: Vec<Vec2>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionError(format!(
                "{} vectors for a mesh with {} nodes",
                values.len(),
                domain.len()
            )));
        }
        Ok(VectorField { domain, values })
    }

    pub fn from_fn(domain: Arc<Domain>, f: impl Fn(Vec2) -> Vec2) -> Self {
        let values = domain.nodes().iter().map(|&p| f(p)).collect();
        VectorField { domain, values }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[Vec2] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Component `k` as a scalar field.
    pub fn component(&self, k: usize) -> ScalarField {
        ScalarField { domain: self.domain.clone(), values: self.values.iter().map(|v| v[k]).collect() }
    }

    pub fn norms_pointwise(&self) -> ScalarField {
        ScalarField { domain: self.domain.clone(), values: self.values.iter().map(|v| v.norm()).collect() }
    }

    pub fn divergence(&self) -> ScalarField {
        ScalarField { domain: self.domain.clone(), values: self.domain.mesh().divergence(&self.values) }
    }

    pub fn interpolate(&self, p: Vec2) -> Vec2 {
        self.domain.mesh().interpolate_vec(&self.values, p)
    }
}

/// Symmetric positive definite matrices per node with an ellipticity bracket.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdField {
    domain: Arc<Domain>,
    values: Vec<Mat2>,
    bracket: [f64; 2],
}

impl SpdField {
    /// Clamp the eigenvalues of every matrix into `[lambda_min, lambda_max]`.
    /// Returns the field and the fraction of nodes where the clamp was active.
    pub fn clamped(domain: Arc<Domain>, values: Vec<Mat2>, lambda_min: f64, lambda_max: f64) -> Result<(Self, f64)> {
        if values.len() != domain.len() {
            return Err(Error::DimensionError(format!(
                "{} matrices for a mesh with {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
            return Err(Error::RangeError(format!("invalid bracket [{lambda_min}, {lambda_max}]")));
        }
        let one_d = domain.dim() == 1;
        let mut active = 0usize;
        let values: Vec<Mat2> = values
            .into_iter()
            .map(|m| {
                let (out, hit) = clamp_matrix(m, lambda_min, lambda_max, one_d);
                active += hit as usize;
                out
            })
            .collect();
        let rate = if values.is_empty() { 0.0 } else { active as f64 / values.len() as f64 };
        Ok((SpdField { domain, values, bracket: [lambda_min, lambda_max] }, rate))
    }

    /// Re-clamp into this field's own bracket.
    pub fn reclamp(&self) -> (SpdField, f64) {
        SpdField::clamped(self.domain.clone(), self.values.clone(), self.bracket[0], self.bracket[1])
            .expect("bracket already validated")
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[Mat2] {
        &self.values
    }

    pub fn bracket(&self) -> [f64; 2] {
        self.bracket
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inverse matrices (the 1D case inverts only the leading entry).
    pub fn inverses(&self) -> Vec<Mat2> {
        let one_d = self.domain.dim() == 1;
        self.values
            .iter()
            .map(|m| {
                if one_d {
                    Mat2::new(1.0 / m[(0, 0)], 0.0, 0.0, 0.0)
                } else {
                    m.try_inverse().expect("clamped matrices are invertible")
                }
            })
            .collect()
    }

    pub fn determinants(&self) -> Vec<f64> {
        let one_d = self.domain.dim() == 1;
        self.values.iter().map(|m| if one_d { m[(0, 0)] } else { m.determinant() }).collect()
    }
}

/// Eigenvalue clamp of one symmetric matrix; untouched when already inside the bracket.
pub(crate) fn clamp_matrix(m: Mat2, lo: f64, hi: f64, one_d: bool) -> (Mat2, bool) {
    if one_d {
        let v = m[(0, 0)];
        let c = v.clamp(lo, hi);
        return (Mat2::new(c, 0.0, 0.0, 0.0), c != v || m[(0, 1)] != 0.0 || m[(1, 0)] != 0.0 || m[(1, 1)] != 0.0);
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let slack = 1e-12;
    let inside = eig.eigenvalues.iter().all(|&l| l >= lo * (1.0 - slack) && l <= hi * (1.0 + slack));
    if inside {
        return (sym, sym != m);
    }
    let lam = eig.eigenvalues.map(|l| l.clamp(lo, hi));
    let q = eig.eigenvectors;
    let out = q * Mat2::from_diagonal(&lam) * q.transpose();
    (0.5 * (out + out.transpose()), true)
}
