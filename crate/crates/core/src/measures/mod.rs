//! Domains, meshes, nodal fields, densities, quadrature and discrete norms.

mod density;
mod fields;
pub mod io;
mod mesh;
mod norms;
mod shape;

use std::sync::Arc;

pub use density::DensityGrid;
pub use fields::{ScalarField, SpdField, VectorField};
pub use mesh::{BoundaryFace, Layout, Mesh, Resolution};
pub use norms::{norms, NodeField, NormReport, HOLDER_SEED};
pub use shape::Shape;

pub(crate) use fields::clamp_matrix;
#[allow(unused_imports)]
pub(crate) use mesh::{ellipse_params, polar_coords, polar_jacobian, polar_point};

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// A convex domain together with its structured mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    shape: Shape,
    mesh: Mesh,
}

impl Domain {
    pub fn new(shape: Shape, resolution: Resolution) -> Result<Arc<Domain>> {
        let mesh = Mesh::build(&shape, resolution)?;
        Ok(Arc::new(Domain { shape, mesh }))
    }

    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Arc<Domain>> {
        Domain::new(Shape::Interval { a, b }, Resolution::Line { cells })
    }

    pub fn unit_interval(cells: usize) -> Arc<Domain> {
        Domain::interval(0.0, 1.0, cells).expect("valid interval")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn nodes(&self) -> &[Vec2] {
        self.mesh.nodes()
    }

    pub fn volumes(&self) -> &[f64] {
        self.mesh.volumes()
    }

    pub fn spacing(&self) -> f64 {
        self.mesh.spacing()
    }

    pub fn defining_function(&self, p: Vec2) -> f64 {
        self.shape.defining_function(p)
    }

    pub fn outer_normal(&self, p: Vec2) -> Vec2 {
        self.shape.outer_normal(p)
    }

    /// Sample a function at the mesh nodes.
    pub fn sample(&self, f: impl Fn(Vec2) -> f64) -> Vec<f64> {
        self.nodes().iter().map(|&p| f(p)).collect()
    }

    /// Same domain and same discretization (the check behind `MeshMismatch`).
    pub fn same_mesh(a: &Arc<Domain>, b: &Arc<Domain>) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }
}

pub(crate) fn check_same(a: &Arc<Domain>, b: &Arc<Domain>) -> Result<()> {
    if Domain::same_mesh(a, b) {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// Cell-weighted quadrature of `field`, optionally against a density.
pub fn quadrature(field: &ScalarField, density: Option<&DensityGrid>) -> Result<f64> {
    let vol = field.domain().volumes();
    match density {
        None => Ok(field.values().iter().zip(vol).map(|(u, w)| u * w).sum()),
        Some(d) => {
            check_same(field.domain(), d.domain())?;
            Ok(field
                .values()
                .iter()
                .zip(d.values())
                .zip(vol)
                .map(|((u, f), w)| u * f * w)
                .sum())
        }
    }
}

/// Quadrature of raw nodal values on a domain.
pub fn integrate(domain: &Domain, values: &[f64]) -> f64 {
    values.iter().zip(domain.volumes()).map(|(u, w)| u * w).sum()
}
