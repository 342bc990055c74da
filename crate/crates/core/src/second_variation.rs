//! Second variation of d₂² along multiplicative perturbations: the quadratic
//! form of the linearized response against symmetric second differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_response::{solve_response, EllipticProblem, ResponseDiagnostics, ResponseField};
use crate::measures::{check_same, quadrature, DensityGrid, Layout, Resolution, ScalarField};
use crate::ot1d::d2_1d;
use crate::ot_discrete::{grid_sinkhorn_divergence, sinkhorn_divergence, solve_exact, Backend, GridMeasure, PointSet, PotentialField, SinkhornOptions};
use crate::paths::{multiplicative_path, DensityPath, PathKind, MEAN_TOL};

/// Largest number of positive-mass atoms per side for which the exact LP is used by default.
pub const AUTO_EXACT_ATOMS: usize = 1600;

/// Default Sinkhorn tolerance for second differences.
pub const FD_SINKHORN_TOL: f64 = 1e-6;

/// Over-relaxation of the Sinkhorn solves behind second differences.
pub const FD_RELAXATION: f64 = 1.6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondVariationReport {
    /// ∫⟨(D²φ)⁻¹∇ξ, ∇ξ⟩f.
    pub formula_value: f64,
    /// Second quotient at `dt`.
    pub fd_value: f64,
    /// Second quotient at `dt / 2`.
    pub fd_half_step: f64,
    /// (4·fd_half_step − fd_value)/3.
    pub fd_richardson: f64,
    pub dt: f64,
    /// |formula − fd| / max(|fd|, floor).
    pub relative_gap: f64,
    pub d2_squared_at_zero: f64,
    pub backend: String,
    pub eps: Option<f64>,
    pub source_resolution: Resolution,
    pub target_resolution: Resolution,
    pub response: Option<ResponseDiagnostics>,
}

/// Second quotients of t ↦ d₂(f_t, g_t)².
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdEstimate {
    pub dt: f64,
    pub value: f64,
    pub half_step: f64,
    pub d2_squared_at_zero: f64,
    pub backend: Backend,
}

fn check_mean(density: &DensityGrid, h: &ScalarField) -> Result<()> {
    let mean = quadrature(h, Some(density))?;
    if mean.abs() > MEAN_TOL {
        return Err(Error::MeanError { mean });
    }
    Ok(())
}

/// ∫⟨(D²φ)⁻¹∇ξ, ∇ξ⟩f for a response ξ solved from the perturbations (h, k),
/// evaluated as the finite-volume energy of the response operator.
pub fn second_variation(f: &DensityGrid, g: &DensityGrid, h: &ScalarField, k: &ScalarField, phi: &PotentialField, xi: &ResponseField) -> Result<f64> {
    check_mean(f, h)?;
    check_mean(g, k)?;
    check_same(f.domain(), xi.xi.domain())?;
    let zero = ScalarField::constant(f.domain().clone(), 0.0);
    let q = vec![0.0; f.domain().mesh().boundary_faces().len()];
    let form = EllipticProblem::assemble(f, &phi.hess, &zero, &q)?;
    Ok(form.energy(&xi.xi))
}

/// Backend used when none is requested: the 1D closed form, the LP for small
/// 2D problems and debiased Sinkhorn with ε = h² otherwise.
pub fn auto_backend(f: &DensityGrid, g: &DensityGrid) -> Backend {
    if f.dim() == 1 {
        return Backend::Exact;
    }
    let atoms = |d: &DensityGrid| d.values().iter().zip(d.domain().volumes()).filter(|(v, w)| **v * **w > 0.0).count();
    if atoms(f) <= AUTO_EXACT_ATOMS && atoms(g) <= AUTO_EXACT_ATOMS {
        Backend::Exact
    } else {
        let h = f.domain().spacing().max(g.domain().spacing());
        Backend::Sinkhorn { eps: h * h }
    }
}

fn is_grid(d: &DensityGrid) -> bool {
    d.dim() == 2 && matches!(d.domain().mesh().layout(), Layout::Tensor { .. })
}

/// d₂² with the given backend; Sinkhorn values are always debiased.
pub(crate) fn d2_squared(f: &DensityGrid, g: &DensityGrid, backend: Backend, tol: f64) -> Result<f64> {
    match backend {
        Backend::Exact if f.dim() == 1 => Ok(d2_1d(f, g)?.powi(2)),
        Backend::Exact => {
            let (mu, _) = PointSet::from_density(f);
            let (nu, _) = PointSet::from_density(g);
            let (plan, _) = solve_exact(&mu, &nu)?;
            Ok(plan.cost)
        }
        Backend::Sinkhorn { eps } => {
            let opts = SinkhornOptions { eps, tol, relaxation: FD_RELAXATION, ..SinkhornOptions::default() };
            if is_grid(f) && is_grid(g) {
                let div = grid_sinkhorn_divergence(&GridMeasure::from_density(f)?, &GridMeasure::from_density(g)?, &opts, None)?;
                Ok(div.value)
            } else {
                let (mu, _) = PointSet::from_density(f);
                let (nu, _) = PointSet::from_density(g);
                Ok(sinkhorn_divergence(&mu, &nu, &opts)?.0)
            }
        }
    }
}

/// [d₂(f_δ,g_δ)² + d₂(f_{−δ},g_{−δ})² − 2d₂(f₀,g₀)²]/(2δ²) at δ = `dt` and `dt/2`.
pub fn fd_second_derivative(path_f: &DensityPath, path_g: &DensityPath, dt: f64, backend: Backend, tol: f64) -> Result<FdEstimate> {
    for p in [path_f, path_g] {
        if p.kind() != PathKind::Multiplicative {
            return Err(Error::KindError { expected: "multiplicative" });
        }
        p.check_time(dt)?;
        p.check_time(-dt)?;
    }
    if !(dt > 0.0) {
        return Err(Error::RangeError(format!("time step {dt} must be positive")));
    }
    let times = [0.0, dt, -dt, 0.5 * dt, -0.5 * dt];
    let v = times
        .par_iter()
        .map(|&t| d2_squared(&path_f.at(t)?, &path_g.at(t)?, backend, tol))
        .collect::<Result<Vec<f64>>>()?;
    let d0 = v[0];
    let quotient = |a: f64, b: f64, d: f64| (a + b - 2.0 * d0) / (2.0 * d * d);
    Ok(FdEstimate {
        dt,
        value: quotient(v[1], v[2], dt),
        half_step: quotient(v[3], v[4], 0.5 * dt),
        d2_squared_at_zero: d0,
        backend,
    })
}

/// Combine the formula value with the finite-difference estimate.
pub fn validate(
    formula: f64,
    fd: &FdEstimate,
    source_resolution: Resolution,
    target_resolution: Resolution,
    response: Option<ResponseDiagnostics>,
) -> SecondVariationReport {
    let floor = 16.0 * f64::EPSILON * fd.d2_squared_at_zero.max(1.0) / (fd.dt * fd.dt);
    let (backend, eps) = match fd.backend {
        Backend::Exact => ("exact".to_string(), None),
        Backend::Sinkhorn { eps } => ("sinkhorn".to_string(), Some(eps)),
    };
    SecondVariationReport {
        formula_value: formula,
        fd_value: fd.value,
        fd_half_step: fd.half_step,
        fd_richardson: (4.0 * fd.half_step - fd.value) / 3.0,
        dt: fd.dt,
        relative_gap: (formula - fd.value).abs() / fd.value.abs().max(floor),
        d2_squared_at_zero: fd.d2_squared_at_zero,
        backend,
        eps,
        source_resolution,
        target_resolution,
        response,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondVariationOptions {
    pub dt: f64,
    /// `None` picks [`auto_backend`].
    pub backend: Option<Backend>,
    pub tol: f64,
}

impl Default for SecondVariationOptions {
    fn default() -> Self {
        SecondVariationOptions { dt: 1e-2, backend: None, tol: FD_SINKHORN_TOL }
    }
}

/// Solve the response at t = 0, evaluate the formula and the second quotients.
pub fn run_second_variation(
    f: &DensityGrid,
    g: &DensityGrid,
    h: &ScalarField,
    k: &ScalarField,
    phi: &PotentialField,
    opts: &SecondVariationOptions,
) -> Result<SecondVariationReport> {
    let path_f = multiplicative_path(f, h)?;
    let path_g = multiplicative_path(g, k)?;
    let xi = solve_response(&path_f, &path_g, phi, 0.0)?;
    let formula = second_variation(f, g, h, k, phi, &xi)?;
    let backend = opts.backend.unwrap_or_else(|| auto_backend(f, g));
    let fd = fd_second_derivative(&path_f, &path_g, opts.dt, backend, opts.tol)?;
    Ok(validate(formula, &fd, f.domain().mesh().resolution(), g.domain().mesh().resolution(), Some(xi.diagnostics())))
}
