use rayon::prelude::*;

use super::{ratio, sort_rows, Family, Instance, StabilityReport, StabilityRow, Theorem};
use crate::error::{Error, Result};
use crate::measures::{check_same, integrate, norms, DensityGrid, Domain, ScalarField, VectorField};
use crate::ot1d::{brenier_map_1d, cdf, counterexample_sweep, d2_1d};
use crate::ot_discrete::{
    brenier_from_duals, brenier_from_grid, grid_sinkhorn, plan_distance, sinkhorn, solve_exact, Backend, GridMeasure, HessianClamp, PointSet, PotentialField,
    SinkhornOptions, TransportPlan, EXACT_SIZE_CAP,
};
use crate::second_variation::{d2_squared, FD_SINKHORN_TOL};

/// Quantile levels of the 1D plans compared by the plan distance.
pub const QUANTILE_ATOMS: usize = 200;

/// Brenier potential from f to g with its plan: exact monotone rearrangement in 1D, `backend` in 2D.
/// The 1D plan is the quantile coupling on [`QUANTILE_ATOMS`] levels; grid Sinkhorn returns no plan.
pub fn brenier_potential(f: &DensityGrid, g: &DensityGrid, backend: Backend) -> Result<(PotentialField, Option<TransportPlan>)> {
    let clamp = HessianClamp::from_data(f.domain().shape(), g.domain().shape(), f.floor(), g.sup())?;
    if f.dim() == 1 {
        let map = brenier_map_1d(f, g)?;
        return Ok((PotentialField::from_map_1d(&map, clamp)?, Some(quantile_plan(f, g)?)));
    }
    match backend {
        Backend::Exact => {
            let (mu, index) = PointSet::from_density(f);
            let (nu, _) = PointSet::from_density(g);
            let (plan, duals) = solve_exact(&mu, &nu)?;
            let pot = brenier_from_duals(&duals, &plan, f.domain(), &index, clamp)?;
            Ok((pot, Some(plan)))
        }
        Backend::Sinkhorn { eps } => {
            let opts = SinkhornOptions { eps, tol: FD_SINKHORN_TOL, ..SinkhornOptions::default() };
            if let (Ok(mu), Ok(nu)) = (GridMeasure::from_density(f), GridMeasure::from_density(g)) {
                return Ok((brenier_from_grid(&grid_sinkhorn(&mu, &nu, &opts, None)?, f.domain(), clamp)?, None));
            }
            let (mu, index) = PointSet::from_density(f);
            let (nu, _) = PointSet::from_density(g);
            let r = sinkhorn(&mu, &nu, &opts)?;
            let pot = brenier_from_duals(&r.duals, &r.plan, f.domain(), &index, clamp)?;
            Ok((pot, Some(r.plan)))
        }
    }
}

/// The monotone plan between two 1D densities sampled at midpoint quantile levels.
fn quantile_plan(f: &DensityGrid, g: &DensityGrid) -> Result<TransportPlan> {
    let (cf, cg) = (cdf(f)?, cdf(g)?);
    let m = QUANTILE_ATOMS;
    let levels: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
    let w = vec![1.0 / m as f64; m];
    let xs = levels.iter().map(|&s| cf.quantile(s)).collect::<Result<Vec<f64>>>()?;
    let ys = levels.iter().map(|&s| cg.quantile(s)).collect::<Result<Vec<f64>>>()?;
    let source = PointSet::new(1, xs, w.clone())?;
    let target = PointSet::new(1, ys, w)?;
    Ok(TransportPlan::from_entries(source, target, (0..m).map(|k| (k, k, 1.0 / m as f64)).collect()))
}

fn distance(a: &DensityGrid, b: &DensityGrid, backend: Backend) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a.dim() == 1 {
        return d2_1d(a, b);
    }
    Ok(d2_squared(a, b, backend, FD_SINKHORN_TOL)?.max(0.0).sqrt())
}

fn l2_vector(domain: &Domain, a: &VectorField, b: &VectorField) -> f64 {
    let e: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_squared()).collect();
    integrate(domain, &e).sqrt()
}

fn density_difference(a: &DensityGrid, b: &DensityGrid) -> Result<ScalarField> {
    check_same(a.domain(), b.domain())?;
    ScalarField::new(a.domain().clone(), a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect())
}

fn lp_difference(a: &DensityGrid, b: &DensityGrid, p: f64) -> Result<f64> {
    let d = density_difference(a, b)?;
    Ok(norms(&d, &[p], None)?.lp(p).expect("requested exponent"))
}

fn run<T: Send>(family: &Family, row: impl Fn(usize, &Instance) -> Result<T> + Sync, finish: impl Fn(usize, f64, Result<T>) -> StabilityRow + Sync) -> Vec<StabilityRow> {
    let sizes = family.sizes();
    let mut rows: Vec<StabilityRow> = (0..family.len())
        .into_par_iter()
        .map(|i| finish(i, sizes[i], family.instance(i).and_then(|inst| row(i, &inst))))
        .collect();
    sort_rows(&mut rows);
    rows
}

fn gradient_row(index: usize, inst: &Instance, backend: Backend) -> Result<StabilityRow> {
    check_same(inst.f0.domain(), inst.f1.domain())?;
    let (p0, plan0) = brenier_potential(&inst.f0, &inst.g0, backend)?;
    let (p1, plan1) = brenier_potential(&inst.f1, &inst.g1, backend)?;
    let lhs = l2_vector(inst.f0.domain(), &p1.grad, &p0.grad);
    let rhs = distance(&inst.f0, &inst.f1, backend)? + distance(&inst.g0, &inst.g1, backend)?;
    let plan = match (plan0, plan1) {
        (Some(a), Some(b)) if a.atoms() <= EXACT_SIZE_CAP && b.atoms() <= EXACT_SIZE_CAP => Some(plan_distance(&a, &b)?),
        _ => None,
    };
    Ok(StabilityRow {
        index,
        size: inst.size,
        lhs: Some(lhs),
        rhs: Some(rhs),
        ratio: ratio(lhs, rhs),
        lhs_alt: plan,
        rhs_alt: None,
        ratio_alt: plan.and_then(|p| ratio(p, rhs)),
        error: None,
    })
}

fn finish_row(index: usize, size: f64, r: Result<StabilityRow>) -> StabilityRow {
    r.unwrap_or_else(|e| StabilityRow::failed(index, size, &e))
}

/// Rows of the gradient sweep for explicit instances, sorted by size.
pub fn gradient_rows(instances: &[Instance], backend: Backend) -> Vec<StabilityRow> {
    let mut rows: Vec<StabilityRow> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| finish_row(i, inst.size, gradient_row(i, inst, backend)))
        .collect();
    sort_rows(&mut rows);
    rows
}

fn quadruple_family(family: &Family) -> Result<()> {
    family.check()?;
    if matches!(family, Family::Counterexample { .. }) {
        return Err(Error::DomainError("the counterexample family only enters the 1.3 sweep".into()));
    }
    Ok(())
}

/// ‖∇φ₁−∇φ₀‖_{L²(Ω)} (Lebesgue) and the plan distance d₂(π₀,π₁) against d₂(f₀,f₁)+d₂(g₀,g₁).
pub fn gradient_stability(family: &Family, backend: Backend) -> Result<StabilityReport> {
    quadruple_family(family)?;
    let rows = run(family, |i, inst| gradient_row(i, inst, backend), finish_row);
    Ok(StabilityReport {
        theorem: Theorem::Gradient,
        family: family.clone(),
        backend,
        alpha: None,
        p: None,
        normalization_defect: None,
        columns: columns(&["grad_l2", "d2_f + d2_g", "grad_l2 / rhs", "plan_distance", "", "plan_distance / rhs"]),
        rows,
    })
}

fn columns(c: &[&str]) -> Vec<String> {
    let mut out = vec!["index".to_string(), "size".to_string()];
    let names = ["lhs", "rhs", "ratio", "lhs_alt", "rhs_alt", "ratio_alt"];
    for (n, d) in names.iter().zip(c) {
        out.push(if d.is_empty() { n.to_string() } else { format!("{n}: {d}") });
    }
    out.push("error".into());
    out
}

/// φ + log∫e^{−φ}, so that ∫e^{−φ} = 1 under the same quadrature; returns the shifted field and the defect.
fn normalized(phi: &ScalarField) -> (ScalarField, f64) {
    let d = phi.domain();
    let lo = phi.values().iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = phi.values().iter().map(|v| (-(v - lo)).exp()).collect();
    let c = integrate(d, &e).ln() - lo;
    let out = phi.map(|v| v + c);
    let z: Vec<f64> = out.values().iter().map(|v| (-v).exp()).collect();
    (out, (integrate(d, &z) - 1.0).abs())
}

struct PotentialRow {
    row: StabilityRow,
    defect: f64,
}

fn potential_row(index: usize, inst: &Instance, backend: Backend) -> Result<PotentialRow> {
    check_same(inst.f0.domain(), inst.f1.domain())?;
    let (p0, _) = brenier_potential(&inst.f0, &inst.g0, backend)?;
    let (p1, _) = brenier_potential(&inst.f1, &inst.g1, backend)?;
    let (n0, d0) = normalized(&p0.phi);
    let (n1, d1) = normalized(&p1.phi);
    let diff: Vec<f64> = n0.values().iter().zip(n1.values()).map(|(a, b)| (a - b) * (a - b)).collect();
    let domain = inst.f0.domain();
    let lhs = integrate(domain, &diff).sqrt();
    let rhs = lp_difference(&inst.f0, &inst.f1, 2.0)? + lp_difference(&inst.g0, &inst.g1, 2.0)?;
    let grad = l2_vector(domain, &p0.grad, &p1.grad);
    let cube = rhs.cbrt();
    Ok(PotentialRow {
        row: StabilityRow {
            index,
            size: inst.size,
            lhs: Some(lhs),
            rhs: Some(rhs),
            ratio: ratio(lhs, rhs),
            lhs_alt: Some(grad),
            rhs_alt: Some(cube),
            ratio_alt: ratio(grad, cube),
            error: None,
        },
        defect: d0.max(d1),
    })
}

fn potential_rows_with_defect(family_rows: Vec<(usize, f64, Result<PotentialRow>)>) -> (Vec<StabilityRow>, Option<f64>) {
    let mut defect: Option<f64> = None;
    let mut rows: Vec<StabilityRow> = family_rows
        .into_iter()
        .map(|(i, size, r)| match r {
            Ok(p) => {
                defect = Some(defect.unwrap_or(0.0).max(p.defect));
                p.row
            }
            Err(e) => StabilityRow::failed(i, size, &e),
        })
        .collect();
    sort_rows(&mut rows);
    (rows, defect)
}

/// Rows of the normalized-potential sweep for explicit instances and the largest normalization defect.
pub fn potential_rows(instances: &[Instance], backend: Backend) -> (Vec<StabilityRow>, Option<f64>) {
    let raw = instances.par_iter().enumerate().map(|(i, inst)| (i, inst.size, potential_row(i, inst, backend))).collect();
    potential_rows_with_defect(raw)
}

/// ‖φ₀−φ₁‖_{L²} of e^{−φ}-normalized potentials against ‖f₀−f₁‖_{L²} + ‖g₀−g₁‖_{L²},
/// and ‖∇φ₀−∇φ₁‖_{L²} against the cube root of the same right side.
pub fn potential_stability(family: &Family, backend: Backend) -> Result<StabilityReport> {
    quadruple_family(family)?;
    let sizes = family.sizes();
    let raw = (0..family.len())
        .into_par_iter()
        .map(|i| (i, sizes[i], family.instance(i).and_then(|inst| potential_row(i, &inst, backend))))
        .collect();
    let (rows, defect) = potential_rows_with_defect(raw);
    Ok(StabilityReport {
        theorem: Theorem::Potential,
        family: family.clone(),
        backend,
        alpha: None,
        p: None,
        normalization_defect: defect,
        columns: columns(&["phi_l2", "l2_f + l2_g", "phi_l2 / rhs", "grad_l2", "rhs^(1/3)", "grad_l2 / rhs^(1/3)"]),
        rows,
    })
}

/// p = d/(1−α).
pub fn holder_exponent_p(dim: usize, alpha: f64) -> f64 {
    dim as f64 / (1.0 - alpha)
}

fn holder_row(index: usize, inst: &Instance, alpha: f64, backend: Backend) -> Result<StabilityRow> {
    check_same(inst.f0.domain(), inst.f1.domain())?;
    let (p0, _) = brenier_potential(&inst.f0, &inst.g0, backend)?;
    let (p1, _) = brenier_potential(&inst.f1, &inst.g1, backend)?;
    let domain = inst.f0.domain().clone();
    // zero-mean gauge on both potentials
    let dphi = p1.phi.centered().zip_with(&p0.phi.centered(), |a, b| a - b)?;
    let dgrad = VectorField::new(domain.clone(), p1.grad.values().iter().zip(p0.grad.values()).map(|(a, b)| a - b).collect())?;
    let nphi = norms(&dphi, &[], None)?;
    let ngrad = norms(&dgrad, &[], Some(alpha))?;
    let lhs = nphi.sup_norm + ngrad.sup_norm + ngrad.holder_seminorm.unwrap_or(0.0);
    let p = holder_exponent_p(inst.f0.dim(), alpha);
    let rhs = lp_difference(&inst.f1, &inst.f0, p)? + lp_difference(&inst.g1, &inst.g0, p)?;
    Ok(StabilityRow { index, size: inst.size, lhs: Some(lhs), rhs: Some(rhs), ratio: ratio(lhs, rhs), lhs_alt: None, rhs_alt: None, ratio_alt: None, error: None })
}

/// Rows of the C^{1,α} sweep for explicit instances.
pub fn holder_rows(instances: &[Instance], alpha: f64, backend: Backend) -> Vec<StabilityRow> {
    let mut rows: Vec<StabilityRow> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| finish_row(i, inst.size, holder_row(i, inst, alpha, backend)))
        .collect();
    sort_rows(&mut rows);
    rows
}

/// ‖φ₁−φ₀‖_{C^{1,α}} in the zero-mean gauge against ‖f₁−f₀‖_{L^p} + ‖g₁−g₀‖_{L^p}, p = d/(1−α).
///
/// The counterexample family instead reports ‖G_a⁻¹ − G_{1/2}⁻¹‖_∞ against ‖g_a − g_{1/2}‖_∞^η
/// with size ε; its targets have no positive floor, so it serves as a negative control.
pub fn holder_stability(family: &Family, alpha: f64, backend: Backend) -> Result<StabilityReport> {
    family.check()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ExponentError(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if let Family::Counterexample { p, eta, eps } = family {
        let mut rows: Vec<StabilityRow> = counterexample_sweep(*p, *eta, eps)?
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                let rhs = r.density_gap.powf(*eta);
                StabilityRow {
                    index,
                    size: r.eps,
                    lhs: Some(r.map_gap),
                    rhs: Some(rhs),
                    ratio: ratio(r.map_gap, rhs),
                    lhs_alt: Some(r.midpoint_gap),
                    rhs_alt: None,
                    ratio_alt: None,
                    error: None,
                }
            })
            .collect();
        sort_rows(&mut rows);
        return Ok(StabilityReport {
            theorem: Theorem::Holder,
            family: family.clone(),
            backend,
            alpha: Some(alpha),
            p: None,
            normalization_defect: None,
            columns: columns(&["map_sup_gap", "density_sup_gap^eta", "lhs / rhs", "midpoint_gap", "", ""]),
            rows,
        });
    }
    let beta = family.holder_exponent().expect("quadruple families have an exponent");
    if alpha >= beta {
        return Err(Error::ExponentError(format!("alpha = {alpha} must be below the family's Hölder exponent {beta}")));
    }
    let dim = family.instance(0).map(|i| i.f0.dim()).unwrap_or(1);
    let rows = run(family, |i, inst| holder_row(i, inst, alpha, backend), finish_row);
    Ok(StabilityReport {
        theorem: Theorem::Holder,
        family: family.clone(),
        backend,
        alpha: Some(alpha),
        p: Some(holder_exponent_p(dim, alpha)),
        normalization_defect: None,
        columns: columns(&["c1alpha_norm", "lp_f + lp_g", "lhs / rhs", "", "", ""]),
        rows,
    })
}
