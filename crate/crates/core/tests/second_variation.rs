use std::f64::consts::PI;
use std::sync::Arc;

use otlab::linear_response::solve_response;
use otlab::measures::{quadrature, DensityGrid, Domain, Mat2, Resolution, ScalarField, Shape, Vec2};
use otlab::ot1d::{brenier_map_1d, d2_1d};
use otlab::ot_discrete::{Backend, HessianClamp, PotentialField};
use otlab::paths::multiplicative_path;
use otlab::second_variation::{
    auto_backend, fd_second_derivative, run_second_variation, second_variation, validate, SecondVariationOptions,
};
use otlab::Error;
use proptest::prelude::*;

const TARGET: f64 = 1.0 / (2.0 * PI * PI);

fn potential_1d(f: &DensityGrid, g: &DensityGrid) -> PotentialField {
    let clamp = HessianClamp::from_data(f.domain().shape(), g.domain().shape(), f.floor(), g.sup()).unwrap();
    PotentialField::from_map_1d(&brenier_map_1d(f, g).unwrap(), clamp).unwrap()
}

fn centered_against(h: ScalarField, density: &DensityGrid) -> ScalarField {
    let m = quadrature(&h, Some(density)).unwrap();
    h.map(|v| v - m)
}

fn uniform_line(cells: usize) -> (Arc<Domain>, DensityGrid) {
    let d = Domain::unit_interval(cells);
    let f = DensityGrid::uniform(d.clone());
    (d, f)
}

#[test]
fn cosine_perturbation_of_the_source() {
    let (d, f) = uniform_line(1000);
    let h = ScalarField::from_fn(d.clone(), |x| (PI * x.x).cos());
    let k = ScalarField::constant(d.clone(), 0.0);
    let phi = potential_1d(&f, &f);
    let r = run_second_variation(&f, &f, &h, &k, &phi, &SecondVariationOptions::default()).unwrap();
    assert!((r.formula_value - TARGET).abs() < 1e-4, "{r:?}");
    assert!((r.fd_value - TARGET).abs() < 1e-5, "{r:?}");
    assert!(r.relative_gap <= 1e-3);
    assert_eq!(r.backend, "exact");
    assert_eq!(r.dt, 1e-2);
    assert!(r.response.unwrap().compatibility.abs() < 1e-8);
}

#[test]
fn exact_distance_is_quadratic_in_t() {
    // d₂(f_t, 1)² = t²/(2π²) for f_t = 1 + t cos(πx)
    let (d, f) = uniform_line(2000);
    for t in [0.1, 0.3, 0.5] {
        let ft = DensityGrid::from_fn(d.clone(), |x| 1.0 + t * (PI * x.x).cos(), 0.1).unwrap();
        let v = d2_1d(&ft, &f).unwrap().powi(2);
        assert!((v - t * t * TARGET).abs() < 1e-6 * t * t, "t = {t}: {v}");
    }
}

#[test]
fn cosine_perturbation_of_the_target() {
    let (d, f) = uniform_line(1000);
    let h = ScalarField::constant(d.clone(), 0.0);
    let k = ScalarField::from_fn(d.clone(), |y| (PI * y.x).cos());
    let phi = potential_1d(&f, &f);
    let r = run_second_variation(&f, &f, &h, &k, &phi, &SecondVariationOptions::default()).unwrap();
    assert!((r.formula_value - TARGET).abs() < 1e-4, "{r:?}");
    assert!((r.fd_value - TARGET).abs() < 1e-5, "{r:?}");
}

#[test]
fn zero_perturbation_gives_zero() {
    let (d, f) = uniform_line(200);
    let z = ScalarField::constant(d.clone(), 0.0);
    let phi = potential_1d(&f, &f);
    let r = run_second_variation(&f, &f, &z, &z, &phi, &SecondVariationOptions::default()).unwrap();
    assert_eq!(r.formula_value, 0.0);
    assert!(r.fd_value.abs() < 1e-12);
    assert!(r.relative_gap <= 1e-8, "{r:?}");
}

#[test]
fn nonzero_mean_is_rejected() {
    let (d, f) = uniform_line(200);
    let phi = potential_1d(&f, &f);
    let h = ScalarField::from_fn(d.clone(), |x| x.x);
    let z = ScalarField::constant(d.clone(), 0.0);
    let pf = multiplicative_path(&f, &z).unwrap();
    let xi = solve_response(&pf, &pf, &phi, 0.0).unwrap();
    assert!(matches!(second_variation(&f, &f, &h, &z, &phi, &xi), Err(Error::MeanError { .. })));
    assert!(matches!(second_variation(&f, &f, &z, &h, &phi, &xi), Err(Error::MeanError { .. })));
    let opts = SecondVariationOptions::default();
    assert!(matches!(run_second_variation(&f, &f, &h, &z, &phi, &opts), Err(Error::MeanError { .. })));
}

fn skewed_pair(cells: usize) -> (Arc<Domain>, DensityGrid, DensityGrid) {
    let d = Domain::unit_interval(cells);
    let f = DensityGrid::from_fn(d.clone(), |x| 1.0 + 0.5 * x.x, 0.5).unwrap();
    let g = DensityGrid::from_fn(d.clone(), |y| 1.5 - y.x + 0.2 * (3.0 * y.x).sin(), 0.3).unwrap();
    (d, f, g)
}

#[test]
fn formula_matches_exact_curvature_for_smooth_pairs() {
    let (d, f, g) = skewed_pair(2000);
    let h = centered_against(ScalarField::from_fn(d.clone(), |x| (PI * x.x).cos() + 0.3 * x.x * x.x), &f);
    let k = centered_against(ScalarField::from_fn(d.clone(), |y| (2.0 * PI * y.x).sin()), &g);
    let phi = potential_1d(&f, &g);
    let r = run_second_variation(&f, &g, &h, &k, &phi, &SecondVariationOptions::default()).unwrap();
    assert!((r.formula_value - r.fd_value).abs() < 1e-4, "{r:?}");
    assert!((r.fd_value - r.fd_half_step).abs() < 1e-5, "{r:?}");
}

#[test]
fn formula_is_quadratic_in_the_perturbation() {
    let (d, f, g) = skewed_pair(400);
    let h = centered_against(ScalarField::from_fn(d.clone(), |x| (PI * x.x).cos()), &f);
    let k = centered_against(ScalarField::from_fn(d.clone(), |y| y.x * y.x), &g);
    let phi = potential_1d(&f, &g);
    let value = |s: f64| {
        let (hs, ks) = (h.map(|v| s * v), k.map(|v| s * v));
        let xi = solve_response(&multiplicative_path(&f, &hs).unwrap(), &multiplicative_path(&g, &ks).unwrap(), &phi, 0.0).unwrap();
        second_variation(&f, &g, &hs, &ks, &phi, &xi).unwrap()
    };
    let base = value(1.0);
    assert!(base > 0.0);
    for s in [0.5, 2.0] {
        assert!((value(s) - s * s * base).abs() <= 1e-8 * s * s * base);
    }
}

#[test]
fn gap_uses_a_floor_for_vanishing_differences() {
    let (d, f) = uniform_line(100);
    let z = ScalarField::constant(d.clone(), 0.0);
    let pf = multiplicative_path(&f, &z).unwrap();
    let fd = fd_second_derivative(&pf, &pf, 1e-2, Backend::Exact, 1e-6).unwrap();
    let r = validate(1e-20, &fd, Resolution::Line { cells: 100 }, Resolution::Line { cells: 100 }, None);
    assert!(r.relative_gap < 1e-8);
    let r = validate(1.0, &fd, Resolution::Line { cells: 100 }, Resolution::Line { cells: 100 }, None);
    assert!(r.relative_gap > 1.0);
}

#[test]
fn fd_rejects_linear_paths_and_large_steps() {
    let (d, f) = uniform_line(100);
    let h = ScalarField::from_fn(d.clone(), |x| (PI * x.x).cos());
    let pf = multiplicative_path(&f, &h).unwrap();
    let lin = otlab::paths::linear_path(&f, &f).unwrap();
    assert!(matches!(fd_second_derivative(&lin, &pf, 1e-2, Backend::Exact, 1e-6), Err(Error::KindError { .. })));
    assert!(matches!(fd_second_derivative(&pf, &pf, 1.5, Backend::Exact, 1e-6), Err(Error::RangeError(_))));
}

struct Affine {
    f: DensityGrid,
    g: DensityGrid,
    h: ScalarField,
    k: ScalarField,
    phi: PotentialField,
}

fn affine_family(n: usize) -> Affine {
    let a = Mat2::new(2.0, 0.0, 0.0, 0.5);
    let disk = Shape::Disk { center: [0.0, 0.0], radius: 1.0 };
    let ellipse = Shape::Ellipse { center: [0.0, 0.0], radii: [2.0, 0.5] };
    let d = Domain::new(disk.clone(), Resolution::Cartesian { n }).unwrap();
    let td = Domain::new(ellipse.clone(), Resolution::Cartesian { n }).unwrap();
    let f = DensityGrid::uniform(d.clone());
    let g = DensityGrid::uniform(td.clone());
    let h = centered_against(ScalarField::from_fn(d.clone(), |x| 0.6 * x.x + 0.4 * (x.x * x.x - x.y * x.y)), &f);
    let k = centered_against(ScalarField::from_fn(td, |y| 0.8 * y.x * y.y), &g);
    let clamp = HessianClamp::from_data(&disk, &ellipse, f.inf(), g.sup()).unwrap();
    let phi = PotentialField::analytic(d, |x: Vec2| 0.5 * x.dot(&(a * x)), move |x| a * x, move |_| a, clamp).unwrap();
    Affine { f, g, h, k, phi }
}

#[test]
fn affine_family_on_a_coarse_grid() {
    // exact value 1085297/19188000 from the polynomial solution of the response problem
    let exact = 1085297.0 / 19188000.0;
    let fam = affine_family(24);
    let backend = auto_backend(&fam.f, &fam.g);
    let h = 1.0 / 6.0;
    assert_eq!(backend, Backend::Exact);
    let opts = SecondVariationOptions { backend: Some(Backend::Sinkhorn { eps: h * h }), ..SecondVariationOptions::default() };
    let r = run_second_variation(&fam.f, &fam.g, &fam.h, &fam.k, &fam.phi, &opts).unwrap();
    assert!((r.formula_value / exact - 1.0).abs() < 1e-2, "{r:?}");
    assert!(r.relative_gap < 2e-2, "{r:?}");
    // the two step sizes agree far better than either agrees with the formula
    assert!((r.fd_value - r.fd_half_step).abs() <= 0.25 * (r.formula_value - r.fd_value).abs(), "{r:?}");
    assert_eq!(r.eps, Some(h * h));
}

#[test]
fn auto_backend_switches_to_sinkhorn_on_large_grids() {
    let fam = affine_family(48);
    match auto_backend(&fam.f, &fam.g) {
        Backend::Sinkhorn { eps } => assert!((eps - (4.0f64 / 48.0).powi(2)).abs() < 1e-15),
        b => panic!("{b:?}"),
    }
    let (_, f) = uniform_line(5000);
    assert_eq!(auto_backend(&f, &f), Backend::Exact);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn formula_is_nonnegative(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let (d, f, g) = skewed_pair(200);
        let h = centered_against(ScalarField::from_fn(d.clone(), |x| a * (PI * x.x).cos() + b * x.x), &f);
        let k = centered_against(ScalarField::from_fn(d.clone(), |y| c * (2.0 * PI * y.x).cos()), &g);
        let phi = potential_1d(&f, &g);
        let xi = solve_response(&multiplicative_path(&f, &h).unwrap(), &multiplicative_path(&g, &k).unwrap(), &phi, 0.0).unwrap();
        let v = second_variation(&f, &g, &h, &k, &phi, &xi).unwrap();
        prop_assert!(v >= -1e-12);
        let grad = xi.xi.gradient();
        let gn: Vec<f64> = grad.values().iter().map(|v| v.norm_squared()).collect();
        if otlab::measures::integrate(&d, &gn).sqrt() <= 1e-6 {
            prop_assert!(v <= 1e-10);
        }
    }
}
