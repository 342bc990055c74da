use std::f64::consts::PI;

use otlab::measures::{integrate, DensityGrid, Domain, Mat2, Resolution, ScalarField, Shape, Vec2};
use otlab::ot1d;
use otlab::ot_discrete::{Backend, HessianClamp, PotentialField};
use otlab::paths::{self, bb_action, geodesic, geodesic_action, linear_path, midpoint_times, multiplicative_path, PathKind, BB_NODES};
use otlab::Error;
use proptest::prelude::*;

fn smooth_pair(n: usize) -> (DensityGrid, DensityGrid) {
    let d = Domain::unit_interval(n);
    let f0 = DensityGrid::from_fn(d.clone(), |p| 1.0 + 0.5 * (PI * p.x).cos(), 0.4).unwrap();
    let f1 = DensityGrid::from_fn(d, |p| 1.0 + 0.3 * (2.0 * PI * p.x).sin(), 0.6).unwrap();
    (f0, f1)
}

fn uniform(a: f64, b: f64, n: usize) -> DensityGrid {
    DensityGrid::uniform(Domain::interval(a, b, n).unwrap())
}

#[test]
fn geodesic_between_equal_densities_is_constant() {
    let (f0, _) = smooth_pair(400);
    let p = geodesic(&f0, &f0, Backend::Exact).unwrap();
    for t in [0.0, 0.3, 0.7, 1.0] {
        let ft = p.at(t).unwrap();
        for (a, b) in ft.values().iter().zip(f0.values()) {
            assert!((a - b).abs() < 1e-6, "t = {t}: {a} vs {b}");
        }
        for v in p.velocity(t).unwrap().field.values() {
            assert!(v.norm() < 1e-6);
        }
    }
    assert!(geodesic_action(&p, BB_NODES).unwrap() < 1e-10);
}

#[test]
fn translation_geodesic() {
    let s = 0.3;
    let f0 = uniform(0.0, 1.0, 200);
    let f1 = uniform(s, 1.0 + s, 200);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    assert_eq!(p.kind(), PathKind::Geodesic);
    for t in [0.25, 0.5, 0.9] {
        let ft = p.at(t).unwrap();
        let nodes = ft.domain().nodes();
        assert!((nodes[0].x - t * s).abs() < 1e-12 && (nodes[nodes.len() - 1].x - 1.0 - t * s).abs() < 1e-12);
        assert!(ft.values().iter().all(|v| (v - 1.0).abs() < 1e-5));
        assert!(p.velocity(t).unwrap().field.values().iter().all(|v| (v.x - s).abs() < 1e-5));
    }
    let action = geodesic_action(&p, BB_NODES).unwrap();
    assert!((action - s * s).abs() < 1e-6, "{action}");
}

#[test]
fn geodesic_has_constant_metric_speed() {
    let (f0, f1) = smooth_pair(2000);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    let d = ot1d::d2_1d(&f0, &f1).unwrap();
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let slices = p.slices(&ts).unwrap();
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let dij = ot1d::d2_1d(&slices[i], &slices[j]).unwrap();
            assert!((dij - (ts[j] - ts[i]) * d).abs() <= 2e-3 * d, "{} {}: {dij}", ts[i], ts[j]);
        }
    }
}

#[test]
fn geodesic_action_matches_squared_distance() {
    let (f0, f1) = smooth_pair(1000);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    let d = ot1d::d2_1d(&f0, &f1).unwrap();
    let a = geodesic_action(&p, BB_NODES).unwrap();
    assert!((a - d * d).abs() <= 1e-2 * d * d, "{a} vs {}", d * d);
    // the linear path moves the same mass with more action
    let lin = linear_path(&f0, &f1).unwrap();
    let vs: Vec<_> = midpoint_times(BB_NODES).iter().map(|&t| lin.continuity_velocity(t).unwrap()).collect();
    let al = bb_action(&lin, &vs, BB_NODES).unwrap();
    assert!(al >= d * d - 1e-2, "{al}");
}

#[test]
fn action_requires_every_time_node() {
    let (f0, f1) = smooth_pair(100);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    let vs: Vec<_> = midpoint_times(BB_NODES).iter().skip(1).map(|&t| p.velocity(t).unwrap()).collect();
    assert!(matches!(bb_action(&p, &vs, BB_NODES), Err(Error::IncompleteInput(_))));
}

#[test]
fn continuity_equation_residual_is_first_order() {
    let mut errs = Vec::new();
    for n in [100, 200, 400] {
        let (f0, f1) = smooth_pair(n);
        let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
        // common support [0, 1] for both endpoints, so all slices share one mesh
        let t = 0.4;
        let dt = 1e-4;
        let (a, b) = (p.at(t + dt).unwrap(), p.at(t - dt).unwrap());
        let ce = p.derivative(t).unwrap();
        let dom = ce.domain().clone();
        let interior = dom.mesh().interior_nodes(1);
        let r: f64 = interior
            .iter()
            .map(|&k| ((a.values()[k] - b.values()[k]) / (2.0 * dt) - ce.values()[k]).abs() * dom.volumes()[k])
            .sum();
        errs.push(r);
    }
    assert!(errs[2] < 5e-2 && errs[2] < errs[0], "{errs:?}");
}

#[test]
fn geodesic_floor_is_checked() {
    let (f0, f1) = smooth_pair(200);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    let clamp = HessianClamp::from_data(f0.domain().shape(), f1.domain().shape(), f0.floor(), f1.sup()).unwrap();
    for t in [0.2, 0.6] {
        let ft = p.at(t).unwrap();
        assert!(ft.floor() <= f0.floor().min(f1.floor()) / clamp.lambda_cap + 1e-15);
        assert!(ft.inf() >= ft.floor());
    }
}

#[test]
fn linear_path_examples() {
    let d = Domain::unit_interval(100);
    let f0 = DensityGrid::uniform(d.clone());
    let f1 = DensityGrid::from_fn(d, |p| 2.0 * p.x, 0.0).unwrap();
    let p = linear_path(&f0, &f1).unwrap();
    assert_eq!(p.at(0.0).unwrap().values(), f0.values());
    assert_eq!(p.at(1.0).unwrap().values(), f1.values());
    let half = p.at(0.5).unwrap();
    for (x, v) in half.domain().nodes().iter().zip(half.values()) {
        assert!((v - (1.0 + 2.0 * x.x) / 2.0).abs() < 1e-12);
    }
    let dm = integrate(f0.domain(), p.derivative(0.3).unwrap().values());
    assert!(dm.abs() < 1e-8);
    assert!(matches!(p.velocity(0.5), Err(Error::KindError { .. })));
    assert!(matches!(p.at(1.5), Err(Error::RangeError(_))));
    let other = uniform(0.0, 1.0, 50);
    assert!(linear_path(&f0, &other).is_err());
}

#[test]
fn multiplicative_path_examples() {
    let d = Domain::unit_interval(400);
    let f = DensityGrid::uniform(d.clone());
    let zero = ScalarField::constant(d.clone(), 0.0);
    let p0 = multiplicative_path(&f, &zero).unwrap();
    assert_eq!(p0.at(0.3).unwrap().values(), f.values());
    let h = ScalarField::from_fn(d.clone(), |p| (PI * p.x).cos());
    let p = multiplicative_path(&f, &h).unwrap();
    let ft = p.at(0.1).unwrap();
    for (x, v) in ft.domain().nodes().iter().zip(ft.values()) {
        assert!((v - (1.0 + 0.1 * (PI * x.x).cos())).abs() < 1e-12);
    }
    assert!((ft.mass() - 1.0).abs() < 1e-9);
    assert!(p.at(-0.5).is_ok());
    assert!(matches!(p.at(1.0), Err(Error::RangeError(_))));
    let dt = p.derivative(0.2).unwrap();
    assert!(dt.values().iter().zip(h.values()).all(|(a, b)| (a - b).abs() < 1e-12));
    let biased = ScalarField::constant(d, 0.5);
    assert!(matches!(multiplicative_path(&f, &biased), Err(Error::MeanError { .. })));
}

#[test]
fn mass_is_conserved_along_every_kind() {
    let (f0, f1) = smooth_pair(300);
    let h = ScalarField::from_fn(f0.domain().clone(), |p| 0.5 * (2.0 * PI * p.x).cos());
    // make h f mean-free
    let hf: Vec<f64> = h.values().iter().zip(f0.values()).map(|(a, b)| a * b).collect();
    let m = integrate(f0.domain(), &hf);
    let h = h.map(|v| v - m);
    let all = [
        geodesic(&f0, &f1, Backend::Exact).unwrap(),
        linear_path(&f0, &f1).unwrap(),
        multiplicative_path(&f0, &h).unwrap(),
    ];
    for p in &all {
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let ft = p.at(t).unwrap();
            assert!((ft.mass() - 1.0).abs() <= 1e-6, "{:?} at {t}", p.kind());
        }
    }
}

fn disk(n: usize) -> std::sync::Arc<Domain> {
    Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Polar { nr: n, ntheta: 4 * n }).unwrap()
}

#[test]
fn affine_geodesic_in_the_plane() {
    let a = Mat2::new(2.0, 0.0, 0.0, 0.5);
    let dom = disk(16);
    let f0 = DensityGrid::uniform(dom.clone());
    let tdom = Domain::new(Shape::Ellipse { center: [0.0, 0.0], radii: [2.0, 0.5] }, Resolution::Polar { nr: 16, ntheta: 64 }).unwrap();
    let f1 = DensityGrid::uniform(tdom);
    let clamp = HessianClamp::from_data(dom.shape(), f1.domain().shape(), f0.floor(), f1.sup()).unwrap();
    let zeta = PotentialField::analytic(dom.clone(), |x| 0.5 * x.dot(&(a * x)), |x| a * x, |_| a, clamp).unwrap();
    let p = paths::geodesic_with_potential(&f0, &f1, zeta).unwrap();
    for t in [0.25, 0.5] {
        let at = (1.0 - t) * Mat2::identity() + t * a;
        let ft = p.at(t).unwrap();
        let expect = 1.0 / (PI * at.determinant());
        assert!(matches!(ft.domain().shape(), Shape::Ellipse { .. }));
        assert!(ft.values().iter().all(|v| (v - expect).abs() < 1e-3 * expect), "t = {t}");
        let v = p.velocity(t).unwrap();
        let inv = at.try_inverse().unwrap();
        for (z, u) in v.field.domain().nodes().iter().zip(v.field.values()) {
            let want: Vec2 = (a - Mat2::identity()) * (inv * z);
            assert!((u - want).norm() < 1e-8);
        }
    }
}

#[test]
fn discrete_geodesic_in_the_plane_is_close_to_affine() {
    let dom = Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Cartesian { n: 14 }).unwrap();
    let f0 = DensityGrid::uniform(dom);
    let tdom = Domain::new(Shape::Disk { center: [0.4, 0.0], radius: 1.0 }, Resolution::Cartesian { n: 14 }).unwrap();
    let f1 = DensityGrid::uniform(tdom);
    let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
    let v = p.velocity(0.5).unwrap();
    let interior = v.field.domain().mesh().interior_nodes(1);
    for &k in &interior {
        assert!((v.field.values()[k] - Vec2::new(0.4, 0.0)).norm() < 0.2);
    }
    let ft = p.at(0.5).unwrap();
    assert!((ft.mass() - 1.0).abs() < 1e-6);
}

#[test]
fn geodesic_needs_compatible_shapes() {
    let rect = Domain::new(Shape::Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] }, Resolution::Tensor { n: [8, 8] }).unwrap();
    let f0 = DensityGrid::uniform(rect);
    let f1 = DensityGrid::uniform(disk(4));
    assert!(matches!(geodesic(&f0, &f1, Backend::Exact), Err(Error::DomainError(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn geodesic_slices_interpolate_distances(c0 in -0.4f64..0.4, c1 in -0.4f64..0.4, t in 0.05f64..0.95) {
        let d = Domain::unit_interval(400);
        let f0 = DensityGrid::from_fn(d.clone(), |p| 1.0 + c0 * (PI * p.x).cos(), 0.5).unwrap();
        let f1 = DensityGrid::from_fn(d, |p| 1.0 + c1 * (3.0 * PI * p.x).cos(), 0.5).unwrap();
        let p = geodesic(&f0, &f1, Backend::Exact).unwrap();
        let ft = p.at(t).unwrap();
        let total = ot1d::d2_1d(&f0, &f1).unwrap();
        let a = ot1d::d2_1d(&f0, &ft).unwrap();
        let b = ot1d::d2_1d(&ft, &f1).unwrap();
        prop_assert!((a - t * total).abs() <= 2e-3 * total + 1e-6);
        prop_assert!((b - (1.0 - t) * total).abs() <= 2e-3 * total + 1e-6);
        prop_assert!((ft.mass() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn linear_path_mass_and_floor(c in -0.5f64..0.5, t in 0.0f64..1.0) {
        let d = Domain::unit_interval(100);
        let f0 = DensityGrid::from_fn(d.clone(), |p| 1.0 + c * (PI * p.x).cos(), 0.4).unwrap();
        let f1 = DensityGrid::uniform(d);
        let ft = linear_path(&f0, &f1).unwrap().at(t).unwrap();
        prop_assert!((ft.mass() - 1.0).abs() <= 1e-6);
        prop_assert!(ft.inf() >= f0.floor().min(f1.floor()));
    }
}
