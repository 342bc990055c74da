use otlab::measures::{DensityGrid, Domain, Resolution, Shape};
use otlab::ot1d::{self, CounterexampleDensity};
use otlab::Error;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(a: f64, b: f64, n: usize) -> DensityGrid {
    DensityGrid::uniform(Domain::interval(a, b, n).unwrap())
}

fn smooth_random(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DensityGrid {
    // 1 + Σ c_k cos(kπx) with Σ|c_k| ≤ 0.75 keeps the normalized density above 0.25
    let cs: Vec<f64> = (1..=4).map(|_| rng.random_range(-0.1875..0.1875)).collect();
    let d = Domain::unit_interval(n);
    DensityGrid::from_fn(d, |p| 1.0 + cs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * p.x).cos()).sum::<f64>(), floor).unwrap()
}

#[test]
fn cdf_of_uniform_is_identity() {
    let f = uniform(0.0, 1.0, 100);
    let c = ot1d::cdf(&f).unwrap();
    for (x, v) in c.nodes().iter().zip(c.values()) {
        assert!((x - v).abs() < 1e-9);
    }
}

#[test]
fn cdf_of_linear_density() {
    let f = DensityGrid::from_fn(Domain::unit_interval(200), |p| 2.0 * p.x, 0.0).unwrap();
    let c = ot1d::cdf(&f).unwrap();
    assert!((c.eval(0.5) - 0.25).abs() < 1e-6);
    assert!((c.quantile(0.25).unwrap() - 0.5).abs() < 1e-5);
}

#[test]
fn cdf_of_symmetric_counterexample_density() {
    let g = CounterexampleDensity::new(1.0, 0.5).grid(1000).unwrap();
    let c = ot1d::cdf(&g).unwrap();
    assert!((c.eval(0.5) - 0.5).abs() < 1e-6);
}

#[test]
fn cdf_rejects_two_dimensional_input() {
    let d = Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Polar { nr: 4, ntheta: 8 }).unwrap();
    let f = DensityGrid::uniform(d);
    assert!(matches!(ot1d::cdf(&f), Err(Error::DimensionError(_))));
}

#[test]
fn quantile_examples() {
    let c = ot1d::cdf(&uniform(0.0, 1.0, 64)).unwrap();
    assert!((c.quantile(0.25).unwrap() - 0.25).abs() < 1e-9);
    assert!(matches!(c.quantile(1.5), Err(Error::RangeError(_))));
    assert!(matches!(c.quantile(-0.1), Err(Error::RangeError(_))));
    // numerical CDF of the degenerate density against the closed form
    let eps = 1e-3;
    let fam = CounterexampleDensity::from_eps(2.0, eps);
    let g = fam.grid(4000).unwrap();
    let q = ot1d::cdf(&g).unwrap().quantile(0.5).unwrap();
    let closed = (1.0 - eps.powf(1.0 / 3.0)) / (2.0 * (1.0 - eps));
    assert!((closed - 0.45045).abs() < 1e-5);
    assert!((q - closed).abs() < 1e-4, "{q} vs {closed}");
    assert!((fam.quantile(0.5) - closed).abs() < 1e-12);
}

#[test]
fn quantile_on_flat_stretch_takes_leftmost_point() {
    let d = Domain::unit_interval(10);
    let f = DensityGrid::from_fn(d, |p| if p.x > 0.35 && p.x < 0.65 { 0.0 } else { 1.0 }, 0.0).unwrap();
    let c = ot1d::cdf(&f).unwrap();
    let s = c.eval(0.4);
    assert_eq!(c.eval(0.6), s);
    assert!((c.quantile(s).unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn counterexample_closed_forms_are_consistent() {
    let fam = CounterexampleDensity::from_eps(2.0, 0.05);
    for k in 0..=50 {
        let y = k as f64 / 50.0;
        assert!((fam.cdf(fam.quantile(y)) - y).abs() < 1e-12);
    }
    // density integrates to one
    let n = 200_000;
    let mass: f64 = (0..n).map(|k| fam.density((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    assert!((mass - 1.0).abs() < 1e-8);
}

#[test]
fn brenier_map_examples() {
    let f = uniform(0.0, 1.0, 100);
    let id = ot1d::brenier_map_1d(&f, &f).unwrap();
    for (p, t) in f.domain().nodes().iter().zip(id.values()) {
        assert!((p.x - t).abs() < 1e-8);
    }
    let s = 0.3;
    let t = ot1d::brenier_map_1d(&f, &uniform(s, 1.0 + s, 100)).unwrap();
    for (p, v) in f.domain().nodes().iter().zip(t.values()) {
        assert!((p.x + s - v).abs() < 1e-8);
    }
    let half = ot1d::brenier_map_1d(&f, &uniform(0.0, 0.5, 77)).unwrap();
    for (p, v) in f.domain().nodes().iter().zip(half.values()) {
        assert!((p.x / 2.0 - v).abs() < 1e-6);
    }
    assert!(half.min_slope() > 0.49);
}

#[test]
fn d2_examples() {
    let f = uniform(0.0, 1.0, 100);
    assert!(ot1d::d2_1d(&f, &f).unwrap() < 1e-8);
    let s = 0.37;
    assert!((ot1d::d2_1d(&f, &uniform(s, 1.0 + s, 100)).unwrap() - s).abs() < 1e-7);
    let d = ot1d::d2_1d(&f, &uniform(0.0, 0.5, 100)).unwrap();
    assert!((d - 1.0 / 12f64.sqrt()).abs() < 1e-5, "{d}");
}

#[test]
fn l1_distance_of_shifted_uniforms() {
    let s = 0.1;
    let d = ot1d::l1_distance_1d(&uniform(0.0, 1.0, 100), &uniform(s, 1.0 + s, 100)).unwrap();
    assert!((d - 2.0 * s).abs() < 1e-12, "{d}");
}

#[test]
fn linfty_l1_examples() {
    let f = uniform(0.0, 1.0, 200);
    let r = ot1d::verify_linfty_l1(&f, &f, &f, &f, 1.0 - 1e-9).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!(r.holds);
    let s = 0.05;
    let g1 = uniform(s, 1.0 + s, 200);
    let r = ot1d::verify_linfty_l1(&f, &f, &f, &g1, 1.0 - 1e-12).unwrap();
    assert!((r.lhs - s).abs() < 1e-9);
    assert!((r.rhs - 2.0 * s).abs() < 1e-9);
    assert!(r.holds);
    assert_eq!(ot1d::verify_linfty_l1(&f, &f, &f, &f, 0.0).unwrap_err(), Error::FloorError(0.0));
}

#[test]
fn linfty_l1_holds_on_seeded_random_quadruples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let q: Vec<DensityGrid> = (0..4).map(|_| smooth_random(&mut rng, 400, 0.2)).collect();
        let r = ot1d::verify_linfty_l1(&q[0], &q[1], &q[2], &q[3], 0.2).unwrap();
        assert!(r.holds, "{r:?}");
    }
}

#[test]
fn sweep_matches_closed_form_midpoint() {
    let rows = ot1d::counterexample_sweep(2.0, 0.9, &[1e-3]).unwrap();
    let r = &rows[0];
    let eps: f64 = 1e-3;
    assert!((r.midpoint_gap - (eps.cbrt() - eps) / (2.0 * (1.0 - eps))).abs() < 1e-12);
    assert!(r.map_gap >= r.midpoint_gap - 1e-15);
    assert!((r.midpoint_gap - 0.0496).abs() < 1e-3);
}

#[test]
fn sweep_ratio_increases_as_eps_shrinks() {
    let rows = ot1d::counterexample_sweep(2.0, 0.9, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].ratio > w[0].ratio, "{rows:?}");
    }
}

#[test]
fn sweep_input_errors() {
    assert_eq!(ot1d::counterexample_sweep(2.0, 0.9, &[0.0]).unwrap_err(), Error::DegenerateEps(0.0));
    assert!(matches!(ot1d::counterexample_sweep(2.0, 0.3, &[1e-2]), Err(Error::ExponentError(_))));
    assert!(matches!(ot1d::counterexample_sweep(1.0, 0.9, &[1e-2]), Err(Error::RangeError(_))));
}

#[test]
fn potential_derivative_is_the_map() {
    let f = uniform(0.0, 1.0, 400);
    let g = DensityGrid::from_fn(Domain::unit_interval(400), |p| 1.0 + 0.5 * (std::f64::consts::PI * p.x).cos(), 0.4).unwrap();
    let t = ot1d::brenier_map_1d(&f, &g).unwrap();
    let phi = t.potential();
    assert!(phi.mean().abs() < 1e-14);
    let grad = phi.gradient();
    for (k, v) in grad.values().iter().enumerate().skip(1).take(398) {
        assert!((v.x - t.values()[k]).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d2_is_symmetric_and_satisfies_triangle(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = smooth_random(&mut rng, 300, 0.0);
        let b = smooth_random(&mut rng, 200, 0.0);
        let c = smooth_random(&mut rng, 250, 0.0);
        let ab = ot1d::d2_1d(&a, &b).unwrap();
        prop_assert!((ab - ot1d::d2_1d(&b, &a).unwrap()).abs() <= 1e-8);
        let bc = ot1d::d2_1d(&b, &c).unwrap();
        let ac = ot1d::d2_1d(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 3e-8);
    }

    #[test]
    fn brenier_map_is_monotone_and_pushes_forward(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = smooth_random(&mut rng, 300, 0.0);
        let g = smooth_random(&mut rng, 300, 0.0);
        let t = ot1d::brenier_map_1d(&f, &g).unwrap();
        prop_assert!(t.min_slope() >= 0.0);
        let cf = ot1d::cdf(&f).unwrap();
        let cg = ot1d::cdf(&g).unwrap();
        let h = f.domain().spacing();
        for (k, &tx) in t.values().iter().enumerate() {
            prop_assert!((cg.eval(tx) - cf.values()[k]).abs() <= 5.0 * h);
        }
    }

    #[test]
    fn quantile_inverts_cdf(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = smooth_random(&mut rng, 300, 0.0);
        let c = ot1d::cdf(&f).unwrap();
        let h = f.domain().spacing();
        for &x in c.nodes() {
            prop_assert!((c.quantile(c.eval(x)).unwrap() - x).abs() <= 2.0 * h);
        }
    }

    #[test]
    fn linfty_l1_random(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<DensityGrid> = (0..4).map(|_| smooth_random(&mut rng, 200, 0.2)).collect();
        prop_assert!(ot1d::verify_linfty_l1(&q[0], &q[1], &q[2], &q[3], 0.2).unwrap().holds);
    }
}
