use otlab::measures::{DensityGrid, Domain, Mat2, Resolution, Shape, Vec2};
use otlab::ot_discrete::{
    brenier_from_duals, brenier_from_grid, d2_points, grid_sinkhorn, plan_distance, sinkhorn, solve_exact, Backend, GridMeasure,
    HessianClamp, PointSet, SinkhornOptions, EXACT_SIZE_CAP,
};
use otlab::Error;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointSet {
    let coords = (0..n * dim).map(|_| rng.random_range(0.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    PointSet::new(dim, coords, w.iter().map(|v| v / s).collect()).unwrap()
}

fn check_lp(mu: &PointSet, nu: &PointSet) {
    let (plan, duals) = solve_exact(mu, nu).unwrap();
    assert!(plan.marginal_violation() <= 1e-6, "marginals {}", plan.marginal_violation());
    assert!(duals.min_reduced_cost(mu, nu) >= -1e-6, "reduced cost {}", duals.min_reduced_cost(mu, nu));
    assert!((plan.cost - duals.objective(mu, nu)).abs() <= 1e-6, "primal {} dual {}", plan.cost, duals.objective(mu, nu));
    for &(i, j, _) in &plan.entries {
        let rc = mu.point(i).iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - duals.alpha[i] - duals.beta[j];
        assert!(rc.abs() <= 1e-6, "complementary slackness {rc}");
    }
}

#[test]
fn single_atoms() {
    let a = PointSet::new(1, vec![0.0], vec![1.0]).unwrap();
    let b = PointSet::new(1, vec![3.0], vec![1.0]).unwrap();
    let (plan, _) = solve_exact(&a, &b).unwrap();
    assert_eq!(plan.atoms(), 1);
    assert!((plan.cost - 9.0).abs() < 1e-12);
    let r = d2_points(&a, &a, Backend::Exact, 1e-9).unwrap();
    assert_eq!(r.d2, 0.0);
}

#[test]
fn two_atoms_move_by_shift() {
    let a = PointSet::new(1, vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
    let b = PointSet::new(1, vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
    let r = d2_points(&a, &b, Backend::Exact, 1e-9).unwrap();
    assert!((r.d2 - 1.0).abs() < 1e-12);
    assert_eq!(r.atoms, 2);
}

#[test]
fn three_by_three_matches_best_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = vec![1.0 / 3.0; 3];
        let mu = PointSet::new(2, x, w.clone()).unwrap();
        let nu = PointSet::new(2, y, w).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| {
                (0..3)
                    .map(|i| mu.point(i).iter().zip(nu.point(p[i])).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum::<f64>()
                    / 3.0
            })
            .fold(f64::INFINITY, f64::min);
        let (plan, _) = solve_exact(&mu, &nu).unwrap();
        assert!((plan.cost - best).abs() < 1e-12, "{} vs {best}", plan.cost);
        check_lp(&mu, &nu);
    }
}

#[test]
fn lp_optimality_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, n) in [(5, 9), (40, 25), (120, 150)] {
        let mu = random_cloud(&mut rng, m, 2);
        let nu = random_cloud(&mut rng, n, 2);
        check_lp(&mu, &nu);
    }
}

#[test]
fn lp_on_thirty_by_thirty_grid() {
    let dom = Domain::new(Shape::Rectangle { lo: [0.0, 0.0], hi: [1.0, 1.0] }, Resolution::Tensor { n: [30, 30] }).unwrap();
    let f = DensityGrid::from_fn(dom.clone(), |p| 1.0 + 0.5 * (3.0 * p.x).sin(), 0.1).unwrap();
    let g = DensityGrid::from_fn(dom, |p| 1.0 + p.y * p.y, 0.1).unwrap();
    let (mu, _) = PointSet::from_density(&f);
    let (nu, _) = PointSet::from_density(&g);
    check_lp(&mu, &nu);
}

#[test]
fn exact_solver_errors() {
    let a = PointSet::new(1, vec![0.0], vec![1.0]).unwrap();
    let b = PointSet::new(1, vec![0.0], vec![2.0]).unwrap();
    assert!(matches!(solve_exact(&a, &b), Err(Error::MassError { .. })));
    let c = PointSet::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
    assert!(matches!(solve_exact(&a, &c), Err(Error::DimensionError(_))));
    let n = EXACT_SIZE_CAP + 1;
    let big = PointSet::new(1, (0..n).map(|i| i as f64).collect(), vec![1.0 / n as f64; n]).unwrap();
    assert!(matches!(solve_exact(&big, &a), Err(Error::SizeCap { .. })));
    assert!(matches!(PointSet::new(1, vec![0.0], vec![-1.0]), Err(Error::RangeError(_))));
    assert!(matches!(PointSet::new(2, vec![0.0], vec![1.0]), Err(Error::DimensionError(_))));
}

#[test]
fn sinkhorn_on_identical_measures_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40;
    let mu = random_cloud(&mut rng, n, 2);
    let eps = 1e-2;
    let r = sinkhorn(&mu, &mu, &SinkhornOptions { eps, ..Default::default() }).unwrap();
    assert!(r.plan.cost <= 2.0 * eps * (n as f64).ln(), "{}", r.plan.cost);
}

#[test]
fn sinkhorn_close_to_lp_on_thirty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mu = random_cloud(&mut rng, 30, 2);
    let nu = random_cloud(&mut rng, 30, 2);
    let (lp, _) = solve_exact(&mu, &nu).unwrap();
    for eps in [1e-1, 1e-2, 1e-3] {
        let r = sinkhorn(&mu, &nu, &SinkhornOptions { eps, tol: 1e-9, ..Default::default() }).unwrap();
        assert!((r.plan.cost - lp.cost).abs() <= 5.0 * eps, "eps {eps}: {} vs {}", r.plan.cost, lp.cost);
        assert!(r.plan.cost >= lp.cost - 1e-8);
        assert!(r.violation <= 1e-9);
        // entropic costs decrease along the schedule
        for w in r.stage_costs.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9, "{:?}", r.stage_costs);
        }
    }
}

#[test]
fn debiased_sinkhorn_d2_is_close_to_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mu = random_cloud(&mut rng, 30, 2);
    let nu = random_cloud(&mut rng, 30, 2);
    let exact = d2_points(&mu, &nu, Backend::Exact, 1e-9).unwrap();
    let s = d2_points(&mu, &nu, Backend::Sinkhorn { eps: 1e-2 }, 1e-9).unwrap();
    assert!(s.debiased);
    assert_eq!(s.backend, "sinkhorn");
    assert!((s.d2 * s.d2 - exact.d2 * exact.d2).abs() <= 5e-2);
    let s0 = d2_points(&mu, &mu, Backend::Sinkhorn { eps: 1e-2 }, 1e-9).unwrap();
    assert!(s0.d2 < 1e-6);
}

#[test]
fn grid_sinkhorn_matches_dense() {
    let dom = Domain::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0 }, Resolution::Cartesian { n: 12 }).unwrap();
    let f = DensityGrid::from_fn(dom.clone(), |p| 1.0 + 0.3 * p.x, 0.1).unwrap();
    let tdom = Domain::new(Shape::Rectangle { lo: [-0.5, -1.0], hi: [1.5, 0.5] }, Resolution::Tensor { n: [9, 7] }).unwrap();
    let g = DensityGrid::from_fn(tdom, |p| 1.0 + p.y * p.y, 0.1).unwrap();
    let opts = SinkhornOptions { eps: 2e-2, tol: 1e-10, ..Default::default() };
    let gm = grid_sinkhorn(&GridMeasure::from_density(&f).unwrap(), &GridMeasure::from_density(&g).unwrap(), &opts, None).unwrap();
    let (mu, index) = PointSet::from_density(&f);
    let (nu, _) = PointSet::from_density(&g);
    let dense = sinkhorn(&mu, &nu, &opts).unwrap();
    assert!((gm.cost - dense.plan.cost).abs() < 1e-8, "{} vs {}", gm.cost, dense.plan.cost);
    assert!((gm.dual_objective - dense.dual_objective).abs() < 1e-8);
    let bary = dense.plan.barycentric_map().unwrap();
    for (k, &node) in index.iter().enumerate() {
        let b = gm.barycenters[node];
        assert!((b.x - bary[k][0]).abs() < 1e-7 && (b.y - bary[k][1]).abs() < 1e-7);
    }
    // a warm start at the converged potentials finishes immediately
    let warm = grid_sinkhorn(
        &GridMeasure::from_density(&f).unwrap(),
        &GridMeasure::from_density(&g).unwrap(),
        &SinkhornOptions { eps_start: 2e-2, ..opts.clone() },
        Some((&gm.f, &gm.g)),
    )
    .unwrap();
    assert!(warm.iterations <= 2);
}

fn disk_grid(center: [f64; 2], n: usize) -> DensityGrid {
    DensityGrid::uniform(Domain::new(Shape::Disk { center, radius: 1.0 }, Resolution::Cartesian { n }).unwrap())
}

fn clamp_for(f: &DensityGrid, g: &DensityGrid) -> HessianClamp {
    HessianClamp::from_data(f.domain().shape(), g.domain().shape(), f.floor(), g.sup()).unwrap()
}

#[test]
fn brenier_identity_and_translation() {
    let f = disk_grid([0.0, 0.0], 16);
    let h = f.domain().spacing();
    for shift in [[0.0, 0.0], [0.5, -0.25]] {
        let g = disk_grid(shift, 16);
        let (mu, index) = PointSet::from_density(&f);
        let (nu, _) = PointSet::from_density(&g);
        let (plan, duals) = solve_exact(&mu, &nu).unwrap();
        let pot = brenier_from_duals(&duals, &plan, f.domain(), &index, clamp_for(&f, &g)).unwrap();
        let v = Vec2::new(shift[0], shift[1]);
        for &node in &index {
            let x = f.domain().nodes()[node];
            assert!((pot.grad.values()[node] - (x + v)).norm() <= 2.0 * h);
        }
    }
}

#[test]
fn brenier_affine_map_converges() {
    let a = Mat2::new(2.0, 0.0, 0.0, 0.5);
    let mut errs = Vec::new();
    for n in [10, 16] {
        let f = disk_grid([0.0, 0.0], n);
        let tdom = Domain::new(Shape::Ellipse { center: [0.0, 0.0], radii: [2.0, 0.5] }, Resolution::Cartesian { n }).unwrap();
        let g = DensityGrid::uniform(tdom);
        let (mu, index) = PointSet::from_density(&f);
        let (nu, _) = PointSet::from_density(&g);
        let (plan, duals) = solve_exact(&mu, &nu).unwrap();
        let pot = brenier_from_duals(&duals, &plan, f.domain(), &index, clamp_for(&f, &g)).unwrap();
        let err = index
            .iter()
            .map(|&k| (pot.grad.values()[k] - a * f.domain().nodes()[k]).norm())
            .fold(0.0, f64::max);
        assert!(err <= 4.0 * f.domain().spacing(), "n = {n}: {err}");
        errs.push(err);
    }
    assert!(errs[1] <= errs[0] + 1e-12, "{errs:?}");
}

#[test]
fn grid_potential_recovers_affine_map() {
    let n = 24;
    let f = disk_grid([0.0, 0.0], n);
    let tdom = Domain::new(Shape::Ellipse { center: [0.0, 0.0], radii: [2.0, 0.5] }, Resolution::Cartesian { n }).unwrap();
    let g = DensityGrid::uniform(tdom);
    let opts = SinkhornOptions { eps: 1e-3, tol: 1e-6, ..Default::default() };
    let r = grid_sinkhorn(&GridMeasure::from_density(&f).unwrap(), &GridMeasure::from_density(&g).unwrap(), &opts, None).unwrap();
    let pot = brenier_from_grid(&r, f.domain(), clamp_for(&f, &g)).unwrap();
    let dom = f.domain();
    let interior = dom.mesh().interior_nodes(2);
    let a = Mat2::new(2.0, 0.0, 0.0, 0.5);
    let err = interior.iter().map(|&k| (pot.grad.values()[k] - a * dom.nodes()[k]).norm()).fold(0.0, f64::max);
    assert!(err < 0.1, "{err}");
    let herr = interior.iter().map(|&k| (pot.hess.values()[k] - a).norm()).sum::<f64>() / interior.len() as f64;
    assert!(herr < 0.2, "{herr}");
}

#[test]
fn plan_distance_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mu = random_cloud(&mut rng, 8, 1);
    let nu = random_cloud(&mut rng, 8, 1);
    let (p, _) = solve_exact(&mu, &nu).unwrap();
    assert!(plan_distance(&p, &p).unwrap() < 1e-7);
    // shifting the target by s moves every atom of the plan by s
    let shifted = PointSet::new(1, nu.coords.iter().map(|y| y + 0.3).collect(), nu.weights.clone()).unwrap();
    let (q, _) = solve_exact(&mu, &shifted).unwrap();
    assert!((plan_distance(&p, &q).unwrap() - 0.3).abs() < 1e-7);
}

#[test]
fn hessian_clamp_from_data() {
    let disk = Shape::Disk { center: [0.0, 0.0], radius: 1.0 };
    let c = HessianClamp::from_data(&disk, &disk, 0.5, 2.0).unwrap();
    assert!((c.lambda_cap - 10.0).abs() < 1e-12);
    assert!((c.lambda_floor - 0.025).abs() < 1e-12);
    assert!(matches!(HessianClamp::from_data(&disk, &disk, 0.0, 1.0), Err(Error::FloorError(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_contracts_hold(seed in 0u64..10_000, m in 1usize..30, n in 1usize..30, dim in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_cloud(&mut rng, m, dim);
        let nu = random_cloud(&mut rng, n, dim);
        check_lp(&mu, &nu);
    }

    #[test]
    fn exact_d2_is_a_metric(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, 10, 2);
        let b = random_cloud(&mut rng, 12, 2);
        let c = random_cloud(&mut rng, 7, 2);
        let d = |x: &PointSet, y: &PointSet| d2_points(x, y, Backend::Exact, 1e-9).unwrap().d2;
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn sinkhorn_cost_bounds_lp(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_cloud(&mut rng, 12, 2);
        let nu = random_cloud(&mut rng, 15, 2);
        let (lp, _) = solve_exact(&mu, &nu).unwrap();
        let r = sinkhorn(&mu, &nu, &SinkhornOptions { eps: 5e-2, tol: 1e-10, ..Default::default() }).unwrap();
        prop_assert!(r.plan.cost >= lp.cost - 1e-8);
        prop_assert!(r.plan.marginal_violation() <= 1e-6);
    }
}

#[test]
fn self_transport_matches_alternating_sinkhorn() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mu = random_cloud(&mut rng, 20, 2);
    let opts = SinkhornOptions { eps: 5e-2, tol: 1e-7, ..Default::default() };
    let sym = otlab::ot_discrete::self_transport_objective(&mu, &opts).unwrap();
    let alt = sinkhorn(&mu, &mu, &opts).unwrap().dual_objective;
    assert!((sym - alt).abs() < 1e-6, "{sym} vs {alt}");
}
