use fbcert_core::games::PevGame;
use fbcert_core::operators::{
    contraction_factor, estimate_constants, normal_cone_distance, project_box,
    project_box_halfspace, AffineInNoise, BoxHalfspaceSet, BoxSet, LossBound, OperatorConstants,
    PolyhedralSet,
};
use fbcert_core::splitting::Dataset;
use fbcert_core::{Error, Execution};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Nearest point of a 2-D closed set by repeated grid refinement.
fn grid_nearest_2d(
    x: &DVector<f64>,
    lo: [f64; 2],
    hi: [f64; 2],
    feasible: impl Fn(f64, f64) -> bool,
) -> DVector<f64> {
    let (mut a0, mut a1, mut b0, mut b1) = (lo[0], hi[0], lo[1], hi[1]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..6 {
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let p = a0 + (a1 - a0) * i as f64 / n as f64;
                let q = b0 + (b1 - b0) * j as f64 / n as f64;
                if feasible(p, q) {
                    let d = (p - x[0]).powi(2) + (q - x[1]).powi(2);
                    if d < best.0 {
                        best = (d, p, q);
                    }
                }
            }
        }
        let (w0, w1) = ((a1 - a0) / 20.0, (b1 - b0) / 20.0);
        a0 = (best.1 - w0).max(lo[0]);
        a1 = (best.1 + w0).min(hi[0]);
        b0 = (best.2 - w1).max(lo[1]);
        b1 = (best.2 + w1).min(hi[1]);
    }
    dv(&[best.1, best.2])
}

#[test]
fn box_projection_examples() {
    let b = BoxSet::uniform(2, 0.0, 2.0).unwrap();
    assert_eq!(project_box(&dv(&[3.0, -1.0]), &b).unwrap(), dv(&[2.0, 0.0]));
    assert_eq!(project_box(&dv(&[0.5, 1.5]), &b).unwrap(), dv(&[0.5, 1.5]));
    assert!(matches!(project_box(&dv(&[1.0]), &b), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn box_projection_matches_grid_search() {
    let b = BoxSet::new(dv(&[-1.0, 0.0]), dv(&[1.0, 3.0])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x = dv(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..5.0)]);
        let grid = grid_nearest_2d(&x, [-1.0, 0.0], [1.0, 3.0], |_, _| true);
        assert!((project_box(&x, &b).unwrap() - grid).amax() < 1e-6);
    }
}

#[test]
fn box_halfspace_projection_matches_grid_search() {
    let set = BoxHalfspaceSet::new(DVector::zeros(2), DVector::from_element(2, 2.5), 3.0).unwrap();
    let feasible = |p: f64, q: f64| p + q >= 3.0 - 1e-12;
    for (x, want) in [([1.0, 1.0], [1.5, 1.5]), ([3.0, 0.0], [2.5, 0.5])] {
        let x = dv(&x);
        let grid = grid_nearest_2d(&x, [0.0, 0.0], [2.5, 2.5], feasible);
        let p = project_box_halfspace(&x, &set).unwrap();
        assert!((&p - &grid).amax() < 1e-6, "{p} vs grid {grid}");
        assert!((p - dv(&want)).amax() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x = dv(&[rng.random_range(-2.0..4.0), rng.random_range(-2.0..4.0)]);
        let grid = grid_nearest_2d(&x, [0.0, 0.0], [2.5, 2.5], feasible);
        assert!((project_box_halfspace(&x, &set).unwrap() - grid).amax() < 1e-6);
    }
}

#[test]
fn infeasible_set_is_rejected() {
    let r = BoxHalfspaceSet::new(DVector::zeros(2), DVector::from_element(2, 1.0), 2.5);
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

#[test]
fn normal_cone_distance_examples() {
    let b = BoxSet::uniform(2, 0.0, 2.0).unwrap();
    assert_eq!(normal_cone_distance(&dv(&[1.0, 1.0]), &dv(&[3.0, 4.0]), &b).unwrap(), 5.0);
    assert_eq!(normal_cone_distance(&dv(&[2.0, 1.0]), &dv(&[-3.0, 4.0]), &b).unwrap(), 4.0);
    assert!(normal_cone_distance(&dv(&[2.5, 1.0]), &dv(&[0.0, 0.0]), &b).is_err());
}

/// `min_{c ≥ 0} ‖G c + v‖` for two generators by grid refinement over `c`.
fn brute_cone_distance(g: [&DVector<f64>; 2], v: &DVector<f64>) -> f64 {
    let (mut lo, mut hi) = ([0.0, 0.0], [20.0, 20.0]);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..8 {
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let a = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
                let b = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
                let d = (g[0] * a + g[1] * b + v).norm();
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let w = [(hi[0] - lo[0]) / 20.0, (hi[1] - lo[1]) / 20.0];
        lo = [(best.1 - w[0]).max(0.0), (best.2 - w[1]).max(0.0)];
        hi = [best.1 + w[0], best.2 + w[1]];
    }
    best.0
}

#[test]
fn box_halfspace_normal_cone_matches_brute_force() {
    // Upper face of coordinate 0 and the sum constraint are both active.
    let set = BoxHalfspaceSet::new(DVector::zeros(3), DVector::from_element(3, 2.0), 3.0).unwrap();
    let x = dv(&[2.0, 0.5, 0.5]);
    let e0 = dv(&[1.0, 0.0, 0.0]);
    let minus_ones = dv(&[-1.0, -1.0, -1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..25 {
        let v = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
        let exact = normal_cone_distance(&x, &v, &set).unwrap();
        let brute = brute_cone_distance([&e0, &minus_ones], &v);
        assert!((exact - brute).abs() < 1e-6, "v = {v}: {exact} vs {brute}");
    }
}

#[test]
fn normal_cone_distance_vanishes_exactly_on_the_cone() {
    let set = BoxHalfspaceSet::new(DVector::zeros(3), DVector::from_element(3, 2.0), 3.0).unwrap();
    let x = dv(&[2.0, 0.5, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (a, b): (f64, f64) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let z = dv(&[a - b, -b, -b]);
        assert!(normal_cone_distance(&x, &(-&z), &set).unwrap() < 1e-12);
        // Pulling coordinate 1 away from the cone direction leaves the cone.
        let off = dv(&[0.0, 0.3, 0.0]);
        assert!(normal_cone_distance(&x, &(-(z + off)), &set).unwrap() > 1e-3);
    }
}

fn random_set(rng: &mut ChaCha8Rng, t: usize) -> BoxHalfspaceSet {
    let upper = DVector::from_fn(t, |_, _| rng.random_range(0.5..3.0));
    let zeta = rng.random_range(0.0..0.7) * upper.sum();
    BoxHalfspaceSet::new(DVector::zeros(t), upper, zeta).unwrap()
}

fn random_feasible(rng: &mut ChaCha8Rng, set: &BoxHalfspaceSet) -> DVector<f64> {
    loop {
        let q = DVector::from_fn(set.upper().len(), |j, _| rng.random_range(0.0..=set.upper()[j]));
        if q.sum() >= set.zeta() {
            return q;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_optimal(seed in any::<u64>(), t in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_set(&mut rng, t);
        let x = DVector::from_fn(t, |_, _| rng.random_range(-4.0..6.0));
        let p = set.project(&x).unwrap();
        prop_assert!(set.contains(&p));
        let dp = (&x - &p).norm();
        for _ in 0..1000 {
            let q = random_feasible(&mut rng, &set);
            prop_assert!(dp <= (&x - q).norm() + 1e-12);
        }
    }

    #[test]
    fn projection_is_firmly_nonexpansive(seed in any::<u64>(), t in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_set(&mut rng, t);
        for _ in 0..50 {
            let x = DVector::from_fn(t, |_, _| rng.random_range(-4.0..6.0));
            let y = DVector::from_fn(t, |_, _| rng.random_range(-4.0..6.0));
            let d = set.project(&x).unwrap() - set.project(&y).unwrap();
            prop_assert!(d.norm_squared() <= d.dot(&(&x - &y)) + 1e-12);
        }
    }

    #[test]
    fn projection_residual_lies_in_normal_cone(seed in any::<u64>(), t in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_set(&mut rng, t);
        let x = DVector::from_fn(t, |_, _| rng.random_range(-4.0..6.0));
        let p = set.project(&x).unwrap();
        // x − p ∈ N(p), so v = −(x − p) has distance 0.
        prop_assert!(normal_cone_distance(&p, &(&p - &x), &set).unwrap() < 1e-9);
    }

    #[test]
    fn box_normal_cone_matches_componentwise_formula(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = BoxSet::uniform(4, 0.0, 1.0).unwrap();
        let x = DVector::from_fn(4, |_, _| [0.0, 0.5, 1.0][rng.random_range(0..3)]);
        let v = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let expected = (0..4).map(|j| {
            let r: f64 = v[j];
            match x[j] {
                0.0 => r.min(0.0),
                1.0 => r.max(0.0),
                _ => r,
            }
        }).map(|r| r * r).sum::<f64>().sqrt();
        prop_assert!((normal_cone_distance(&x, &v, &b).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn contraction_identity(kappa in 1e-2f64..10.0, ratio in 0.01f64..1.0, frac in 1e-4f64..0.999) {
        let mu = ratio * kappa;
        let gamma = frac * 2.0 * mu / (kappa * kappa);
        let c = OperatorConstants::new(mu, kappa, None, 1.0, LossBound::analytic(0.0)).unwrap();
        let tau = contraction_factor(gamma, &c).unwrap();
        prop_assert!((0.0..1.0).contains(&tau));
        prop_assert!((tau * tau + gamma * (2.0 * mu - gamma * kappa * kappa) - 1.0).abs() < 1e-14);
    }
}

fn uniform_sampler(seed: u64, dim: usize, hi: f64) -> impl FnMut() -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move || DVector::from_fn(dim, |_, _| rng.random_range(0.0..hi))
}

#[test]
fn estimated_constants_of_affine_oracle() {
    let oracle = AffineInNoise(|x: &DVector<f64>, xi: &DVector<f64>| x * 2.0 + xi);
    let data = Dataset::new(vec![dv(&[0.1, 0.2, 0.3]), dv(&[-1.0, 0.0, 1.0])]).unwrap();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let est = estimate_constants(&oracle, uniform_sampler(1, 3, 1.0), &data, 50, exec).unwrap();
        assert!((est.mu - 2.0).abs() < 1e-12 && (est.kappa - 2.0).abs() < 1e-12);
        assert!((est.theta.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(est.pairs_used, 50);
    }
}

#[test]
fn zero_oracle_and_degenerate_pairs_are_rejected() {
    let zero = |x: &DVector<f64>, _: &DVector<f64>| DVector::zeros(x.len());
    let data = Dataset::new(vec![dv(&[0.0])]).unwrap();
    let r = estimate_constants(&zero, uniform_sampler(2, 2, 1.0), &data, 10, Execution::Sequential);
    assert!(matches!(r, Err(Error::Degenerate(_))));
    let fixed = || dv(&[1.0, 1.0]);
    let ident = |x: &DVector<f64>, _: &DVector<f64>| x.clone();
    let r = estimate_constants(&ident, fixed, &data, 10, Execution::Sequential);
    assert!(matches!(r, Err(Error::Degenerate(_))));
    assert!(estimate_constants(&ident, fixed, &data, 0, Execution::Sequential).is_err());
}

#[test]
fn pev_estimates_are_one_sided() {
    let game = PevGame::random(11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let prices = Dataset::new(
        (0..20)
            .map(|_| DVector::from_fn(14, |_, _| rng.random_range(0.0..0.2)))
            .collect(),
    )
    .unwrap();
    let analytic = game.analytic_constants(&prices, 0.02).unwrap();
    let est = estimate_constants(&game, uniform_sampler(13, 280, 2.5), &prices, 300, Execution::Parallel)
        .unwrap();
    assert!(est.kappa <= analytic.kappa * (1.0 + 1e-12));
    assert!(est.mu >= analytic.mu * (1.0 - 1e-12));
    assert!(est.bound_m <= analytic.bound_m * (1.0 + 1e-12));
}
