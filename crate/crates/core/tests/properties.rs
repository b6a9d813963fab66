use proptest::prelude::*;
use wed_core::reference::{exact_flow, minimizing_movements};
use wed_core::trajectory::{spectral_check, Weights};
use wed_core::value::CacheKey;
use wed_core::wed::{tail_values, wed_value};
use wed_core::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 3)
}

fn spaces() -> impl Strategy<Value = SpaceSpec> {
    prop_oneof![Just(SpaceSpec::Euclidean { dim: 3 }), (1.1..6.0f64).prop_map(|p| SpaceSpec::PNorm { dim: 3, p })]
}

fn sorted3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..2.0f64, 3).prop_map(|gaps| {
        let mut acc = -2.0;
        gaps.iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(space in spaces(), a in vec3(), b in vec3(), c in vec3()) {
        let (a, b, c) = (Point::new(a), Point::new(b), Point::new(c));
        let dab = space.distance(&a, &b).unwrap();
        prop_assert!(dab >= 0.0);
        prop_assert_eq!(space.distance(&a, &a).unwrap(), 0.0);
        prop_assert!((dab - space.distance(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + dab));
        let via = space.distance(&a, &c).unwrap() + space.distance(&c, &b).unwrap();
        prop_assert!(dab <= via * (1.0 + 1e-12));
    }

    #[test]
    fn quantile_distance_is_weighted_l2(a in sorted3(), b in sorted3()) {
        let sp = SpaceSpec::Quantile1D { m: 3 };
        let d = sp.distance(&Point::new(a.clone()), &Point::new(b.clone())).unwrap();
        let direct = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 3.0).sqrt();
        prop_assert!((d - direct).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn weights_sum_to_one(eps in 0.01..1.0f64, mult in 1.0..50.0f64, n in 2usize..400, graded in any::<bool>()) {
        let t = mult * eps;
        let grid = if graded { TimeGrid::exp_graded(eps, t, n) } else { TimeGrid::uniform(t, n) }.unwrap();
        let w = Weights::new(&grid, eps).unwrap();
        prop_assert!((w.total() - 1.0).abs() < 1e-12);
        prop_assert!(w.masses.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn weighted_poincare(eps in 0.02..0.5f64, coeffs in prop::collection::vec(-3.0..3.0f64, 4)) {
        let grid = TimeGrid::uniform(25.0 * eps, 2000).unwrap();
        let w: Vec<f64> = grid.nodes.iter().map(|t| {
            let s = t / eps;
            s * (coeffs[0] + coeffs[1] * s.sin() + coeffs[2] * (-s).exp() + coeffs[3] * s.sqrt())
        }).collect();
        let (lhs, rhs, _) = spectral_check(&w, &grid, eps).unwrap();
        prop_assert!(rhs <= lhs * (1.0 + 1e-9) + 1e-300);
    }

    #[test]
    fn tail_recursion_matches_wed_value(amp in -1.0..1.0f64, rate in 0.1..3.0f64, x0 in -2.0..2.0f64) {
        let p = WedProblem::new(SpaceSpec::Euclidean { dim: 1 }, EnergySpec::double_well(), Point::scalar(x0), 0.1, 1.0, 500);
        let grid = p.grid().unwrap();
        let traj = Trajectory::from_fn(grid.clone(), p.space.clone(), |t| vec![x0 + amp * (1.0 - (-rate * t).exp())]).unwrap();
        let phi: Vec<f64> = traj.points.iter().map(|q| p.energy.value(&q.coords)).collect();
        let tails = tail_values(&grid, 0.1, &phi, &traj.metric_speed());
        let v = wed_value(&p, &traj).unwrap();
        prop_assert!((tails[0] - v).abs() <= 1e-14 * (1.0 + v.abs()));
        prop_assert!(tails.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn yosida_value_below_phi(x in -3.0..3.0f64, t in 0.01..0.45f64) {
        let sp = SpaceSpec::Euclidean { dim: 1 };
        for e in [EnergySpec::double_well(), EnergySpec::convex_quartic(), EnergySpec::quadratic_1d(2.0, 0.5)] {
            let y = yosida(&e, &sp, &Point::scalar(x), t).unwrap();
            prop_assert!(y.value <= e.value(&[x]) + 1e-14);
        }
    }

    #[test]
    fn mm_energy_nonincreasing(x in -2.5..2.5f64, tau in 0.001..0.2f64) {
        let mm = minimizing_movements(&SpaceSpec::Euclidean { dim: 1 }, &EnergySpec::double_well(), &Point::scalar(x), tau, 20).unwrap();
        prop_assert!(mm.phi.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn exact_flow_semigroup(x in -2.5..2.5f64, s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let sp = SpaceSpec::Euclidean { dim: 1 };
        for e in [EnergySpec::double_well(), EnergySpec::convex_quartic(), EnergySpec::quadratic_1d(1.5, -0.3)] {
            let two = exact_flow(&sp, &e, &exact_flow(&sp, &e, &Point::scalar(x), s).unwrap(), t).unwrap();
            let one = exact_flow(&sp, &e, &Point::scalar(x), s + t).unwrap();
            prop_assert!((two.coords[0] - one.coords[0]).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn cache_keys_quantize(x in -10.0..10.0f64, eps in 0.01..1.0f64) {
        let sp = SpaceSpec::Euclidean { dim: 1 };
        let e = EnergySpec::double_well();
        let k = CacheKey::new(&e, &sp, 7, eps, &[x]);
        prop_assert_eq!(&k, &CacheKey::new(&e, &sp, 7, eps, &[x + 1e-15]));
        prop_assert_ne!(&k, &CacheKey::new(&e, &sp, 7, eps, &[x + 1e-10]));
        prop_assert_ne!(&k, &CacheKey::new(&e, &sp, 7, eps * 1.5, &[x]));
    }

    #[test]
    fn csv_floats_round_trip(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let t: Vec<f64> = (0..xs.len()).map(|i| i as f64).collect();
        let report = IdentityReport::new("r", t, xs.clone(), 1.0);
        let mut buf = Vec::new();
        io::write_residuals(&mut buf, &report).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let back: Vec<f64> = rd.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        prop_assert_eq!(back, xs);
    }
}
