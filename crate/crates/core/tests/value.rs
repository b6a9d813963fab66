use wed_core::value::*;
use wed_core::*;

fn r1() -> SpaceSpec {
    SpaceSpec::Euclidean { dim: 1 }
}

fn kappa(eps: f64) -> f64 {
    ((1.0 + 4.0 * eps).sqrt() - 1.0) / (4.0 * eps)
}

fn quad_ctx() -> ValueContext {
    ValueContext::new(r1(), EnergySpec::quadratic_1d(1.0, 0.0), ValueOptions::default()).unwrap()
}

#[test]
fn quadratic_value_is_kappa_x_squared() {
    let ctx = quad_ctx();
    for x in [0.5, 1.0, -2.0] {
        let v = ctx.value(&Point::scalar(x), 0.1).unwrap();
        assert!((v - kappa(0.1) * x * x).abs() < 1e-3 * kappa(0.1) * x * x);
    }
}

#[test]
fn minimum_of_phi_is_a_fixed_point() {
    let ctx = ValueContext::new(r1(), EnergySpec::double_well(), ValueOptions::default()).unwrap();
    let s = ctx.sample(&Point::scalar(1.0), 0.05).unwrap();
    assert!(s.v.abs() < 1e-12 && s.g.abs() < 1e-5, "{} {}", s.v, s.g);
    for x in [-1.3, 0.2, 0.9] {
        let s = ctx.sample(&Point::scalar(x), 0.05).unwrap();
        assert!(s.v <= s.phi);
    }
}

#[test]
fn values_along_the_minimizer() {
    let ctx = quad_ctx();
    let s = ctx.sample(&Point::scalar(1.0), 0.1).unwrap();
    let sol = s.solution.unwrap();
    let along = value_along(&sol);
    assert_eq!(along[0], sol.objective);
    for (i, (t, u)) in sol.nodes().iter().zip(&sol.trajectory.points).enumerate() {
        if *t <= 1.0 {
            let exact = kappa(0.1) * u.coords[0] * u.coords[0];
            assert!((along[i] - exact).abs() <= 1e-3 * exact);
        }
    }
    for k in [100, 400, 900] {
        let fresh = ctx.value(&sol.trajectory.points[k], 0.1).unwrap();
        assert!((fresh - along[k]).abs() <= 5e-3 * fresh);
    }
    assert!(a_priori_report(&sol).pass);
}

#[test]
fn dpp_at_zero_and_on_quadratic() {
    let ctx = quad_ctx();
    let sol = ctx.sample(&Point::scalar(1.0), 0.1).unwrap().solution.unwrap();
    let zero = check_dpp(&ctx, &sol, &[0.0]).unwrap();
    assert!(zero.iter().all(|r| r.max_residual < 1e-14));
    let r = check_dpp(&ctx, &sol, &[0.1, 0.2, 0.5]).unwrap();
    assert!(r.iter().all(|r| r.pass), "{r:?}");
}

#[test]
fn fundamental_identity_on_constant_and_quadratic() {
    let ctx = ValueContext::new(r1(), EnergySpec::double_well(), ValueOptions::default()).unwrap();
    let c = ctx.sample(&Point::scalar(1.0), 0.1).unwrap().solution.unwrap();
    assert!(check_fundamental_identity(&c, 0.05).iter().all(|r| r.max_residual < 1e-10));
    let p = WedProblem::new(r1(), EnergySpec::quadratic_1d(1.0, 0.0), Point::scalar(1.0), 0.1, 2.0, 4000);
    let reports = check_fundamental_identity(&solve(&p).unwrap(), 0.05);
    assert!(reports.iter().all(|r| r.pass), "{reports:?}");
}

#[test]
fn kappa_decreases_in_epsilon() {
    let ctx = quad_ctx();
    let (reports, rows) = check_eps_monotonicity(&ctx, &[Point::scalar(1.0)], &[0.2, 0.1, 0.05, 0.025]).unwrap();
    assert!(reports.iter().all(|r| r.pass));
    for r in &rows {
        assert!((r.v - kappa(r.epsilon)).abs() < 1e-3);
    }
    assert!(rows.windows(2).all(|w| w[1].v > w[0].v));
    assert!((0.5 - rows.last().unwrap().v) < 0.02);
}

#[test]
fn yosida_bound_on_quadratic() {
    let ctx = quad_ctx();
    let b = check_yosida_bound(&ctx, &Point::scalar(1.0), 0.1, 64_000).unwrap();
    // ∫ x²/(2(1+t)) dμ_ε by midpoint quadrature at 10⁵ points on [0, 60ε]
    let n = 100_000;
    let (eps, t_end) = (0.1f64, 6.0f64);
    let h = t_end / n as f64;
    let oracle: f64 = (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) * h;
            0.5 / (1.0 + t) * (-t / eps).exp() / eps * h
        })
        .sum();
    assert!((b.bound - oracle).abs() < 1e-6, "{} vs {oracle}", b.bound);
    assert!(b.margin > 0.0);

    let dw = ValueContext::new(r1(), EnergySpec::double_well(), ValueOptions::default()).unwrap();
    let at_min = check_yosida_bound(&dw, &Point::scalar(-1.0), 0.1, 2000).unwrap();
    assert!(at_min.v.abs() < 1e-12 && at_min.bound.abs() < 1e-12);
    assert!(check_yosida_bound(&dw, &Point::scalar(0.3), 0.05, 64_000).unwrap().margin > 0.0);
}

#[test]
fn proto_slope_on_quadratic_and_critical_points() {
    let ctx = quad_ctx();
    let (reports, rows) = wed_slope_compare(&ctx, &Point::scalar(1.0), &[0.1], 1e-2, 1.0).unwrap();
    let k = kappa(0.1);
    assert!((rows[0].g - ((1.0 - 2.0 * k) / 0.1).sqrt()).abs() < 1e-3);
    assert!(rows[0].g <= 1.0);
    assert!(reports[0].pass);
    let (_, at_zero) = wed_slope_compare(&ctx, &Point::scalar(0.0), &[0.1], 1e-2, 1e-2).unwrap();
    assert!(at_zero[0].g < 1e-5);
}

#[test]
fn hamilton_jacobi_on_quadratic() {
    let ctx = quad_ctx();
    let hj = check_hj(&ctx, &Point::scalar(1.0), 0.1, &ProbeOptions::default()).unwrap();
    assert!((hj.estimate - 2.0 * kappa(0.1)).abs() <= 1e-2 * 2.0 * kappa(0.1));
    assert!((hj.estimate - hj.g).abs() <= 1e-2 * hj.g);
    let (at_min, _) = value_slope_estimate(&ctx, &Point::scalar(0.0), 0.1, &ProbeOptions::default()).unwrap();
    assert_eq!(at_min, 0.0);
}

#[test]
fn hamilton_jacobi_on_convex_quartic() {
    let ctx = ValueContext::new(r1(), EnergySpec::convex_quartic(), ValueOptions::default()).unwrap();
    let hj = check_hj(&ctx, &Point::scalar(1.0), 0.05, &ProbeOptions::default()).unwrap();
    assert!(hj.reports.iter().all(|r| r.pass), "{:?}", hj.reports);
}

#[test]
fn cache_reuses_values() {
    let ctx = quad_ctx();
    let x = Point::scalar(0.7);
    let a = ctx.value(&x, 0.1).unwrap();
    let n = ctx.cache_len();
    let b = ctx.value(&Point::scalar(0.7 + 1e-14), 0.1).unwrap();
    assert_eq!(a, b);
    assert_eq!(ctx.cache_len(), n);
    let rows = value_table(&ctx, &[Point::scalar(0.1), Point::scalar(0.2)], &[0.1, 0.05]).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[1].x[0], rows[1].epsilon), (0.1, 0.05));
}

#[test]
fn finsler_dominates_the_metric() {
    let r2 = SpaceSpec::Euclidean { dim: 2 };
    let dw = EnergySpec::double_well();
    let (a, b) = (Point::new(vec![-2.0, 0.0]), Point::new(vec![1.5, 1.0]));
    let res = finsler_distance(&r2, phi_finsler_field(&dw), &a, &b, &FinslerOptions::default()).unwrap();
    assert!(res.distance >= r2.distance(&a, &b).unwrap());
    assert!((res.distance - res.product_value).abs() <= 1e-3 * res.distance);
    let same = finsler_distance(&r2, |_| 1.0, &a, &a, &FinslerOptions::default()).unwrap();
    assert_eq!(same.distance, 0.0);
}
