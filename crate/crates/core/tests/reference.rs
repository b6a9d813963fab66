use wed_core::reference::*;
use wed_core::*;

fn r1() -> SpaceSpec {
    SpaceSpec::Euclidean { dim: 1 }
}

#[test]
fn minimizing_movements_on_quadratic() {
    let mm = minimizing_movements(&r1(), &EnergySpec::quadratic_1d(1.0, 0.0), &Point::scalar(1.0), 1e-3, 1000).unwrap();
    assert!((mm.at(1.0).coords[0] - (-1.0f64).exp()).abs() < 5e-3);
    assert!(mm.phi.windows(2).all(|w| w[1] <= w[0]));
    let flat = minimizing_movements(&r1(), &EnergySpec::quadratic_1d(0.0, 0.0), &Point::scalar(0.4), 0.1, 20).unwrap();
    assert!(flat.trajectory.points.iter().all(|p| (p.coords[0] - 0.4).abs() < 1e-14));
}

#[test]
fn minimizing_movements_track_the_double_well_flow() {
    let dw = EnergySpec::double_well();
    let x = Point::scalar(0.3);
    let mm = minimizing_movements(&r1(), &dw, &x, 0.005, 200).unwrap();
    assert!(mm.phi.windows(2).all(|w| w[1] <= w[0]));
    for t in [0.25, 0.5, 1.0] {
        let exact = exact_flow(&r1(), &dw, &x, t).unwrap();
        assert!((mm.at(t).coords[0] - exact.coords[0]).abs() < 1e-2, "t = {t}");
    }
}

#[test]
fn mm_step_bound_for_semiconvex_energies() {
    assert!(minimizing_movements(&r1(), &EnergySpec::double_well(), &Point::scalar(0.3), 0.6, 5).is_err());
}

#[test]
fn exact_flow_semigroup_and_fixed_points() {
    let q = EnergySpec::convex_quartic();
    let x = Point::scalar(1.5);
    let a = exact_flow(&r1(), &q, &exact_flow(&r1(), &q, &x, 0.3).unwrap(), 0.4).unwrap();
    let b = exact_flow(&r1(), &q, &x, 0.7).unwrap();
    assert!((a.coords[0] - b.coords[0]).abs() < 1e-14);
    let dw = EnergySpec::double_well();
    assert_eq!(exact_flow(&r1(), &dw, &Point::scalar(1.0), 3.0).unwrap().coords[0], 1.0);
    assert_eq!(exact_flow(&r1(), &dw, &Point::scalar(0.0), 3.0).unwrap().coords[0], 0.0);
}

#[test]
fn ornstein_uhlenbeck_in_quantile_coordinates() {
    let space = SpaceSpec::Quantile1D { m: 64 };
    let energy = EnergySpec::quantile_entropy(1.0, 0.0).unwrap();
    let x = space.gaussian_quantiles(1.0, 2.0).unwrap();
    let far = exact_flow(&space, &energy, &x, 20.0).unwrap();
    let target = space.gaussian_quantiles(0.0, 1.0).unwrap();
    assert!(space.distance(&far, &target).unwrap() < 1e-8);

    // RK4 on m' = −m, v' = 2 − 2v for the mean and variance
    let (mut m, mut v) = (1.0f64, 4.0f64);
    let h = 1e-3;
    let rhs = |m: f64, v: f64| (-m, 2.0 - 2.0 * v);
    for _ in 0..500 {
        let k1 = rhs(m, v);
        let k2 = rhs(m + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = rhs(m + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = rhs(m + h * k3.0, v + h * k3.1);
        m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    let flowed = exact_flow(&space, &energy, &x, 0.5).unwrap();
    let oracle = space.gaussian_quantiles(m, v.sqrt()).unwrap();
    let err = flowed.coords.iter().zip(&oracle.coords).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
    assert!(err < 1e-6, "{err}");
}

#[test]
fn exact_flow_is_not_available_everywhere() {
    let dir = EnergySpec::new(EnergyKind::DiscreteDirichlet { p: 2.0, h: 0.25, reaction: vec![0.0, 0.0, 1.0] }).unwrap();
    let sp = SpaceSpec::Euclidean { dim: 3 };
    assert!(matches!(exact_flow(&sp, &dir, &Point::new(vec![0.1; 3]), 1.0), Err(WedError::NotAvailable(_))));
}

#[test]
fn max_slope_equality_holds_on_the_exact_flow() {
    let q = EnergySpec::quadratic_1d(1.0, 0.0);
    let grid = TimeGrid::uniform(1.0, 2000).unwrap();
    let pts = grid.nodes.iter().map(|t| exact_flow(&r1(), &q, &Point::scalar(1.0), *t).unwrap()).collect();
    let traj = Trajectory::new(grid, pts, r1()).unwrap();
    let r = check_max_slope(&traj, &q, 1.0, MaxSlopeMode::Equality, 2e-3).unwrap();
    assert!(r.pass, "{}", r.max_residual);
}

#[test]
fn max_slope_inequality_on_a_wed_solution() {
    let dw = EnergySpec::double_well();
    let sol = solve(&WedProblem::new(r1(), dw.clone(), Point::scalar(0.3), 0.0125, 0.5, 4000)).unwrap();
    let r = check_max_slope(&sol.trajectory, &dw, 0.5, MaxSlopeMode::Inequality, 5e-2).unwrap();
    assert!(r.pass, "{}", r.max_residual);
}

#[test]
fn convergence_table_for_the_convex_quartic() {
    let table = convergence_study(
        &r1(),
        &EnergySpec::convex_quartic(),
        &Point::scalar(1.5),
        &[0.1, 0.05, 0.025],
        0.5,
        &StudyOptions::default(),
    )
    .unwrap();
    assert!(table.reference.starts_with("minimizing_movements"));
    assert!(table.monotone_report(0.0).pass);
    assert!(table.fitted_c > 0.0);
    assert!(table.rows.iter().all(|r| r.lsc_residual <= 5e-2));
}

#[test]
fn lambda_diagnostics_on_a_constant_minimizer() {
    let sol = solve(&WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(-1.0), 0.05, 0.5, 1000)).unwrap();
    let d = lambda_diagnostics(&sol, -1.0, None).unwrap();
    assert_eq!(d.lambda_prime, Some(-1.25));
    assert!(d.reports.iter().all(|r| r.pass && r.max_residual == 0.0));
    assert!(lambda_diagnostics(&sol, -10.0, None).is_err());
}
