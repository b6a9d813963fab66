use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wed_core::wed::{check_inner_variation, minimize_wed, solve_euler_lagrange, wed_value};
use wed_core::*;

fn r1() -> SpaceSpec {
    SpaceSpec::Euclidean { dim: 1 }
}

fn quad(eps: f64, n: usize) -> WedProblem {
    WedProblem::new(r1(), EnergySpec::quadratic_1d(1.0, 0.0), Point::scalar(1.0), eps, 2.0, n)
}

fn r_minus(eps: f64) -> f64 {
    (1.0 - (1.0 + 4.0 * eps).sqrt()) / (2.0 * eps)
}

fn sup_err(sol: &WedSolution, f: impl Fn(f64) -> f64) -> f64 {
    sol.nodes()
        .iter()
        .zip(&sol.trajectory.points)
        .filter(|(t, _)| **t <= sol.problem.t_obs)
        .fold(0.0f64, |m, (t, p)| m.max((p.coords[0] - f(*t)).abs()))
}

#[test]
fn constant_curve_costs_phi() {
    let p = quad(0.1, 500);
    let tr = Trajectory::constant(p.grid().unwrap(), r1(), &p.x_bar).unwrap();
    assert!((wed_value(&p, &tr).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn exponential_ansatz_value() {
    let p = quad(0.1, 4000);
    let r = r_minus(0.1);
    let tr = Trajectory::from_fn(p.grid().unwrap(), r1(), |t| vec![(r * t).exp()]).unwrap();
    let kappa = ((1.4f64).sqrt() - 1.0) / 0.4;
    assert!((wed_value(&p, &tr).unwrap() - kappa).abs() < 1e-3);
}

#[test]
fn objective_is_bounded_below_by_coercivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = WedProblem::new(r1(), EnergySpec::quadratic_1d(-0.5, 0.3), Point::scalar(0.2), 0.05, 1.25, 200);
    let q = p.energy.coercivity_q(&r1(), &p.x_bar);
    for _ in 0..200 {
        let amp = rng.random_range(0.0..5.0);
        let freq = rng.random_range(0.0..10.0);
        let tr = Trajectory::from_fn(p.grid().unwrap(), r1(), |t| vec![0.2 + amp * (freq * t).sin()]).unwrap();
        let v = wed_value(&p, &tr).unwrap();
        assert!(v >= -q, "{v} < {}", -q);
    }
}

#[test]
fn exp_graded_grid_solves() {
    let mut p = quad(0.1, 4000);
    p.grid_mode = GridMode::ExpGraded;
    let sol = minimize_wed(&p).unwrap();
    let r = r_minus(0.1);
    // the last exp-graded cell is long, so only the early window is sharp
    let early = sol
        .nodes()
        .iter()
        .zip(&sol.trajectory.points)
        .filter(|(t, _)| **t <= 0.5)
        .fold(0.0f64, |m, (t, u)| m.max((u.coords[0] - (r * t).exp()).abs()));
    assert!(early < 1e-3, "{early}");
}

#[test]
fn critical_point_stays_put() {
    let p = WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(1.0), 0.05, 1.0, 1000);
    let sol = solve(&p).unwrap();
    assert!(sol.trajectory.points.iter().all(|u| (u.coords[0] - 1.0).abs() < 1e-6));
    assert!(check_inner_variation(&sol).iter().all(|r| r.max_residual < 1e-10));
}

#[test]
fn smaller_epsilon_raises_the_objective() {
    let a = solve(&WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(0.3), 0.05, 1.0, 4000)).unwrap();
    let b = solve(&WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(0.3), 0.1, 1.0, 4000)).unwrap();
    // V_ε increases to φ as ε decreases
    assert!(a.objective >= b.objective);
    assert!(a.objective <= a.phi[0]);
}

#[test]
fn euler_lagrange_closed_form_and_constant_energy() {
    let sol = solve_euler_lagrange(&quad(0.1, 4000)).unwrap();
    let r = r_minus(0.1);
    assert!(sup_err(&sol, |t| (r * t).exp()) <= 1e-4);
    let flat = WedProblem::new(r1(), EnergySpec::quadratic_1d(0.0, 0.0), Point::scalar(0.4), 0.1, 1.0, 200);
    let sol = solve_euler_lagrange(&flat).unwrap();
    assert!(sol.speeds.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn backends_cross_validate_on_double_well() {
    let p = WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(0.3), 0.05, 1.0, 4000);
    let a = minimize_wed(&p).unwrap();
    let b = solve_euler_lagrange(&p).unwrap();
    let gap = a
        .trajectory
        .points
        .iter()
        .zip(&b.trajectory.points)
        .fold(0.0f64, |m, (x, y)| m.max((x.coords[0] - y.coords[0]).abs()));
    assert!(gap <= 5e-3, "{gap}");
}

#[test]
fn inner_variation_on_quadratic() {
    let coarse = check_inner_variation(&solve(&quad(0.1, 4000)).unwrap());
    let fine = check_inner_variation(&solve(&quad(0.1, 8000)).unwrap());
    assert!(coarse.iter().all(|r| r.pass), "{coarse:?}");
    let ratio = coarse[0].max_residual / fine[0].max_residual;
    assert!((1.4..=2.6).contains(&ratio), "{ratio}");
}

#[test]
fn solution_invariants() {
    let p = WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(-0.4), 0.05, 1.0, 2000);
    let sol = solve(&p).unwrap();
    assert_eq!(sol.trajectory.points[0], p.x_bar);
    assert!(sol.objective <= p.energy.eval(&p.x_bar).unwrap() + 1e-9);
    assert_eq!(sol.values[0], sol.objective);
}

#[test]
fn higher_dimensional_spaces() {
    let e = EnergySpec::new(EnergyKind::DiscreteDirichlet { p: 2.0, h: 0.25, reaction: vec![0.0, 0.0, 0.5] }).unwrap();
    let s = SpaceSpec::Euclidean { dim: 3 };
    let p = WedProblem::new(s.clone(), e.clone(), Point::new(vec![0.5, 1.0, 0.5]), 0.02, 0.5, 1000);
    let direct = minimize_wed(&p).unwrap();
    let el = solve_euler_lagrange(&p).unwrap();
    let gap = direct
        .trajectory
        .points
        .iter()
        .zip(&el.trajectory.points)
        .fold(0.0f64, |m, (x, y)| m.max(s.distance(x, y).unwrap()));
    assert!(gap < 1e-3, "{gap}");

    let pn = SpaceSpec::PNorm { dim: 2, p: 3.0 };
    let q = WedProblem::new(pn, EnergySpec::convex_quartic(), Point::new(vec![1.0, -0.5]), 0.05, 1.25, 500);
    let sol = solve(&q).unwrap();
    assert!(sol.converged);
    assert!(sol.phi.windows(2).take(400).all(|w| w[1] <= w[0] + 1e-12));
    assert!(matches!(
        solve(&q.clone().with_solver(SolverKind::EulerLagrange)),
        Err(WedError::InvalidInput(_))
    ));
}

#[test]
fn smallness_condition_enforced() {
    let p = WedProblem::new(r1(), EnergySpec::quadratic_1d(-1.0, 0.0), Point::scalar(0.1), 0.2, 1.0, 100);
    assert!(matches!(solve(&p), Err(WedError::InvalidInput(_))));
}

#[test]
fn iteration_cap_returns_best_iterate() {
    let mut p = WedProblem::new(r1(), EnergySpec::double_well(), Point::scalar(0.3), 0.05, 1.0, 2000);
    p.max_iter = 1;
    p.grad_tol = 1e-14;
    match minimize_wed(&p) {
        Err(WedError::NonConvergence { best, trace, .. }) => {
            assert!(best.is_some());
            assert!(!trace.is_empty());
        }
        other => panic!("expected non-convergence, got {:?}", other.map(|s| s.iterations)),
    }
}

#[test]
fn problem_json_round_trip() {
    let p = quad(0.1, 100);
    let json = serde_json::to_string(&p).unwrap();
    let back: WedProblem = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);
}
