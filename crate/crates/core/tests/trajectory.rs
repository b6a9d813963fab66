use wed_core::trajectory::{spectral_check, weighted_ibp_check, Weights};
use wed_core::*;

fn r1() -> SpaceSpec {
    SpaceSpec::Euclidean { dim: 1 }
}

#[test]
fn exp_graded_nodes_follow_closed_form() {
    let (eps, t, n) = (0.1, 2.5, 1000);
    let g = TimeGrid::exp_graded(eps, t, n).unwrap();
    assert_eq!(g.nodes[0], 0.0);
    assert_eq!(g.nodes[n], t);
    for i in 0..n {
        let expect = -eps * (1.0 - (i as f64 / n as f64) * (1.0 - (-t / eps).exp())).ln();
        assert!((g.nodes[i] - expect).abs() < 1e-12);
    }
}

#[test]
fn masses_form_a_probability_measure() {
    let g = TimeGrid::uniform(3.0, 777).unwrap();
    let w = Weights::new(&g, 0.2).unwrap();
    assert!(w.masses.iter().all(|m| *m > 0.0));
    assert!((w.total() - 1.0).abs() < 1e-14);
}

#[test]
fn horizon_ratio_is_capped() {
    assert!(Weights::new(&TimeGrid::uniform(80.0, 10).unwrap(), 0.1).is_err());
}

#[test]
fn metric_speeds() {
    let g = TimeGrid::uniform(1.0, 1000).unwrap();
    let c = Trajectory::constant(g.clone(), r1(), &Point::scalar(0.7)).unwrap();
    assert!(c.metric_speed().iter().all(|v| *v == 0.0));
    let line = Trajectory::from_fn(g.clone(), r1(), |t| vec![3.0 * t]).unwrap();
    assert!(line.metric_speed().iter().all(|v| (v - 3.0).abs() < 1e-12));
    let ex = Trajectory::from_fn(g.clone(), r1(), |t| vec![(-t).exp()]).unwrap();
    for (v, t) in ex.metric_speed().iter().zip(&g.nodes) {
        assert!((v - (-t).exp()).abs() < 2e-3);
    }
}

#[test]
fn arclength_reparametrization() {
    let r2 = SpaceSpec::Euclidean { dim: 2 };
    let lin = Trajectory::from_fn(TimeGrid::uniform(1.0, 100).unwrap(), r2.clone(), |t| vec![2.0 * t, 0.0]).unwrap();
    let a = lin.arclength_reparam().unwrap();
    assert!((a.grid.horizon() - 2.0).abs() < 1e-12);
    assert!(a.metric_speed().iter().all(|v| (v - 1.0).abs() < 1e-10));

    let sq = Trajectory::from_fn(TimeGrid::uniform(1.0, 2000).unwrap(), r2, |t| vec![t * t, 0.0]).unwrap();
    let b = sq.arclength_reparam().unwrap();
    assert!(b.metric_speed().iter().all(|v| (v - 1.0).abs() < 1e-4));
    let c = b.arclength_reparam().unwrap();
    let shift = b.grid.nodes.iter().zip(&c.grid.nodes).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(shift <= 1e-10);
}

#[test]
fn g_reparametrization() {
    let grid = TimeGrid::uniform(1.0, 400).unwrap();
    let seg = Trajectory::from_fn(grid, r1(), |t| vec![-1.0 + 3.0 * t]).unwrap();
    let (unit, _) = seg.g_reparam(|_| 1.0).unwrap();
    let arc = seg.arclength_reparam().unwrap();
    assert!(unit.grid.nodes.iter().zip(&arc.grid.nodes).all(|(a, b)| (a - b).abs() < 1e-12));

    let (scaled, _) = seg.g_reparam(|_| 2.0).unwrap();
    assert!((scaled.grid.horizon() - 1.5).abs() < 1e-12);
    assert!(scaled.metric_speed().iter().all(|v| (v - 2.0).abs() < 1e-10));

    // three integrals against a 16x finer oracle for g = √(1 ∨ φ), φ = 2u²
    let q = EnergySpec::quadratic_1d(4.0, 0.0);
    let g = |x: &[f64]| q.value(x).max(1.0).sqrt();
    let (_, ints) = seg.g_reparam(g).unwrap();
    let n = 400 * 16;
    let oracle: f64 = (0..n)
        .map(|k| {
            let u = -1.0 + 3.0 * (k as f64 + 0.5) / n as f64;
            g(&[u]) * 3.0 / n as f64
        })
        .sum::<f64>();
    for v in ints {
        assert!((v - oracle).abs() < 1e-3 * oracle, "{ints:?} vs {oracle}");
    }
}

#[test]
fn weighted_integration_by_parts() {
    let g = TimeGrid::uniform(5.0, 4000).unwrap();
    assert_eq!(weighted_ibp_check(&vec![0.0; 4001], &g, 0.5).unwrap(), 0.0);
    let w: Vec<f64> = g.nodes.clone();
    assert!(weighted_ibp_check(&w, &g, 0.5).unwrap() <= 1e-3);
    let sin = |n: usize| {
        let g = TimeGrid::uniform(5.0, n).unwrap();
        let w: Vec<f64> = g.nodes.iter().map(|t| t.sin()).collect();
        weighted_ibp_check(&w, &g, 0.5).unwrap()
    };
    let ratio = sin(2000) / sin(4000);
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn spectral_degenerate_and_rejects_nonzero_start() {
    let g = TimeGrid::uniform(1.0, 10).unwrap();
    assert_eq!(spectral_check(&[0.0; 11], &g, 0.1).unwrap(), (0.0, 0.0, 0.0));
    assert!(spectral_check(&[1.0; 11], &g, 0.1).is_err());
}
