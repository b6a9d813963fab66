//! Reference gradient flows and the checks that compare WED minimizers to them.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{local_slope, yosida, EnergyKind, EnergySpec, SlopeMethod};
use crate::error::{invalid, Result, WedError};
use crate::numeric::normal_quantile;
use crate::report::IdentityReport;
use crate::space::{quantile_nodes, Point, SpaceSpec};
use crate::trajectory::{TimeGrid, Trajectory};
use crate::wed::{solve, SolverKind, WedProblem, WedSolution};

/// Iterates of the resolvent `u^{k+1} = argmin d²(·, u^k)/(2τ) + φ`.
#[derive(Debug, Clone)]
pub struct MmSolution {
    pub tau: f64,
    /// Nodes `kτ`, points `u^k`.
    pub trajectory: Trajectory,
    pub phi: Vec<f64>,
    /// `d(u^k, u^{k+1})`.
    pub movements: Vec<f64>,
}

impl MmSolution {
    /// Piecewise-constant interpolant: `u^k` on `((k−1)τ, kτ]`.
    pub fn at(&self, t: f64) -> Point {
        let n = self.trajectory.points.len() - 1;
        let k = if t <= 0.0 { 0 } else { ((t / self.tau) - 1e-9).ceil().max(0.0) as usize };
        self.trajectory.points[k.min(n)].clone()
    }
}

pub fn minimizing_movements(space: &SpaceSpec, energy: &EnergySpec, x_bar: &Point, tau: f64, steps: usize) -> Result<MmSolution> {
    if !(tau > 0.0 && tau.is_finite()) || steps == 0 {
        return Err(invalid("minimizing movements need tau > 0 and at least one step"));
    }
    if let Some(l) = energy.lambda {
        if l < 0.0 && tau >= 1.0 / (2.0 * l.abs()) {
            return Err(invalid(format!("tau {tau} too large for modulus {l}: need tau < 1/(2|λ|)")));
        }
    }
    let x0 = space.point(x_bar.coords.clone())?;
    let mut points = vec![x0];
    let mut movements = Vec::with_capacity(steps);
    for _ in 0..steps {
        let prev = points.last().expect("nonempty");
        let y = yosida(energy, space, prev, tau)?.argmin;
        movements.push(space.distance_unchecked(&prev.coords, &y.coords));
        points.push(y);
    }
    let phi = points.iter().map(|p| energy.value(&p.coords)).collect();
    let grid = TimeGrid::uniform(tau * steps as f64, steps)?;
    let trajectory = Trajectory::new(grid, points, space.clone())?;
    Ok(MmSolution { tau, trajectory, phi, movements })
}

/// Closed-form gradient flow at time `t` for the kinds that have one:
/// quadratic (any Hilbert space), the separable quartic kinds, and the
/// quantile entropy-potential flow from Gaussian data.
pub fn exact_flow(space: &SpaceSpec, energy: &EnergySpec, x_bar: &Point, t: f64) -> Result<Point> {
    if !(t >= 0.0) {
        return Err(invalid("flow time must be nonnegative"));
    }
    space.check_dim(x_bar)?;
    energy.check_point(&x_bar.coords)?;
    if !space.is_hilbert() {
        return Err(WedError::NotAvailable("closed-form flows need a Hilbert space".into()));
    }
    let w = space.metric_weight();
    // u' = −(∂φ)/w, so the flow for metric weight w is the Euclidean flow at time t/w
    let s = t / w;
    match &energy.kind {
        EnergyKind::Quadratic { a, b } => {
            let n = b.len();
            let am = DMatrix::from_fn(n, n, |i, j| a[i][j]);
            let eig = am.symmetric_eigen();
            let q = &eig.eigenvectors;
            let c0 = q.transpose() * DVector::from_column_slice(&x_bar.coords);
            let bc = q.transpose() * DVector::from_column_slice(b);
            let c = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let mu = eig.eigenvalues[i];
                    if mu.abs() < 1e-14 {
                        c0[i] + bc[i] * s
                    } else {
                        let e = (-mu * s).exp();
                        c0[i] * e + bc[i] / mu * (1.0 - e)
                    }
                }),
            );
            Ok(Point::new((q * c).iter().copied().collect()))
        }
        EnergyKind::ConvexQuartic => Ok(Point::new(
            x_bar.coords.iter().map(|u| u / (1.0 + 2.0 * u * u * s).sqrt()).collect(),
        )),
        EnergyKind::DoubleWell => Ok(Point::new(
            x_bar
                .coords
                .iter()
                .map(|u| {
                    if *u == 0.0 {
                        0.0
                    } else {
                        u.signum() / (1.0 + (1.0 / (u * u) - 1.0) * (-2.0 * s).exp()).sqrt()
                    }
                })
                .collect(),
        )),
        EnergyKind::QuantileEntropyPotential { v2, v1 } => {
            let SpaceSpec::Quantile1D { m } = space else {
                return Err(WedError::NotAvailable("entropy flow closed form lives in quantile coordinates".into()));
            };
            let z: Vec<f64> = quantile_nodes(*m).into_iter().map(normal_quantile).collect();
            let (m0, sd0) = fit_gaussian(&x_bar.coords, &z)?;
            let (mt, var_t) = if *v2 == 0.0 {
                (m0 - v1 * t, sd0 * sd0 + 2.0 * t)
            } else {
                let eq = -v1 / v2;
                (
                    eq + (m0 - eq) * (-v2 * t).exp(),
                    1.0 / v2 + (sd0 * sd0 - 1.0 / v2) * (-2.0 * v2 * t).exp(),
                )
            };
            if !(var_t > 0.0) {
                return Err(WedError::NotAvailable("variance of the closed-form flow collapsed".into()));
            }
            let sd = var_t.sqrt();
            Ok(Point::new(z.iter().map(|zj| mt + sd * zj).collect()))
        }
        EnergyKind::DiscreteDirichlet { .. } => {
            Err(WedError::NotAvailable("no closed-form flow for the discrete Dirichlet energy".into()))
        }
    }
}

/// Mean and standard deviation of Gaussian quantiles `x_j = m + σ z_j`.
fn fit_gaussian(x: &[f64], z: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let (mx, mz) = (x.iter().sum::<f64>() / n, z.iter().sum::<f64>() / n);
    let szz: f64 = z.iter().map(|v| (v - mz).powi(2)).sum();
    if szz == 0.0 {
        return Err(WedError::NotAvailable("need at least two quantiles".into()));
    }
    let sd = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum::<f64>() / szz;
    let mean = mx - sd * mz;
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let misfit = x.iter().zip(z).fold(0.0f64, |m, (a, b)| m.max((a - mean - sd * b).abs()));
    if misfit > 1e-9 * scale || !(sd > 0.0) {
        return Err(WedError::NotAvailable("initial quantiles are not Gaussian".into()));
    }
    Ok((mean, sd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxSlopeMode {
    /// Positive part of `½∫|u'|² + ½∫|∂φ|² + φ(u(t)) − φ(u(0))`.
    Inequality,
    /// Absolute value of the same quantity.
    Equality,
}

/// Energy-dissipation balance along a curve at every node with `t ≤ t_max`.
pub fn check_max_slope(traj: &Trajectory, energy: &EnergySpec, t_max: f64, mode: MaxSlopeMode, tol: f64) -> Result<IdentityReport> {
    let nodes = &traj.grid.nodes;
    let h = traj.grid.steps();
    let speeds = traj.metric_speed();
    let slopes: Vec<f64> = traj
        .points
        .iter()
        .map(|p| local_slope(energy, &traj.space, p, SlopeMethod::Analytic).map(|s| s.value))
        .collect::<Result<_>>()?;
    let phi0 = energy.eval(&traj.points[0])?;
    let (mut kinetic, mut slope_int) = (0.0, 0.0);
    let mut times = vec![0.0];
    let mut resid = vec![0.0];
    for i in 0..traj.grid.n_cells() {
        if nodes[i + 1] > t_max * (1.0 + 1e-12) {
            break;
        }
        kinetic += 0.5 * speeds[i] * speeds[i] * h[i];
        slope_int += 0.25 * (slopes[i] * slopes[i] + slopes[i + 1] * slopes[i + 1]) * h[i];
        let e = kinetic + slope_int + energy.eval(&traj.points[i + 1])? - phi0;
        times.push(nodes[i + 1]);
        resid.push(match mode {
            MaxSlopeMode::Inequality => e.max(0.0),
            MaxSlopeMode::Equality => e.abs(),
        });
    }
    let name = match mode {
        MaxSlopeMode::Inequality => "max_slope_inequality",
        MaxSlopeMode::Equality => "max_slope_equality",
    };
    Ok(IdentityReport::new(name, times, resid, tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sup_err: f64,
    pub lsc_residual: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `exact` or `minimizing_movements(tau)`.
    pub reference: String,
    /// Least-squares `C` in `sup_err ≈ C ε`.
    pub fitted_c: f64,
}

impl ConvergenceTable {
    /// Successive ratios `sup_err(ε_k) / sup_err(ε_{k+1})`.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].sup_err / w[1].sup_err).collect()
    }

    /// The error must not grow as ε decreases, up to `slack` relative.
    pub fn monotone_report(&self, slack: f64) -> IdentityReport {
        let eps: Vec<f64> = self.rows.iter().skip(1).map(|r| r.epsilon).collect();
        let res = self.rows.windows(2).map(|w| (w[1].sup_err - (1.0 + slack) * w[0].sup_err).max(0.0)).collect();
        IdentityReport::new("convergence_monotone", eps, res, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub n: usize,
    pub solver: SolverKind,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Node count per unit time of the output comparison is the solve grid itself.
    pub lsc_tol: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { n: 4000, solver: SolverKind::Direct, grad_tol: 1e-9, max_iter: 5000, lsc_tol: 5e-2 }
    }
}

enum Reference {
    Exact,
    Mm(MmSolution),
}

/// Solves the WED problem for each ε and measures the sup distance to the
/// gradient flow on the grid nodes of `[0, T_obs]`, together with the
/// positive part of the maximal-slope inequality. The reference is the
/// closed-form flow for the quadratic and quantile kinds and minimizing
/// movements at `τ = ε_min²/4` otherwise.
pub fn convergence_study(
    space: &SpaceSpec,
    energy: &EnergySpec,
    x_bar: &Point,
    eps_list: &[f64],
    t_obs: f64,
    opts: &StudyOptions,
) -> Result<ConvergenceTable> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilon list must be nonempty and strictly decreasing"));
    }
    let use_exact = matches!(energy.kind, EnergyKind::Quadratic { .. } | EnergyKind::QuantileEntropyPotential { .. });
    let (reference, label) = if use_exact {
        exact_flow(space, energy, x_bar, 0.0)?;
        (Reference::Exact, "exact".to_string())
    } else {
        let e_min = *eps_list.last().expect("nonempty");
        let tau = e_min * e_min / 4.0;
        let steps = (t_obs / tau).ceil() as usize;
        (Reference::Mm(minimizing_movements(space, energy, x_bar, tau, steps)?), format!("minimizing_movements({tau})"))
    };
    let reference_at = |t: f64| -> Result<Point> {
        match &reference {
            Reference::Exact => exact_flow(space, energy, x_bar, t),
            Reference::Mm(mm) => Ok(mm.at(t)),
        }
    };
    let rows: Vec<ConvergenceRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let mut p = WedProblem::new(space.clone(), energy.clone(), x_bar.clone(), eps, t_obs, opts.n);
            p.solver = opts.solver;
            p.grad_tol = opts.grad_tol;
            p.max_iter = opts.max_iter;
            let sol = solve(&p)?;
            let runtime_s = start.elapsed().as_secs_f64();
            let mut sup_err = 0.0f64;
            for (t, u) in sol.nodes().iter().zip(&sol.trajectory.points) {
                if *t > t_obs * (1.0 + 1e-12) {
                    break;
                }
                let r = reference_at(*t)?;
                sup_err = sup_err.max(space.distance_unchecked(&u.coords, &r.coords));
            }
            let lsc = check_max_slope(&sol.trajectory, energy, t_obs, MaxSlopeMode::Inequality, opts.lsc_tol)?;
            Ok(ConvergenceRow { epsilon: eps, sup_err, lsc_residual: lsc.max_residual, runtime_s })
        })
        .collect::<Result<_>>()?;
    let num: f64 = rows.iter().map(|r| r.sup_err * r.epsilon).sum();
    let den: f64 = rows.iter().map(|r| r.epsilon * r.epsilon).sum();
    Ok(ConvergenceTable { rows, reference: label, fitted_c: num / den })
}

/// Outcome of the convexity-dependent monotonicity checks.
#[derive(Debug, Clone)]
pub struct LambdaDiagnostics {
    pub lambda: f64,
    /// Exponent used for `e^{2λ't}|u'|²` when `λ < 0`.
    pub lambda_prime: Option<f64>,
    /// `(1 + √(1 + 8λε)) / (2ε)` when `λ < 0`.
    pub root: Option<f64>,
    pub reports: Vec<IdentityReport>,
}

/// Largest violation of `f_{i+1} ≤ f_i`; tolerance from the local second-difference scale.
fn nonincreasing_report(name: &str, t: &[f64], f: &[f64]) -> IdentityReport {
    let n = f.len();
    let mut res = Vec::with_capacity(n.saturating_sub(1));
    let mut curv = 0.0f64;
    let mut hmax = 0.0f64;
    for i in 0..n.saturating_sub(1) {
        res.push((f[i + 1] - f[i]).max(0.0));
        hmax = hmax.max(t[i + 1] - t[i]);
        if i + 2 < n {
            let d1 = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
            let d2 = (f[i + 2] - f[i + 1]) / (t[i + 2] - t[i + 1]);
            curv = curv.max(((d2 - d1) / (0.5 * (t[i + 2] - t[i]))).abs());
        }
    }
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 10.0 * hmax * hmax * curv + 1e-12 * fmax;
    IdentityReport::new(name, t[..n.saturating_sub(1)].to_vec(), res, tol)
}

/// Largest violation of discrete convexity. The tolerance combines the
/// third-derivative scale, estimated on a coarse stride so that rounding in
/// nested differences does not inflate it, with the rounding level of the
/// second differences themselves.
fn convex_report(name: &str, t: &[f64], f: &[f64]) -> IdentityReport {
    let n = f.len();
    let mut sec = Vec::with_capacity(n.saturating_sub(2));
    let mut times = Vec::new();
    let (mut hmax, mut hmin) = (0.0f64, f64::INFINITY);
    for i in 1..n.saturating_sub(1) {
        let d1 = (f[i] - f[i - 1]) / (t[i] - t[i - 1]);
        let d2 = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
        sec.push((d2 - d1) / (0.5 * (t[i + 1] - t[i - 1])));
        times.push(t[i]);
        hmax = hmax.max(t[i + 1] - t[i]);
        hmin = hmin.min(t[i + 1] - t[i]);
    }
    let stride = (sec.len() / 50).max(1);
    let mut third = 0.0f64;
    let mut i = 0;
    while i + stride < sec.len() {
        third = third.max(((sec[i + stride] - sec[i]) / (times[i + stride] - times[i])).abs());
        i += stride;
    }
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rounding = 4.0 * f64::EPSILON * fmax / (hmin * hmin);
    let tol = 10.0 * (hmax * third + rounding);
    let res = sec.iter().map(|s| (-s).max(0.0)).collect();
    IdentityReport::new(name, times, res, tol)
}

/// For `λ ≥ 0`: `φ∘u` nonincreasing and convex, `|u'|` nonincreasing.
/// For `λ < 0`: `e^{2λ't}|u'|²` nonincreasing with `λ' < λ` (default `1.25λ`),
/// requiring the margin `1 + 8λε > 0.5`. Checked on the observation window.
pub fn lambda_diagnostics(sol: &WedSolution, lambda: f64, lambda_prime: Option<f64>) -> Result<LambdaDiagnostics> {
    let eps = sol.problem.epsilon;
    let k = sol.observed_cells();
    if k < 3 {
        return Err(invalid("observation window needs at least three cells"));
    }
    let nodes = &sol.nodes()[..=k];
    let mid: Vec<f64> = (0..k).map(|i| 0.5 * (nodes[i] + nodes[i + 1])).collect();
    let speeds = &sol.speeds[..k];
    if lambda >= 0.0 {
        let phi = &sol.phi[..=k];
        return Ok(LambdaDiagnostics {
            lambda,
            lambda_prime: None,
            root: None,
            reports: vec![
                nonincreasing_report("phi_nonincreasing", nodes, phi),
                convex_report("phi_convex", nodes, phi),
                nonincreasing_report("speed_nonincreasing", &mid, speeds),
            ],
        });
    }
    let disc = 1.0 + 8.0 * lambda * eps;
    if !(disc > 0.5) {
        return Err(invalid(format!("epsilon {eps} too large for modulus {lambda}: need 1 + 8 λ ε > 0.5, got {disc}")));
    }
    let lp = lambda_prime.unwrap_or(1.25 * lambda);
    if !(lp < lambda) {
        return Err(invalid("lambda' must be smaller than lambda"));
    }
    let weighted: Vec<f64> = mid.iter().zip(speeds).map(|(t, v)| (2.0 * lp * t).exp() * v * v).collect();
    Ok(LambdaDiagnostics {
        lambda,
        lambda_prime: Some(lp),
        root: Some((1.0 + disc.sqrt()) / (2.0 * eps)),
        reports: vec![nonincreasing_report("weighted_speed_nonincreasing", &mid, &weighted)],
    })
}
