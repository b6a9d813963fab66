//! The WED functional on discrete trajectories and its two minimizers.
//!
//! The discrete functional is
//! `I = Σ_i m_i ε/2 v_i² + ∫_0^T φ(u) dμ_ε + e^{−T/ε} φ(u_N)` with per-cell
//! speeds `v_i` and the `φ`-integral taken exactly for the piecewise-linear
//! interpolant of the nodal values `φ(u_j)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::{yosida, EnergySpec};
use crate::error::{invalid, Result, WedError};
use crate::numeric::{lbfgs, solve_tridiagonal, LbfgsOptions};
use crate::report::IdentityReport;
use crate::space::{Point, SpaceSpec};
use crate::trajectory::{check_eps_horizon, node_weights, scaled_cells, GridMode, TimeGrid, Trajectory, Weights};

/// Horizon used when none is given: `max(T_obs, HORIZON_FACTOR·ε)`.
pub const HORIZON_FACTOR: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Direct,
    EulerLagrange,
}

fn default_grad_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WedProblem {
    pub epsilon: f64,
    /// Observation window; checks and errors are measured on `[0, T]`.
    #[serde(rename = "T")]
    pub t_obs: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub grid_mode: GridMode,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub space: SpaceSpec,
    pub energy: EnergySpec,
    pub x_bar: Point,
    /// Computational horizon; defaults to `max(T, 25ε)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl WedProblem {
    pub fn new(space: SpaceSpec, energy: EnergySpec, x_bar: Point, epsilon: f64, t_obs: f64, n: usize) -> Self {
        Self {
            epsilon,
            t_obs,
            n,
            grid_mode: GridMode::Uniform,
            solver: SolverKind::Direct,
            grad_tol: default_grad_tol(),
            max_iter: default_max_iter(),
            space,
            energy,
            x_bar,
            horizon: None,
        }
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_x_bar(&self, x_bar: Point) -> Self {
        Self { x_bar, ..self.clone() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.t_obs.max(HORIZON_FACTOR * self.epsilon))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::build(self.grid_mode, self.epsilon, self.horizon(), self.n)
    }

    pub fn validate(&self) -> Result<()> {
        check_eps_horizon(self.epsilon, self.horizon())?;
        if !(self.t_obs > 0.0 && self.t_obs <= self.horizon()) {
            return Err(invalid(format!("observation window T={} must lie in (0, horizon]", self.t_obs)));
        }
        if self.n == 0 {
            return Err(invalid("N must be at least 1"));
        }
        if !(self.grad_tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("grad_tol must be positive and max_iter nonzero"));
        }
        self.space.validate()?;
        self.space.point(self.x_bar.coords.clone())?;
        self.energy.check_point(&self.x_bar.coords)?;
        if !self.energy.value(&self.x_bar.coords).is_finite() {
            return Err(WedError::Domain("initial datum outside the energy domain".into()));
        }
        let b = self.energy.coercivity.b;
        if 16.0 * self.epsilon * b > 1.0 {
            return Err(invalid(format!(
                "epsilon {} violates the smallness condition 1/(16 eps) >= B = {b}",
                self.epsilon
            )));
        }
        if self.solver == SolverKind::EulerLagrange {
            if !self.space.is_hilbert() {
                return Err(invalid("euler_lagrange solver needs a Hilbert space"));
            }
            if self.n < 2 {
                return Err(invalid("euler_lagrange solver needs N >= 2"));
            }
        }
        Ok(())
    }
}

/// Minimizing trajectory with per-node diagnostics.
#[derive(Debug, Clone)]
pub struct WedSolution {
    pub problem: WedProblem,
    pub trajectory: Trajectory,
    /// Discrete `I_ε`; equals `values[0]`.
    pub objective: f64,
    /// Per-cell metric speed.
    pub speeds: Vec<f64>,
    /// Per-node energy.
    pub phi: Vec<f64>,
    /// Per-node tail functional `V_i` (cost of the remaining curve restarted at `t_i`).
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl WedSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.trajectory.grid.nodes
    }

    /// Number of cells lying inside the observation window.
    pub fn observed_cells(&self) -> usize {
        let t_obs = self.problem.t_obs * (1.0 + 1e-12);
        self.nodes().windows(2).take_while(|w| w[1] <= t_obs).count()
    }
}

/// Tail functionals `V_i` by backward recursion; `V_0` is the discrete `I_ε`.
pub fn tail_values(grid: &TimeGrid, eps: f64, phi: &[f64], speeds: &[f64]) -> Vec<f64> {
    let cells = scaled_cells(grid, eps);
    let n = grid.n_cells();
    let mut v = vec![0.0; n + 1];
    v[n] = phi[n];
    for i in (0..n).rev() {
        let c = &cells[i];
        let running = c.mass * 0.5 * eps * speeds[i] * speeds[i] + c.alpha * phi[i] + c.beta * phi[i + 1];
        v[i] = running + c.decay * v[i + 1];
    }
    v
}

/// Discrete `I_ε` of a trajectory starting at `x̄`; `+inf` when `φ` is infinite somewhere.
pub fn wed_value(problem: &WedProblem, traj: &Trajectory) -> Result<f64> {
    if traj.points.first().map(|p| &p.coords) != Some(&problem.x_bar.coords) {
        return Err(invalid("trajectory must start at x_bar"));
    }
    if traj.grid.horizon() <= 0.0 || traj.space != problem.space {
        return Err(invalid("trajectory space does not match the problem"));
    }
    Weights::new(&traj.grid, problem.epsilon)?;
    let phi: Vec<f64> = traj.points.iter().map(|p| problem.energy.value(&p.coords)).collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let speeds = traj.metric_speed();
    Ok(tail_values(&traj.grid, problem.epsilon, &phi, &speeds)[0])
}

/// Solves the problem with the configured backend.
pub fn solve(problem: &WedProblem) -> Result<WedSolution> {
    match problem.solver {
        SolverKind::Direct => minimize_wed(problem),
        SolverKind::EulerLagrange => solve_euler_lagrange(problem),
    }
}

fn finish(problem: &WedProblem, grid: TimeGrid, points: Vec<Point>, converged: bool, iterations: usize, gradient_norm: f64) -> Result<WedSolution> {
    let trajectory = Trajectory::new(grid, points, problem.space.clone())?;
    let phi: Vec<f64> = trajectory.points.iter().map(|p| problem.energy.value(&p.coords)).collect();
    let speeds = trajectory.metric_speed();
    let values = tail_values(&trajectory.grid, problem.epsilon, &phi, &speeds);
    Ok(WedSolution {
        problem: problem.clone(),
        objective: values[0],
        trajectory,
        speeds,
        phi,
        values,
        converged,
        iterations,
        gradient_norm,
    })
}

/// Direct minimization of the discrete functional by preconditioned L-BFGS,
/// started from the constant curve.
pub fn minimize_wed(problem: &WedProblem) -> Result<WedSolution> {
    problem.validate()?;
    let eps = problem.epsilon;
    let grid = problem.grid()?;
    let n = grid.n_cells();
    let d = problem.space.dim();
    let steps = grid.steps();
    let wts = Weights::new(&grid, eps)?;
    let node_w = node_weights(&grid, eps);
    let space = &problem.space;
    let energy = &problem.energy;
    let x0 = &problem.x_bar.coords;

    // kinetic coefficients m_i ε / h_i²
    let kin: Vec<f64> = (0..n).map(|i| wts.masses[i] * eps / (steps[i] * steps[i])).collect();
    // normalization of nodal gradients for the stopping measure
    let node_mass: Vec<f64> = (1..=n)
        .map(|j| wts.masses[j - 1] + if j < n { wts.masses[j] } else { wts.tail })
        .collect();

    let node = |x: &[f64], j: usize| -> Vec<f64> {
        if j == 0 {
            x0.clone()
        } else {
            x[(j - 1) * d..j * d].to_vec()
        }
    };

    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; n * d];
        let mut prev = x0.clone();
        for j in 1..=n {
            let cur = node(x, j);
            let phi = energy.value(&cur);
            if !phi.is_finite() {
                return (f64::INFINITY, g);
            }
            f += node_w[j] * phi;
            if let Ok(p) = energy.partials(&cur) {
                for k in 0..d {
                    g[(j - 1) * d + k] += node_w[j] * p[k];
                }
            }
            let delta: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
            let i = j - 1;
            f += 0.5 * kin[i] * space.norm(&delta).powi(2);
            let hg = space.half_sq_norm_grad(&delta);
            for k in 0..d {
                g[(j - 1) * d + k] += kin[i] * hg[k];
                if j >= 2 {
                    g[(j - 2) * d + k] -= kin[i] * hg[k];
                }
            }
            prev = cur;
        }
        (f + node_w[0] * energy.value(x0), g)
    };

    // Tridiagonal kinetic Hessian in time plus the convex part of the potential
    // curvature at x̄. In Hilbert spaces the curvature is diagonalized so that
    // coupled coordinates (quantiles, Dirichlet nodes) decouple into modes;
    // otherwise only its diagonal is kept.
    let w = if space.is_hilbert() { space.metric_weight() } else { 1.0 };
    let (curv, basis): (Vec<f64>, Option<DMatrix<f64>>) = match energy.hessian(x0) {
        Ok(h) if space.is_hilbert() && d > 1 => {
            let eig = h.symmetric_eigen();
            (eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(), Some(eig.eigenvectors))
        }
        Ok(h) => ((0..d).map(|k| h[(k, k)].max(0.0)).collect(), None),
        Err(_) => (vec![0.0; d], None),
    };
    let mut diag = vec![vec![0.0; n]; d];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for j in 1..=n {
        for (k, dk) in diag.iter_mut().enumerate() {
            dk[j - 1] = w * (kin[j - 1] + if j < n { kin[j] } else { 0.0 }) + node_w[j] * curv[k];
        }
        if j < n {
            off[j - 1] = -w * kin[j];
        }
    }
    let precond = |g: &[f64]| -> Vec<f64> {
        // rows are time nodes, columns coordinates; columns of `modes` are contiguous
        let gm = DMatrix::from_row_slice(n, d, g);
        let mut modes = match &basis {
            Some(q) => gm * q,
            None => gm,
        };
        for (k, mut col) in modes.column_iter_mut().enumerate() {
            solve_tridiagonal(&off, &diag[k], &off, col.as_mut_slice());
        }
        let out = match &basis {
            Some(q) => modes * q.transpose(),
            None => modes,
        };
        out.transpose().as_slice().to_vec()
    };
    // Kinetic gradient terms are differences of nearly equal nodes scaled by
    // m ε / h²; on short cells their rounding error exceeds grad_tol, so
    // that level is discounted before normalizing.
    let u_scale = x0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let floor: Vec<f64> = (1..=n)
        .map(|j| 16.0 * f64::EPSILON * u_scale * w * (kin[j - 1] + if j < n { kin[j] } else { 0.0 }))
        .collect();
    let measure = |_: &[f64], g: &[f64]| -> f64 {
        (0..n)
            .map(|j| (space.dual_norm(&g[j * d..(j + 1) * d]) - floor[j]).max(0.0) / node_mass[j])
            .fold(0.0, f64::max)
    };

    let start: Vec<f64> = (0..n).flat_map(|_| x0.iter().copied()).collect();
    let opts = LbfgsOptions { max_iter: problem.max_iter, tol: problem.grad_tol, ..Default::default() };
    let out = lbfgs(start, eval, precond, measure, &opts);
    let points: Vec<Point> = (0..=n).map(|j| Point::new(node(&out.x, j))).collect();
    let sol = finish(problem, grid, points, out.converged, out.iterations, out.measure)?;
    if !out.converged {
        return Err(WedError::NonConvergence {
            what: "direct WED minimization".into(),
            iterations: out.iterations,
            trace: out.trace,
            best: Some(Box::new(sol)),
        });
    }
    Ok(sol)
}

/// Finite-difference coefficients of one interior row of `−ε u'' + u'`.
fn interior_coeffs(eps: f64, hm: f64, hp: f64) -> (f64, f64, f64) {
    let s = hm + hp;
    let den = hm * hp * s;
    let a = -2.0 * eps / (hm * s) - hp * hp / den;
    let b = 2.0 * eps / (hm * hp) + (hp * hp - hm * hm) / den;
    let c = -2.0 * eps / (hp * s) + hm * hm / den;
    (a, b, c)
}

/// Second-order one-sided backward difference at the last node.
fn terminal_coeffs(h1: f64, h2: f64) -> (f64, f64, f64) {
    (
        (2.0 * h1 + h2) / (h1 * (h1 + h2)),
        -(h1 + h2) / (h1 * h2),
        h1 / (h2 * (h1 + h2)),
    )
}

/// Residual rows of the discrete boundary-value problem
/// `−ε u'' + u' + ∇φ(u) = 0`, `u(0) = x̄`, `u'(T) + ∇φ(u(T)) = 0`.
/// Row `j − 1` belongs to node `j`; `None` if a node leaves the domain.
fn el_residual(problem: &WedProblem, grid: &TimeGrid, u: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let eps = problem.epsilon;
    let n = grid.n_cells();
    let w = problem.space.metric_weight();
    let h = grid.steps();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let grad = |x: &[f64]| -> Option<Vec<f64>> {
        problem.energy.partials(x).ok().map(|g| g.into_iter().map(|v| v / w).collect())
    };
    for j in 1..n {
        let (a, b, c) = interior_coeffs(eps, h[j - 1], h[j]);
        let g = grad(&u[j])?;
        rows.push((0..u[j].len()).map(|k| a * u[j - 1][k] + b * u[j][k] + c * u[j + 1][k] + g[k]).collect());
    }
    let (c0, c1, c2) = terminal_coeffs(h[n - 1], h[n - 2]);
    let g = grad(&u[n])?;
    rows.push((0..u[n].len()).map(|k| c0 * u[n][k] + c1 * u[n - 1][k] + c2 * u[n - 2][k] + g[k]).collect());
    if rows.iter().flatten().all(|v| v.is_finite()) {
        Some(rows)
    } else {
        None
    }
}

fn max_abs(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Finite-difference Euler–Lagrange solve by damped Newton on the
/// block-tridiagonal system, started from a backward-Euler flow on the grid.
pub fn solve_euler_lagrange(problem: &WedProblem) -> Result<WedSolution> {
    problem.validate()?;
    let grid = problem.grid()?;
    let n = grid.n_cells();
    let d = problem.space.dim();
    let h = grid.steps();
    let energy = &problem.energy;

    // initial guess: implicit Euler steps of the gradient flow on the grid
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    u.push(problem.x_bar.coords.clone());
    for i in 0..n {
        let y = yosida(energy, &problem.space, &Point::new(u[i].clone()), h[i])
            .map(|y| y.argmin.coords)
            .unwrap_or_else(|_| u[i].clone());
        u.push(y);
    }

    let mut res = el_residual(problem, &grid, &u)
        .ok_or_else(|| WedError::Domain("initial guess left the energy domain".into()))?;
    let mut merit = max_abs(&res);
    let mut trace = vec![merit];
    let mut iterations = 0;
    while merit > problem.grad_tol && iterations < problem.max_iter {
        iterations += 1;
        let step = newton_step(problem, &grid, &u, &res)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<Vec<f64>> = (0..=n)
                .map(|j| {
                    if j == 0 {
                        u[0].clone()
                    } else {
                        (0..d).map(|k| u[j][k] - alpha * step[j - 1][k]).collect()
                    }
                })
                .collect();
            if let Some(r) = el_residual(problem, &grid, &trial) {
                let m = max_abs(&r);
                if m < merit || (alpha == 1.0 && m <= 2.0 * merit && merit < 1e-6) {
                    u = trial;
                    res = r;
                    merit = m;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        trace.push(merit);
        if !accepted {
            break;
        }
    }
    let points: Vec<Point> = u.into_iter().map(Point::new).collect();
    let converged = merit <= problem.grad_tol;
    let sol = finish(problem, grid, points, converged, iterations, merit)?;
    if !converged {
        return Err(WedError::NonConvergence {
            what: "Euler-Lagrange Newton iteration".into(),
            iterations,
            trace,
            best: Some(Box::new(sol)),
        });
    }
    Ok(sol)
}

/// Solves `J δ = R` for the Newton correction (returned per node `1..=N`).
fn newton_step(problem: &WedProblem, grid: &TimeGrid, u: &[Vec<f64>], res: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let eps = problem.epsilon;
    let n = grid.n_cells();
    let d = problem.space.dim();
    let h = grid.steps();
    let w = problem.space.metric_weight();
    let hess = |x: &[f64]| -> Result<DMatrix<f64>> { Ok(problem.energy.hessian(x)? / w) };
    let eye = DMatrix::<f64>::identity(d, d);

    // block rows: lower L_j (coupling j−1), diagonal D_j, upper U_j (coupling j+1)
    let mut lower: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut diag: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut upper: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut rhs: Vec<DVector<f64>> = res.iter().map(|r| DVector::from_column_slice(r)).collect();
    let mut last_interior = (0.0, 0.0, 0.0);
    for j in 1..n {
        let (a, b, c) = interior_coeffs(eps, h[j - 1], h[j]);
        lower.push(&eye * a);
        diag.push(&eye * b + hess(&u[j])?);
        upper.push(&eye * c);
        last_interior = (a, b, c);
    }
    // eliminate the u_{N−2} coupling of the terminal row using row N−1
    let (c0, c1, c2) = terminal_coeffs(h[n - 1], h[n - 2]);
    let (a_prev, _, c_prev) = last_interior;
    let gamma = c2 / a_prev;
    let h_prev = diag[n - 2].clone();
    lower.push(&eye * c1 - &h_prev * gamma);
    diag.push(&eye * (c0 - gamma * c_prev) + hess(&u[n])?);
    upper.push(DMatrix::zeros(d, d));
    rhs[n - 1] = &rhs[n - 1] - &rhs[n - 2] * gamma;

    // block Thomas forward sweep
    let singular = || WedError::Numeric { msg: "singular Euler-Lagrange Jacobian".into(), trace: Vec::new() };
    let mut cprime: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut dprime: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let (m, r) = if j == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            (&diag[j] - &lower[j] * &cprime[j - 1], &rhs[j] - &lower[j] * &dprime[j - 1])
        };
        let lu = m.lu();
        cprime.push(lu.solve(&upper[j]).ok_or_else(singular)?);
        dprime.push(lu.solve(&r).ok_or_else(singular)?);
    }
    let mut x = vec![DVector::zeros(d); n];
    x[n - 1] = dprime[n - 1].clone();
    for j in (0..n - 1).rev() {
        x[j] = &dprime[j] - &cprime[j] * &x[j + 1];
    }
    Ok(x.into_iter().map(|v| v.iter().copied().collect()).collect())
}

/// Inner variation diagnostics of a solution:
/// per-cell residual of `d/dt(φ − ε/2|u'|²) = −|u'|²` and the boundary identity
/// `I = 𝒱(0) + e^{−T/ε}(φ(u_T) − 𝒱(T))`, relative to `I`.
pub fn check_inner_variation(sol: &WedSolution) -> Vec<IdentityReport> {
    let eps = sol.problem.epsilon;
    let grid = &sol.trajectory.grid;
    let n = grid.n_cells();
    let h = grid.steps();
    let v = &sol.speeds;
    let script_v: Vec<f64> = (0..n).map(|i| sol.phi[i] - 0.5 * eps * v[i] * v[i]).collect();
    let mut times = Vec::new();
    let mut resid = Vec::new();
    for i in 0..n.saturating_sub(1) {
        times.push(grid.nodes[i]);
        resid.push((script_v[i + 1] - script_v[i]) / h[i] + v[i] * v[i]);
    }
    let vmax2 = v.iter().fold(0.0f64, |m, s| m.max(s * s));
    let tol = 5e-2 * vmax2.max(f64::MIN_POSITIVE);
    let local = IdentityReport::new("inner_variation", times, resid, tol);

    let tail = (-grid.horizon() / eps).exp();
    let v_end = sol.phi[n] - 0.5 * eps * v[n - 1] * v[n - 1];
    let predicted = script_v[0] + tail * (sol.phi[n] - v_end);
    let scale = sol.objective.abs().max(1e-12);
    let boundary = IdentityReport::scalar("inner_variation_boundary", (sol.objective - predicted).abs() / scale, 1e-3);
    vec![local, boundary]
}
