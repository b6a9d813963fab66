//! Finsler distance `d_f(u0, u1) = inf ∫ f(ϑ)|ϑ'|`, computed from the
//! Lagrangian form `inf_{S, ϑ} ∫_0^S ½|ϑ'|² + ½ f²(ϑ)` with free horizon `S`.

use serde::{Deserialize, Serialize};

use crate::energy::EnergySpec;
use crate::error::{invalid, Result, WedError};
use crate::numeric::{golden_section, lbfgs, solve_tridiagonal, LbfgsOptions};
use crate::space::{lerp, Point, SpaceSpec};
use crate::trajectory::{TimeGrid, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinslerOptions {
    /// Cells of the discrete curve.
    pub cells: usize,
    /// Tolerance on the gradient density relative to `max(1, max f²)` on the segment.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Relative tolerance of the golden-section search over the horizon.
    pub horizon_tol: f64,
}

impl Default for FinslerOptions {
    fn default() -> Self {
        Self { cells: 200, inner_tol: 1e-8, inner_max_iter: 5000, horizon_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct FinslerResult {
    /// Minimal Lagrangian action.
    pub distance: f64,
    pub horizon: f64,
    pub curve: Trajectory,
    /// `∫ f |ϑ'|` of the optimal curve.
    pub product_value: f64,
}

/// `f = √(1 ∨ φ)`.
pub fn phi_finsler_field(energy: &EnergySpec) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x| energy.value(x).max(1.0).sqrt()
}

pub fn finsler_distance<F: Fn(&[f64]) -> f64>(space: &SpaceSpec, f: F, u0: &Point, u1: &Point, opts: &FinslerOptions) -> Result<FinslerResult> {
    space.check_dim(u0)?;
    space.check_dim(u1)?;
    if !space.is_hilbert() {
        return Err(invalid("finsler distance needs a Hilbert space"));
    }
    if opts.cells < 2 {
        return Err(invalid("finsler curve needs at least two cells"));
    }
    let dist = space.distance(u0, u1)?;
    let m = opts.cells;
    let d = space.dim();
    let w = space.metric_weight();
    let line: Vec<Vec<f64>> = (0..=m).map(|i| lerp(&u0.coords, &u1.coords, i as f64 / m as f64)).collect();
    if dist == 0.0 {
        let grid = TimeGrid::uniform(1.0, m)?;
        let curve = Trajectory::new(grid, line.into_iter().map(Point::new).collect(), space.clone())?;
        return Ok(FinslerResult { distance: 0.0, horizon: 0.0, curve, product_value: 0.0 });
    }
    let mut f_max = 0.0f64;
    for p in &line {
        let v = f(p);
        if !(v >= 1.0) || !v.is_finite() {
            return Err(WedError::Domain("finsler weight must satisfy f >= 1".into()));
        }
        f_max = f_max.max(v);
    }
    let f2 = |x: &[f64]| {
        let v = f(x);
        v * v
    };

    let n_var = (m - 1) * d;
    let interior0: Vec<f64> = line[1..m].iter().flatten().copied().collect();
    let node = |x: &[f64], j: usize| -> Vec<f64> {
        if j == 0 {
            u0.coords.clone()
        } else if j == m {
            u1.coords.clone()
        } else {
            x[(j - 1) * d..j * d].to_vec()
        }
    };

    // inner problem for a fixed horizon; returns (action, interior nodes)
    let inner = |s: f64, start: &[f64]| -> (f64, Vec<f64>, bool) {
        let h = s / m as f64;
        let eval = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut val = 0.0;
            let mut g = vec![0.0; n_var];
            for i in 0..m {
                let a = node(x, i);
                let b = node(x, i + 1);
                let mut sq = 0.0;
                for k in 0..d {
                    let dk = b[k] - a[k];
                    sq += dk * dk;
                    let gk = w * dk / h;
                    if i + 1 < m {
                        g[i * d + k] += gk;
                    }
                    if i > 0 {
                        g[(i - 1) * d + k] -= gk;
                    }
                }
                val += 0.5 * w * sq / h;
            }
            for j in 0..=m {
                let tau = if j == 0 || j == m { 0.5 } else { 1.0 };
                let p = node(x, j);
                let fv = f2(&p);
                if !fv.is_finite() {
                    return (f64::INFINITY, g);
                }
                val += 0.5 * h * tau * fv;
                if j > 0 && j < m {
                    for k in 0..d {
                        let step = f64::EPSILON.cbrt() * (1.0 + p[k].abs());
                        let mut pp = p.clone();
                        let mut pm = p.clone();
                        pp[k] += step;
                        pm[k] -= step;
                        g[(j - 1) * d + k] += 0.5 * h * (f2(&pp) - f2(&pm)) / (2.0 * step);
                    }
                }
            }
            (val, g)
        };
        let diag = vec![2.0 * w / h; m - 1];
        let off = vec![-w / h; m - 2];
        let precond = |g: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n_var];
            let mut rhs = vec![0.0; m - 1];
            for k in 0..d {
                for j in 0..m - 1 {
                    rhs[j] = g[j * d + k];
                }
                solve_tridiagonal(&off, &diag, &off, &mut rhs);
                for j in 0..m - 1 {
                    out[j * d + k] = rhs[j];
                }
            }
            out
        };
        let scale = h * f_max * f_max;
        let measure = |_: &[f64], g: &[f64]| g.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
        // weights such as √(1 ∨ φ) have kinks that pin nodes; a stalled
        // objective or a failed descent step is accepted there
        let lopts = LbfgsOptions { tol: opts.inner_tol, max_iter: opts.inner_max_iter, stall_window: 50, ..Default::default() };
        let out = lbfgs(start.to_vec(), eval, precond, measure, &lopts);
        (out.f, out.x, out.converged || out.stalled || out.line_search_failed)
    };

    let mut warm = interior0.clone();
    let mut all_converged = true;
    let lo = 0.1 * dist;
    let hi = 10.0 * f_max.sqrt() * dist;
    let (s_opt, _) = golden_section(
        |s| {
            let (val, x, ok) = inner(s, &warm);
            all_converged &= ok;
            if val.is_finite() {
                warm = x;
            }
            val
        },
        lo,
        hi,
        opts.horizon_tol,
        200,
    );
    let (action, x, ok) = inner(s_opt, &warm);
    if !(ok && all_converged) {
        return Err(WedError::NonConvergence {
            what: "finsler curve optimization".into(),
            iterations: opts.inner_max_iter,
            trace: vec![action],
            best: None,
        });
    }
    let grid = TimeGrid::uniform(s_opt, m)?;
    let points: Vec<Point> = (0..=m).map(|j| Point::new(node(&x, j))).collect();
    let curve = Trajectory::new(grid, points, space.clone())?;
    let product_value: f64 = curve
        .points
        .windows(2)
        .map(|p| space.distance_unchecked(&p[0].coords, &p[1].coords) * f(&lerp(&p[0].coords, &p[1].coords, 0.5)))
        .sum();
    Ok(FinslerResult { distance: action, horizon: s_opt, curve, product_value })
}
