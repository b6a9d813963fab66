//! Time grids, exponential-measure quadrature and discrete curves.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WedError};
use crate::numeric::{invert_monotone, lower_gamma_moment};
use crate::space::{lerp, Point, SpaceSpec};

/// Largest admissible `T/ε`; beyond it `e^{−T/ε}` underflows relative to the masses.
pub const MAX_HORIZON_RATIO: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    #[default]
    Uniform,
    /// Equal μ_ε-mass cells: `t_i = −ε ln(1 − (i/N)(1 − e^{−T/ε}))`.
    ExpGraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
    pub mode: GridMode,
}

impl TimeGrid {
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) || n == 0 {
            return Err(invalid(format!("uniform grid needs T > 0 and N >= 1, got T={t_end}, N={n}")));
        }
        let mut nodes: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        nodes[n] = t_end;
        Ok(Self { nodes, mode: GridMode::Uniform })
    }

    pub fn exp_graded(eps: f64, t_end: f64, n: usize) -> Result<Self> {
        check_eps_horizon(eps, t_end)?;
        if n == 0 {
            return Err(invalid("grid needs N >= 1"));
        }
        let c = -(-t_end / eps).exp_m1();
        let mut nodes: Vec<f64> = (0..=n).map(|i| -eps * (-(i as f64 / n as f64 * c)).ln_1p()).collect();
        nodes[0] = 0.0;
        nodes[n] = t_end;
        Ok(Self { nodes, mode: GridMode::ExpGraded })
    }

    pub fn build(mode: GridMode, eps: f64, t_end: f64, n: usize) -> Result<Self> {
        match mode {
            GridMode::Uniform => Self::uniform(t_end, n),
            GridMode::ExpGraded => Self::exp_graded(eps, t_end, n),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn steps(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the cell containing `t` (clamped to the grid).
    pub fn locate(&self, t: f64) -> (usize, f64) {
        invert_monotone(&self.nodes, t)
    }
}

pub(crate) fn check_eps_horizon(eps: f64, t_end: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {eps}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {t_end}")));
    }
    if t_end / eps > MAX_HORIZON_RATIO {
        return Err(invalid(format!("T/epsilon = {} exceeds {MAX_HORIZON_RATIO}", t_end / eps)));
    }
    Ok(())
}

/// Cell masses of the exponential probability measure `μ_ε = e^{−t/ε}/ε dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub masses: Vec<f64>,
    pub tail: f64,
    pub epsilon: f64,
}

impl Weights {
    pub fn new(grid: &TimeGrid, eps: f64) -> Result<Self> {
        check_eps_horizon(eps, grid.horizon())?;
        let masses = grid
            .nodes
            .windows(2)
            .map(|w| (-w[0] / eps).exp() * -(-(w[1] - w[0]) / eps).exp_m1())
            .collect();
        Ok(Self { masses, tail: (-grid.horizon() / eps).exp(), epsilon: eps })
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.tail
    }
}

/// Per-cell weights relative to `e^{−t_i/ε}` for integrating a piecewise-linear
/// function against `μ_ε` exactly: cell `i` contributes
/// `e^{−t_i/ε} (α̃_i f_i + β̃_i f_{i+1})`, and `α̃_i + β̃_i = m̃_i = 1 − e^{−h_i/ε}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledCell {
    pub decay: f64,
    pub mass: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn scaled_cells(grid: &TimeGrid, eps: f64) -> Vec<ScaledCell> {
    grid.steps()
        .into_iter()
        .map(|h| {
            let x = h / eps;
            let mass = -(-x).exp_m1();
            let beta = right_weight(x);
            ScaledCell { decay: (-x).exp(), mass, alpha: mass - beta, beta }
        })
        .collect()
}

/// `(1 − (1+x) e^{−x}) / x`, accurate for small `x`.
fn right_weight(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_{k≥2} (−1)^{k+1} (k−1)/k! x^{k−1}
        let mut term = 1.0; // x^{k-1}/k! for k = 1
        let mut sum = 0.0;
        for k in 2..24 {
            term *= x / k as f64;
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += s * (k - 1) as f64 * term;
        }
        sum
    } else {
        (1.0 - (1.0 + x) * (-x).exp()) / x
    }
}

/// Absolute node weights `W_j` with `Σ_j W_j f_j = ∫_0^T f dμ_ε + e^{−T/ε} f(T)`
/// for piecewise-linear `f`.
pub fn node_weights(grid: &TimeGrid, eps: f64) -> Vec<f64> {
    let cells = scaled_cells(grid, eps);
    let n = grid.n_cells();
    let mut w = vec![0.0; n + 1];
    for (i, c) in cells.iter().enumerate() {
        let e = (-grid.nodes[i] / eps).exp();
        w[i] += e * c.alpha;
        w[i + 1] += e * c.beta;
    }
    w[n] += (-grid.horizon() / eps).exp();
    w
}

/// Discrete curve: one point per grid node, all in one space.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub points: Vec<Point>,
    pub space: SpaceSpec,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, points: Vec<Point>, space: SpaceSpec) -> Result<Self> {
        if points.len() != grid.nodes.len() {
            return Err(invalid(format!(
                "trajectory has {} points for {} nodes",
                points.len(),
                grid.nodes.len()
            )));
        }
        for p in &points {
            space.check_dim(p)?;
        }
        Ok(Self { grid, points, space })
    }

    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(grid: TimeGrid, space: SpaceSpec, f: F) -> Result<Self> {
        let points = grid.nodes.iter().map(|t| Point::new(f(*t))).collect();
        Self::new(grid, points, space)
    }

    pub fn constant(grid: TimeGrid, space: SpaceSpec, x: &Point) -> Result<Self> {
        let points = vec![x.clone(); grid.nodes.len()];
        Self::new(grid, points, space)
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Cell lengths `d(u_i, u_{i+1})`.
    pub fn cell_lengths(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| self.space.distance_unchecked(&w[0].coords, &w[1].coords))
            .collect()
    }

    /// Per-cell metric speed `d(u_i, u_{i+1}) / (t_{i+1} − t_i)`.
    pub fn metric_speed(&self) -> Vec<f64> {
        self.cell_lengths().iter().zip(self.grid.steps()).map(|(d, h)| d / h).collect()
    }

    pub fn length(&self) -> f64 {
        self.cell_lengths().iter().sum()
    }

    /// Geodesic interpolation at time `t` (clamped to the grid).
    pub fn sample(&self, t: f64) -> Point {
        let (i, theta) = self.grid.locate(t);
        if theta == 0.0 {
            return self.points[i].clone();
        }
        Point::new(lerp(&self.points[i].coords, &self.points[i + 1].coords, theta))
    }

    /// Unit-speed reparameterization on `[0, L]`.
    pub fn arclength_reparam(&self) -> Result<Trajectory> {
        let lengths = self.cell_lengths();
        Ok(self.resample_by(&lengths)?.0)
    }

    /// Reparameterization with metric speed `g(ϑ(s))`: the new parameter is
    /// `s(t) = ∫_0^t |u'| / g(u)`. Returns the curve and the integrals
    /// `[∫g², ∫|ϑ'|², ∫g|ϑ'|, ∫g(u)|u'|dt]`, which must agree.
    pub fn g_reparam<G: Fn(&[f64]) -> f64>(&self, g: G) -> Result<(Trajectory, [f64; 4])> {
        let lengths = self.cell_lengths();
        let mut gm = Vec::with_capacity(lengths.len());
        for (i, w) in self.points.windows(2).enumerate() {
            let mid = lerp(&w[0].coords, &w[1].coords, 0.5);
            let samples = [g(&w[0].coords), g(&mid), g(&w[1].coords)];
            if samples.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(WedError::Domain(format!("reparameterization field is not positive on cell {i}")));
            }
            gm.push(samples[1]);
        }
        let ds: Vec<f64> = lengths.iter().zip(&gm).map(|(l, g)| l / g).collect();
        let (out, _) = self.resample_by(&ds)?;
        let original: f64 = lengths.iter().zip(&gm).map(|(l, g)| l * g).sum();
        let (mut i_g2, mut i_v2, mut i_gv) = (0.0, 0.0, 0.0);
        let steps = out.grid.steps();
        for (j, w) in out.points.windows(2).enumerate() {
            let h = steps[j];
            let v = out.space.distance_unchecked(&w[0].coords, &w[1].coords) / h;
            let gj = g(&lerp(&w[0].coords, &w[1].coords, 0.5));
            i_g2 += gj * gj * h;
            i_v2 += v * v * h;
            i_gv += gj * v * h;
        }
        let ints = [i_g2, i_v2, i_gv, original];
        let scale = ints.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let spread = ints.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
            - ints.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        if spread > 1e-3 * scale {
            return Err(WedError::Numeric {
                msg: format!("reparameterization integrals disagree by {spread:e}; refine the curve"),
                trace: ints.to_vec(),
            });
        }
        Ok((out, ints))
    }

    /// Resamples onto a uniform grid of the cumulative parameter built from
    /// per-cell increments, taking the left-most preimage on flat stretches.
    fn resample_by(&self, increments: &[f64]) -> Result<(Trajectory, Vec<f64>)> {
        let n = increments.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for d in increments {
            cum.push(cum.last().unwrap() + d);
        }
        let total = cum[n];
        if !(total > 0.0) {
            return Err(WedError::DegenerateCurve("curve has zero length".into()));
        }
        let grid = TimeGrid::uniform(total, n)?;
        let mut points = Vec::with_capacity(n + 1);
        for (k, s) in grid.nodes.iter().enumerate() {
            if k == 0 {
                points.push(self.points[0].clone());
            } else if k == n {
                points.push(self.points[n].clone());
            } else {
                let (i, theta) = invert_monotone(&cum, *s);
                points.push(Point::new(lerp(&self.points[i].coords, &self.points[i + 1].coords, theta)));
            }
        }
        Ok((Trajectory { grid, points, space: self.space.clone() }, cum))
    }
}

/// Discrete weighted integration by parts residual
/// `|w(0) + ε∫_0^T w' dμ_ε − w(T) e^{−T/ε} − ∫_0^T w dμ_ε|`
/// with left-node sampling of `w` (first-order accurate).
pub fn weighted_ibp_check(w: &[f64], grid: &TimeGrid, eps: f64) -> Result<f64> {
    if w.len() != grid.nodes.len() {
        return Err(invalid("samples must match the grid"));
    }
    let wts = Weights::new(grid, eps)?;
    let steps = grid.steps();
    let mut lhs = w[0];
    let mut rhs = w[grid.n_cells()] * wts.tail;
    for (i, m) in wts.masses.iter().enumerate() {
        lhs += eps * m * (w[i + 1] - w[i]) / steps[i];
        rhs += m * w[i];
    }
    Ok((lhs - rhs).abs())
}

/// Weighted Poincaré check `∫|w'|² dμ_ε ≥ (1/4ε²) ∫|w|² dμ_ε` on `[0, T]`
/// for the piecewise-linear interpolant of `w` (integrals are exact).
/// Returns `(lhs, rhs, rhs/lhs)`, with ratio 0 when `lhs = 0`.
pub fn spectral_check(w: &[f64], grid: &TimeGrid, eps: f64) -> Result<(f64, f64, f64)> {
    if w.len() != grid.nodes.len() {
        return Err(invalid("samples must match the grid"));
    }
    if w[0] != 0.0 {
        return Err(invalid("spectral check needs w(0) = 0"));
    }
    let wts = Weights::new(grid, eps)?;
    let steps = grid.steps();
    let (mut lhs, mut l2) = (0.0, 0.0);
    for i in 0..grid.n_cells() {
        let h = steps[i];
        let s = (w[i + 1] - w[i]) / h;
        lhs += s * s * wts.masses[i];
        let x = h / eps;
        let e = (-grid.nodes[i] / eps).exp();
        let a = w[i];
        let b = s * eps;
        let cell = a * a * lower_gamma_moment(0, x) + 2.0 * a * b * lower_gamma_moment(1, x) + b * b * lower_gamma_moment(2, x);
        l2 += e * cell;
    }
    let rhs = l2 / (4.0 * eps * eps);
    let ratio = if lhs > 0.0 { rhs / lhs } else { 0.0 };
    Ok((lhs, rhs, ratio))
}
