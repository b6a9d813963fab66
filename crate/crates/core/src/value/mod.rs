//! The value function `V_ε(x) = min I_ε` over curves from `x`, the proto-slope
//! `G_ε = √(2(φ − V_ε)/ε)`, and the identities relating them.

mod cache;
mod finsler;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{local_slope, probe_directions, yosida, EnergySpec, SlopeMethod};
use crate::error::{invalid, Result, WedError};
use crate::report::IdentityReport;
use crate::space::{Point, SpaceSpec};
use crate::trajectory::{node_weights, scaled_cells, GridMode, TimeGrid};
use crate::wed::{solve, SolverKind, WedProblem, WedSolution, HORIZON_FACTOR};

pub use cache::{CacheKey, ValueCache};
pub use finsler::{finsler_distance, phi_finsler_field, FinslerOptions, FinslerResult};

/// Discretization used for every value-function solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueOptions {
    #[serde(rename = "N")]
    pub n: usize,
    pub grid_mode: GridMode,
    pub solver: SolverKind,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Horizon of each solve in units of ε.
    pub horizon_factor: f64,
    pub cache_capacity: usize,
}

impl Default for ValueOptions {
    fn default() -> Self {
        Self {
            n: 4000,
            grid_mode: GridMode::Uniform,
            solver: SolverKind::Direct,
            grad_tol: 1e-9,
            max_iter: 5000,
            horizon_factor: HORIZON_FACTOR,
            cache_capacity: 4096,
        }
    }
}

impl ValueOptions {
    fn fingerprint(&self) -> u64 {
        let mut o = self.clone();
        o.cache_capacity = 0;
        cache::hash_json(&o)
    }
}

/// One evaluation of the value function.
#[derive(Debug, Clone)]
pub struct ValueSample {
    pub x: Point,
    pub epsilon: f64,
    pub v: f64,
    pub g: f64,
    pub phi: f64,
    pub solution: Option<Arc<WedSolution>>,
}

/// Row of a value sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueRow {
    pub x: Vec<f64>,
    pub epsilon: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub phi: f64,
}

impl From<&ValueSample> for ValueRow {
    fn from(s: &ValueSample) -> Self {
        Self { x: s.x.coords.clone(), epsilon: s.epsilon, v: s.v, g: s.g, phi: s.phi }
    }
}

/// `√(2 (φ − V)⁺ / ε)`.
pub fn proto_slope(phi: f64, v: f64, eps: f64) -> f64 {
    (2.0 * (phi - v).max(0.0) / eps).sqrt()
}

/// Space, energy and discretization shared by a family of value solves,
/// with a cache of computed values.
#[derive(Debug)]
pub struct ValueContext {
    pub space: SpaceSpec,
    pub energy: EnergySpec,
    pub options: ValueOptions,
    cache: ValueCache,
    fingerprint: u64,
}

impl ValueContext {
    pub fn new(space: SpaceSpec, energy: EnergySpec, options: ValueOptions) -> Result<Self> {
        space.validate()?;
        if options.n == 0 || !(options.horizon_factor > 0.0) {
            return Err(invalid("value options need N >= 1 and a positive horizon factor"));
        }
        let cache = ValueCache::new(options.cache_capacity);
        let fingerprint = options.fingerprint();
        Ok(Self { space, energy, options, cache, fingerprint })
    }

    pub fn problem(&self, x: &Point, eps: f64) -> WedProblem {
        let mut p = WedProblem::new(
            self.space.clone(),
            self.energy.clone(),
            x.clone(),
            eps,
            self.options.horizon_factor * eps,
            self.options.n,
        );
        p.grid_mode = self.options.grid_mode;
        p.solver = self.options.solver;
        p.grad_tol = self.options.grad_tol;
        p.max_iter = self.options.max_iter;
        p
    }

    /// Fresh solve with the full solution attached; the value is cached.
    pub fn sample(&self, x: &Point, eps: f64) -> Result<ValueSample> {
        let sol = solve(&self.problem(x, eps))?;
        let phi = sol.phi[0];
        let v = sol.objective;
        let slack = 1e-8 * (1.0 + phi.abs());
        if v > phi + slack {
            return Err(WedError::Numeric { msg: format!("value {v} exceeds energy {phi}"), trace: vec![v, phi] });
        }
        let q = self.energy.coercivity_q(&self.space, x);
        if v < -q - slack {
            return Err(WedError::Numeric { msg: format!("value {v} below coercivity bound {}", -q), trace: vec![v, q] });
        }
        let apriori = a_priori_report(&sol);
        if !apriori.pass {
            return Err(WedError::Numeric { msg: apriori.summary(), trace: apriori.residuals });
        }
        let key = CacheKey::new(&self.energy, &self.space, self.fingerprint, eps, &x.coords);
        let (v, phi) = self.cache.insert(key, (v, phi));
        Ok(ValueSample { x: x.clone(), epsilon: eps, v, g: proto_slope(phi, v, eps), phi, solution: Some(Arc::new(sol)) })
    }

    /// `V_ε(x)`, from the cache when available.
    pub fn value(&self, x: &Point, eps: f64) -> Result<f64> {
        let key = CacheKey::new(&self.energy, &self.space, self.fingerprint, eps, &x.coords);
        if let Some((v, _)) = self.cache.get(&key) {
            return Ok(v);
        }
        Ok(self.sample(x, eps)?.v)
    }

    /// `(V, G, φ)` at `x`, from the cache when available.
    pub fn row(&self, x: &Point, eps: f64) -> Result<ValueRow> {
        let key = CacheKey::new(&self.energy, &self.space, self.fingerprint, eps, &x.coords);
        let (v, phi) = match self.cache.get(&key) {
            Some(vp) => vp,
            None => {
                let s = self.sample(x, eps)?;
                (s.v, s.phi)
            }
        };
        Ok(ValueRow { x: x.coords.clone(), epsilon: eps, v, g: proto_slope(phi, v, eps), phi })
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

/// Uncached value-function evaluation.
pub fn value_function(space: &SpaceSpec, energy: &EnergySpec, x: &Point, eps: f64, options: &ValueOptions) -> Result<ValueSample> {
    let opts = ValueOptions { cache_capacity: 0, ..options.clone() };
    ValueContext::new(space.clone(), energy.clone(), opts)?.sample(x, eps)
}

/// `V_ε(u_ε(t_i))` read from the tail of the solution.
pub fn value_along(sol: &WedSolution) -> Vec<f64> {
    sol.values.clone()
}

/// Weighted cost of the solution on `[0, t_k]`.
fn partial_cost(sol: &WedSolution, k: usize) -> f64 {
    let eps = sol.problem.epsilon;
    let grid = &sol.trajectory.grid;
    let cells = scaled_cells(grid, eps);
    (0..k)
        .map(|i| {
            let c = &cells[i];
            let e = (-grid.nodes[i] / eps).exp();
            e * (c.mass * 0.5 * eps * sol.speeds[i] * sol.speeds[i] + c.alpha * sol.phi[i] + c.beta * sol.phi[i + 1])
        })
        .sum()
}

fn nearest_node(nodes: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, ti) in nodes.iter().enumerate() {
        if (ti - t).abs() < (nodes[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// A-priori bound `∫_0^T |u'|² ≤ 2(V + Q(x̄)) e^{2BT}` on a solution.
pub fn a_priori_report(sol: &WedSolution) -> IdentityReport {
    let h = sol.trajectory.grid.steps();
    let kinetic: f64 = sol.speeds.iter().zip(&h).map(|(v, h)| v * v * h).sum();
    let q = sol.problem.energy.coercivity_q(&sol.problem.space, &sol.problem.x_bar);
    let b = sol.problem.energy.coercivity.b;
    let bound = 2.0 * (sol.objective + q) * (2.0 * b * sol.trajectory.grid.horizon()).exp();
    let slack = 1e-8 * (1.0 + bound.abs());
    IdentityReport::scalar("a_priori_kinetic_bound", (kinetic - bound - slack).max(0.0), 0.0)
}

/// Dynamic programming principle at the nodes nearest to each `T'`:
/// the tail of the solution itself (`dpp_along`, exact up to round-off) and
/// a fresh solve from `u_ε(T')` (`dpp_fresh`), both relative to `V_ε(x̄)`.
pub fn check_dpp(ctx: &ValueContext, sol: &WedSolution, horizons: &[f64]) -> Result<Vec<IdentityReport>> {
    let eps = sol.problem.epsilon;
    let nodes = sol.nodes();
    let v0 = sol.objective;
    let scale = v0.abs().max(sol.phi[0].abs()).max(1e-12);
    let ks: Vec<usize> = horizons.iter().map(|t| if *t <= 0.0 { 0 } else { nearest_node(nodes, *t) }).collect();
    let fresh: Vec<f64> = ks
        .par_iter()
        .map(|&k| if k == 0 { Ok(v0) } else { ctx.value(&sol.trajectory.points[k], eps) })
        .collect::<Result<_>>()?;
    let mut along = Vec::new();
    let mut fresh_res = Vec::new();
    let mut times = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let partial = partial_cost(sol, k);
        let w = (-nodes[k] / eps).exp();
        times.push(nodes[k]);
        along.push((v0 - (partial + w * sol.values[k])).abs() / scale);
        fresh_res.push((v0 - (partial + w * fresh[j])).abs() / scale);
    }
    Ok(vec![
        IdentityReport::new("dpp_along", times.clone(), along, 1e-10),
        IdentityReport::new("dpp_fresh", times, fresh_res, 5e-3),
    ])
}

/// Per-cell residuals on the observation window of
/// `−dV/dt = ½|u'|² + (φ − V)/ε` (`fundamental`),
/// `V = φ − ε/2 |u'|²` (`vabs`) and the cumulative energy identity
/// `V(t) + ∫_0^t |u'|² = V(0)` (`energy_identity`), each with tolerance
/// `rel_tol` times the magnitude of its right-hand side.
pub fn check_fundamental_identity(sol: &WedSolution, rel_tol: f64) -> Vec<IdentityReport> {
    let eps = sol.problem.epsilon;
    let nodes = sol.nodes();
    let h = sol.trajectory.grid.steps();
    let k = sol.observed_cells().max(1);
    let (v, phi, s) = (&sol.values, &sol.phi, &sol.speeds);
    let mut times = Vec::with_capacity(k);
    let (mut fund, mut vabs, mut energy) = (Vec::new(), Vec::new(), Vec::new());
    let (mut rhs_scale, mut vabs_scale) = (0.0f64, 0.0f64);
    let mut dissipated = 0.0;
    for i in 0..k {
        times.push(nodes[i]);
        let rhs = 0.5 * s[i] * s[i] + (phi[i] - v[i]) / eps;
        rhs_scale = rhs_scale.max(rhs.abs());
        fund.push(-(v[i + 1] - v[i]) / h[i] - rhs);
        let abs_rhs = phi[i] - 0.5 * eps * s[i] * s[i];
        vabs_scale = vabs_scale.max(abs_rhs.abs());
        vabs.push(v[i] - abs_rhs);
        dissipated += s[i] * s[i] * h[i];
        energy.push(v[i + 1] + dissipated - v[0]);
    }
    let v_scale = v[..=k].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = f64::MIN_POSITIVE;
    vec![
        IdentityReport::new("fundamental", times.clone(), fund, rel_tol * rhs_scale.max(floor)),
        IdentityReport::new("vabs", times.clone(), vabs, rel_tol * vabs_scale.max(floor)),
        IdentityReport::new("energy_identity", times, energy, rel_tol * v_scale.max(floor)),
    ]
}

/// Evaluates `(V, G, φ)` for all pairs, in parallel, in input order.
pub fn value_table(ctx: &ValueContext, xs: &[Point], eps_list: &[f64]) -> Result<Vec<ValueRow>> {
    let pairs: Vec<(&Point, f64)> = xs.iter().flat_map(|x| eps_list.iter().map(move |e| (x, *e))).collect();
    pairs.par_iter().map(|(x, e)| ctx.row(x, *e)).collect()
}

/// `ε ↦ V_ε(x)` is nonincreasing and bounded by `φ(x)`.
pub fn check_eps_monotonicity(ctx: &ValueContext, xs: &[Point], eps_list: &[f64]) -> Result<(Vec<IdentityReport>, Vec<ValueRow>)> {
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilon"));
    let rows = value_table(ctx, xs, &eps_sorted)?;
    let ne = eps_sorted.len();
    let (mut abscissa, mut mono, mut below) = (Vec::new(), Vec::new(), Vec::new());
    for (ix, _) in xs.iter().enumerate() {
        let r = &rows[ix * ne..(ix + 1) * ne];
        for j in 0..ne {
            below.push((r[j].v - r[j].phi).max(0.0));
            if j + 1 < ne {
                abscissa.push(r[j + 1].epsilon);
                mono.push((r[j].v - r[j + 1].v).max(0.0));
            }
        }
    }
    let nb = below.len();
    Ok((
        vec![
            IdentityReport::new("eps_monotonicity", abscissa, mono, 1e-6),
            IdentityReport::new("value_below_phi", (0..nb).map(|i| i as f64).collect(), below, 1e-6),
        ],
        rows,
    ))
}

/// Outcome of the Yosida lower-bound check.
#[derive(Debug, Clone)]
pub struct YosidaBound {
    pub v: f64,
    pub bound: f64,
    /// `V − bound`; the inequality holds when nonnegative.
    pub margin: f64,
    pub report: IdentityReport,
}

/// `V_ε(x) ≥ ∫_0^∞ φ_t(x) dμ_ε(t)`. The integral over `[0, 25ε]` uses the
/// piecewise-linear interpolant of `t ↦ φ_t(x)` on `n_quad` exp-graded cells;
/// the tail is bounded above by `φ(x) e^{−T/ε}` since `φ_t ≤ φ`.
pub fn check_yosida_bound(ctx: &ValueContext, x: &Point, eps: f64, n_quad: usize) -> Result<YosidaBound> {
    let v = ctx.value(x, eps)?;
    let t_end = HORIZON_FACTOR * eps;
    let grid = TimeGrid::exp_graded(eps, t_end, n_quad)?;
    let phi_x = ctx.energy.eval(x)?;
    let yos: Vec<f64> = grid
        .nodes
        .par_iter()
        .map(|t| if *t == 0.0 { Ok(phi_x) } else { yosida(&ctx.energy, &ctx.space, x, *t).map(|y| y.value) })
        .collect::<Result<_>>()?;
    // node weights include e^{−T/ε} at the last node; the tail beyond T is
    // covered by φ(x) instead of φ_T(x)
    let w = node_weights(&grid, eps);
    let tail = (-t_end / eps).exp();
    let bound: f64 = w.iter().zip(&yos).map(|(a, b)| a * b).sum::<f64>() + tail * (phi_x - yos[n_quad]);
    let margin = v - bound;
    let report = IdentityReport::new("yosida_bound", vec![eps], vec![(-margin).max(0.0)], 0.0);
    Ok(YosidaBound { v, bound, margin, report })
}

/// `G_ε(x) ≤ |∂φ|(x)` for every ε (`wed_slope_upper`), nondecreasing as ε
/// decreases (`wed_slope_trend`), and close to `|∂φ|(x)` at the smallest ε
/// (`wed_slope_limit`).
pub fn wed_slope_compare(ctx: &ValueContext, x: &Point, eps_list: &[f64], tol: f64, limit_tol: f64) -> Result<(Vec<IdentityReport>, Vec<ValueRow>)> {
    let slope = local_slope(&ctx.energy, &ctx.space, x, SlopeMethod::Analytic)?.value;
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilon"));
    let rows = value_table(ctx, std::slice::from_ref(x), &eps_sorted)?;
    let upper: Vec<f64> = rows.iter().map(|r| (r.g - slope).max(0.0)).collect();
    let trend: Vec<f64> = rows.windows(2).map(|w| (w[0].g - w[1].g).max(0.0)).collect();
    let last = rows.last().ok_or_else(|| invalid("empty epsilon list"))?;
    Ok((
        vec![
            IdentityReport::new("wed_slope_upper", eps_sorted.clone(), upper, tol),
            IdentityReport::new("wed_slope_trend", eps_sorted[1..].to_vec(), trend, tol),
            IdentityReport::scalar("wed_slope_limit", (last.g - slope).abs(), limit_tol),
        ],
        rows,
    ))
}

/// Probe settings for slope estimates of `V_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    pub h0: f64,
    pub levels: usize,
    pub n_random: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { h0: 0.1, levels: 6, n_random: 8, seed: 0x5EED_0002, tolerance: 5e-2 }
    }
}

/// Estimated slope of `V_ε` at `x`: `max_e (V(x) − V(x − h e))⁺ / h` over the
/// probe directions for `h = h₀ 2^{−k}`, with one Richardson step on the two
/// finest levels. Returns the estimate and the per-level quotients.
pub fn value_slope_estimate(ctx: &ValueContext, x: &Point, eps: f64, probe: &ProbeOptions) -> Result<(f64, Vec<(f64, f64)>)> {
    if probe.levels < 2 || !(probe.h0 > 0.0) {
        return Err(invalid("probe needs h0 > 0 and at least two levels"));
    }
    let dirs = if ctx.space.dim() == 1 {
        vec![vec![1.0 / ctx.space.norm(&[1.0])], vec![-1.0 / ctx.space.norm(&[1.0])]]
    } else {
        probe_directions(&ctx.space, x, None, probe.n_random, probe.seed)
    };
    let v0 = ctx.value(x, eps)?;
    let jobs: Vec<(usize, usize)> = (0..probe.levels).flat_map(|k| (0..dirs.len()).map(move |d| (k, d))).collect();
    let quotients: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(k, d)| {
            let h = probe.h0 * 0.5f64.powi(k as i32);
            let y: Vec<f64> = x.coords.iter().zip(&dirs[d]).map(|(a, b)| a - h * b).collect();
            // probes leaving the energy domain (e.g. the monotone cone) are discarded
            if !ctx.energy.value(&y).is_finite() {
                return Ok(None);
            }
            let v = ctx.value(&Point::new(y), eps)?;
            Ok(Some(((v0 - v) / h).max(0.0)))
        })
        .collect::<Result<_>>()?;
    let mut levels = Vec::with_capacity(probe.levels);
    for k in 0..probe.levels {
        let q = quotients[k * dirs.len()..(k + 1) * dirs.len()]
            .iter()
            .flatten()
            .fold(0.0f64, |m, q| m.max(*q));
        levels.push((probe.h0 * 0.5f64.powi(k as i32), q));
    }
    let n = levels.len();
    let est = (2.0 * levels[n - 1].1 - levels[n - 2].1).max(0.0);
    Ok((est, levels))
}

/// Outcome of the Hamilton–Jacobi check.
#[derive(Debug, Clone)]
pub struct HjOutcome {
    pub g: f64,
    pub estimate: f64,
    pub levels: Vec<(f64, f64)>,
    pub reports: Vec<IdentityReport>,
}

/// `G_ε(x) = |∂V_ε|(x)` with the slope estimated by probes (`hj_identity`,
/// relative), and `−dV/dt = ½|u'|² + ½|∂V_ε|²(u)` along the solution from `x`
/// at three nodes (`hj_gflow`, relative).
pub fn check_hj(ctx: &ValueContext, x: &Point, eps: f64, probe: &ProbeOptions) -> Result<HjOutcome> {
    if ctx.energy.lambda.is_none() {
        return Err(invalid("Hamilton-Jacobi check needs a convexity modulus"));
    }
    let sample = ctx.sample(x, eps)?;
    let sol = sample.solution.clone().expect("fresh sample carries its solution");
    let (estimate, levels) = value_slope_estimate(ctx, x, eps, probe)?;
    let g = sample.g;
    let identity = (estimate - g).abs() / g.max(1e-6);

    let nodes = sol.nodes();
    let h = sol.trajectory.grid.steps();
    let mut times = Vec::new();
    let mut gflow = Vec::new();
    for t in [0.5 * eps, eps, 2.0 * eps] {
        let k = nearest_node(nodes, t).min(nodes.len() - 2);
        let (est_k, _) = value_slope_estimate(ctx, &sol.trajectory.points[k], eps, probe)?;
        let v = sol.speeds[k];
        let rhs = 0.5 * v * v + 0.5 * est_k * est_k;
        let lhs = -(sol.values[k + 1] - sol.values[k]) / h[k];
        times.push(nodes[k]);
        gflow.push((lhs - rhs).abs() / rhs.max(1e-12));
    }
    Ok(HjOutcome {
        g,
        estimate,
        levels,
        reports: vec![
            IdentityReport::scalar("hj_identity", identity, probe.tolerance),
            IdentityReport::new("hj_gflow", times, gflow, probe.tolerance),
        ],
    })
}
