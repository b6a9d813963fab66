use std::sync::{Arc, OnceLock};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use wed_core::reference::{check_max_slope, MaxSlopeMode, StudyOptions};
use wed_core::trajectory::spectral_check;
use wed_core::value::{
    check_dpp, check_eps_monotonicity, check_fundamental_identity, check_hj, check_yosida_bound, finsler_distance,
    phi_finsler_field, value_table, ValueContext,
};
use wed_core::wed::check_inner_variation;
use wed_core::{convergence_study, io, lambda_diagnostics, minimizing_movements, IdentityReport, TimeGrid, WedSolution};

use crate::config::{ExperimentConfig, FinslerField, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Solve(usize),
    Value,
    Sweep,
    Mm,
    Finsler,
    Check(Suite),
}

/// A file produced by a task, relative to the output root.
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

pub struct TaskOutput {
    pub name: String,
    pub suite: Option<Suite>,
    pub artifacts: Vec<Artifact>,
    pub reports: Vec<IdentityReport>,
    pub wall_s: f64,
    pub error: Option<String>,
}

/// Solves and value samples shared between tasks.
pub struct Shared {
    pub cfg: ExperimentConfig,
    pub eps: Vec<f64>,
    pub ctx: ValueContext,
    solutions: Vec<OnceLock<std::result::Result<Arc<WedSolution>, String>>>,
}

impl Shared {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let eps = cfg.epsilons();
        let ctx = ValueContext::new(cfg.space.clone(), cfg.energy.clone(), cfg.value_options())?;
        let solutions = eps.iter().map(|_| OnceLock::new()).collect();
        Ok(Self { cfg, eps, ctx, solutions })
    }

    fn solution(&self, i: usize) -> Result<Arc<WedSolution>> {
        self.solutions[i]
            .get_or_init(|| wed_core::solve(&self.cfg.problem(self.eps[i])).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(|e| anyhow!("solve at epsilon {}: {e}", self.eps[i]))
    }
}

pub fn task_name(task: Task, eps: &[f64]) -> String {
    match task {
        Task::Solve(i) => format!("solve[eps={}]", eps[i]),
        Task::Value => "value".into(),
        Task::Sweep => "sweep".into(),
        Task::Mm => "mm".into(),
        Task::Finsler => "finsler".into(),
        Task::Check(s) => format!("check:{}", s.name()),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn tagged(mut reports: Vec<IdentityReport>, tag: &str) -> Vec<IdentityReport> {
    for r in &mut reports {
        r.identity = format!("{}@{tag}", r.identity);
    }
    reports
}

fn eps_tag(eps: f64) -> String {
    format!("eps={eps}")
}

pub fn run_task(shared: &Shared, task: Task) -> TaskOutput {
    let start = Instant::now();
    let mut out = TaskOutput {
        name: task_name(task, &shared.eps),
        suite: match task {
            Task::Check(s) => Some(s),
            _ => None,
        },
        artifacts: Vec::new(),
        reports: Vec::new(),
        wall_s: 0.0,
        error: None,
    };
    if let Err(e) = execute(shared, task, &mut out) {
        out.error = Some(format!("{e:#}"));
    }
    out.wall_s = start.elapsed().as_secs_f64();
    out
}

fn execute(shared: &Shared, task: Task, out: &mut TaskOutput) -> Result<()> {
    let cfg = &shared.cfg;
    match task {
        Task::Solve(i) => {
            let sol = shared.solution(i)?;
            let fund = check_fundamental_identity(&sol, cfg.rel_tol);
            let inner = check_inner_variation(&sol);
            let dir = format!("solve/eps_{}", shared.eps[i]);
            let traj = csv_bytes(|b| io::write_trajectory(b, &sol, &fund[0].residuals, &inner[0].residuals))?;
            out.artifacts.push(Artifact { path: format!("{dir}/trajectory.csv"), bytes: traj });
            let mut residuals = serde_json::Map::new();
            for r in inner.iter().chain(&fund) {
                residuals.insert(r.identity.clone(), json!(r.max_residual));
            }
            let report = json!({
                "epsilon": shared.eps[i],
                "objective": sol.objective,
                "iterations": sol.iterations,
                "gradient_norm": sol.gradient_norm,
                "converged": sol.converged,
                "residuals": residuals,
            });
            out.artifacts.push(Artifact { path: format!("{dir}/report.json"), bytes: json_bytes(&report)? });
        }
        Task::Value => {
            let rows = value_table(&shared.ctx, std::slice::from_ref(&cfg.x_bar), &shared.eps)?;
            out.artifacts.push(Artifact { path: "values.csv".into(), bytes: csv_bytes(|b| io::write_value_rows(b, &rows))? });
        }
        Task::Sweep => {
            let rows = value_table(&shared.ctx, &cfg.sample_points(), &shared.eps)?;
            out.artifacts.push(Artifact { path: "sweep.csv".into(), bytes: csv_bytes(|b| io::write_value_rows(b, &rows))? });
        }
        Task::Mm => {
            let (tau, steps) = cfg.mm_schedule();
            let mm = minimizing_movements(&cfg.space, &cfg.energy, &cfg.x_bar, tau, steps)?;
            out.artifacts.push(Artifact { path: "mm.csv".into(), bytes: csv_bytes(|b| io::write_mm(b, &mm))? });
        }
        Task::Finsler => {
            let (res, _) = finsler(cfg)?;
            out.artifacts.push(Artifact { path: "finsler.csv".into(), bytes: csv_bytes(|b| io::write_curve(b, &res.curve))? });
            let summary = json!({
                "distance": res.distance,
                "horizon": res.horizon,
                "product_value": res.product_value,
            });
            out.artifacts.push(Artifact { path: "finsler.json".into(), bytes: json_bytes(&summary)? });
        }
        Task::Check(suite) => out.reports = check(shared, suite, out)?,
    }
    Ok(())
}

fn finsler(cfg: &ExperimentConfig) -> Result<(wed_core::value::FinslerResult, f64)> {
    let f = cfg.finsler.as_ref().context("no finsler section in the config")?;
    let from = f.from.clone().unwrap_or_else(|| cfg.x_bar.clone());
    let res = match f.field {
        FinslerField::Phi => finsler_distance(&cfg.space, phi_finsler_field(&cfg.energy), &from, &f.to, &f.options)?,
        FinslerField::Unit => finsler_distance(&cfg.space, |_| 1.0, &from, &f.to, &f.options)?,
    };
    let d = cfg.space.distance(&from, &f.to)?;
    Ok((res, d))
}

fn check(shared: &Shared, suite: Suite, out: &mut TaskOutput) -> Result<Vec<IdentityReport>> {
    let cfg = &shared.cfg;
    let eps = &shared.eps;
    let per_eps = |f: &dyn Fn(usize) -> Result<Vec<IdentityReport>>| -> Result<Vec<IdentityReport>> {
        let mut all = Vec::new();
        for (i, e) in eps.iter().enumerate() {
            all.extend(tagged(f(i)?, &eps_tag(*e)));
        }
        Ok(all)
    };
    match suite {
        Suite::Spectral => per_eps(&|i| {
            let e = eps[i];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.probe.seed ^ i as u64);
            let mut abscissa = Vec::new();
            let mut excess = Vec::new();
            for k in 0..200 {
                let t_end = e * rng.random_range(1.0..40.0);
                let n = rng.random_range(2..400);
                let grid = TimeGrid::uniform(t_end, n)?;
                let mut w = vec![0.0];
                for j in 1..=n {
                    let step: f64 = rng.random_range(-1.0..1.0);
                    let grow = if k % 3 == 0 { (grid.nodes[j] / (2.0 * e)).exp() } else { 1.0 };
                    w.push(w[j - 1] + step * grow);
                }
                let (lhs, rhs, _) = spectral_check(&w, &grid, e)?;
                abscissa.push(k as f64);
                excess.push(((rhs - lhs) / lhs.max(f64::MIN_POSITIVE)).max(0.0));
            }
            Ok(vec![IdentityReport::new("spectral_inequality", abscissa, excess, 1e-12)])
        }),
        Suite::Inner => per_eps(&|i| Ok(check_inner_variation(&*shared.solution(i)?))),
        Suite::Fundamental => per_eps(&|i| Ok(check_fundamental_identity(&*shared.solution(i)?, cfg.rel_tol))),
        Suite::Dpp => per_eps(&|i| {
            let sol = shared.solution(i)?;
            let e = eps[i];
            let horizons: Vec<f64> = [e, 2.0 * e, 5.0 * e].into_iter().filter(|t| *t <= cfg.t_obs).collect();
            Ok(check_dpp(&shared.ctx, &sol, &horizons)?)
        }),
        Suite::Monotone => Ok(check_eps_monotonicity(&shared.ctx, &cfg.sample_points(), eps)?.0),
        Suite::Yosida => {
            let mut abscissa = Vec::new();
            let mut resid = Vec::new();
            for x in cfg.sample_points() {
                for e in eps {
                    let b = check_yosida_bound(&shared.ctx, &x, *e, cfg.yosida_quadrature)?;
                    abscissa.push(*e);
                    resid.push((-b.margin).max(0.0));
                }
            }
            Ok(vec![IdentityReport::new("yosida_bound", abscissa, resid, 0.0)])
        }
        Suite::Hj => per_eps(&|i| Ok(check_hj(&shared.ctx, &cfg.x_bar, eps[i], &cfg.probe)?.reports)),
        Suite::Lambda => per_eps(&|i| {
            let lambda = cfg.energy.lambda.context("the energy has no convexity modulus")?;
            Ok(lambda_diagnostics(&*shared.solution(i)?, lambda, cfg.lambda_prime)?.reports)
        }),
        Suite::Convergence => {
            let opts = StudyOptions {
                n: cfg.n,
                solver: cfg.solver,
                grad_tol: cfg.grad_tol,
                max_iter: cfg.max_iter,
                lsc_tol: cfg.lsc_tol,
            };
            let table = convergence_study(&cfg.space, &cfg.energy, &cfg.x_bar, eps, cfg.t_obs, &opts)?;
            out.artifacts.push(Artifact {
                path: "convergence.csv".into(),
                bytes: csv_bytes(|b| io::write_convergence(b, &table))?,
            });
            let lsc = IdentityReport::new(
                "max_slope_inequality",
                table.rows.iter().map(|r| r.epsilon).collect(),
                table.rows.iter().map(|r| r.lsc_residual).collect(),
                cfg.lsc_tol,
            );
            let mut reports = vec![table.monotone_report(0.05), lsc];
            // the finest solve also checks the balance along the curve
            let finest = shared.solution(eps.len() - 1)?;
            reports.push(check_max_slope(&finest.trajectory, &cfg.energy, cfg.t_obs, MaxSlopeMode::Inequality, cfg.lsc_tol)?);
            Ok(reports)
        }
        Suite::Finsler => {
            let (res, d) = finsler(cfg)?;
            let scale = res.distance.max(f64::MIN_POSITIVE);
            Ok(vec![
                IdentityReport::scalar("finsler_product_form", (res.distance - res.product_value).abs() / scale, 1e-3),
                IdentityReport::scalar("finsler_metric_bound", (d - res.distance).max(0.0) / scale, 1e-9),
            ])
        }
    }
}

/// Runs the tasks on a pool of `jobs` workers; results keep the input order.
pub fn run_all(shared: &Shared, tasks: &[Task], jobs: usize, quiet: bool) -> Result<Vec<TaskOutput>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let o = run_task(shared, *t);
                if !quiet {
                    let status = match (&o.error, o.reports.iter().all(|r| r.pass)) {
                        (Some(e), _) => format!("error: {e}"),
                        (None, true) => "ok".into(),
                        (None, false) => "identity failures".into(),
                    };
                    eprintln!("[wed] {} {status} ({:.2}s)", o.name, o.wall_s);
                }
                o
            })
            .collect()
    }))
}
