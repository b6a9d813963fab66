//! `wed`: experiment runner for weighted energy-dissipation approximations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ExperimentConfig, Suite};
use run::{Shared, Task, TaskOutput};

#[derive(Parser)]
#[command(name = "wed", version, about = "Weighted energy-dissipation solves, value functions and identity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Identity suites to run; overrides `suites` in the config.
    #[arg(long, global = true, value_enum)]
    suite: Vec<Suite>,
    /// No progress output on standard error.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Minimize the WED functional for every epsilon.
    Solve,
    /// Value function at x_bar for every epsilon.
    Value,
    /// Value function over the sample points and epsilons.
    Sweep,
    /// Run identity suites.
    Check,
    /// Minimizing movements from x_bar.
    Mm,
    /// Finsler distance between the configured endpoints.
    Finsler,
    /// Everything the config supports.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Value => "value",
            Command::Sweep => "sweep",
            Command::Check => "check",
            Command::Mm => "mm",
            Command::Finsler => "finsler",
            Command::All => "all",
        }
    }
}

fn selected_suites(cli: &Cli, cfg: &ExperimentConfig) -> Vec<Suite> {
    if !cli.suite.is_empty() {
        return cli.suite.clone();
    }
    if !cfg.suites.is_empty() {
        return cfg.suites.clone();
    }
    match cli.command {
        Command::Check | Command::All => Suite::ALL
            .into_iter()
            .filter(|s| match s {
                Suite::Finsler => cfg.finsler.is_some(),
                Suite::Lambda => cfg.energy.lambda.is_some(),
                Suite::Convergence => cfg.epsilons().len() >= 2,
                _ => true,
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn plan(command: Command, cfg: &ExperimentConfig, suites: &[Suite]) -> Vec<Task> {
    let n_eps = cfg.epsilons().len();
    let solves = (0..n_eps).map(Task::Solve);
    let checks = suites.iter().map(|s| Task::Check(*s));
    match command {
        Command::Solve => solves.collect(),
        Command::Value => vec![Task::Value],
        Command::Sweep => vec![Task::Sweep],
        Command::Check => checks.collect(),
        Command::Mm => vec![Task::Mm],
        Command::Finsler => vec![Task::Finsler],
        Command::All => {
            let mut tasks: Vec<Task> = solves.collect();
            tasks.extend([Task::Value, Task::Sweep, Task::Mm]);
            if cfg.finsler.is_some() {
                tasks.push(Task::Finsler);
            }
            tasks.extend(checks);
            tasks
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn residual_path(suite: Suite, identity: &str) -> String {
    let stem: String = identity.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    format!("residuals/{}/{stem}.csv", suite.name())
}

/// Writes task artifacts, residual files, `report.json` and `manifest.json`.
/// Returns whether every identity passed.
fn emit(root: &Path, cli: &Cli, cfg: &ExperimentConfig, outputs: &mut [TaskOutput], jobs: usize, started: f64) -> Result<bool> {
    let mut files = Vec::new();
    let mut all_reports = Vec::new();
    let mut suites: BTreeMap<&str, bool> = BTreeMap::new();
    for o in outputs.iter_mut() {
        for a in &o.artifacts {
            write_file(root, &a.path, &a.bytes)?;
            files.push(a.path.clone());
        }
        if let Some(suite) = o.suite {
            for r in &mut o.reports {
                let rel = residual_path(suite, &r.identity);
                let mut buf = Vec::new();
                wed_core::io::write_residuals(&mut buf, r)?;
                write_file(root, &rel, &buf)?;
                files.push(rel.clone());
                r.residuals_file = Some(rel);
            }
            let ok = o.error.is_none() && o.reports.iter().all(|r| r.pass);
            *suites.entry(suite.name()).or_insert(true) &= ok;
            all_reports.extend(o.reports.iter().cloned());
        }
    }
    let pass = all_reports.iter().all(|r| r.pass);
    if outputs.iter().any(|o| o.suite.is_some()) {
        write_file(root, "report.json", &pretty(&serde_json::to_value(&all_reports)?)?)?;
        files.push("report.json".into());
    }
    let tasks: Vec<_> = outputs
        .iter()
        .map(|o| {
            json!({
                "name": o.name,
                "wall_s": o.wall_s,
                "files": o.artifacts.iter().map(|a| a.path.clone()).collect::<Vec<_>>(),
                "error": o.error,
            })
        })
        .collect();
    let manifest = json!({
        "tool": "wed",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": cfg,
        "started_unix_s": started,
        "finished_unix_s": unix_now(),
        "jobs": jobs,
        "probe_seed": cfg.probe.seed,
        "tasks": tasks,
        "files": files,
        "summary": {
            "suites": suites,
            "pass": pass,
            "errors": outputs.iter().filter(|o| o.error.is_some()).count(),
        },
    });
    write_file(root, "manifest.json", &pretty(&manifest)?)?;
    Ok(pass)
}

fn pretty(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let started = unix_now();
    let path = cli.config.as_ref().context("--config <path> is required")?;
    let cfg = config::load(path)?;
    let suites = selected_suites(cli, &cfg);
    cfg.validate(&suites)?;
    if cli.jobs == Some(0) {
        anyhow::bail!("--jobs must be at least 1");
    }
    let root = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("wed-out"));
    std::fs::create_dir_all(&root).with_context(|| format!("output directory {} is not writable", root.display()))?;
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let tasks = plan(cli.command, &cfg, &suites);
    if tasks.is_empty() {
        anyhow::bail!("nothing to run: no suites selected");
    }
    let shared = Shared::new(cfg.clone())?;
    let mut outputs = run::run_all(&shared, &tasks, jobs, cli.quiet)?;
    let pass = emit(&root, cli, &cfg, &mut outputs, jobs, started)?;

    let errors: Vec<&TaskOutput> = outputs.iter().filter(|o| o.error.is_some()).collect();
    for o in &errors {
        eprintln!("error in {}: {}", o.name, o.error.as_deref().unwrap_or_default());
    }
    if !errors.is_empty() {
        return Ok(ExitCode::from(1));
    }
    if !pass {
        if !cli.quiet {
            for r in outputs.iter().flat_map(|o| &o.reports).filter(|r| !r.pass) {
                eprintln!("[wed] {}", r.summary());
            }
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wed: {e:#}");
            ExitCode::from(1)
        }
    }
}
