use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wed_core::value::{FinslerOptions, ProbeOptions, ValueOptions};
use wed_core::{EnergySpec, GridMode, Point, SolverKind, SpaceSpec, WedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Spectral,
    Inner,
    Dpp,
    Fundamental,
    Monotone,
    Yosida,
    Hj,
    Lambda,
    Convergence,
    Finsler,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Spectral,
        Suite::Inner,
        Suite::Dpp,
        Suite::Fundamental,
        Suite::Monotone,
        Suite::Yosida,
        Suite::Hj,
        Suite::Lambda,
        Suite::Convergence,
        Suite::Finsler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Spectral => "spectral",
            Suite::Inner => "inner",
            Suite::Dpp => "dpp",
            Suite::Fundamental => "fundamental",
            Suite::Monotone => "monotone",
            Suite::Yosida => "yosida",
            Suite::Hj => "hj",
            Suite::Lambda => "lambda",
            Suite::Convergence => "convergence",
            Suite::Finsler => "finsler",
        }
    }
}

/// A single ε or a strictly decreasing list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilons {
    One(f64),
    Many(Vec<f64>),
}

impl Epsilons {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Epsilons::One(e) => vec![*e],
            Epsilons::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmConfig {
    /// Defaults to `T / 1000`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Defaults to `⌈T / τ⌉`.
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinslerField {
    /// `f = √(1 ∨ φ)`.
    #[default]
    Phi,
    Unit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinslerConfig {
    /// Defaults to `x_bar`.
    #[serde(default)]
    pub from: Option<Point>,
    pub to: Point,
    #[serde(default)]
    pub field: FinslerField,
    #[serde(default)]
    pub options: FinslerOptions,
}

fn default_n() -> usize {
    4000
}

fn default_grad_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    5000
}

fn default_cache() -> usize {
    4096
}

fn default_quadrature() -> usize {
    64_000
}

fn default_lsc_tol() -> f64 {
    5e-2
}

fn default_rel_tol() -> f64 {
    5e-2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    pub energy: EnergySpec,
    pub x_bar: Point,
    pub epsilon: Epsilons,
    #[serde(rename = "T")]
    pub t_obs: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub grid_mode: GridMode,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_cache")]
    pub cache_capacity: usize,
    #[serde(default)]
    pub probe: ProbeOptions,
    /// Sample points of value sweeps and suites that scan `x`; defaults to `[x_bar]`.
    #[serde(default)]
    pub points: Vec<Point>,
    #[serde(default)]
    pub mm: Option<MmConfig>,
    #[serde(default)]
    pub finsler: Option<FinslerConfig>,
    /// Exponent of the weighted speed check for λ < 0.
    #[serde(default)]
    pub lambda_prime: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub yosida_quadrature: usize,
    /// Relative tolerance of the pointwise identities.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_lsc_tol")]
    pub lsc_tol: f64,
}

/// A configuration problem with the JSON pointer of the offending value.
#[derive(Debug)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(pointer: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.into(), message: message.into() }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => write!(out, "/{index}").unwrap(),
            Segment::Map { key } => write!(out, "/{}", key.replace('~', "~0").replace('/', "~1")).unwrap(),
            Segment::Enum { variant } => write!(out, "/{variant}").unwrap(),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| err(pointer(e.path()), e.inner().to_string()))
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

impl ExperimentConfig {
    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon.to_vec()
    }

    pub fn problem(&self, eps: f64) -> WedProblem {
        let mut p = WedProblem::new(self.space.clone(), self.energy.clone(), self.x_bar.clone(), eps, self.t_obs, self.n);
        p.grid_mode = self.grid_mode;
        p.solver = self.solver;
        p.grad_tol = self.grad_tol;
        p.max_iter = self.max_iter;
        p
    }

    pub fn value_options(&self) -> ValueOptions {
        ValueOptions {
            n: self.n,
            grid_mode: self.grid_mode,
            solver: self.solver,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            cache_capacity: self.cache_capacity,
            ..ValueOptions::default()
        }
    }

    pub fn sample_points(&self) -> Vec<Point> {
        if self.points.is_empty() {
            vec![self.x_bar.clone()]
        } else {
            self.points.clone()
        }
    }

    pub fn mm_schedule(&self) -> (f64, usize) {
        let cfg = self.mm.clone().unwrap_or(MmConfig { tau: None, steps: None });
        let tau = cfg.tau.unwrap_or(self.t_obs / 1000.0);
        let steps = cfg.steps.unwrap_or_else(|| (self.t_obs / tau).ceil().max(1.0) as usize);
        (tau, steps)
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self, suites: &[Suite]) -> Result<(), ConfigError> {
        let eps = self.epsilons();
        if eps.is_empty() {
            return Err(err("/epsilon", "at least one epsilon is required"));
        }
        for (i, e) in eps.iter().enumerate() {
            let at = match self.epsilon {
                Epsilons::One(_) => "/epsilon".to_string(),
                Epsilons::Many(_) => format!("/epsilon/{i}"),
            };
            if !(*e > 0.0 && e.is_finite()) {
                return Err(err(at, format!("epsilon must be positive and finite, got {e}")));
            }
            if i > 0 && !(*e < eps[i - 1]) {
                return Err(err(at, "epsilon list must be strictly decreasing"));
            }
            self.problem(*e).validate().map_err(|e| err(at, e.to_string()))?;
        }
        for (i, p) in self.points.iter().enumerate() {
            self.space.point(p.coords.clone()).map_err(|e| err(format!("/points/{i}"), e.to_string()))?;
            if !self.energy.value(&p.coords).is_finite() {
                return Err(err(format!("/points/{i}"), "point outside the energy domain"));
            }
        }
        if self.jobs == Some(0) {
            return Err(err("/jobs", "jobs must be at least 1"));
        }
        if let Some(mm) = &self.mm {
            if mm.tau.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
                return Err(err("/mm/tau", "tau must be positive"));
            }
            if mm.steps == Some(0) {
                return Err(err("/mm/steps", "steps must be at least 1"));
            }
        }
        if let Some(f) = &self.finsler {
            let from = f.from.as_ref().unwrap_or(&self.x_bar);
            self.space.point(from.coords.clone()).map_err(|e| err("/finsler/from", e.to_string()))?;
            self.space.point(f.to.coords.clone()).map_err(|e| err("/finsler/to", e.to_string()))?;
        }
        if suites.contains(&Suite::Finsler) && self.finsler.is_none() {
            return Err(err("/finsler", "the finsler suite needs a finsler section"));
        }
        if suites.contains(&Suite::Lambda) {
            let Some(lambda) = self.energy.lambda else {
                return Err(err("/energy/lambda", "the lambda suite needs a convexity modulus"));
            };
            if let Some(i) = eps.iter().position(|e| 1.0 + 8.0 * lambda * e <= 0.5) {
                let at = if eps.len() == 1 { "/epsilon".to_string() } else { format!("/epsilon/{i}") };
                return Err(err(at, format!("the lambda suite needs 1 + 8 lambda eps > 0.5 (lambda = {lambda})")));
            }
        }
        if suites.contains(&Suite::Convergence) && eps.len() < 2 {
            return Err(err("/epsilon", "the convergence suite needs at least two epsilons"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(err("/rel_tol", "rel_tol must be positive"));
        }
        Ok(())
    }
}
