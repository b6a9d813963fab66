//! Energy functionals on the built-in spaces.
//!
//! Every kind evaluates to `+inf` outside its effective domain (only the
//! quantile entropy has a proper domain: strictly increasing quantiles).
//! `partials` is the coordinate gradient; [`EnergySpec::grad`] is the Riesz
//! gradient for the kind's natural inner product (weight `1/m` in quantile
//! coordinates), which is the velocity field of the gradient flow.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WedError};
use crate::numeric::{golden_section, lbfgs, LbfgsOptions};
use crate::space::{is_strictly_increasing, Point, SpaceSpec};

/// Seed for the random probe directions of the λ-representation slope.
pub const SLOPE_PROBE_SEED: u64 = 0x5EED_0001;

#[derive(Debug, Clone, PartialEq)]
pub enum EnergyKind {
    /// `½ xᵀ A x − bᵀ x` with symmetric `A`.
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `Σ x_k⁴ / 4`.
    ConvexQuartic,
    /// `Σ (x_k² − 1)² / 4`.
    DoubleWell,
    /// Discrete `W^{1,p}` Dirichlet energy on a uniform 1-D mesh with zero
    /// boundary values plus a polynomial reaction term `h Σ R(u_k)`,
    /// `R(u) = Σ_j reaction[j] u^j`.
    DiscreteDirichlet { p: f64, h: f64, reaction: Vec<f64> },
    /// Potential plus entropy of a 1-D measure in quantile coordinates:
    /// `(1/m) Σ V(Q_j) − (1/m) Σ log(m (Q_{j+1} − Q_j))`, `V(x) = v2 x²/2 + v1 x`.
    QuantileEntropyPotential { v2: f64, v1: f64 },
}

/// Constants of the quadratic lower bound `φ(u) ≥ −B d²(u, u*) − A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coercivity {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Defaults to the origin.
    #[serde(default)]
    pub u_star: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnergyConfig", into = "EnergyConfig")]
pub struct EnergySpec {
    pub kind: EnergyKind,
    /// Geodesic convexity modulus.
    pub lambda: Option<f64>,
    pub coercivity: Coercivity,
}

/// JSON form: `{"kind": ..., "params": {...}, "lambda": f|null, "coercivity": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub coercivity: Option<Coercivity>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    a: MatrixParam,
    #[serde(default)]
    b: Option<VectorParam>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixParam {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VectorParam {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DirichletParams {
    p: f64,
    h: f64,
    #[serde(default)]
    reaction: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantileParams {
    v2: f64,
    #[serde(default)]
    v1: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn params<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> std::result::Result<T, String> {
    let v = if v.is_null() { serde_json::json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| format!("params: {e}"))
}

impl TryFrom<EnergyConfig> for EnergySpec {
    type Error = String;

    fn try_from(cfg: EnergyConfig) -> std::result::Result<Self, String> {
        let kind = match cfg.kind.as_str() {
            "quadratic" => {
                let p: QuadraticParams = params(&cfg.params)?;
                let a = match p.a {
                    MatrixParam::Scalar(s) => vec![vec![s]],
                    MatrixParam::Matrix(m) => m,
                };
                let b = match p.b {
                    None => vec![0.0; a.len()],
                    Some(VectorParam::Scalar(s)) => vec![s],
                    Some(VectorParam::Vector(v)) => v,
                };
                EnergyKind::Quadratic { a, b }
            }
            "convex_quartic" => {
                params::<NoParams>(&cfg.params)?;
                EnergyKind::ConvexQuartic
            }
            "double_well" => {
                params::<NoParams>(&cfg.params)?;
                EnergyKind::DoubleWell
            }
            "discrete_dirichlet" => {
                let p: DirichletParams = params(&cfg.params)?;
                EnergyKind::DiscreteDirichlet { p: p.p, h: p.h, reaction: p.reaction }
            }
            "quantile_entropy_potential" => {
                let p: QuantileParams = params(&cfg.params)?;
                EnergyKind::QuantileEntropyPotential { v2: p.v2, v1: p.v1 }
            }
            other => return Err(format!("unknown energy kind `{other}`")),
        };
        let spec = match cfg.coercivity {
            Some(c) => EnergySpec::with_coercivity(kind, cfg.lambda, c),
            None => EnergySpec::new(kind).map(|mut s| {
                if cfg.lambda.is_some() {
                    s.lambda = cfg.lambda;
                }
                s
            }),
        };
        spec.map_err(|e| e.to_string())
    }
}

impl From<EnergySpec> for EnergyConfig {
    fn from(spec: EnergySpec) -> Self {
        let (kind, params) = match &spec.kind {
            EnergyKind::Quadratic { a, b } => ("quadratic", serde_json::json!({ "a": a, "b": b })),
            EnergyKind::ConvexQuartic => ("convex_quartic", serde_json::json!({})),
            EnergyKind::DoubleWell => ("double_well", serde_json::json!({})),
            EnergyKind::DiscreteDirichlet { p, h, reaction } => {
                ("discrete_dirichlet", serde_json::json!({ "p": p, "h": h, "reaction": reaction }))
            }
            EnergyKind::QuantileEntropyPotential { v2, v1 } => {
                ("quantile_entropy_potential", serde_json::json!({ "v2": v2, "v1": v1 }))
            }
        };
        EnergyConfig {
            kind: kind.to_string(),
            params,
            lambda: spec.lambda,
            coercivity: Some(spec.coercivity),
        }
    }
}

impl EnergySpec {
    /// Builds a spec with the built-in convexity modulus and coercivity constants.
    pub fn new(kind: EnergyKind) -> Result<Self> {
        validate_kind(&kind)?;
        let lambda = default_lambda(&kind);
        let coercivity = default_coercivity(&kind, lambda)?;
        Ok(Self { kind, lambda, coercivity })
    }

    pub fn with_coercivity(kind: EnergyKind, lambda: Option<f64>, coercivity: Coercivity) -> Result<Self> {
        validate_kind(&kind)?;
        if !(coercivity.a >= 0.0 && coercivity.b >= 0.0) {
            return Err(invalid("coercivity constants must be nonnegative"));
        }
        let lambda = lambda.or_else(|| default_lambda(&kind));
        Ok(Self { kind, lambda, coercivity })
    }

    pub fn quadratic_1d(a: f64, b: f64) -> Self {
        Self::new(EnergyKind::Quadratic { a: vec![vec![a]], b: vec![b] }).expect("1-d quadratic is valid")
    }

    pub fn double_well() -> Self {
        Self::new(EnergyKind::DoubleWell).expect("double well is valid")
    }

    pub fn convex_quartic() -> Self {
        Self::new(EnergyKind::ConvexQuartic).expect("convex quartic is valid")
    }

    pub fn quantile_entropy(v2: f64, v1: f64) -> Result<Self> {
        Self::new(EnergyKind::QuantileEntropyPotential { v2, v1 })
    }

    /// Dimension fixed by the parameters, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            EnergyKind::Quadratic { b, .. } => Some(b.len()),
            _ => None,
        }
    }

    /// Weight of the natural inner product in which [`grad`](Self::grad) is taken.
    pub fn natural_weight(&self, dim: usize) -> f64 {
        match self.kind {
            EnergyKind::QuantileEntropyPotential { .. } => 1.0 / dim as f64,
            _ => 1.0,
        }
    }

    /// The space this energy is naturally posed on for a given dimension.
    pub fn natural_space(&self, dim: usize) -> SpaceSpec {
        match self.kind {
            EnergyKind::QuantileEntropyPotential { .. } => SpaceSpec::Quantile1D { m: dim },
            _ => SpaceSpec::Euclidean { dim },
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(invalid("empty point"));
        }
        if let Some(d) = self.fixed_dim() {
            if d != x.len() {
                return Err(invalid(format!("energy expects dimension {d}, point has {}", x.len())));
            }
        }
        Ok(())
    }

    /// Energy value; `+inf` outside the effective domain.
    pub fn eval(&self, x: &Point) -> Result<f64> {
        self.check_point(&x.coords)?;
        Ok(self.value(&x.coords))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            EnergyKind::Quadratic { a, b } => {
                let mut v = 0.0;
                for (i, row) in a.iter().enumerate() {
                    let ax: f64 = row.iter().zip(x).map(|(r, xj)| r * xj).sum();
                    v += 0.5 * x[i] * ax - b[i] * x[i];
                }
                v
            }
            EnergyKind::ConvexQuartic => x.iter().map(|u| 0.25 * u.powi(4)).sum(),
            EnergyKind::DoubleWell => x.iter().map(|u| 0.25 * (u * u - 1.0).powi(2)).sum(),
            EnergyKind::DiscreteDirichlet { p, h, reaction } => {
                let n = x.len();
                let mut v = 0.0;
                for k in 0..=n {
                    let left = if k == 0 { 0.0 } else { x[k - 1] };
                    let right = if k == n { 0.0 } else { x[k] };
                    v += h / p * ((right - left) / h).abs().powf(*p);
                }
                v + h * x.iter().map(|u| poly(reaction, *u)).sum::<f64>()
            }
            EnergyKind::QuantileEntropyPotential { v2, v1 } => {
                if !is_strictly_increasing(x) {
                    return f64::INFINITY;
                }
                let m = x.len() as f64;
                let pot: f64 = x.iter().map(|q| 0.5 * v2 * q * q + v1 * q).sum::<f64>() / m;
                let ent: f64 = x.windows(2).map(|w| (m * (w[1] - w[0])).ln()).sum::<f64>() / m;
                pot - ent
            }
        }
    }

    /// Coordinate gradient. Fails outside the domain.
    pub fn partials(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(match &self.kind {
            EnergyKind::Quadratic { a, b } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| row.iter().zip(x).map(|(r, xj)| r * xj).sum::<f64>() - bi)
                .collect(),
            EnergyKind::ConvexQuartic => x.iter().map(|u| u.powi(3)).collect(),
            EnergyKind::DoubleWell => x.iter().map(|u| u.powi(3) - u).collect(),
            EnergyKind::DiscreteDirichlet { p, h, reaction } => {
                let n = x.len();
                let z: Vec<f64> = (0..=n)
                    .map(|k| {
                        let left = if k == 0 { 0.0 } else { x[k - 1] };
                        let right = if k == n { 0.0 } else { x[k] };
                        (right - left) / h
                    })
                    .collect();
                let psi = |s: f64| s.abs().powf(p - 1.0) * s.signum();
                (0..n).map(|j| psi(z[j]) - psi(z[j + 1]) + h * poly_deriv(reaction, x[j])).collect()
            }
            EnergyKind::QuantileEntropyPotential { v2, v1 } => {
                if !is_strictly_increasing(x) {
                    return Err(WedError::Domain("non-monotone quantile point".into()));
                }
                let m = x.len();
                let inv_m = 1.0 / m as f64;
                (0..m)
                    .map(|j| {
                        let mut g = v2 * x[j] + v1;
                        if j > 0 {
                            g -= 1.0 / (x[j] - x[j - 1]);
                        }
                        if j + 1 < m {
                            g += 1.0 / (x[j + 1] - x[j]);
                        }
                        g * inv_m
                    })
                    .collect()
            }
        })
    }

    /// Riesz gradient in the natural inner product (the gradient-flow velocity is `−grad`).
    pub fn grad(&self, x: &Point) -> Result<Vec<f64>> {
        let w = self.natural_weight(x.len());
        Ok(self.partials(&x.coords)?.into_iter().map(|g| g / w).collect())
    }

    /// Hessian of the coordinate representation.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let n = x.len();
        Ok(match &self.kind {
            EnergyKind::Quadratic { a, .. } => DMatrix::from_fn(n, n, |i, j| a[i][j]),
            EnergyKind::ConvexQuartic => DMatrix::from_diagonal(&DVector::from_iterator(n, x.iter().map(|u| 3.0 * u * u))),
            EnergyKind::DoubleWell => {
                DMatrix::from_diagonal(&DVector::from_iterator(n, x.iter().map(|u| 3.0 * u * u - 1.0)))
            }
            EnergyKind::DiscreteDirichlet { p, h, reaction } => {
                let z: Vec<f64> = (0..=n)
                    .map(|k| {
                        let left = if k == 0 { 0.0 } else { x[k - 1] };
                        let right = if k == n { 0.0 } else { x[k] };
                        (right - left) / h
                    })
                    .collect();
                let c = |s: f64| (p - 1.0) * s.abs().powf(p - 2.0) / h;
                let mut hm = DMatrix::zeros(n, n);
                for j in 0..n {
                    hm[(j, j)] = c(z[j]) + c(z[j + 1]) + h * poly_second(reaction, x[j]);
                    if j + 1 < n {
                        hm[(j, j + 1)] = -c(z[j + 1]);
                        hm[(j + 1, j)] = -c(z[j + 1]);
                    }
                }
                hm
            }
            EnergyKind::QuantileEntropyPotential { v2, .. } => {
                if !is_strictly_increasing(x) {
                    return Err(WedError::Domain("non-monotone quantile point".into()));
                }
                let inv_m = 1.0 / n as f64;
                let mut hm = DMatrix::zeros(n, n);
                for j in 0..n {
                    hm[(j, j)] = v2 * inv_m;
                }
                for j in 0..n.saturating_sub(1) {
                    let k = inv_m / (x[j + 1] - x[j]).powi(2);
                    hm[(j, j)] += k;
                    hm[(j + 1, j + 1)] += k;
                    hm[(j, j + 1)] -= k;
                    hm[(j + 1, j)] -= k;
                }
                hm
            }
        })
    }

    /// `Q(v) = B d²(v, u*) + A`.
    pub fn coercivity_q(&self, space: &SpaceSpec, v: &Point) -> f64 {
        let c = &self.coercivity;
        let d2 = match &c.u_star {
            Some(u) => space.distance_unchecked(&v.coords, &u.coords).powi(2),
            None => space.norm(&v.coords).powi(2),
        };
        c.b * d2 + c.a
    }

    fn is_separable(&self) -> bool {
        matches!(self.kind, EnergyKind::ConvexQuartic | EnergyKind::DoubleWell)
    }

    fn scalar_value(&self, u: f64) -> f64 {
        match self.kind {
            EnergyKind::ConvexQuartic => 0.25 * u.powi(4),
            EnergyKind::DoubleWell => 0.25 * (u * u - 1.0).powi(2),
            _ => unreachable!("scalar energy only for separable kinds"),
        }
    }

    fn scalar_deriv(&self, u: f64) -> (f64, f64) {
        match self.kind {
            EnergyKind::ConvexQuartic => (u.powi(3), 3.0 * u * u),
            EnergyKind::DoubleWell => (u.powi(3) - u, 3.0 * u * u - 1.0),
            _ => unreachable!("scalar energy only for separable kinds"),
        }
    }
}

fn validate_kind(kind: &EnergyKind) -> Result<()> {
    match kind {
        EnergyKind::Quadratic { a, b } => {
            let n = b.len();
            if n == 0 || a.len() != n || a.iter().any(|r| r.len() != n) {
                return Err(invalid("quadratic A must be n×n with b of length n"));
            }
            for (i, row) in a.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    let y = a[j][i];
                    if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                        return Err(invalid("quadratic A must be symmetric"));
                    }
                }
            }
        }
        EnergyKind::DiscreteDirichlet { p, h, .. } => {
            if !(*p >= 2.0 && p.is_finite()) {
                return Err(invalid("dirichlet exponent must satisfy p >= 2"));
            }
            if !(*h > 0.0) {
                return Err(invalid("dirichlet mesh size must be positive"));
            }
        }
        EnergyKind::QuantileEntropyPotential { v2, v1 } if !(v2.is_finite() && v1.is_finite()) => {
            return Err(invalid("potential coefficients must be finite"));
        }
        _ => {}
    }
    Ok(())
}

fn default_lambda(kind: &EnergyKind) -> Option<f64> {
    match kind {
        EnergyKind::Quadratic { a, .. } => Some(min_eigenvalue(a)),
        EnergyKind::DoubleWell => Some(-1.0),
        EnergyKind::ConvexQuartic => Some(0.0),
        EnergyKind::QuantileEntropyPotential { v2, .. } => Some(*v2),
        EnergyKind::DiscreteDirichlet { .. } => None,
    }
}

fn min_eigenvalue(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    m.symmetric_eigen().eigenvalues.min()
}

fn default_coercivity(kind: &EnergyKind, lambda: Option<f64>) -> Result<Coercivity> {
    let zero = |a: f64| Coercivity { a, b: 0.0, u_star: None };
    match kind {
        EnergyKind::ConvexQuartic | EnergyKind::DoubleWell => Ok(zero(0.0)),
        EnergyKind::Quadratic { a, b } => {
            let lam = lambda.unwrap_or_else(|| min_eigenvalue(a));
            let n = b.len();
            if lam > 0.0 {
                let am = DMatrix::from_fn(n, n, |i, j| a[i][j]);
                let bv = DVector::from_column_slice(b);
                let sol = am
                    .cholesky()
                    .ok_or_else(|| invalid("quadratic A with positive modulus failed Cholesky"))?
                    .solve(&bv);
                Ok(zero((0.5 * bv.dot(&sol)).max(0.0)))
            } else {
                let bb: f64 = b.iter().map(|x| x * x).sum();
                Ok(Coercivity { a: 0.5 * bb, b: 0.5 * (1.0 - lam), u_star: None })
            }
        }
        EnergyKind::DiscreteDirichlet { reaction, .. } => {
            // The gradient part is nonnegative, so φ ≥ 0 whenever R ≥ 0. A negative
            // reaction minimum gives a bound that scales with the node count,
            // which is not fixed here.
            match polynomial_minimum(reaction) {
                // the minimum carries a small downward safety margin
                Some(r) if r >= -1e-10 => Ok(zero(0.0)),
                _ => Err(invalid(
                    "reaction polynomial takes negative values; give explicit coercivity constants",
                )),
            }
        }
        EnergyKind::QuantileEntropyPotential { v2, v1 } => {
            if !(*v2 > 0.0) {
                return Err(invalid("quantile energy with v2 <= 0 needs explicit coercivity constants"));
            }
            // The discrete energy is strictly convex with a unique minimizer;
            // its value bounds φ below for every m. The continuum minimum
            // (a Gaussian) is attained in the limit, so take a safety margin.
            let sd = 1.0 / v2.sqrt();
            let ent_min = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sd * sd).ln();
            let mean = -v1 / v2;
            let pot = 0.5 * v2 * (mean * mean + sd * sd) + v1 * mean;
            let continuum_min = pot + ent_min;
            Ok(zero((-continuum_min).max(0.0) + 1.0))
        }
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * x + ci)
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (j, cj)| acc * x + j as f64 * cj)
}

fn poly_second(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(2)
        .rev()
        .fold(0.0, |acc, (j, cj)| acc * x + (j * (j - 1)) as f64 * cj)
}

/// Global minimum of a polynomial that is bounded below, `None` otherwise.
fn polynomial_minimum(c: &[f64]) -> Option<f64> {
    let deg = c.iter().rposition(|x| *x != 0.0);
    let Some(deg) = deg else { return Some(0.0) };
    if deg == 0 {
        return Some(c[0]);
    }
    if deg % 2 == 1 || c[deg] < 0.0 {
        return None;
    }
    // critical points lie inside the Cauchy bound of R'
    let lead = deg as f64 * c[deg];
    let bound = 1.0
        + (1..deg)
            .map(|j| (j as f64 * c[j] / lead).abs())
            .fold(0.0, f64::max);
    let n = 20_000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let x = -bound + 2.0 * bound * i as f64 / n as f64;
        let v = poly(c, x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let step = 2.0 * bound / n as f64;
    let (_, v) = golden_section(|x| poly(c, x), best.1 - step, best.1 + step, 1e-14, 200);
    Some(v.min(best.0) - 1e-12 * (1.0 + v.abs()))
}

/// Result of a Yosida (Moreau envelope) evaluation.
#[derive(Debug, Clone)]
pub struct Yosida {
    pub value: f64,
    pub argmin: Point,
    pub iterations: usize,
}

/// `φ_t(x) = inf_y d²(y, x) / (2t) + φ(y)` with its minimizer.
pub fn yosida(spec: &EnergySpec, space: &SpaceSpec, x: &Point, t: f64) -> Result<Yosida> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("yosida parameter must be positive, got {t}")));
    }
    space.check_dim(x)?;
    spec.check_point(&x.coords)?;
    let phi_x = spec.value(&x.coords);
    if !phi_x.is_finite() {
        return Err(WedError::Domain("yosida base point outside the energy domain".into()));
    }
    if space.is_hilbert() {
        let w = space.metric_weight();
        if let EnergyKind::Quadratic { a, b } = &spec.kind {
            return yosida_quadratic(spec, a, b, w, x, t);
        }
        if spec.is_separable() {
            return Ok(yosida_separable(spec, w, x, t));
        }
        if let Some(lam) = spec.lambda {
            if lam < 0.0 && t >= 1.0 / (2.0 * lam.abs()) {
                return Err(invalid(format!(
                    "yosida parameter {t} too large for modulus {lam}: need t < 1/(2|λ|)"
                )));
            }
        }
        return yosida_newton(spec, w, x, t);
    }
    yosida_lbfgs(spec, space, x, t)
}

fn yosida_quadratic(spec: &EnergySpec, a: &[Vec<f64>], b: &[f64], w: f64, x: &Point, t: f64) -> Result<Yosida> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j] + if i == j { w / t } else { 0.0 });
    let rhs = DVector::from_iterator(n, (0..n).map(|i| b[i] + w / t * x.coords[i]));
    let chol = m
        .cholesky()
        .ok_or_else(|| invalid(format!("yosida inner problem unbounded below at t = {t}")))?;
    let y: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    let d2: f64 = y.iter().zip(&x.coords).map(|(p, q)| (p - q).powi(2)).sum::<f64>() * w;
    let value = d2 / (2.0 * t) + spec.value(&y);
    Ok(Yosida { value, argmin: Point::new(y), iterations: 1 })
}

fn yosida_separable(spec: &EnergySpec, w: f64, x: &Point, t: f64) -> Yosida {
    let c = w / t;
    let lambda_1d = match spec.kind {
        EnergyKind::DoubleWell => -1.0,
        _ => 0.0,
    };
    let mut y = Vec::with_capacity(x.len());
    let mut value = 0.0;
    for &xi in &x.coords {
        let f = |v: f64| 0.5 * c * (v - xi).powi(2) + spec.scalar_value(v);
        let df = |v: f64| {
            let (d1, d2) = spec.scalar_deriv(v);
            (c * (v - xi) + d1, c + d2)
        };
        // φ ≥ 0 for the separable kinds, so the minimizer satisfies
        // c (y − x)²/2 ≤ φ(x).
        let radius = (2.0 * spec.scalar_value(xi) / c).sqrt();
        let yi = if radius == 0.0 {
            xi
        } else if c + lambda_1d > 0.0 {
            newton_root_bracketed(df, xi - radius * 1.001 - 1e-12, xi + radius * 1.001 + 1e-12, xi)
        } else {
            global_1d(f, df, xi - radius * 1.001 - 1e-12, xi + radius * 1.001 + 1e-12)
        };
        value += f(yi);
        y.push(yi);
    }
    Yosida { value, argmin: Point::new(y), iterations: 1 }
}

/// Safeguarded Newton for the root of an increasing function on `[lo, hi]`.
fn newton_root_bracketed<D: Fn(f64) -> (f64, f64)>(df: D, mut lo: f64, mut hi: f64, start: f64) -> f64 {
    let mut y = start.clamp(lo, hi);
    for _ in 0..200 {
        let (g, h) = df(y);
        if g == 0.0 {
            return y;
        }
        if g > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let mut next = if h > 0.0 { y - g / h } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) {
            return next;
        }
        y = next;
    }
    y
}

/// Global minimization of a smooth 1-D function on a bracket: coarse scan,
/// golden section around the best sample, Newton polish.
fn global_1d<F: Fn(f64) -> f64, D: Fn(f64) -> (f64, f64)>(f: F, df: D, lo: f64, hi: f64) -> f64 {
    let n = 400;
    let step = (hi - lo) / n as f64;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=n {
        let v = lo + step * i as f64;
        let fv = f(v);
        if fv < best.0 {
            best = (fv, v);
        }
    }
    let a = (best.1 - step).max(lo);
    let b = (best.1 + step).min(hi);
    let (y, _) = golden_section(&f, a, b, 1e-10, 200);
    // polish on the local convex basin
    let mut y = y;
    for _ in 0..20 {
        let (g, h) = df(y);
        if h <= 0.0 {
            break;
        }
        let next = y - g / h;
        if !(next >= a && next <= b) || f(next) > f(y) {
            break;
        }
        if (next - y).abs() <= 1e-16 * (1.0 + y.abs()) {
            y = next;
            break;
        }
        y = next;
    }
    y
}

fn yosida_newton(spec: &EnergySpec, w: f64, x: &Point, t: f64) -> Result<Yosida> {
    let n = x.len();
    let c = w / t;
    let obj = |y: &[f64]| {
        let d2: f64 = y.iter().zip(&x.coords).map(|(p, q)| (p - q).powi(2)).sum();
        0.5 * c * d2 + spec.value(y)
    };
    let mut y = x.coords.clone();
    let mut fy = obj(&y);
    let mut trace = Vec::new();
    for it in 0..200 {
        let mut g = spec.partials(&y)?;
        for i in 0..n {
            g[i] += c * (y[i] - x.coords[i]);
        }
        // measure the gradient in the metric (Riesz) norm
        let gnorm = (g.iter().map(|v| v * v).sum::<f64>() / w).sqrt();
        trace.push(gnorm);
        if gnorm <= 1e-12 * (1.0 + fy.abs()) {
            return Ok(Yosida { value: fy, argmin: Point::new(y), iterations: it });
        }
        let mut h = spec.hessian(&y)?;
        for i in 0..n {
            h[(i, i)] += c;
        }
        let gv = DVector::from_column_slice(&g);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&gv),
            None => {
                // shift to positive definiteness
                let shift = h.clone().symmetric_eigen().eigenvalues.min().abs() + c;
                for i in 0..n {
                    h[(i, i)] += shift;
                }
                h.cholesky().ok_or_else(|| WedError::Numeric { msg: "yosida Hessian".into(), trace: trace.clone() })?.solve(&gv)
            }
        };
        let mut alpha = 1.0;
        let slope = -gv.dot(&step);
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n).map(|i| y[i] - alpha * step[i]).collect();
            let ft = obj(&trial);
            if ft.is_finite() && ft <= fy + 1e-4 * alpha * slope + 16.0 * f64::EPSILON * fy.abs() {
                y = trial;
                fy = ft;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(WedError::NonConvergence { what: "yosida inner minimization".into(), iterations: trace.len(), trace, best: None })
}

fn yosida_lbfgs(spec: &EnergySpec, space: &SpaceSpec, x: &Point, t: f64) -> Result<Yosida> {
    let eval = |y: &[f64]| {
        let delta: Vec<f64> = y.iter().zip(&x.coords).map(|(p, q)| p - q).collect();
        let f = space.norm(&delta).powi(2) / (2.0 * t) + spec.value(y);
        if !f.is_finite() {
            return (f64::INFINITY, vec![0.0; y.len()]);
        }
        let mut g = spec.partials(y).unwrap_or_else(|_| vec![0.0; y.len()]);
        for (gi, hi) in g.iter_mut().zip(space.half_sq_norm_grad(&delta)) {
            *gi += hi / t;
        }
        (f, g)
    };
    let opts = LbfgsOptions { tol: 1e-12, max_iter: 5000, ..Default::default() };
    let out = lbfgs(x.coords.clone(), eval, |g| g.iter().map(|v| v * t).collect(), |_, g| space.dual_norm(g), &opts);
    if !out.converged {
        return Err(WedError::NonConvergence {
            what: "yosida inner minimization".into(),
            iterations: out.iterations,
            trace: out.trace,
            best: None,
        });
    }
    Ok(Yosida { value: out.f, argmin: Point::new(out.x), iterations: out.iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMethod {
    Analytic,
    LambdaRepresentation,
    YosidaDuality,
}

#[derive(Debug, Clone)]
pub struct SlopeEstimate {
    pub value: f64,
    pub method: SlopeMethod,
    /// `(t, (φ(x) − φ_t(x))/t)` for the duality method, `(radius, best quotient)`
    /// for the λ-representation; empty for the analytic method.
    pub diagnostics: Vec<(f64, f64)>,
    /// Richardson-extrapolated quotient (duality method only).
    pub extrapolated: Option<f64>,
}

/// Local slope `|∂φ|(x)` by one of three routes.
pub fn local_slope(spec: &EnergySpec, space: &SpaceSpec, x: &Point, method: SlopeMethod) -> Result<SlopeEstimate> {
    space.check_dim(x)?;
    let phi_x = spec.eval(x)?;
    if !phi_x.is_finite() {
        return Err(WedError::Domain("slope requested outside the energy domain".into()));
    }
    match method {
        SlopeMethod::Analytic => {
            let g = spec.partials(&x.coords)?;
            Ok(SlopeEstimate { value: space.dual_norm(&g), method, diagnostics: Vec::new(), extrapolated: None })
        }
        SlopeMethod::YosidaDuality => {
            let mut diagnostics = Vec::with_capacity(9);
            for k in 0..=8 {
                let t = 0.1 * 0.5f64.powi(k);
                let y = yosida(spec, space, x, t)?;
                diagnostics.push((t, (phi_x - y.value) / t));
            }
            let q: Vec<f64> = diagnostics.iter().map(|d| d.1).collect();
            let last = q[8];
            if !last.is_finite() || (last > 1.0 && last > 1.5 * q[7]) {
                return Err(WedError::Numeric { msg: "divergent Yosida quotient sequence".into(), trace: q });
            }
            // quotient(t) = ½|∂φ|² + O(t): one Richardson step on the halving sequence
            let rich = 2.0 * q[8] - q[7];
            Ok(SlopeEstimate {
                value: (2.0 * rich.max(0.0)).sqrt(),
                method,
                diagnostics,
                extrapolated: Some(rich),
            })
        }
        SlopeMethod::LambdaRepresentation => {
            let lambda = spec
                .lambda
                .ok_or_else(|| invalid("λ-representation of the slope needs a convexity modulus"))?;
            let dirs = probe_directions(space, x, Some(spec), 8, SLOPE_PROBE_SEED);
            let mut diagnostics = Vec::new();
            let mut best = 0.0f64;
            for k in 0..=26 {
                let r = 0.5f64.powi(k);
                let mut best_r = 0.0f64;
                for e in &dirs {
                    let v: Vec<f64> = x.coords.iter().zip(e).map(|(a, b)| a + r * b).collect();
                    let phi_v = spec.value(&v);
                    if !phi_v.is_finite() {
                        continue;
                    }
                    let d = space.distance_unchecked(&x.coords, &v);
                    if d == 0.0 {
                        continue;
                    }
                    let q = ((phi_x - phi_v) / d + 0.5 * lambda * d).max(0.0);
                    best_r = best_r.max(q);
                }
                diagnostics.push((r, best_r));
                best = best.max(best_r);
            }
            Ok(SlopeEstimate { value: best, method, diagnostics, extrapolated: None })
        }
    }
}

/// Unit probe directions (in the space norm): the `2n` signed coordinate axes,
/// `n_random` seeded random directions and, when an energy is supplied, the
/// finite-difference steepest-descent direction at `x`.
pub fn probe_directions(
    space: &SpaceSpec,
    x: &Point,
    energy: Option<&EnergySpec>,
    n_random: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = space.dim();
    let mut dirs = Vec::with_capacity(2 * n + n_random + 1);
    let mut push = |d: Vec<f64>| {
        let nrm = space.norm(&d);
        if nrm > 0.0 && nrm.is_finite() {
            dirs.push(d.into_iter().map(|v| v / nrm).collect());
        }
    };
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[k] = s;
            push(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    if let Some(e) = energy {
        let h = 1e-6 * (1.0 + space.norm(&x.coords));
        let mut g = vec![0.0; n];
        let mut ok = true;
        for k in 0..n {
            let mut p = x.coords.clone();
            let mut m = x.coords.clone();
            p[k] += h;
            m[k] -= h;
            let (fp, fm) = (e.value(&p), e.value(&m));
            if !(fp.is_finite() && fm.is_finite()) {
                ok = false;
                break;
            }
            g[k] = (fp - fm) / (2.0 * h);
        }
        if ok {
            // descent direction in the metric: minus the Riesz representative
            let w = if space.is_hilbert() { space.metric_weight() } else { 1.0 };
            push(g.iter().map(|v| -v / w).collect());
        }
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_value_and_gradient() {
        let e = EnergySpec::quadratic_1d(1.0, 0.0);
        assert_eq!(e.eval(&Point::scalar(2.0)).unwrap(), 2.0);
        let e = EnergySpec::quadratic_1d(2.0, 1.0);
        assert_eq!(e.grad(&Point::scalar(3.0)).unwrap(), vec![5.0]);
        assert_eq!(e.lambda, Some(2.0));
    }

    #[test]
    fn double_well_values() {
        let e = EnergySpec::double_well();
        assert_eq!(e.eval(&Point::scalar(1.0)).unwrap(), 0.0);
        assert_eq!(e.eval(&Point::scalar(-1.0)).unwrap(), 0.0);
        assert_eq!(e.eval(&Point::scalar(0.0)).unwrap(), 0.25);
        assert_eq!(e.grad(&Point::scalar(2.0)).unwrap(), vec![6.0]);
        assert_eq!(e.lambda, Some(-1.0));
    }

    #[test]
    fn non_monotone_quantiles_are_infinite() {
        let e = EnergySpec::quantile_entropy(1.0, 0.0).unwrap();
        assert_eq!(e.eval(&Point::new(vec![0.0, -1.0, 2.0])).unwrap(), f64::INFINITY);
        assert!(matches!(e.partials(&[0.0, -1.0, 2.0]), Err(WedError::Domain(_))));
    }

    #[test]
    fn asymmetric_quadratic_rejected() {
        let k = EnergyKind::Quadratic { a: vec![vec![1.0, 0.5], vec![0.4, 1.0]], b: vec![0.0, 0.0] };
        assert!(EnergySpec::new(k).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let e = EnergySpec::quadratic_1d(1.0, 0.0);
        assert!(matches!(e.eval(&Point::new(vec![1.0, 2.0])), Err(WedError::InvalidInput(_))));
    }

    #[test]
    fn yosida_closed_form_quadratic() {
        let e = EnergySpec::quadratic_1d(1.0, 0.0);
        let s = SpaceSpec::Euclidean { dim: 1 };
        let y = yosida(&e, &s, &Point::scalar(2.0), 0.5).unwrap();
        assert!((y.value - 4.0 / 3.0).abs() < 1e-14);
        assert!((y.argmin.coords[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn yosida_rejects_nonpositive_t() {
        let e = EnergySpec::double_well();
        let s = SpaceSpec::Euclidean { dim: 1 };
        assert!(yosida(&e, &s, &Point::scalar(0.3), 0.0).is_err());
        assert!(yosida(&e, &s, &Point::scalar(0.3), -1.0).is_err());
    }

    #[test]
    fn slopes_at_critical_points() {
        let s = SpaceSpec::Euclidean { dim: 1 };
        let e = EnergySpec::double_well();
        let sl = local_slope(&e, &s, &Point::scalar(1.0), SlopeMethod::Analytic).unwrap();
        assert_eq!(sl.value, 0.0);
        let q = EnergySpec::quadratic_1d(1.0, 0.0);
        let sl = local_slope(&q, &s, &Point::scalar(2.0), SlopeMethod::Analytic).unwrap();
        assert_eq!(sl.value, 2.0);
    }

    #[test]
    fn yosida_duality_matches_analytic_double_well() {
        let s = SpaceSpec::Euclidean { dim: 1 };
        let e = EnergySpec::double_well();
        let sl = local_slope(&e, &s, &Point::scalar(0.5), SlopeMethod::YosidaDuality).unwrap();
        assert!((sl.value - 0.375).abs() < 1e-3, "{}", sl.value);
        assert_eq!(sl.diagnostics.len(), 9);
        assert!(sl.extrapolated.is_some());
    }

    #[test]
    fn energy_json_roundtrip() {
        let js = r#"{"kind":"quadratic","params":{"a":[[2.0,0.0],[0.0,1.0]],"b":[1.0,0.0]},"lambda":null}"#;
        let e: EnergySpec = serde_json::from_str(js).unwrap();
        assert_eq!(e.lambda, Some(1.0));
        assert!((e.coercivity.a - 0.25).abs() < 1e-14);
        let back: EnergySpec = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        let bad = r#"{"kind":"nope","params":{}}"#;
        assert!(serde_json::from_str::<EnergySpec>(bad).is_err());
        let scalar = r#"{"kind":"quadratic","params":{"a":1.0}}"#;
        let q: EnergySpec = serde_json::from_str(scalar).unwrap();
        assert_eq!(q, EnergySpec::quadratic_1d(1.0, 0.0));
    }

    #[test]
    fn polynomial_minimum_of_quartic() {
        // u⁴/4 − u²/2 has minimum −1/4
        let m = polynomial_minimum(&[0.0, 0.0, -0.5, 0.0, 0.25]).unwrap();
        assert!((m + 0.25).abs() < 1e-10);
        assert!(polynomial_minimum(&[0.0, 1.0]).is_none());
        assert!(polynomial_minimum(&[0.0, 0.0, -1.0]).is_none());
    }
}
