//! Finite-dimensional metric state spaces.
//!
//! Three kinds are supported: Euclidean space, `R^n` with a `p`-norm, and the
//! space of one-dimensional probability measures represented by `m` quantile
//! values at the midpoints `s_j = (j - 1/2) / m`. In quantile coordinates the
//! 2-Wasserstein distance is the `L^2(0, 1)` distance of quantile functions,
//! which the midpoint rule turns into a weighted Euclidean norm with weight
//! `1/m`. In all three kinds straight segments are constant-speed geodesics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WedError};
use crate::numeric::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceSpec {
    Euclidean { dim: usize },
    #[serde(rename = "pnorm")]
    PNorm { dim: usize, p: f64 },
    #[serde(rename = "quantile1d")]
    Quantile1D { m: usize },
}

/// A state vector. Which space it belongs to is tracked by the caller; use
/// [`SpaceSpec::point`] to build validated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn scalar(x: f64) -> Self {
        Self { coords: vec![x] }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

impl SpaceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SpaceSpec::Euclidean { dim: 0 } => Err(invalid("euclidean dim must be >= 1")),
            SpaceSpec::PNorm { dim: 0, .. } => Err(invalid("pnorm dim must be >= 1")),
            SpaceSpec::PNorm { p, .. } if !(p > 1.0 && p.is_finite()) => {
                Err(invalid(format!("pnorm exponent must satisfy 1 < p < inf, got {p}")))
            }
            SpaceSpec::Quantile1D { m: 0 } => Err(invalid("quantile1d m must be >= 1")),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SpaceSpec::Euclidean { dim } | SpaceSpec::PNorm { dim, .. } => dim,
            SpaceSpec::Quantile1D { m } => m,
        }
    }

    /// True when the norm comes from an inner product.
    pub fn is_hilbert(&self) -> bool {
        match *self {
            SpaceSpec::PNorm { p, .. } => p == 2.0,
            _ => true,
        }
    }

    /// Weight `w` of the inner product `<a, b> = w Σ a_k b_k` for Hilbert kinds.
    pub fn metric_weight(&self) -> f64 {
        match *self {
            SpaceSpec::Quantile1D { m } => 1.0 / m as f64,
            _ => 1.0,
        }
    }

    /// Builds a point, checking its length and, for quantile spaces, strict
    /// monotonicity.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        let p = Point::new(coords);
        self.check_dim(&p)?;
        if let SpaceSpec::Quantile1D { .. } = self {
            if !is_strictly_increasing(&p.coords) {
                return Err(WedError::Domain("quantile coordinates must be strictly increasing".into()));
            }
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(p)
    }

    pub fn check_dim(&self, p: &Point) -> Result<()> {
        if p.len() != self.dim() {
            return Err(invalid(format!("point has {} coordinates, space has dimension {}", p.len(), self.dim())));
        }
        Ok(())
    }

    /// Norm of a coordinate difference.
    pub fn norm(&self, delta: &[f64]) -> f64 {
        match *self {
            SpaceSpec::Euclidean { .. } => delta.iter().map(|d| d * d).sum::<f64>().sqrt(),
            SpaceSpec::PNorm { p, .. } => p_norm(delta, p),
            SpaceSpec::Quantile1D { m } => (delta.iter().map(|d| d * d).sum::<f64>() / m as f64).sqrt(),
        }
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(self.distance_unchecked(&a.coords, &b.coords))
    }

    pub(crate) fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            SpaceSpec::Euclidean { .. } => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            SpaceSpec::Quantile1D { m } => {
                (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / m as f64).sqrt()
            }
            SpaceSpec::PNorm { p, .. } => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                p_norm(&d, p)
            }
        }
    }

    /// Gradient with respect to `delta` of `½ ‖delta‖²`.
    pub fn half_sq_norm_grad(&self, delta: &[f64]) -> Vec<f64> {
        match *self {
            SpaceSpec::Euclidean { .. } => delta.to_vec(),
            SpaceSpec::Quantile1D { m } => delta.iter().map(|d| d / m as f64).collect(),
            SpaceSpec::PNorm { p, .. } => {
                let n = p_norm(delta, p);
                if n == 0.0 {
                    return vec![0.0; delta.len()];
                }
                let scale = n.powf(2.0 - p);
                delta.iter().map(|d| scale * d.abs().powf(p - 1.0) * d.signum()).collect()
            }
        }
    }

    /// Dual norm of a covector (a vector of partial derivatives).
    pub fn dual_norm(&self, covector: &[f64]) -> f64 {
        match *self {
            SpaceSpec::Euclidean { .. } => covector.iter().map(|g| g * g).sum::<f64>().sqrt(),
            SpaceSpec::Quantile1D { m } => (m as f64 * covector.iter().map(|g| g * g).sum::<f64>()).sqrt(),
            SpaceSpec::PNorm { p, .. } => p_norm(covector, p / (p - 1.0)),
        }
    }

    /// Constant-speed geodesic `(1 - theta) a + theta b`; endpoints are returned exactly.
    pub fn geodesic_point(&self, a: &Point, b: &Point, theta: f64) -> Result<Point> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!("geodesic parameter {theta} outside [0, 1]")));
        }
        if theta == 0.0 {
            return Ok(a.clone());
        }
        if theta == 1.0 {
            return Ok(b.clone());
        }
        Ok(Point::new(lerp(&a.coords, &b.coords, theta)))
    }

    /// Midpoint-rule quantiles of a Gaussian `N(mean, sd²)` in a quantile space.
    pub fn gaussian_quantiles(&self, mean: f64, sd: f64) -> Result<Point> {
        let SpaceSpec::Quantile1D { m } = *self else {
            return Err(invalid("gaussian quantiles need a quantile1d space"));
        };
        self.point(quantile_nodes(m).into_iter().map(|s| mean + sd * normal_quantile(s)).collect())
    }
}

/// Midpoint quantile levels `s_j = (j - 1/2) / m`.
pub fn quantile_nodes(m: usize) -> Vec<f64> {
    (1..=m).map(|j| (j as f64 - 0.5) / m as f64).collect()
}

pub(crate) fn lerp(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect()
}

pub(crate) fn is_strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn p_norm(v: &[f64], p: f64) -> f64 {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    max * v.iter().map(|x| (x.abs() / max).powf(p)).sum::<f64>().powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_distance() {
        let s = SpaceSpec::Euclidean { dim: 2 };
        let a = s.point(vec![0.0, 0.0]).unwrap();
        let b = s.point(vec![3.0, 4.0]).unwrap();
        assert_eq!(s.distance(&a, &b).unwrap(), 5.0);
        assert_eq!(s.distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = SpaceSpec::Euclidean { dim: 2 };
        let a = Point::new(vec![0.0, 0.0]);
        let b = Point::new(vec![1.0]);
        assert!(matches!(s.distance(&a, &b), Err(WedError::InvalidInput(_))));
    }

    #[test]
    fn translated_gaussians_are_one_apart() {
        let s = SpaceSpec::Quantile1D { m: 64 };
        let a = s.gaussian_quantiles(0.0, 1.0).unwrap();
        let b = s.gaussian_quantiles(1.0, 1.0).unwrap();
        assert!((s.distance(&a, &b).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn geodesic_endpoints_and_linearity() {
        let s = SpaceSpec::Euclidean { dim: 1 };
        let a = Point::scalar(0.0);
        let b = Point::scalar(2.0);
        assert_eq!(s.geodesic_point(&a, &b, 0.0).unwrap(), a);
        assert_eq!(s.geodesic_point(&a, &b, 1.0).unwrap(), b);
        assert_eq!(s.geodesic_point(&a, &b, 0.25).unwrap().coords[0], 0.5);
        assert!(s.geodesic_point(&a, &b, 1.5).is_err());
        assert!(s.geodesic_point(&a, &b, -0.1).is_err());
    }

    #[test]
    fn non_monotone_quantiles_rejected() {
        let s = SpaceSpec::Quantile1D { m: 3 };
        assert!(matches!(s.point(vec![0.0, 0.0, 1.0]), Err(WedError::Domain(_))));
        assert!(s.point(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn invalid_specs() {
        assert!(SpaceSpec::PNorm { dim: 2, p: 1.0 }.validate().is_err());
        assert!(SpaceSpec::PNorm { dim: 2, p: f64::INFINITY }.validate().is_err());
        assert!(SpaceSpec::Euclidean { dim: 0 }.validate().is_err());
        assert!(SpaceSpec::PNorm { dim: 2, p: 3.0 }.validate().is_ok());
    }

    #[test]
    fn json_shape() {
        let s: SpaceSpec = serde_json::from_str(r#"{"kind":"pnorm","dim":3,"p":1.5}"#).unwrap();
        assert_eq!(s, SpaceSpec::PNorm { dim: 3, p: 1.5 });
        let q: SpaceSpec = serde_json::from_str(r#"{"kind":"quantile1d","m":8}"#).unwrap();
        assert_eq!(q, SpaceSpec::Quantile1D { m: 8 });
    }

    #[test]
    fn pnorm_dual_pairing() {
        // <g, d> <= ||g||_* ||d|| with equality for the gradient of ½||d||²
        let s = SpaceSpec::PNorm { dim: 3, p: 3.0 };
        let d = [0.4, -1.3, 2.0];
        let g = s.half_sq_norm_grad(&d);
        let pairing: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let n = s.norm(&d);
        assert!((pairing - n * n).abs() < 1e-12);
        assert!((s.dual_norm(&g) - n).abs() < 1e-12);
    }
}
