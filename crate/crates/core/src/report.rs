use serde::Serialize;

/// Outcome of one identity or inequality check.
///
/// `residuals` are nonnegative violation magnitudes, paired with the abscissa
/// (time, grid position, ε, ...) at which each was measured.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub residuals_file: Option<String>,
    #[serde(skip)]
    pub abscissa: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl IdentityReport {
    pub fn new(identity: impl Into<String>, abscissa: Vec<f64>, residuals: Vec<f64>, tolerance: f64) -> Self {
        // NaN residuals propagate to a failing maximum
        let max_residual = residuals
            .iter()
            .fold(0.0f64, |m, r| if r.is_nan() || m.is_nan() { f64::NAN } else { m.max(r.abs()) });
        Self {
            identity: identity.into(),
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
            residuals_file: None,
            abscissa,
            residuals,
        }
    }

    pub fn scalar(identity: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self::new(identity, vec![0.0], vec![residual], tolerance)
    }

    /// Summary line, e.g. `fundamental: pass (max 1.2e-3, tol 5e-2)`.
    pub fn summary(&self) -> String {
        format!(
            "{}: {} (max {:.3e}, tol {:.3e})",
            self.identity,
            if self.pass { "pass" } else { "FAIL" },
            self.max_residual,
            self.tolerance
        )
    }
}

pub fn all_pass(reports: &[IdentityReport]) -> bool {
    reports.iter().all(|r| r.pass)
}
