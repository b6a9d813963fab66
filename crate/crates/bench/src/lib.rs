//! Shared fixtures for the benchmarks.

use wed_core::{EnergySpec, Point, SpaceSpec, WedProblem};

pub fn quadratic(eps: f64, n: usize) -> WedProblem {
    WedProblem::new(SpaceSpec::Euclidean { dim: 1 }, EnergySpec::quadratic_1d(1.0, 0.0), Point::scalar(1.0), eps, 2.0, n)
}

pub fn double_well(eps: f64, n: usize) -> WedProblem {
    WedProblem::new(SpaceSpec::Euclidean { dim: 1 }, EnergySpec::double_well(), Point::scalar(0.3), eps, 1.0, n)
}

pub fn ornstein_uhlenbeck(m: usize, n: usize) -> WedProblem {
    let space = SpaceSpec::Quantile1D { m };
    let energy = EnergySpec::quantile_entropy(1.0, 0.0).expect("valid potential");
    let x_bar = space.gaussian_quantiles(1.0, 0.5).expect("valid quantiles");
    WedProblem::new(space, energy, x_bar, 0.02, 0.5, n)
}
