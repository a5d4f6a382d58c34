//! Brute-force oracles and empirical checks: the ball minimizer `z*(x, Δ)`,
//! `Λ^p`, the decrease property near a minimizer, min-norm gradient hulls and
//! the order of the model remainder.

mod criticality;
mod grid;
mod hull;
mod property;
mod remainder;

pub use criticality::{criticality_certificate, CriticalityCertificate};
pub use grid::{
    grid_points_per_axis, lambda_p, lambda_p_multistart, z_star_multistart, z_star_oracle,
    LambdaEstimate, SearchMethod, ZStar,
};
pub use hull::{min_norm_hull_point, HullPoint};
pub use property::{property_p_probe, scan_local_minima, ProbeOptions, ProbeSample, PropertyProbe};
pub use remainder::{
    lambda_bound_certificate, remainder_constant_estimator, single_sample_remainder,
    LevelCertificate, RemainderEstimate, RemainderLevel, RemainderMode, RemainderOptions,
};

#[cfg(test)]
mod tests;
