//! Shared numerical vocabulary: points, norms, trust regions, tolerances and
//! deterministic seeding.

use std::fmt;
use std::ops::Deref;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used by [`TrustRegion::contains`].
pub const FEAS_TOL: f64 = 1e-9;

/// A point in R^n with finite coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(DVector<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(coords))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.iter().all(|c| c.is_finite()) {
            Ok(Point(v))
        } else {
            Err(Error::NonFinite("point coordinates"))
        }
    }

    pub fn zeros(n: usize) -> Self {
        Point(DVector::zeros(n))
    }

    pub fn from_element(n: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Point(DVector::from_element(n, value))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    /// Distance to `other` in the given norm.
    pub fn distance(&self, other: &Point, kind: NormKind) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        match kind {
            NormKind::Euclidean => self
                .0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            NormKind::Max => self
                .0
                .iter()
                .zip(other.0.iter())
                .fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0.data.into()
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Euclidean,
    /// The infinity norm, used for the linear-programming trust region.
    Max,
}

/// 2-norm or infinity norm of `v`.
pub fn norm(v: &[f64], kind: NormKind) -> Result<f64> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("norm argument"));
    }
    Ok(match kind {
        NormKind::Euclidean => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
        NormKind::Max => v.iter().fold(0.0, |m, c| m.max(c.abs())),
    })
}

/// Closed ball `{z : ||z - center|| <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    center: Point,
    radius: f64,
    norm: NormKind,
}

impl TrustRegion {
    pub fn new(center: Point, radius: f64, norm: NormKind) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!(
                "trust-region radius must be positive, got {radius}"
            )));
        }
        Ok(TrustRegion {
            center,
            radius,
            norm,
        })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Membership with relative slack [`FEAS_TOL`].
    pub fn contains(&self, z: &Point) -> bool {
        z.dim() == self.dim() && self.center.distance(z, self.norm) <= self.radius * (1.0 + FEAS_TOL)
    }

    /// `||z - center|| / radius`.
    pub fn relative_distance(&self, z: &Point) -> f64 {
        self.center.distance(z, self.norm) / self.radius
    }

    /// Nearest point of the region to `z` (radial projection for the
    /// Euclidean ball, clamping for the box).
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let c = self.center.as_vector();
        let d = z - c;
        match self.norm {
            NormKind::Euclidean => {
                let r = d.norm();
                if r <= self.radius {
                    z.clone()
                } else {
                    c + d * (self.radius / r)
                }
            }
            NormKind::Max => {
                let mut out = z.clone();
                for i in 0..out.len() {
                    out[i] = out[i].clamp(c[i] - self.radius, c[i] + self.radius);
                }
                out
            }
        }
    }
}

/// Numerical tolerances shared across modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feas_tol: f64,
    /// Subproblem accuracy relative to the Algorithm 1 threshold.
    pub sub_opt_tol_factor: f64,
    pub fd_check_tol: f64,
    pub grid_oracle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas_tol: FEAS_TOL,
            sub_opt_tol_factor: 0.01,
            fd_check_tol: 1e-5,
            grid_oracle_tol: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all_pos = [
            self.feas_tol,
            self.sub_opt_tol_factor,
            self.fd_check_tol,
            self.grid_oracle_tol,
        ]
        .iter()
        .all(|t| t.is_finite() && *t > 0.0);
        if all_pos && self.sub_opt_tol_factor < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid("tolerances must be positive, sub_opt_tol_factor < 1"))
        }
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for stream `stream` of a master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Seed derived from a slice of floats (bit patterns), for stateless
/// components that need reproducible randomness tied to their inputs.
pub fn seed_from_floats(seed: u64, values: &[f64]) -> u64 {
    values
        .iter()
        .fold(mix64(seed), |acc, v| mix64(acc ^ v.to_bits()))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&[3.0, 4.0], NormKind::Euclidean).unwrap(), 5.0);
        assert_eq!(norm(&[3.0, 4.0], NormKind::Max).unwrap(), 4.0);
        assert_eq!(norm(&[0.0; 5], NormKind::Euclidean).unwrap(), 0.0);
        assert_eq!(norm(&[0.0; 5], NormKind::Max).unwrap(), 0.0);
        assert!(norm(&[1.0, f64::NAN], NormKind::Max).is_err());
        assert!(norm(&[f64::INFINITY], NormKind::Euclidean).is_err());
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert!(Point::new(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn region_validation_and_slack() {
        let c = Point::new(vec![0.0, 0.0]).unwrap();
        assert!(TrustRegion::new(c.clone(), 0.0, NormKind::Max).is_err());
        assert!(TrustRegion::new(c.clone(), -1.0, NormKind::Max).is_err());
        let r = TrustRegion::new(c, 1.0, NormKind::Euclidean).unwrap();
        assert!(r.contains(&Point::new(vec![1.0 + 1e-10, 0.0]).unwrap()));
        assert!(!r.contains(&Point::new(vec![1.0 + 1e-8, 0.0]).unwrap()));
        assert!(!r.contains(&Point::new(vec![0.8, 0.8]).unwrap()));
        let b = TrustRegion::new(Point::zeros(2), 1.0, NormKind::Max).unwrap();
        assert!(b.contains(&Point::new(vec![1.0, -1.0]).unwrap()));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, 0));
    }

    proptest! {
        #[test]
        fn norm_equivalence(v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let e = norm(&v, NormKind::Euclidean).unwrap();
            let m = norm(&v, NormKind::Max).unwrap();
            let n = v.len() as f64;
            prop_assert!(m <= e * (1.0 + 1e-12));
            prop_assert!(e <= n.sqrt() * m * (1.0 + 1e-12));
        }

        #[test]
        fn containment_is_pure(v in prop::collection::vec(-2.0f64..2.0, 3), r in 0.1f64..3.0) {
            let region = TrustRegion::new(Point::zeros(3), r, NormKind::Euclidean).unwrap();
            let z = Point::new(v).unwrap();
            let first = region.contains(&z);
            prop_assert_eq!(first, region.contains(&z));
        }
    }
}
