use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::hull::{min_norm_hull_point, HullPoint};
use crate::error::{Error, Result};
use crate::oracle::{ModelOrder, Oracle};
use crate::types::{rng_from_seed, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityCertificate {
    /// `||g||` for the min-norm element `g` of the sampled gradient hull.
    pub value: f64,
    pub hull: HullPoint,
    pub samples: usize,
}

/// Gradients at `x` and at `num_samples` uniform points of the Euclidean
/// `epsilon`-ball around it, reduced to the norm of their min-norm convex
/// combination. An inner approximation of the Goldstein subdifferential.
pub fn criticality_certificate(
    oracle: &dyn Oracle,
    x: &Point,
    epsilon: f64,
    num_samples: usize,
    seed: u64,
) -> Result<CriticalityCertificate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let n = x.dim();
    let mut rng = rng_from_seed(seed);
    let mut grads = vec![oracle.query(x, ModelOrder::Linear)?.grad().clone()];
    for _ in 0..num_samples {
        let z = Point::from_vector(x.as_vector() + uniform_in_ball(n, epsilon, &mut rng))?;
        grads.push(oracle.query(&z, ModelOrder::Linear)?.grad().clone());
    }
    let hull = min_norm_hull_point(&grads)?;
    Ok(CriticalityCertificate {
        value: hull.norm(),
        hull,
        samples: grads.len(),
    })
}

pub(crate) fn uniform_in_ball(n: usize, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    let d = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let nrm = d.norm().max(f64::MIN_POSITIVE);
    let r: f64 = rng.random::<f64>().powf(1.0 / n as f64);
    d * (radius * r / nrm)
}
