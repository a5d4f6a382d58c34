//! Empirical check of the decrease property `Λ^p(x, Δ) >= C` for all `x`
//! near `x*` and all `Δ` with `x*` outside the ball.

use rand::Rng;

use super::grid::lambda_p;
use crate::error::{Error, Result};
use crate::oracle::{ModelOrder, Oracle};
use crate::types::{rng_from_seed, NormKind, Point, TrustRegion};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub x: Point,
    pub delta: f64,
    pub lambda: f64,
    /// The sample is a nonzero local minimizer found by the 1D scan.
    pub local_min: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyProbe {
    pub empirical_inf: f64,
    /// The five samples with the smallest `Λ^p`.
    pub witnesses: Vec<ProbeSample>,
    pub samples: Vec<ProbeSample>,
    /// Nonzero local minimizers located by the 1D scan.
    pub local_minima: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub p: u32,
    pub box_radius: f64,
    pub num_samples: usize,
    pub seed: u64,
    /// For one-dimensional problems, also scan for nonzero local minima.
    pub scan_local_minima: bool,
}

/// Samples `x` uniformly in the box of half-width `box_radius` around
/// `x_star` and `Δ` log-uniformly in `(1e-6 r, r)` with `r = ||x - x*||`,
/// so that `x*` lies outside the ball. Returns the infimum of the sampled
/// `Λ^p`. In one dimension the derivative sign is additionally scanned for
/// local minima `x̂ != x*`, each probed with a ball small enough to exclude `x*`.
pub fn property_p_probe(oracle: &dyn Oracle, x_star: &Point, opts: &ProbeOptions) -> Result<PropertyProbe> {
    let n = x_star.dim();
    if n > 2 {
        return Err(Error::invalid("property probe supports n <= 2"));
    }
    if !(opts.box_radius > 0.0) {
        return Err(Error::invalid("box radius must be positive"));
    }
    let mut rng = rng_from_seed(opts.seed);
    let mut samples = Vec::with_capacity(opts.num_samples);
    while samples.len() < opts.num_samples {
        let x = Point::from_vector(x_star.as_vector().map(|c| c + rng.random_range(-1.0..1.0) * opts.box_radius))?;
        let r = x.distance(x_star, NormKind::Euclidean);
        if r == 0.0 {
            continue;
        }
        let t: f64 = rng.random();
        let delta = r * 10f64.powf(-6.0 * (1.0 - t));
        let delta = delta.min(r * (1.0 - 1e-9));
        let region = TrustRegion::new(x.clone(), delta, NormKind::Euclidean)?;
        let est = lambda_p(oracle, &region, opts.p)?;
        samples.push(ProbeSample {
            x,
            delta,
            lambda: est.lambda_value,
            local_min: false,
        });
    }

    let mut local_minima = Vec::new();
    if n == 1 && opts.scan_local_minima {
        for xh in scan_local_minima(oracle, x_star[0], opts.box_radius)? {
            let dist = (xh - x_star[0]).abs();
            let delta = (1e-2 * dist * dist).min(0.5 * dist);
            let x = Point::new(vec![xh])?;
            let region = TrustRegion::new(x.clone(), delta, NormKind::Euclidean)?;
            let est = lambda_p(oracle, &region, opts.p)?;
            samples.push(ProbeSample {
                x,
                delta,
                lambda: est.lambda_value,
                local_min: true,
            });
            local_minima.push(xh);
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|a, b| samples[*a].lambda.total_cmp(&samples[*b].lambda).then(a.cmp(b)));
    let witnesses: Vec<ProbeSample> = order.iter().take(5).map(|&k| samples[k].clone()).collect();
    let empirical_inf = witnesses.first().map_or(f64::INFINITY, |w| w.lambda);
    Ok(PropertyProbe {
        empirical_inf,
        witnesses,
        samples,
        local_minima,
    })
}

/// Nonzero local minimizers of a 1D function in `[c - radius, c + radius]`,
/// located by derivative sign changes from negative to positive. The step
/// is `(x - c)^2 / 20`, which resolves oscillations of period `O((x - c)^2)`
/// down to `|x - c| = 1e-3 radius`.
pub fn scan_local_minima(oracle: &dyn Oracle, c: f64, radius: f64) -> Result<Vec<f64>> {
    let deriv = |x: f64| -> Result<f64> {
        Ok(oracle.query(&Point::new(vec![x])?, ModelOrder::Linear)?.grad()[0])
    };
    let inner = 1e-3 * radius;
    let mut out = Vec::new();
    for side in [1.0, -1.0] {
        // Walk from the inner edge outwards so that `t` increases.
        let mut t = inner;
        let mut d_prev = deriv(c + side * t)? * side;
        while t < radius {
            let step = (t * t / 20.0).max(1e-15);
            let t_next = (t + step).min(radius);
            let d_next = deriv(c + side * t_next)? * side;
            // Along increasing t, a minimum of f in x has derivative in t
            // going from negative to positive.
            if d_prev < 0.0 && d_next > 0.0 {
                let (mut lo, mut hi) = (t, t_next);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if deriv(c + side * mid)? * side < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(c + side * 0.5 * (lo + hi));
            }
            d_prev = d_next;
            t = t_next;
        }
    }
    Ok(out)
}
