//! Empirical order of the model remainder `f^W - T^{q,W}` and the resulting
//! per-level bound on `Λ^p`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::criticality::uniform_in_ball;
use super::grid::{lambda_p, lambda_p_multistart, LambdaEstimate};
use crate::builder::{compute_w, BuilderParams};
use crate::driver::{RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::model::PointMemory;
use crate::oracle::{taylor_eval, ModelOrder, Oracle};
use crate::types::{rng_from_seed, NormKind, Point, TrustRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderMode {
    /// `f^W(z) = max_y f_{s(y)}(z)` through the oracle's branch evaluation.
    Branches,
    /// `f(z)` in place of `f^W(z)`; an upper proxy when branches cannot be
    /// enumerated.
    ValueProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderLevel {
    pub delta: f64,
    pub max_abs_remainder: f64,
    pub bundle_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderEstimate {
    /// `max_Δ max_z |R(z)| / Δ^(q+1)`.
    pub k_hat: f64,
    /// Least-squares slope of `log max|R|` against `log Δ`; `None` when the
    /// remainders are at roundoff level.
    pub slope: Option<f64>,
    pub levels: Vec<RemainderLevel>,
    /// Mode actually used (branch evaluation may be unavailable).
    pub mode: RemainderMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderOptions {
    pub q: ModelOrder,
    pub samples_per_delta: usize,
    pub seed: u64,
    pub mode: RemainderMode,
}

/// For each radius, builds a bundle around `x` with the bundle builder and
/// samples `|f^W(z) - T^{q,W}(z)|` at uniform points of the region (plus
/// the builder's output).
pub fn remainder_constant_estimator(
    oracle: &dyn Oracle,
    x: &Point,
    deltas: &[f64],
    opts: &RemainderOptions,
) -> Result<RemainderEstimate> {
    if deltas.len() < 4 {
        return Err(Error::invalid("need at least four radii"));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("radii must be positive and decreasing"));
    }
    let n = x.dim();
    let q = opts.q;
    let norm = match q {
        ModelOrder::Linear => NormKind::Max,
        ModelOrder::Quadratic => NormKind::Euclidean,
    };
    let mut mode = opts.mode;
    let mut rng = rng_from_seed(opts.seed);
    let mut levels = Vec::with_capacity(deltas.len());
    let params = BuilderParams::default();
    let scale = oracle.value(x)?.abs().max(1.0);

    for &delta in deltas {
        let region = TrustRegion::new(x.clone(), delta, norm)?;
        let center = oracle.query(x, q)?;
        let mut memory = PointMemory::new(PointMemory::DEFAULT_CAPACITY);
        let built = match compute_w(oracle, center, region.clone(), &params, &mut memory) {
            Ok(b) => b,
            Err(Error::BuilderLimit { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        let mut points = vec![built.z_bar.clone()];
        for _ in 0..opts.samples_per_delta {
            let u = match norm {
                NormKind::Euclidean => uniform_in_ball(n, 1.0, &mut rng),
                NormKind::Max => DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            };
            points.push(Point::from_vector(x.as_vector() + u * delta)?);
        }
        let mut worst: f64 = 0.0;
        for z in &points {
            let (model, _) = built.bundle.model_eval(z)?;
            let fw = match mode {
                RemainderMode::Branches => {
                    let mut best = f64::NEG_INFINITY;
                    for s in built.bundle.samples() {
                        match oracle.branch_sample(s, z, ModelOrder::Linear) {
                            Some(b) => best = best.max(b?.value()),
                            None => {
                                mode = RemainderMode::ValueProxy;
                                break;
                            }
                        }
                    }
                    if mode == RemainderMode::Branches {
                        best
                    } else {
                        oracle.value(z)?
                    }
                }
                RemainderMode::ValueProxy => oracle.value(z)?,
            };
            worst = worst.max((fw - model).abs());
        }
        levels.push(RemainderLevel {
            delta,
            max_abs_remainder: worst,
            bundle_size: built.bundle.len(),
        });
    }

    let qp1 = f64::from(q.degree() + 1);
    let k_hat = levels
        .iter()
        .map(|l| l.max_abs_remainder / l.delta.powf(qp1))
        .fold(0.0, f64::max);
    let roundoff = 64.0 * f64::EPSILON * scale;
    let slope = if levels.iter().all(|l| l.max_abs_remainder > roundoff) {
        let xs: Vec<f64> = levels.iter().map(|l| l.delta.ln()).collect();
        let ys: Vec<f64> = levels.iter().map(|l| l.max_abs_remainder.ln()).collect();
        Some(ls_slope(&xs, &ys))
    } else {
        None
    };
    Ok(RemainderEstimate {
        k_hat,
        slope,
        levels,
        mode,
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Remainder of a single sample's Taylor expansion on the sphere
/// `||z - y|| = Δ`, sampled at `samples` directions.
pub fn single_sample_remainder(
    oracle: &dyn Oracle,
    y: &Point,
    q: ModelOrder,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let s = oracle.query(y, q)?;
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let d = uniform_in_ball(y.dim(), 1.0, &mut rng);
        let d = &d / d.norm().max(f64::MIN_POSITIVE);
        let z = Point::from_vector(y.as_vector() + d * delta)?;
        let branch = oracle
            .branch_sample(&s, &z, ModelOrder::Linear)
            .ok_or_else(|| Error::invalid("oracle cannot evaluate branches"))??;
        worst = worst.max((branch.value() - taylor_eval(&s, &z)?).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCertificate {
    pub j: usize,
    pub lambda: LambdaEstimate,
    pub bound: f64,
    pub holds: bool,
}

/// `Λ^p(x^j, Δ_j)` by brute force against `τ_j + Δ_j^(q-p+σ) + K Δ_j^(q-p+1)`
/// for every completed level of `run`. Grid search for `n <= 3`, multi-start
/// otherwise.
pub fn lambda_bound_certificate(
    oracle: &dyn Oracle,
    config: &RunConfig,
    run: &RunOutcome,
    k_hat: f64,
) -> Result<Vec<LevelCertificate>> {
    let mut out = Vec::with_capacity(run.handoff.levels.len());
    for level in &run.handoff.levels {
        let region = TrustRegion::new(level.x.clone(), level.delta, config.norm())?;
        let lambda = if level.x.dim() <= 3 {
            lambda_p(oracle, &region, config.p)?
        } else {
            lambda_p_multistart(oracle, &region, config.p, config.seed)?
        };
        let bound = config.lambda_bound(level.j, k_hat)?;
        out.push(LevelCertificate {
            j: level.j,
            holds: lambda.lambda_value <= bound,
            lambda,
            bound,
        });
    }
    Ok(out)
}
