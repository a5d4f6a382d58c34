//! Minimization of the cutting-plane model over the trust region.
//!
//! Both solvers work in the scaled variable `u = (z - x) / Δ`, so the region
//! becomes the unit box (max-norm) or the unit ball (Euclidean norm).

mod interior;
mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Bundle;
use crate::oracle::ModelOrder;
use crate::types::{NormKind, Point};

pub use interior::solve_quadratic;
pub use simplex::solve_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// The iteration cap was hit; the best candidate found is returned.
    MaxIterFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub z_bar: Point,
    /// Model value at `z_bar`.
    pub theta: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Cuts with a positive multiplier at the solution.
    pub active_cuts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute accuracy target on the optimal model value.
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Extra interior-point starts used when some cut is nonconvex.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            abs_tol: 1e-12,
            max_iter: 200,
            restarts: 4,
            seed: 0,
        }
    }
}

/// Solves the subproblem for `bundle`, choosing the method from the model
/// order and the region norm. Only (linear, max-norm) and (quadratic,
/// Euclidean) are supported.
pub fn solve(bundle: &Bundle, opts: &SolverOptions) -> Result<SubproblemSolution> {
    let order = bundle
        .samples()
        .first()
        .map(|s| s.order())
        .ok_or_else(|| Error::invalid("empty bundle"))?;
    match (order, bundle.region().norm()) {
        (ModelOrder::Linear, NormKind::Max) => solve_linear(bundle),
        (ModelOrder::Quadratic, NormKind::Euclidean) => solve_quadratic(bundle, opts),
        (q, norm) => Err(Error::invalid(format!(
            "unsupported combination: order {} with {norm:?} norm",
            q.degree()
        ))),
    }
}

/// Cut `k` in scaled form: `a + b'u + u'Cu/2`.
#[derive(Debug, Clone)]
pub(crate) struct ScaledCut {
    pub a: f64,
    pub b: DVector<f64>,
    pub c: Option<DMatrix<f64>>,
}

impl ScaledCut {
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        let mut v = self.a + self.b.dot(u);
        if let Some(c) = &self.c {
            v += 0.5 * u.dot(&(c * u));
        }
        v
    }

    pub fn grad(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.c {
            Some(c) => &self.b + c * u,
            None => self.b.clone(),
        }
    }
}

/// Cuts of `bundle` expressed in `u`, shifted by `-shift` and divided by
/// `scale`. Returns the cuts with their original indices.
pub(crate) fn scaled_cuts(bundle: &Bundle) -> (Vec<ScaledCut>, f64, f64) {
    let region = bundle.region();
    let x = region.center().as_vector();
    let delta = region.radius();
    let mut raw: Vec<ScaledCut> = bundle
        .samples()
        .iter()
        .map(|s| {
            let d0 = x - s.base().as_vector();
            match s.hess() {
                Some(h) => {
                    let hd = h * &d0;
                    ScaledCut {
                        a: s.value() + s.grad().dot(&d0) + 0.5 * d0.dot(&hd),
                        b: (s.grad() + hd) * delta,
                        c: Some(h * (delta * delta)),
                    }
                }
                None => ScaledCut {
                    a: s.value() + s.grad().dot(&d0),
                    b: s.grad() * delta,
                    c: None,
                },
            }
        })
        .collect();
    let shift = raw.iter().map(|c| c.a).fold(f64::NEG_INFINITY, f64::max);
    let scale = raw
        .iter()
        .map(|c| c.b.amax() + c.c.as_ref().map_or(0.0, |m| m.amax()))
        .fold(0.0, f64::max);
    if scale > 0.0 {
        for c in &mut raw {
            c.a = (c.a - shift) / scale;
            c.b /= scale;
            if let Some(m) = &mut c.c {
                *m /= scale;
            }
        }
    } else {
        for c in &mut raw {
            c.a -= shift;
        }
    }
    (raw, shift, scale)
}

/// Indices of cuts that can attain the maximum somewhere in the region,
/// given per-cut lower and upper bounds over the region.
pub(crate) fn relevant_cuts(lower: &[f64], upper: &[f64]) -> Vec<usize> {
    let floor = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..upper.len()).filter(|&k| upper[k] >= floor).collect()
}

/// Solution at `u` mapped back to the original coordinates, with the model
/// re-evaluated there.
pub(crate) fn finish(
    bundle: &Bundle,
    u: &DVector<f64>,
    status: SolveStatus,
    kkt_residual: f64,
    active_cuts: Vec<usize>,
) -> Result<SubproblemSolution> {
    let region = bundle.region();
    let z = region.center().as_vector() + u * region.radius();
    let z = region.project(&z);
    let z_bar = Point::from_vector(z)?;
    let (theta, _) = bundle.model_eval(&z_bar)?;
    Ok(SubproblemSolution {
        z_bar,
        theta,
        status,
        kkt_residual,
        active_cuts,
    })
}
