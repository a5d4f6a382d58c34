//! Bundle enrichment: add subproblem solutions to the bundle until the model
//! is accurate at its own minimizer.

use log::debug;

use crate::error::{Error, Result};
use crate::model::{seed_bundle, Bundle, PointMemory};
use crate::oracle::{Oracle, OracleSample};
use crate::subproblem::{solve, SolveStatus, SolverOptions};
use crate::types::{Point, TrustRegion};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuilderParams {
    /// Exponent offset `σ` in the threshold `min(Δ^(q+σ), c)`.
    pub sigma: f64,
    /// Cap `c` in the threshold.
    pub cap: f64,
    pub max_iter: usize,
    /// Subproblem accuracy as a fraction of the threshold.
    pub sub_opt_tol_factor: f64,
    pub solver: SolverOptions,
}

impl Default for BuilderParams {
    fn default() -> Self {
        BuilderParams {
            sigma: 0.5,
            cap: 0.1,
            max_iter: 200,
            sub_opt_tol_factor: 0.01,
            solver: SolverOptions::default(),
        }
    }
}

impl BuilderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::invalid(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::invalid(format!("cap must be positive, got {}", self.cap)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("builder max_iter must be at least 1"));
        }
        Ok(())
    }

    /// `min(Δ^(q+σ), c)`.
    pub fn threshold(&self, delta: f64, q: u32) -> f64 {
        delta.powf(f64::from(q) + self.sigma).min(self.cap)
    }
}

#[derive(Debug, Clone)]
pub struct BuilderResult {
    pub bundle: Bundle,
    pub z_bar: Point,
    /// Oracle sample at `z_bar`, with the bundle's model order.
    pub z_sample: OracleSample,
    pub f_z_bar: f64,
    /// Model value at `z_bar`.
    pub theta: f64,
    /// `f(z_bar) - theta`.
    pub gap: f64,
    pub threshold: f64,
    pub iterations: usize,
    pub oracle_calls: usize,
    /// Subproblem solves that ended at the iteration cap.
    pub fallbacks: usize,
}

/// Enriches the bundle seeded from `memory` and `center_sample` until the
/// gap at the subproblem solution is at most `min(Δ^(q+σ), c)`.
///
/// Every oracle query is pushed to `memory`. On hitting `max_iter` the error
/// carries the iterate with the smallest gap.
pub fn compute_w(
    oracle: &dyn Oracle,
    center_sample: OracleSample,
    region: TrustRegion,
    params: &BuilderParams,
    memory: &mut PointMemory,
) -> Result<BuilderResult> {
    params.validate()?;
    let order = center_sample.order();
    let threshold = params.threshold(region.radius(), order.degree());
    let solver = SolverOptions {
        abs_tol: params.sub_opt_tol_factor * threshold,
        ..params.solver
    };
    let mut bundle = seed_bundle(memory, center_sample, region)?;
    let mut best: Option<BuilderResult> = None;
    let mut fallbacks = 0;

    for it in 1..=params.max_iter {
        let sol = solve(&bundle, &solver)?;
        if sol.status == SolveStatus::MaxIterFallback {
            fallbacks += 1;
            debug!("subproblem hit its iteration cap (bundle size {})", bundle.len());
        }
        let sample = oracle.query(&sol.z_bar, order)?;
        memory.push(sample.clone());
        let gap = sample.value() - sol.theta;
        let done = gap <= threshold;
        let result = BuilderResult {
            bundle: bundle.clone(),
            z_bar: sol.z_bar,
            f_z_bar: sample.value(),
            z_sample: sample.clone(),
            theta: sol.theta,
            gap,
            threshold,
            iterations: it,
            oracle_calls: it,
            fallbacks,
        };
        if done {
            return Ok(result);
        }
        if !bundle.insert(sample)? {
            // The model cannot be below f at one of its own points; only
            // roundoff gets here.
            return Err(Error::BuilderLimit {
                iterations: it,
                best: Box::new(result),
            });
        }
        if best.as_ref().is_none_or(|b| gap < b.gap) {
            best = Some(result);
        }
    }
    Err(Error::BuilderLimit {
        iterations: params.max_iter,
        best: Box::new(best.expect("max_iter >= 1")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testing::{p, Abs, Square};
    use crate::oracle::ModelOrder;
    use crate::types::NormKind;

    fn run(
        oracle: &dyn Oracle,
        x: f64,
        delta: f64,
        order: ModelOrder,
        norm: NormKind,
    ) -> Result<BuilderResult> {
        let c = oracle.query(&p(&[x]), order).unwrap();
        let r = TrustRegion::new(p(&[x]), delta, norm).unwrap();
        let mut mem = PointMemory::new(100);
        compute_w(oracle, c, r, &BuilderParams::default(), &mut mem)
    }

    #[test]
    fn smooth_quadratic_stops_at_once() {
        let r = run(&Square(1), 0.7, 0.5, ModelOrder::Quadratic, NormKind::Euclidean).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.oracle_calls, 1);
        assert!(r.gap.abs() < 1e-12);
    }

    #[test]
    fn abs_same_branch_one_iteration() {
        let r = run(&Abs, 0.3, 0.2, ModelOrder::Linear, NormKind::Max).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.z_bar[0] - 0.1).abs() < 1e-12);
        assert!(r.gap.abs() < 1e-12);
    }

    #[test]
    fn abs_crossing_kink_two_iterations() {
        let r = run(&Abs, 0.3, 0.5, ModelOrder::Linear, NormKind::Max).unwrap();
        assert_eq!(r.iterations, 2);
        assert_eq!(r.bundle.len(), 2);
        assert!(r.z_bar[0].abs() < 1e-12);
    }

    #[test]
    fn every_query_is_memorized() {
        let c = Abs.query(&p(&[0.3]), ModelOrder::Linear).unwrap();
        let r = TrustRegion::new(p(&[0.3]), 0.5, NormKind::Max).unwrap();
        let mut mem = PointMemory::new(100);
        let out = compute_w(&Abs, c, r, &BuilderParams::default(), &mut mem).unwrap();
        assert_eq!(mem.len(), out.oracle_calls);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let c = Abs.query(&p(&[0.3]), ModelOrder::Linear).unwrap();
        let r = TrustRegion::new(p(&[0.3]), 0.5, NormKind::Max).unwrap();
        let mut mem = PointMemory::new(100);
        let params = BuilderParams {
            max_iter: 1,
            ..Default::default()
        };
        match compute_w(&Abs, c, r, &params, &mut mem) {
            Err(Error::BuilderLimit { iterations, best }) => {
                assert_eq!(iterations, 1);
                assert!((best.gap - 0.4).abs() < 1e-12);
            }
            other => panic!("expected BuilderLimit, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_params() {
        let c = Abs.query(&p(&[0.3]), ModelOrder::Linear).unwrap();
        let r = TrustRegion::new(p(&[0.3]), 0.5, NormKind::Max).unwrap();
        let mut mem = PointMemory::new(100);
        for params in [
            BuilderParams { sigma: 1.0, ..Default::default() },
            BuilderParams { cap: 0.0, ..Default::default() },
        ] {
            assert!(compute_w(&Abs, c.clone(), r.clone(), &params, &mut mem).is_err());
        }
    }
}
