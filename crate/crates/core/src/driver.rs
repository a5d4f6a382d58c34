//! The outer trust-region loop: a decreasing radius schedule, an inner
//! sufficient-decrease loop per radius, iterate logging and handoff export.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::builder::{compute_w, BuilderParams};
use crate::error::{Error, Result};
use crate::model::PointMemory;
use crate::oracle::{ModelOrder, Oracle};
use crate::subproblem::SolverOptions;
use crate::types::{NormKind, Point, TrustRegion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusSchedule {
    /// `Δ_j = delta0 * ratio^(j-1)`.
    Geometric { delta0: f64, ratio: f64 },
    /// `Δ_1, Δ_2, ...` given explicitly.
    Explicit(Vec<f64>),
}

impl RadiusSchedule {
    /// Radius of outer level `j` (1-based).
    pub fn radius(&self, j: usize) -> Result<f64> {
        let r = match self {
            RadiusSchedule::Geometric { delta0, ratio } => delta0 * ratio.powi(j as i32 - 1),
            RadiusSchedule::Explicit(v) => *v
                .get(j.wrapping_sub(1))
                .ok_or_else(|| Error::invalid(format!("no radius given for level {j}")))?,
        };
        if r.is_finite() && r > 0.0 {
            Ok(r)
        } else {
            Err(Error::invalid(format!("radius of level {j} is {r}")))
        }
    }

    fn validate(&self, j_max: usize) -> Result<()> {
        if let RadiusSchedule::Geometric { delta0, ratio } = self {
            if !(*delta0 > 0.0 && delta0.is_finite()) {
                return Err(Error::invalid("delta0 must be positive"));
            }
            if !(*ratio > 0.0 && *ratio < 1.0) {
                return Err(Error::invalid("delta ratio must lie in (0, 1)"));
            }
        }
        (1..=j_max).try_for_each(|j| self.radius(j).map(|_| ()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauSchedule {
    Constant(f64),
    /// `τ_j = tau0 * ratio^j`.
    Geometric { tau0: f64, ratio: f64 },
    Explicit(Vec<f64>),
}

impl TauSchedule {
    pub fn tau(&self, j: usize) -> Result<f64> {
        let t = match self {
            TauSchedule::Constant(t) => *t,
            TauSchedule::Geometric { tau0, ratio } => tau0 * ratio.powi(j as i32),
            TauSchedule::Explicit(v) => *v
                .get(j.wrapping_sub(1))
                .ok_or_else(|| Error::invalid(format!("no tau given for level {j}")))?,
        };
        if t.is_finite() && t > 0.0 {
            Ok(t)
        } else {
            Err(Error::invalid(format!("tau of level {j} is {t}")))
        }
    }

    pub fn is_vanishing(&self) -> bool {
        !matches!(self, TauSchedule::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Growth exponent `p` used in the decrease test.
    pub p: u32,
    pub q: ModelOrder,
    pub radii: RadiusSchedule,
    pub tau: TauSchedule,
    pub sigma: f64,
    pub cap: f64,
    pub j_max: usize,
    pub max_inner: usize,
    pub builder_max_iter: usize,
    pub memory_capacity: usize,
    pub sub_opt_tol_factor: f64,
    pub seed: u64,
    pub x0: Point,
}

impl RunConfig {
    /// `Δ_j = 10^(1-j)`, `τ_j = 1e-5`, `σ = 0.5`, `c = 0.1`, five levels,
    /// memory of 100 samples, `p = q = 1`.
    pub fn defaults(x0: Point) -> Self {
        RunConfig {
            p: 1,
            q: ModelOrder::Linear,
            radii: RadiusSchedule::Geometric {
                delta0: 1.0,
                ratio: 0.1,
            },
            tau: TauSchedule::Constant(1e-5),
            sigma: 0.5,
            cap: 0.1,
            j_max: 5,
            max_inner: 10_000,
            builder_max_iter: 200,
            memory_capacity: PointMemory::DEFAULT_CAPACITY,
            sub_opt_tol_factor: 0.01,
            seed: 0,
            x0,
        }
    }

    /// Trust-region norm paired with the model order.
    pub fn norm(&self) -> NormKind {
        match self.q {
            ModelOrder::Linear => NormKind::Max,
            ModelOrder::Quadratic => NormKind::Euclidean,
        }
    }

    pub fn builder_params(&self) -> BuilderParams {
        BuilderParams {
            sigma: self.sigma,
            cap: self.cap,
            max_iter: self.builder_max_iter,
            sub_opt_tol_factor: self.sub_opt_tol_factor,
            solver: SolverOptions {
                seed: self.seed,
                ..SolverOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.p) {
            return Err(Error::invalid(format!("p must be 1 or 2, got {}", self.p)));
        }
        if self.q.degree() < self.p {
            return Err(Error::invalid("model order q must be at least p"));
        }
        if self.j_max == 0 {
            return Err(Error::invalid("j_max must be at least 1"));
        }
        if self.max_inner == 0 {
            return Err(Error::invalid("max_inner must be at least 1"));
        }
        if !(self.sub_opt_tol_factor > 0.0 && self.sub_opt_tol_factor < 1.0) {
            return Err(Error::invalid("sub_opt_tol_factor must lie in (0, 1)"));
        }
        self.radii.validate(self.j_max)?;
        (1..=self.j_max).try_for_each(|j| self.tau.tau(j).map(|_| ()))?;
        self.builder_params().validate()
    }

    /// Upper bound `τ_j + Δ_j^(q-p+σ) + K Δ_j^(q-p+1)` on `Λ^p(x^j, Δ_j)` at
    /// the end of level `j`, for a remainder constant `k_hat`.
    pub fn lambda_bound(&self, j: usize, k_hat: f64) -> Result<f64> {
        let delta = self.radii.radius(j)?;
        let e = f64::from(self.q.degree()) - f64::from(self.p);
        Ok(self.tau.tau(j)? + delta.powf(e + self.sigma) + k_hat * delta.powf(e + 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub j: usize,
    pub i: usize,
    pub x: Point,
    pub f: f64,
    pub delta_j: f64,
    pub tau_j: f64,
    pub z_bar: Point,
    pub f_z_bar: f64,
    /// `(f(x) - f(z_bar)) / Δ_j^p`.
    pub decrease_ratio: f64,
    pub gap: f64,
    pub bundle_size: usize,
    pub builder_iterations: usize,
    pub oracle_calls_cumulative: usize,
    pub accepted: bool,
    /// `||z_bar - x|| / Δ_j` in the trust-region norm.
    pub step_ratio: f64,
    pub dist_to_xstar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffLevel {
    pub j: usize,
    pub x: Point,
    pub delta: f64,
    pub f: f64,
}

/// One `(x^j, Δ_j)` pair per completed outer level, for initializing a
/// local method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HandoffRecord {
    pub levels: Vec<HandoffLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Vec<IterateRecord>,
    pub handoff: HandoffRecord,
    pub final_point: Point,
    pub final_value: f64,
    pub oracle_calls: usize,
}

/// A failed run, with everything logged up to the failure.
#[derive(Debug)]
pub struct DriverFailure {
    pub source: Error,
    pub trace: Vec<IterateRecord>,
    pub handoff: HandoffRecord,
}

impl fmt::Display for DriverFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run failed after {} iterates: {}", self.trace.len(), self.source)
    }
}

impl std::error::Error for DriverFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Runs the method from `config.x0`. `x_star` only feeds the
/// `dist_to_xstar` column of the trace.
pub fn global_solve(
    oracle: &dyn Oracle,
    config: &RunConfig,
    x_star: Option<&Point>,
) -> std::result::Result<RunOutcome, Box<DriverFailure>> {
    let mut trace = Vec::new();
    let mut handoff = HandoffRecord::default();
    match run_levels(oracle, config, x_star, &mut trace, &mut handoff) {
        Ok((final_point, final_value, oracle_calls)) => Ok(RunOutcome {
            trace,
            handoff,
            final_point,
            final_value,
            oracle_calls,
        }),
        Err(source) => Err(Box::new(DriverFailure {
            source,
            trace,
            handoff,
        })),
    }
}

fn run_levels(
    oracle: &dyn Oracle,
    config: &RunConfig,
    x_star: Option<&Point>,
    trace: &mut Vec<IterateRecord>,
    handoff: &mut HandoffRecord,
) -> Result<(Point, f64, usize)> {
    config.validate()?;
    config.x0.check_dim(oracle.dim())?;
    if let Some(xs) = x_star {
        xs.check_dim(oracle.dim())?;
    }
    let params = config.builder_params();
    let norm = config.norm();
    let p = config.p as i32;
    let mut memory = PointMemory::new(config.memory_capacity);

    let mut center = oracle.query(&config.x0, config.q)?;
    memory.push(center.clone());
    let mut calls = 1usize;

    for j in 1..=config.j_max {
        let delta = config.radii.radius(j)?;
        let tau = config.tau.tau(j)?;
        let mut i = 0;
        loop {
            if i >= config.max_inner {
                return Err(Error::InnerLimit {
                    j,
                    max_inner: config.max_inner,
                });
            }
            let x = center.base().clone();
            let fx = center.value();
            let region = TrustRegion::new(x.clone(), delta, norm)?;
            let built = compute_w(oracle, center.clone(), region.clone(), &params, &mut memory)?;
            calls += built.oracle_calls;
            let decrease_ratio = (fx - built.f_z_bar) / delta.powi(p);
            let accepted = decrease_ratio >= tau;
            trace.push(IterateRecord {
                j,
                i,
                dist_to_xstar: x_star.map(|xs| x.distance(xs, NormKind::Euclidean)),
                step_ratio: region.relative_distance(&built.z_bar),
                x,
                f: fx,
                delta_j: delta,
                tau_j: tau,
                z_bar: built.z_bar.clone(),
                f_z_bar: built.f_z_bar,
                decrease_ratio,
                gap: built.gap,
                bundle_size: built.bundle.len(),
                builder_iterations: built.iterations,
                oracle_calls_cumulative: calls,
                accepted,
            });
            if !accepted {
                break;
            }
            center = built.z_sample;
            i += 1;
        }
        handoff.levels.push(HandoffLevel {
            j,
            x: center.base().clone(),
            delta,
            f: center.value(),
        });
    }
    Ok((center.base().clone(), center.value(), calls))
}

/// Whether `x*` lies in the trust region `B(x^j, Δ_j)` of each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnclosureLevel {
    pub j: usize,
    pub delta: f64,
    /// Euclidean distance `||x^j - x*||`.
    pub distance: f64,
    pub enclosed: bool,
    /// Distance of `x^(j,0)` to `x*`, and whether it is within `Δ_j`.
    pub first_distance: f64,
    pub first_enclosed: bool,
}

/// Per-level enclosure of `x_star` by the Euclidean ball around the level's
/// final iterate. Levels without iterates are skipped.
pub fn enclosure_report(trace: &[IterateRecord], x_star: &Point) -> Vec<EnclosureLevel> {
    let mut out = Vec::new();
    let mut j_values: Vec<usize> = trace.iter().map(|r| r.j).collect();
    j_values.dedup();
    for j in j_values {
        let level: Vec<&IterateRecord> = trace.iter().filter(|r| r.j == j).collect();
        let first = level[0];
        let last = level[level.len() - 1];
        let distance = last.x.distance(x_star, NormKind::Euclidean);
        let first_distance = first.x.distance(x_star, NormKind::Euclidean);
        out.push(EnclosureLevel {
            j,
            delta: last.delta_j,
            distance,
            enclosed: distance <= last.delta_j,
            first_distance,
            first_enclosed: first_distance <= last.delta_j,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testing::{p, Abs, Square};

    fn quad_config(x0: Point) -> RunConfig {
        RunConfig {
            p: 2,
            q: ModelOrder::Quadratic,
            ..RunConfig::defaults(x0)
        }
    }

    #[test]
    fn schedules() {
        let r = RadiusSchedule::Geometric {
            delta0: 1.0,
            ratio: 0.1,
        };
        assert_eq!(r.radius(1).unwrap(), 1.0);
        assert!((r.radius(5).unwrap() - 1e-4).abs() < 1e-18);
        assert!(RadiusSchedule::Explicit(vec![1.0]).radius(2).is_err());
        let t = TauSchedule::Geometric {
            tau0: 1.0,
            ratio: 0.5,
        };
        assert_eq!(t.tau(2).unwrap(), 0.25);
        assert!(t.is_vanishing());
        assert!(!TauSchedule::Constant(1e-5).is_vanishing());
    }

    #[test]
    fn config_validation() {
        let base = RunConfig::defaults(p(&[1.0]));
        assert!(base.validate().is_ok());
        let bad = [
            RunConfig { p: 2, ..base.clone() },
            RunConfig { p: 3, q: ModelOrder::Quadratic, ..base.clone() },
            RunConfig { j_max: 0, ..base.clone() },
            RunConfig { sigma: 0.0, ..base.clone() },
            RunConfig {
                radii: RadiusSchedule::Geometric { delta0: 1.0, ratio: 1.0 },
                ..base.clone()
            },
            RunConfig { tau: TauSchedule::Constant(0.0), ..base.clone() },
            RunConfig { radii: RadiusSchedule::Explicit(vec![1.0, 0.1]), ..base.clone() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn toy_quadratic_is_enclosed() {
        let cfg = quad_config(p(&[0.5]));
        let x_star = p(&[0.0]);
        let out = global_solve(&Square(1), &cfg, Some(&x_star)).unwrap();
        assert_eq!(out.handoff.levels.len(), 5);
        assert!(out.final_point[0].abs() <= 1e-4);
        for level in enclosure_report(&out.trace, &x_star) {
            assert!(level.enclosed, "{level:?}");
        }
    }

    #[test]
    fn abs_linear_run_descends() {
        let cfg = RunConfig::defaults(p(&[0.73]));
        let out = global_solve(&Abs, &cfg, None).unwrap();
        for r in &out.trace {
            assert_eq!(r.accepted, r.decrease_ratio >= r.tau_j);
        }
        let fs: Vec<f64> = out.handoff.levels.iter().map(|l| l.f).collect();
        assert!(fs.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.final_point[0].abs() <= 1e-4);
    }

    #[test]
    fn one_level_gives_one_handoff() {
        let cfg = RunConfig {
            j_max: 1,
            ..quad_config(p(&[0.5]))
        };
        let out = global_solve(&Square(1), &cfg, None).unwrap();
        assert_eq!(out.handoff.levels.len(), 1);
    }

    #[test]
    fn inner_limit_keeps_trace() {
        let cfg = RunConfig {
            max_inner: 1,
            ..quad_config(p(&[5.0]))
        };
        let fail = global_solve(&Square(1), &cfg, None).unwrap_err();
        assert!(matches!(fail.source, Error::InnerLimit { j: 1, max_inner: 1 }));
        assert_eq!(fail.trace.len(), 1);
    }

    #[test]
    fn enclosure_of_final_point_is_true() {
        let cfg = quad_config(p(&[0.5]));
        let out = global_solve(&Square(1), &cfg, None).unwrap();
        let rep = enclosure_report(&out.trace, &out.final_point);
        assert!(rep.last().unwrap().enclosed);
    }
}
