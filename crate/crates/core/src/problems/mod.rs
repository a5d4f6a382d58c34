//! Seeded test problems with ground-truth metadata.
//!
//! Five families are provided:
//!
//! * [`Family::MaxQuartic`]: `max_i (g_i'x + x'H_i x/2 + c_i ||x||^4/24)`, strongly convex.
//! * [`Family::SumAbsQuartic`]: `sum_i |g_i'x + x'H_i x/2 + c_i ||x||^4/24|`, nonconvex.
//! * [`Family::MaxEigenvalue`]: `lambda_max(A_0 + sum_i x_i A_i)`.
//! * [`Family::SineGrowth`]: `x^(p+1) sin(1/x) + |x|^p / p` in one dimension.
//! * [`Family::ToyQuadratic`]: `||x||^2`.
//!
//! For the two quartic families the minimizer is `x* = 0` with `f* = 0`; the
//! growth around it is sharp when `n < m` and quadratic otherwise.

mod families;
mod io;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::driver::{global_solve, RadiusSchedule, RunConfig, TauSchedule};
use crate::error::{Error, Result};
use crate::oracle::ModelOrder;
use crate::types::{derive_seed, rng_from_seed, Point};

pub use families::InstanceOracle;
pub use io::{deserialize, serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    MaxQuartic,
    SumAbsQuartic,
    MaxEigenvalue,
    SineGrowth,
    ToyQuadratic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::MaxQuartic => "max-quartic",
            Family::SumAbsQuartic => "sum-abs-quartic",
            Family::MaxEigenvalue => "max-eig",
            Family::SineGrowth => "sine-growth",
            Family::ToyQuadratic => "toy-quadratic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "max-quartic" => Family::MaxQuartic,
            "sum-abs-quartic" => Family::SumAbsQuartic,
            "max-eig" => Family::MaxEigenvalue,
            "sine-growth" => Family::SineGrowth,
            "toy-quadratic" => Family::ToyQuadratic,
            other => return Err(Error::invalid(format!("unknown family `{other}`"))),
        })
    }
}

/// Family-specific numeric data.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemData {
    /// Terms `g_i'x + x'H_i x/2 + c_i ||x||^4/24`, shared by both quartic families.
    Quartic {
        g: Vec<DVector<f64>>,
        h: Vec<DMatrix<f64>>,
        c: Vec<f64>,
    },
    /// Symmetric `A_0, ..., A_n`, each `m x m`.
    Eigen { a: Vec<DMatrix<f64>> },
    Sine { p: u32 },
    Toy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub data: ProblemData,
    /// Known minimizer, or a high-accuracy reference point for `MaxEigenvalue`.
    pub x_star: Option<Point>,
    pub growth_order: Option<u32>,
    pub f_star: Option<f64>,
}

/// Hessian regularization `H_i = B'B + HESS_SHIFT * I`.
pub const HESS_SHIFT: f64 = 0.1;
/// Range of the quartic coefficients `c_i`.
pub const QUARTIC_COEF_RANGE: (f64, f64) = (0.5, 1.5);

/// Builds a seeded instance.
///
/// `m` is the number of terms for the quartic families, the matrix size for
/// `MaxEigenvalue` and the exponent `p` for `SineGrowth` (which requires
/// `n = 1`). `ToyQuadratic` ignores `m` and `seed`.
pub fn generate(family: Family, n: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    match family {
        Family::MaxQuartic | Family::SumAbsQuartic => {
            if m == 0 {
                return Err(Error::invalid("m must be at least 1"));
            }
            let data = quartic_data(n, m, seed)?;
            Ok(ProblemInstance {
                family,
                n,
                m,
                seed,
                data,
                x_star: Some(Point::zeros(n)),
                growth_order: Some(if n < m { 1 } else { 2 }),
                f_star: Some(0.0),
            })
        }
        Family::MaxEigenvalue => {
            if m < 2 {
                return Err(Error::invalid("matrix size m must be at least 2"));
            }
            let data = eigen_data(n, m, seed);
            let mut inst = ProblemInstance {
                family,
                n,
                m,
                seed,
                data,
                x_star: None,
                growth_order: None,
                f_star: None,
            };
            let x_ref = reference_minimizer(&inst)?;
            let f_ref = InstanceOracle::new(&inst).value_at(&x_ref)?;
            inst.x_star = Some(x_ref);
            inst.f_star = Some(f_ref);
            Ok(inst)
        }
        Family::SineGrowth => {
            if n != 1 {
                return Err(Error::invalid("sine-growth is one-dimensional"));
            }
            if m == 0 {
                return Err(Error::invalid("sine-growth exponent p must be at least 1"));
            }
            Ok(ProblemInstance {
                family,
                n,
                m,
                seed,
                data: ProblemData::Sine { p: m as u32 },
                x_star: Some(Point::zeros(1)),
                growth_order: Some(m as u32),
                f_star: Some(0.0),
            })
        }
        Family::ToyQuadratic => Ok(ProblemInstance {
            family,
            n,
            m: 0,
            seed,
            data: ProblemData::Toy,
            x_star: Some(Point::zeros(n)),
            growth_order: Some(2),
            f_star: Some(0.0),
        }),
    }
}

/// The oracle of an instance.
pub fn oracle_of(instance: &ProblemInstance) -> InstanceOracle<'_> {
    InstanceOracle::new(instance)
}

impl ProblemInstance {
    /// Starting point used in the experiments for each family.
    pub fn default_x0(&self) -> Point {
        match self.family {
            Family::MaxQuartic | Family::MaxEigenvalue => Point::from_element(self.n, 1.0),
            Family::SumAbsQuartic => {
                let mut v = vec![1.0; self.n];
                v[0] = 2.0;
                Point::new(v).expect("finite")
            }
            Family::SineGrowth | Family::ToyQuadratic => Point::from_element(self.n, 0.5),
        }
    }

    /// Number of selection functions when finite (`m` for max-quartic,
    /// `2^m` for sum-abs-quartic), saturating at `u64::MAX`.
    pub fn selection_count(&self) -> Option<u64> {
        match self.family {
            Family::MaxQuartic => Some(self.m as u64),
            Family::SumAbsQuartic => Some(1u64.checked_shl(self.m as u32).unwrap_or(u64::MAX)),
            Family::ToyQuadratic => Some(1),
            _ => None,
        }
    }

    pub fn sine_exponent(&self) -> Option<u32> {
        match self.data {
            ProblemData::Sine { p } => Some(p),
            _ => None,
        }
    }
}

fn quartic_data(n: usize, m: usize, seed: u64) -> Result<ProblemData> {
    let k = (n + 1).min(m);
    // Redraw in the (measure-zero) event that the g_i of I' are affinely dependent.
    for attempt in 0..16u64 {
        let mut rng = rng_from_seed(derive_seed(seed, attempt));
        let mut g: Vec<DVector<f64>> = (0..m)
            .map(|_| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let lambda: Vec<f64> = w.iter().map(|v| v / total).collect();
        let mean = g
            .iter()
            .zip(&lambda)
            .fold(DVector::zeros(n), |acc, (gi, li)| acc + gi * *li);
        for gi in g.iter_mut().take(k) {
            *gi -= &mean;
        }
        if !affinely_independent(&g[..k]) {
            continue;
        }
        let scale = 1.0 / (n as f64).sqrt();
        let h = (0..m)
            .map(|_| {
                let b = DMatrix::from_fn(n, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
                let mut hi = b.transpose() * &b;
                hi += DMatrix::identity(n, n) * HESS_SHIFT;
                (&hi + hi.transpose()) * 0.5
            })
            .collect();
        let c = (0..m)
            .map(|_| rng.random_range(QUARTIC_COEF_RANGE.0..QUARTIC_COEF_RANGE.1))
            .collect();
        return Ok(ProblemData::Quartic { g, h, c });
    }
    Err(Error::Internal(
        "could not draw affinely independent gradients".into(),
    ))
}

fn affinely_independent(points: &[DVector<f64>]) -> bool {
    if points.len() <= 1 {
        return true;
    }
    let n = points[0].len();
    let diffs = DMatrix::from_fn(n, points.len() - 1, |r, c| points[c + 1][r] - points[0][r]);
    let sv = diffs.singular_values();
    let max = sv.max();
    sv.iter().all(|s| *s > 1e-8 * max.max(1.0))
}

fn random_symmetric(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&b + b.transpose()) * std::f64::consts::FRAC_1_SQRT_2
}

/// `A_1..A_n` are projected onto the trace-free subspace, so no combination
/// `sum_i x_i A_i` can be positive definite and `f` is bounded below.
fn eigen_data(n: usize, m: usize, seed: u64) -> ProblemData {
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut a = Vec::with_capacity(n + 1);
    a.push(random_symmetric(m, &mut rng));
    for _ in 0..n {
        let mut ai = random_symmetric(m, &mut rng);
        let shift = ai.trace() / m as f64;
        for d in 0..m {
            ai[(d, d)] -= shift;
        }
        a.push(ai);
    }
    ProblemData::Eigen { a }
}

/// Reference minimizer obtained from a long run of the bundle method
/// (seven radius levels, down to `1e-6`).
pub fn reference_minimizer(instance: &ProblemInstance) -> Result<Point> {
    let oracle = oracle_of(instance);
    let config = RunConfig {
        p: 2,
        q: ModelOrder::Quadratic,
        radii: RadiusSchedule::Geometric {
            delta0: 1.0,
            ratio: 0.1,
        },
        tau: TauSchedule::Constant(1e-5),
        j_max: 7,
        builder_max_iter: 1000,
        ..RunConfig::defaults(instance.default_x0())
    };
    match global_solve(&oracle, &config, None) {
        Ok(run) => Ok(run.final_point),
        Err(fail) => fail
            .trace
            .iter()
            .min_by(|a, b| a.f.total_cmp(&b.f))
            .map(|r| r.x.clone())
            .ok_or(fail.source),
    }
}
