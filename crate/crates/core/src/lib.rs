//! Trust-region bundle method with higher-order cutting-plane models for
//! nonsmooth max-type functions.
//!
//! The method minimizes `f(x) = max_{s in S} f_s(x)` with access only to
//! `f(x)` and the derivatives of one active `f_s` at each query point. For a
//! decreasing sequence of radii it produces trust regions which, under
//! growth assumptions on `f`, contain the minimizer.
//!
//! * [`oracle`]: oracle trait, samples and Taylor evaluation.
//! * [`model`]: bundle, cutting-plane model and sample memory.
//! * [`subproblem`]: model minimization over the trust region.
//! * [`builder`]: bundle enrichment until the model is accurate.
//! * [`driver`]: the outer radius loop and run traces.
//! * [`problems`]: seeded test functions.
//! * [`diagnostics`]: brute-force checks of the theory.
//! * [`cli`]: the `trbundle` command-line tool.

pub mod builder;
pub mod cli;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod model;
pub mod oracle;
pub mod problems;
pub mod subproblem;
pub mod types;

pub use builder::{compute_w, BuilderParams, BuilderResult};
pub use driver::{
    enclosure_report, global_solve, DriverFailure, EnclosureLevel, HandoffLevel, HandoffRecord,
    IterateRecord, RadiusSchedule, RunConfig, RunOutcome, TauSchedule,
};
pub use error::{Error, Result};
pub use model::{seed_bundle, Bundle, PointMemory};
pub use oracle::{finite_difference_check, taylor_eval, FdReport, ModelOrder, Oracle, OracleSample};
pub use problems::{generate, oracle_of, Family, InstanceOracle, ProblemInstance};
pub use subproblem::{solve, SolveStatus, SolverOptions, SubproblemSolution};
pub use types::{norm, NormKind, Point, Tolerances, TrustRegion};
