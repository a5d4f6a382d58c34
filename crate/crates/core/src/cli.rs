//! Command-line front end: `generate`, `run` and `diagnose`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (partial output is
//! flushed), 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    criticality_certificate, lambda_bound_certificate, lambda_p, lambda_p_multistart, property_p_probe,
    remainder_constant_estimator, ProbeOptions, RemainderMode, RemainderOptions,
};
use crate::driver::{enclosure_report, global_solve, EnclosureLevel, IterateRecord, RadiusSchedule, RunConfig, TauSchedule};
use crate::error::Error;
use crate::oracle::{ModelOrder, Oracle};
use crate::problems::{deserialize, generate, oracle_of, serialize, Family, ProblemInstance};
use crate::types::{NormKind, Point, TrustRegion};

pub const OUT_DIR_ENV: &str = "TRBUNDLE_OUT_DIR";
pub const ARTIFACT_VERSION: &str = concat!("trbundle ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "trbundle", version, about = "Trust-region bundle method for nonsmooth max-type functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded problem instance.
    Generate(GenerateArgs),
    /// Run the method on an instance.
    Run(RunArgs),
    /// Brute-force diagnostics on an instance.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Terms (quartic families), matrix size (max-eig) or exponent (sine-growth).
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "manifest")]
    instance: Option<PathBuf>,
    /// Replay the configuration and instance recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    jmax: Option<usize>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    delta_ratio: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Vanishing schedule `tau_j = tau * tau_ratio^j`.
    #[arg(long)]
    tau_ratio: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    builder_max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated start point; a single value is broadcast.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Estimate the remainder constant and check the per-level bound on
    /// `Lambda^p` by brute force.
    #[arg(long)]
    certify: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Lambda,
    PropertyP,
    RemainderOrder,
    Criticality,
    Plotdata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    Euclidean,
    Max,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Point of evaluation, comma-separated (default: `x_star`, else the
    /// default start point).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long, value_enum, default_value_t = NormArg::Euclidean)]
    norm: NormArg,
    #[arg(long, default_value_t = 0.2)]
    box_radius: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4")]
    deltas: String,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Half-width of the plotted interval around `x_star`.
    #[arg(long, default_value_t = 0.2)]
    half_width: f64,
    #[arg(long, default_value_t = 2001)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let family: Family = a.family.parse()?;
    let inst = generate(family, a.n, a.m, a.seed)?;
    write_file(&a.out, &serialize(&inst))?;
    println!("wrote {} instance (n = {}, m = {}) to {}", family, inst.n, inst.m, a.out.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn load_instance(path: &Path) -> CliResult<ProblemInstance> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    deserialize(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn parse_point(text: &str, n: usize) -> CliResult<Point> {
    let vals = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| Failure::Usage(format!("cannot parse point `{text}`")))?;
    let vals = if vals.len() == 1 && n > 1 { vec![vals[0]; n] } else { vals };
    if vals.len() != n {
        return Err(Failure::Usage(format!("point has {} coordinates, expected {n}", vals.len())));
    }
    Ok(Point::new(vals)?)
}

fn model_order(q: u32) -> CliResult<ModelOrder> {
    ModelOrder::try_from(q).map_err(|_| Failure::Usage(format!("model order must be 1 or 2, got {q}")))
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub instance: PathBuf,
    pub family: Family,
    pub config: RunConfig,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub error: Option<String>,
    pub final_f: Option<f64>,
    pub final_point: Option<Vec<f64>>,
    pub oracle_calls: usize,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub enclosure: Vec<EnclosureLevel>,
    pub certificate: Option<CertificateSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub k_hat: f64,
    pub remainder_slope: Option<f64>,
    pub levels: Vec<LevelBound>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelBound {
    pub j: usize,
    pub lambda: f64,
    pub bound: f64,
    pub holds: bool,
}

fn any_run_flag(a: &RunArgs) -> bool {
    a.instance.is_some()
        || a.q.is_some()
        || a.p.is_some()
        || a.jmax.is_some()
        || a.delta0.is_some()
        || a.delta_ratio.is_some()
        || a.tau.is_some()
        || a.tau_ratio.is_some()
        || a.sigma.is_some()
        || a.cap.is_some()
        || a.memory.is_some()
        || a.max_inner.is_some()
        || a.builder_max_iter.is_some()
        || a.seed.is_some()
        || a.x0.is_some()
}

fn config_from_flags(a: &RunArgs, inst: &ProblemInstance) -> CliResult<RunConfig> {
    let q = model_order(a.q.unwrap_or(1))?;
    let x0 = match &a.x0 {
        Some(t) => parse_point(t, inst.n)?,
        None => inst.default_x0(),
    };
    let mut cfg = RunConfig::defaults(x0);
    cfg.q = q;
    cfg.p = a.p.unwrap_or(q.degree());
    cfg.radii = RadiusSchedule::Geometric {
        delta0: a.delta0.unwrap_or(1.0),
        ratio: a.delta_ratio.unwrap_or(0.1),
    };
    let tau = a.tau.unwrap_or(1e-5);
    cfg.tau = match a.tau_ratio {
        Some(ratio) => TauSchedule::Geometric { tau0: tau, ratio },
        None => TauSchedule::Constant(tau),
    };
    cfg.sigma = a.sigma.unwrap_or(cfg.sigma);
    cfg.cap = a.cap.unwrap_or(cfg.cap);
    cfg.j_max = a.jmax.unwrap_or(cfg.j_max);
    cfg.memory_capacity = a.memory.unwrap_or(cfg.memory_capacity);
    cfg.max_inner = a.max_inner.unwrap_or(cfg.max_inner);
    cfg.builder_max_iter = a.builder_max_iter.unwrap_or(cfg.builder_max_iter);
    cfg.seed = a.seed.unwrap_or(0);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let (instance_path, inst, config) = match &a.manifest {
        Some(mpath) => {
            if any_run_flag(a) {
                return Err(Failure::Usage("--manifest cannot be combined with run options".into()));
            }
            let text = fs::read_to_string(mpath)?;
            let manifest: RunManifest = serde_json::from_str(&text)?;
            let mut path = manifest.instance.clone();
            if path.is_relative() && !path.exists() {
                if let Some(dir) = mpath.parent() {
                    path = dir.join(path);
                }
            }
            let inst = load_instance(&path)?;
            manifest.config.validate()?;
            (manifest.instance, inst, manifest.config)
        }
        None => {
            let path = a.instance.clone().expect("required by clap");
            let inst = load_instance(&path)?;
            let cfg = config_from_flags(a, &inst)?;
            let abs = fs::canonicalize(&path).unwrap_or(path);
            (abs, inst, cfg)
        }
    };

    let oracle = oracle_of(&inst);
    let started = Instant::now();
    let result = global_solve(&oracle, &config, inst.x_star.as_ref());
    let wall = started.elapsed().as_secs_f64();

    fs::create_dir_all(&a.out_dir)?;
    let (trace, handoff, outcome, error) = match result {
        Ok(run) => (run.trace.clone(), run.handoff.clone(), Some(run), None),
        Err(fail) => (fail.trace, fail.handoff, None, Some(fail.source)),
    };
    write_iterates(&a.out_dir.join("iterates.csv"), &trace)?;
    let mut handoff_text = String::new();
    for level in &handoff.levels {
        let mut fields = vec![level.j.to_string(), fmt17(level.delta), fmt17(level.f)];
        fields.extend(level.x.iter().map(|v| fmt17(*v)));
        handoff_text.push_str(&fields.join(" "));
        handoff_text.push('\n');
    }
    write_file(&a.out_dir.join("handoff.txt"), &handoff_text)?;
    write_file(&a.out_dir.join("plot_iterates.gp"), ITERATES_SCRIPT)?;

    let enclosure = inst
        .x_star
        .as_ref()
        .map(|xs| enclosure_report(&trace, xs))
        .unwrap_or_default();
    for level in enclosure.iter().filter(|l| !l.enclosed) {
        warn!(
            "level {}: distance {:.3e} to the reference point exceeds the radius {:.3e}",
            level.j, level.distance, level.delta
        );
    }

    let certificate = match (&outcome, a.certify) {
        (Some(run), true) => Some(certify(&oracle, &config, run)?),
        _ => None,
    };

    let summary = RunSummary {
        status: if error.is_none() { "ok" } else { "failed" }.into(),
        error: error.as_ref().map(|e| e.to_string()),
        final_f: outcome.as_ref().map(|r| r.final_value),
        final_point: outcome.as_ref().map(|r| r.final_point.to_vec()),
        oracle_calls: outcome
            .as_ref()
            .map_or_else(|| trace.last().map_or(0, |r| r.oracle_calls_cumulative), |r| r.oracle_calls),
        iterations: trace.len(),
        wall_time_s: wall,
        enclosure,
        certificate,
    };
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.into(),
        instance: instance_path,
        family: inst.family,
        config,
        summary,
    };
    write_file(&a.out_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;

    match error {
        None => {
            let s = &manifest.summary;
            println!(
                "f = {} after {} iterations, {} oracle calls",
                fmt17(s.final_f.unwrap_or(f64::NAN)),
                s.iterations,
                s.oracle_calls
            );
            for l in &s.enclosure {
                println!("level {}: delta {:.1e} distance {:.3e} enclosed {}", l.j, l.delta, l.distance, l.enclosed);
            }
            Ok(())
        }
        Some(e @ Error::InvalidArgument(_)) | Some(e @ Error::DimensionMismatch { .. }) => Err(Failure::Usage(e.to_string())),
        Some(e) => Err(Failure::Runtime(e.to_string())),
    }
}

fn certify(oracle: &dyn Oracle, config: &RunConfig, run: &crate::driver::RunOutcome) -> CliResult<CertificateSummary> {
    let deltas: Vec<f64> = if config.j_max >= 4 {
        (1..=config.j_max).map(|j| config.radii.radius(j)).collect::<Result<_, _>>()?
    } else {
        vec![1e-1, 1e-2, 1e-3, 1e-4]
    };
    let est = remainder_constant_estimator(
        oracle,
        &run.final_point,
        &deltas,
        &RemainderOptions {
            q: config.q,
            samples_per_delta: 50,
            seed: config.seed,
            mode: RemainderMode::Branches,
        },
    )?;
    let levels = lambda_bound_certificate(oracle, config, run, est.k_hat)?
        .into_iter()
        .map(|c| LevelBound {
            j: c.j,
            lambda: c.lambda.lambda_value,
            bound: c.bound,
            holds: c.holds,
        })
        .collect();
    Ok(CertificateSummary {
        k_hat: est.k_hat,
        remainder_slope: est.slope,
        levels,
    })
}

pub const ITERATES_HEADER: [&str; 9] = [
    "j",
    "i",
    "f",
    "decrease_ratio",
    "gap",
    "bundle_size",
    "delta",
    "dist_to_xstar",
    "accepted",
];

fn write_iterates(path: &Path, trace: &[IterateRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ITERATES_HEADER)?;
    for r in trace {
        w.write_record([
            r.j.to_string(),
            r.i.to_string(),
            fmt17(r.f),
            fmt17(r.decrease_ratio),
            fmt17(r.gap),
            r.bundle_size.to_string(),
            fmt17(r.delta_j),
            r.dist_to_xstar.map(fmt17).unwrap_or_default(),
            r.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const ITERATES_SCRIPT: &str = r#"# gnuplot -p plot_iterates.gp
set datafile separator ","
set key autotitle columnhead
set logscale y
set xlabel "iteration"
set multiplot layout 1,2
set title "f(x^{j,i})"
plot "iterates.csv" using 0:3 with linespoints title "f"
set title "distance to x* and radius"
plot "iterates.csv" using 0:8 with linespoints title "||x - x*||", \
     "iterates.csv" using 0:7 with steps title "delta"
unset multiplot
"#;

const PLOTDATA_SCRIPT: &str = r#"# gnuplot -p plot_f.gp
set datafile separator ","
set xlabel "x"
set ylabel "f(x)"
plot "plotdata.csv" using 1:2 with lines notitle
"#;

fn diagnose_point(a: &DiagnoseArgs, inst: &ProblemInstance) -> CliResult<Point> {
    match &a.x {
        Some(t) => parse_point(t, inst.n),
        None => Ok(inst.x_star.clone().unwrap_or_else(|| inst.default_x0())),
    }
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let oracle = oracle_of(&inst);
    fs::create_dir_all(&a.out_dir)?;
    let p = a.p.unwrap_or_else(|| inst.growth_order.unwrap_or(1));
    match a.mode {
        Mode::Lambda => {
            let x = diagnose_point(a, &inst)?;
            let delta = a.delta.ok_or_else(|| Failure::Usage("--delta is required for lambda".into()))?;
            let norm = match a.norm {
                NormArg::Euclidean => NormKind::Euclidean,
                NormArg::Max => NormKind::Max,
            };
            let region = TrustRegion::new(x.clone(), delta, norm)?;
            let est = if inst.n <= 3 {
                lambda_p(&oracle, &region, p)?
            } else {
                warn!("n = {} > 3: multi-start search, no global guarantee", inst.n);
                lambda_p_multistart(&oracle, &region, p, a.seed)?
            };
            let mut w = csv::Writer::from_path(a.out_dir.join("lambda.csv"))?;
            w.write_record(["delta", "p", "lambda", "f_x", "f_z_star", "method"])?;
            w.write_record([
                fmt17(delta),
                p.to_string(),
                fmt17(est.lambda_value),
                fmt17(est.f_x),
                fmt17(est.f_z_star),
                format!("{:?}", est.method),
            ])?;
            w.flush()?;
            println!("lambda = {}", fmt17(est.lambda_value));
            println!("z_star = {:?}", est.z_star);
        }
        Mode::PropertyP => {
            if inst.n > 2 {
                return Err(Failure::Usage("property-p supports n <= 2".into()));
            }
            let x_star = inst
                .x_star
                .clone()
                .ok_or_else(|| Failure::Usage("instance has no reference minimizer".into()))?;
            let probe = property_p_probe(
                &oracle,
                &x_star,
                &ProbeOptions {
                    p,
                    box_radius: a.box_radius,
                    num_samples: a.samples,
                    seed: a.seed,
                    scan_local_minima: inst.n == 1,
                },
            )?;
            let mut w = csv::Writer::from_path(a.out_dir.join("property_p.csv"))?;
            let mut header: Vec<String> = (1..=inst.n).map(|k| format!("x_{k}")).collect();
            header.extend(["delta", "lambda", "local_min"].map(String::from));
            w.write_record(&header)?;
            for s in &probe.samples {
                let mut rec: Vec<String> = s.x.iter().map(|v| fmt17(*v)).collect();
                rec.extend([fmt17(s.delta), fmt17(s.lambda), s.local_min.to_string()]);
                w.write_record(&rec)?;
            }
            w.flush()?;
            println!("empirical infimum of lambda^{p}: {}", fmt17(probe.empirical_inf));
            println!("nonzero local minima found: {}", probe.local_minima.len());
            for wit in &probe.witnesses {
                println!("  x = {:?} delta = {:.3e} lambda = {:.3e}", wit.x, wit.delta, wit.lambda);
            }
        }
        Mode::RemainderOrder => {
            let x = diagnose_point(a, &inst)?;
            let deltas = a
                .deltas
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Failure::Usage(format!("cannot parse radii `{}`", a.deltas)))?;
            let est = remainder_constant_estimator(
                &oracle,
                &x,
                &deltas,
                &RemainderOptions {
                    q: model_order(a.q)?,
                    samples_per_delta: a.samples,
                    seed: a.seed,
                    mode: RemainderMode::Branches,
                },
            )?;
            if est.mode == RemainderMode::ValueProxy {
                warn!("branches cannot be evaluated; f is used as an upper proxy");
            }
            let mut w = csv::Writer::from_path(a.out_dir.join("remainder.csv"))?;
            w.write_record(["delta", "max_abs_remainder", "bundle_size"])?;
            for l in &est.levels {
                w.write_record([fmt17(l.delta), fmt17(l.max_abs_remainder), l.bundle_size.to_string()])?;
            }
            w.flush()?;
            match est.slope {
                Some(s) => println!("slope = {s:.4}"),
                None => println!("slope undefined (remainders at roundoff level)"),
            }
            println!("k_hat = {:.6e} ({:?})", est.k_hat, est.mode);
        }
        Mode::Criticality => {
            let x = diagnose_point(a, &inst)?;
            let cert = criticality_certificate(&oracle, &x, a.epsilon, a.samples, a.seed)?;
            let mut w = csv::Writer::from_path(a.out_dir.join("criticality.csv"))?;
            w.write_record(["epsilon", "samples", "value"])?;
            w.write_record([fmt17(a.epsilon), cert.samples.to_string(), fmt17(cert.value)])?;
            w.flush()?;
            println!("min-norm sampled gradient: {}", fmt17(cert.value));
        }
        Mode::Plotdata => {
            if inst.n != 1 {
                return Err(Failure::Usage("plotdata supports one-dimensional instances".into()));
            }
            if a.points < 2 || !(a.half_width > 0.0) {
                return Err(Failure::Usage("need at least two points and a positive half-width".into()));
            }
            let c = inst.x_star.as_ref().map_or(0.0, |x| x[0]);
            let mut w = csv::Writer::from_path(a.out_dir.join("plotdata.csv"))?;
            w.write_record(["x", "f"])?;
            for k in 0..a.points {
                let x = c - a.half_width + 2.0 * a.half_width * k as f64 / (a.points - 1) as f64;
                w.write_record([fmt17(x), fmt17(oracle.value(&Point::new(vec![x])?)?)])?;
            }
            w.flush()?;
            write_file(&a.out_dir.join("plot_f.gp"), PLOTDATA_SCRIPT)?;
            println!("wrote {} points to {}", a.points, a.out_dir.join("plotdata.csv").display());
        }
    }
    Ok(())
}
