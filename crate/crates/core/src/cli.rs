//! Command-line front end: subcommands, output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dichotomy::{DichotomyConfig, DichotomyError, DEFAULT_HORIZON};
use crate::evans::{evans_curve, parity, parity_index, EvansConfig, EvansCurve, EvansError};
use crate::homoclinic::{
    seed_from_kernel, trace_branch, HomoclinicConfig, HomoclinicError, HomoclinicSolution,
};
use crate::model::{load_model, ModelError, ModelSpec, ModelSummary};
use crate::ode::IntegratorConfig;
use crate::spectrum::{dichotomy_spectrum, SpectrumError, DEFAULT_RESOLUTION};

#[derive(Debug, Parser)]
#[command(
    name = "evans-parity",
    version,
    about = "Dichotomy spectra, Evans functions and parity for nonautonomous ODEs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Half-line analysis horizon T.
    #[arg(long, global = true, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Number of λ grid points for Evans curves.
    #[arg(long, global = true, default_value_t = 101)]
    pub grid: usize,
    /// Resolution of spectral interval endpoints.
    #[arg(long, global = true, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: f64,
    /// Relative integrator tolerance (absolute tolerance is 1e-2 times this).
    #[arg(long, global = true, default_value_t = IntegratorConfig::default().rel_tol)]
    pub tol: f64,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dichotomy spectrum of the variation equation at each λ.
    Spectrum {
        config: PathBuf,
        #[arg(long = "lambda", allow_negative_numbers = true)]
        lambdas: Vec<f64>,
        /// Evenly spaced λ values: LO HI (use with --count).
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["LO", "HI"])]
        lambda_range: Option<Vec<f64>>,
        #[arg(long, default_value_t = 11)]
        count: usize,
    },
    /// Evans function on a λ grid.
    Evans {
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
    },
    /// Parity over [from, to], optionally the parity index at a critical value.
    Parity {
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, allow_negative_numbers = true)]
        at: Option<f64>,
    },
    /// Critical values in [from, to] with their parity indices.
    Bifurcate {
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
    },
    /// Homoclinic branch emanating from a critical value.
    Branch {
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda_star: f64,
        #[arg(long, allow_negative_numbers = true)]
        stop: f64,
        /// Continuation step in λ.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Half-length of the truncated boundary-value interval.
        #[arg(long, default_value_t = 12.0)]
        bvp_horizon: f64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    MorseMismatch(String),
    #[error("{0}")]
    EndpointCritical(String),
    #[error("branch seeding failed: {0}")]
    Seeding(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
            CliError::MorseMismatch(_) => 3,
            CliError::EndpointCritical(_) => 4,
            CliError::Seeding(_) => 5,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DichotomyError> for CliError {
    fn from(e: DichotomyError) -> Self {
        match e {
            DichotomyError::MorseMismatch { .. } => CliError::MorseMismatch(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::Dichotomy(d) => d.into(),
            SpectrumError::InvalidArgument(s) => CliError::Config(s),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EvansError> for CliError {
    fn from(e: EvansError) -> Self {
        match e {
            EvansError::MorseMismatch { .. } => CliError::MorseMismatch(e.to_string()),
            EvansError::EndpointNotInvertible { .. } | EvansError::SingularEndpoint { .. } => {
                CliError::EndpointCritical(e.to_string())
            }
            EvansError::InvalidArgument(s) => CliError::Config(s),
            EvansError::Dichotomy {
                source: DichotomyError::Ode(crate::ode::OdeError::Model(m)),
                ..
            } => CliError::Config(m.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<HomoclinicError> for CliError {
    fn from(e: HomoclinicError) -> Self {
        match e {
            HomoclinicError::SeedingFailed { .. } => CliError::Seeding(e.to_string()),
            HomoclinicError::MorseMismatch { .. } => CliError::MorseMismatch(e.to_string()),
            HomoclinicError::InvalidArgument(s) => CliError::Config(s),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub model: ModelSummary,
    pub format: Format,
    pub jobs: usize,
    pub settings: Value,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub version: String,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
}

struct Run {
    out: PathBuf,
    outputs: Vec<String>,
    warnings: Vec<String>,
    timings: Vec<(String, f64)>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Numerical(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        self.write(name, &bytes)
    }

    fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        self.timings
            .push((phase.to_string(), start.elapsed().as_secs_f64()));
        v
    }
}

fn load(path: &Path) -> Result<ModelSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(load_model(&text)?)
}

fn dichotomy_config(c: &CommonArgs) -> Result<DichotomyConfig, CliError> {
    let integrator = IntegratorConfig {
        rel_tol: c.tol,
        abs_tol: 1e-2 * c.tol,
        ..IntegratorConfig::default()
    };
    integrator
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(DichotomyConfig {
        integrator,
        ..DichotomyConfig::default()
    })
}

fn evans_config(c: &CommonArgs) -> Result<EvansConfig, CliError> {
    if !(c.horizon > 0.0) {
        return Err(CliError::Config("--horizon must be positive".into()));
    }
    Ok(EvansConfig {
        dichotomy: dichotomy_config(c)?,
        horizon: c.horizon,
        ..EvansConfig::default()
    })
}

/// Shortest round-trip decimal, in exponent form for tiny magnitudes.
fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Parses the command line, runs it and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    let jobs = match cli.common.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be positive".into())),
        Some(j) => j,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| run_inner(cli, jobs))
}

fn run_inner(cli: &Cli, jobs: usize) -> Result<RunManifest, CliError> {
    let c = &cli.common;
    let mut run = Run {
        out: c.out.clone(),
        outputs: Vec::new(),
        warnings: Vec::new(),
        timings: Vec::new(),
    };
    let (name, config, model, settings) = match &cli.command {
        Command::Spectrum {
            config,
            lambdas,
            lambda_range,
            count,
        } => {
            let m = load(config)?;
            let s = cmd_spectrum(&mut run, &m, c, lambdas, lambda_range.as_deref(), *count)?;
            ("spectrum", config, m, s)
        }
        Command::Evans { config, from, to } => {
            let m = load(config)?;
            let s = cmd_evans(&mut run, &m, c, [*from, *to])?;
            ("evans", config, m, s)
        }
        Command::Parity {
            config,
            from,
            to,
            at,
        } => {
            let m = load(config)?;
            let s = cmd_parity(&mut run, &m, c, [*from, *to], *at)?;
            ("parity", config, m, s)
        }
        Command::Bifurcate { config, from, to } => {
            let m = load(config)?;
            let s = cmd_bifurcate(&mut run, &m, c, [*from, *to])?;
            ("bifurcate", config, m, s)
        }
        Command::Branch {
            config,
            lambda_star,
            stop,
            step,
            bvp_horizon,
        } => {
            let m = load(config)?;
            let s = cmd_branch(&mut run, &m, c, *lambda_star, *stop, *step, *bvp_horizon)?;
            ("branch", config, m, s)
        }
    };
    let manifest_path = run.out.join("manifest.json");
    let mut manifest = RunManifest {
        command: name.to_string(),
        config_path: config.display().to_string(),
        model: model.summary(),
        format: c.format,
        jobs,
        settings,
        outputs: run.outputs.clone(),
        warnings: run.warnings.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timings: run.timings.clone(),
    };
    manifest.outputs.push(manifest_path.display().to_string());
    run.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn cmd_spectrum(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    lambdas: &[f64],
    range: Option<&[f64]>,
    count: usize,
) -> Result<Value, CliError> {
    let mut ls = lambdas.to_vec();
    if let Some(r) = range {
        let (lo, hi) = (r[0], r[1]);
        match count {
            0 => {}
            1 => ls.push(lo),
            n => ls.extend((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)),
        }
    }
    for &l in &ls {
        m.check_lambda(l)?;
    }
    let dc = dichotomy_config(c)?;
    let sets = run.time("spectrum", || {
        ls.par_iter()
            .map(|&l| dichotomy_spectrum(m, l, None, c.resolution, c.horizon, &dc))
            .collect::<Result<Vec<_>, _>>()
    })?;
    if c.format.csv() {
        let rows: Vec<Vec<String>> = sets
            .iter()
            .flat_map(|s| {
                s.intervals.iter().map(move |i| {
                    vec![
                        num(s.lambda),
                        num(i.lo),
                        num(i.hi),
                        i.multiplicity.to_string(),
                    ]
                })
            })
            .collect();
        run.write_csv(
            "spectrum.csv",
            &["lambda", "interval_lo", "interval_hi", "multiplicity"],
            &rows,
        )?;
    }
    if c.format.json() {
        run.write_json("spectrum.json", &sets)?;
    }
    for s in &sets {
        for i in s.intervals.iter().filter(|i| i.merged) {
            run.warn(format!(
                "lambda = {}: intervals near [{}, {}] closer than the resolution were merged",
                s.lambda, i.lo, i.hi
            ));
        }
    }
    Ok(json!({
        "lambdas": ls,
        "horizon": c.horizon,
        "resolution": c.resolution,
        "dichotomy": dc,
    }))
}

fn compute_curve(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    interval: [f64; 2],
) -> Result<(EvansCurve, EvansConfig), CliError> {
    let ec = evans_config(c)?;
    let curve = run.time("evans_curve", || evans_curve(m, interval, c.grid, &ec))?;
    for w in curve.warnings.clone() {
        run.warn(w);
    }
    Ok((curve, ec))
}

fn curve_settings(c: &CommonArgs, interval: [f64; 2], ec: &EvansConfig) -> Value {
    json!({
        "interval": interval,
        "grid": c.grid,
        "evans": ec,
    })
}

const GNUPLOT: &str = r#"set datafile separator ","
set xlabel "lambda"
set ylabel "E(lambda)"
set key off
set grid
set xzeroaxis
plot "evans.csv" using 1:2 skip 1 with linespoints pt 7 ps 0.5
"#;

fn cmd_evans(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    interval: [f64; 2],
) -> Result<Value, CliError> {
    let (curve, ec) = compute_curve(run, m, c, interval)?;
    if c.format.csv() {
        let rows: Vec<Vec<String>> = curve
            .grid
            .iter()
            .zip(&curve.values)
            .map(|(l, e)| {
                vec![
                    num(*l),
                    num(*e),
                    curve.morse_plus.to_string(),
                    curve.morse_minus.to_string(),
                ]
            })
            .collect();
        run.write_csv(
            "evans.csv",
            &["lambda", "evans", "m_plus", "m_minus"],
            &rows,
        )?;
        run.write("evans.gp", GNUPLOT.as_bytes())?;
    }
    if c.format.json() {
        run.write_json(
            "evans.json",
            &json!({
                "lambda": curve.grid,
                "evans": curve.values,
                "m_plus": curve.morse_plus,
                "m_minus": curve.morse_minus,
                "zero_tol": curve.zero_tol,
            }),
        )?;
    }
    Ok(curve_settings(c, interval, &ec))
}

fn cmd_parity(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    interval: [f64; 2],
    at: Option<f64>,
) -> Result<Value, CliError> {
    let (curve, ec) = compute_curve(run, m, c, interval)?;
    let p = parity(&curve)?;
    let index = at.map(|l| parity_index(&curve, l)).transpose()?;
    run.write_json(
        "parity.json",
        &json!({
            "interval": p.interval,
            "parity": p.value,
            "endpoint_evans": p.endpoint_evans,
            "index_at": index.map(|r| json!({"lambda": at, "parity_index": r.value})),
        }),
    )?;
    Ok(curve_settings(c, interval, &ec))
}

fn cmd_bifurcate(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    interval: [f64; 2],
) -> Result<Value, CliError> {
    let (curve, ec) = compute_curve(run, m, c, interval)?;
    let p = parity(&curve)?;
    let critical = run.time("critical_values", || curve.find_critical_values())?;
    for cv in critical.iter().filter(|cv| cv.parity_index.is_none()) {
        run.warn(format!(
            "E vanishes on a neighbourhood of lambda = {}; parity index undefined",
            cv.lambda
        ));
    }
    run.write_json(
        "bifurcations.json",
        &json!({
            "interval": p.interval,
            "parity": p.value,
            "critical_values": critical,
        }),
    )?;
    Ok(curve_settings(c, interval, &ec))
}

#[allow(clippy::too_many_arguments)]
fn cmd_branch(
    run: &mut Run,
    m: &ModelSpec,
    c: &CommonArgs,
    lambda_star: f64,
    stop: f64,
    step: f64,
    bvp_horizon: f64,
) -> Result<Value, CliError> {
    if !(step > 0.0) || !(bvp_horizon > 0.0) {
        return Err(CliError::Config(
            "--step and --bvp-horizon must be positive".into(),
        ));
    }
    m.check_lambda(lambda_star)?;
    m.check_lambda(stop)?;
    let hc = HomoclinicConfig {
        dichotomy: dichotomy_config(c)?,
        projector_horizon: c.horizon,
        ..HomoclinicConfig::default()
    };
    let mut points: Vec<HomoclinicSolution> = Vec::new();
    if stop != lambda_star {
        let dir = (stop - lambda_star).signum();
        let first = step.min((stop - lambda_star).abs());
        let seed = run.time("seed", || {
            seed_from_kernel(m, lambda_star, dir, first, bvp_horizon, &hc)
        })?;
        points.push(seed.clone());
        match run.time("continuation", || trace_branch(m, stop, step, &seed, &hc)) {
            Ok(rest) => points.extend(rest),
            Err(HomoclinicError::ContinuationStall {
                lambda,
                step,
                completed,
            }) => {
                points.extend(completed);
                run.warn(format!(
                    "continuation stalled at lambda = {lambda} (step {step:.3e}); branch truncated"
                ));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if c.format.csv() {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| vec![num(p.lambda), num(p.amplitude), num(p.residual)])
            .collect();
        run.write_csv("branch.csv", &["lambda", "amplitude", "residual"], &rows)?;
    }
    if c.format.json() {
        for (k, p) in points.iter().enumerate() {
            run.write_json(&format!("branch/point_{k:04}.json"), p)?;
        }
    }
    Ok(json!({
        "lambda_star": lambda_star,
        "stop": stop,
        "step": step,
        "bvp_horizon": bvp_horizon,
        "homoclinic": hc,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes: Vec<i32> = [
            CliError::Config(String::new()),
            CliError::Numerical(String::new()),
            CliError::MorseMismatch(String::new()),
            CliError::EndpointCritical(String::new()),
            CliError::Seeding(String::new()),
        ]
        .iter()
        .map(CliError::exit_code)
        .collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "evans-parity",
            "evans",
            "m.toml",
            "--from",
            "-0.5",
            "--to",
            "0.5",
            "--grid",
            "21",
            "--format",
            "csv",
        ])
        .unwrap();
        assert_eq!(cli.common.grid, 21);
        assert_eq!(cli.common.format, Format::Csv);
        assert!(matches!(cli.command, Command::Evans { from, .. } if from == -0.5));
    }
}
