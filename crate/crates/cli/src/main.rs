//! Command-line front end for the counter race laboratory.
//!
//! Records go to standard output (or `--out`) as JSON lines, CSV or TSV;
//! diagnostics go to standard error. Exit codes: 0 success, 2 bad parameters,
//! 3 numerical non-convergence, 4 invariant violation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use counter_race::bounds::{
    closed_form_table, asymptotic_upper, finite_upper_bound, finite_upper_bound_exhaustive, lower_bound_optimize,
};
use counter_race::config_algebra::{all_configurations, expected_increments};
use counter_race::dynamics::{default_burn_in, drift_check, pool, simulate_replicas, simulate_speed, Lyapunov};
use counter_race::exact_small::{n4_bounds, solve_n3, solve_n4};
use counter_race::lp::{build_lp, fit_parabola, objective_of, solve_lp, LpStatus};
use counter_race::meanfield::{integrate_with, tail_diagnostics, wave_speed, IntegrateOptions, Model};
use counter_race::scalar::rational_string;
use counter_race::{Error, Rational};
use serde::Serialize;
use serde_json::{json, Map, Value};

const SEED_ENV: &str = "COUNTER_RACE_SEED";

#[derive(Parser)]
#[command(name = "counter-race", version, about = "Speed of the N-counter race process")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    format: Format,

    /// Write records here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of V(N).
    Simulate(SimulateArgs),
    /// Finite-N and asymptotic bounds from the quadratic test function.
    Bounds(BoundsArgs),
    /// LP-optimal test function and bound.
    Lp(LpArgs),
    /// Exact stationary analysis for N = 3 and N = 4.
    Exact(ExactArgs),
    /// Integrate the mean-field hierarchy and measure the front.
    Meanfield(MeanfieldArgs),
    /// Sampled Foster-Lyapunov drift check beyond the thresholds.
    Drift(DriftArgs),
    /// Expected gap increments and V_alpha for every configuration of N.
    Increments(IncrementsArgs),
    /// Theoretical bound, LP bound and simulated speed for N = 4..16.
    Compare(CompareArgs),
}

/// Accepts plain integers and integral scientific notation such as `1e7`.
fn count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = count, default_value = "10000000")]
    steps: u64,
    /// Defaults to 100 N C(N, 2).
    #[arg(long, value_parser = count)]
    burn_in: Option<u64>,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, conflicts_with = "asymptotic", required_unless_present = "asymptotic")]
    n: Option<usize>,
    #[arg(long)]
    asymptotic: bool,
    /// Also emit the nine closed-form rows.
    #[arg(long)]
    closed_forms: bool,
    /// Certify over all 2^(N-2) configurations instead of the candidate list.
    #[arg(long)]
    exhaustive: bool,
    /// Grid resolution of the lower-bound search.
    #[arg(long, default_value_t = 20_000)]
    grid: usize,
}

#[derive(Args)]
struct LpArgs {
    #[arg(long, required_unless_present = "from")]
    n: Option<usize>,
    /// Solve every size in `from..=to` instead.
    #[arg(long, requires = "to", conflicts_with = "n")]
    from: Option<usize>,
    #[arg(long)]
    to: Option<usize>,
    /// Include the least-squares parabola through h.
    #[arg(long)]
    fit: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    n: usize,
    /// Truncation radius for N = 4.
    #[arg(long, default_value_t = 200)]
    l: usize,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    CounterRace,
    PowerOfTwo,
}

#[derive(Args)]
struct MeanfieldArgs {
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 400.0)]
    t: f64,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::CounterRace)]
    model: ModelArg,
    /// First level of the speed window; the window ends at K.
    #[arg(long)]
    window_start: Option<usize>,
    /// Emit `t phi_k(t)` rows for these levels instead of the front summary.
    #[arg(long, value_delimiter = ',')]
    curves: Vec<usize>,
    /// Emit the sampled front profile `x H(x)` instead of the summary.
    #[arg(long)]
    profile: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LyapunovArg {
    Quadratic,
    Exponential,
    Both,
}

#[derive(Args)]
struct DriftArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LyapunovArg::Both)]
    lyapunov: LyapunovArg,
    /// Rate of the exponential function.
    #[arg(long, default_value_t = 0.5)]
    r: f64,
}

#[derive(Args)]
struct IncrementsArgs {
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_parser = count, default_value = "10000000")]
    steps: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Contract(_) | Error::UnsupportedSize { .. } => 2,
            Error::NoConvergence { .. } | Error::StepSize { .. } | Error::InsufficientHorizon(_) => 3,
            Error::Invariant(_) => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: format!("output: {e}"),
        }
    }
}

fn param(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn record<T: Serialize>(kind: &str, value: &T) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("record".into(), Value::from(kind));
    match serde_json::to_value(value).expect("records serialize") {
        Value::Object(o) => m.extend(o),
        other => {
            m.insert("value".into(), other);
        }
    }
    m
}

fn rational(x: &Rational) -> Value {
    Value::from(rational_string(x))
}

struct Output {
    format: Format,
    sink: Box<dyn Write>,
    /// Header of the current CSV/TSV block.
    header: Option<Vec<String>>,
}

impl Output {
    fn emit(&mut self, rec: Map<String, Value>) -> io::Result<()> {
        match self.format {
            Format::Json => writeln!(self.sink, "{}", Value::Object(rec)),
            Format::Csv | Format::Tsv => {
                // TSV is for plotting tools and is written unquoted
                let (sep, quoting) = match self.format {
                    Format::Csv => (b',', csv::QuoteStyle::Necessary),
                    _ => (b'\t', csv::QuoteStyle::Never),
                };
                let keys: Vec<String> = rec.keys().cloned().collect();
                let mut w = csv::WriterBuilder::new()
                    .delimiter(sep)
                    .quote_style(quoting)
                    .from_writer(Vec::new());
                if self.header.as_ref() != Some(&keys) {
                    w.write_record(&keys)?;
                    self.header = Some(keys);
                }
                w.write_record(rec.values().map(|v| match v {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                }))?;
                let bytes = w.into_inner().map_err(|e| e.into_error())?;
                self.sink.write_all(&bytes)
            }
        }
    }

    /// Two-column numeric rows for plotting, no header in TSV.
    fn xy(&mut self, kind: &str, level: Option<usize>, rows: &[(f64, f64)]) -> io::Result<()> {
        for &(x, y) in rows {
            let mut m = Map::new();
            m.insert("record".into(), Value::from(kind));
            if let Some(k) = level {
                m.insert("k".into(), Value::from(k));
            }
            m.insert("x".into(), json!(x));
            m.insert("y".into(), json!(y));
            self.emit(m)?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut out = Output {
        format: cli.format,
        sink,
        header: None,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&mut out, a)?,
        Command::Bounds(a) => bounds(&mut out, a)?,
        Command::Lp(a) => lp(&mut out, a)?,
        Command::Exact(a) => exact(&mut out, a)?,
        Command::Meanfield(a) => meanfield(&mut out, a)?,
        Command::Drift(a) => drift(&mut out, a)?,
        Command::Increments(a) => increments(&mut out, a)?,
        Command::Compare(a) => compare(&mut out, a)?,
    }
    out.sink.flush()?;
    Ok(())
}

fn simulate(out: &mut Output, a: SimulateArgs) -> Result<(), Failure> {
    if a.replicas == 0 {
        return Err(param("--replicas must be at least 1"));
    }
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.n));
    let runs = simulate_replicas(a.n, a.steps, burn_in, a.seed, a.replicas)?;
    for (i, r) in runs.iter().enumerate() {
        let mut rec = record("replica", r);
        rec.insert("N".into(), Value::from(a.n));
        rec.insert("replica".into(), Value::from(i));
        out.emit(rec)?;
    }
    if runs.len() > 1 {
        let p = pool(&runs).expect("non-empty");
        let mut rec = record("pooled", &p);
        rec.insert("N".into(), Value::from(a.n));
        rec.insert("replica".into(), Value::Null);
        out.emit(rec)?;
    }
    Ok(())
}

fn bounds(out: &mut Output, a: BoundsArgs) -> Result<(), Failure> {
    if a.asymptotic {
        out.emit(record("bound", &asymptotic_upper()?))?;
        let lower = lower_bound_optimize(a.grid)?;
        out.emit(record("bound", &lower.report))?;
        let mut rec = record("lower_search", &lower);
        rec.remove("report");
        out.emit(rec)?;
        return Ok(());
    }
    let n = a.n.expect("clap enforces --n");
    if n == 4 {
        eprintln!("N=4 is outside the test-function bounds; reporting the exact-small bounds (see `exact --n 4`)");
        let (lo, hi) = n4_bounds()?;
        for (dir, v) in [("lower", lo), ("upper", hi)] {
            out.emit(
                [
                    ("record".to_string(), Value::from("bound")),
                    ("N".to_string(), Value::from(4)),
                    ("direction".to_string(), Value::from(dir)),
                    ("value".to_string(), json!(counter_race::Scalar::to_f64_lossy(&v))),
                    ("exact".to_string(), rational(&v)),
                    ("method".to_string(), Value::from("exact-small")),
                ]
                .into_iter()
                .collect(),
            )?;
        }
        return Ok(());
    }
    if n < 4 {
        return Err(param(format!("bounds need N >= 4; use `exact --n {n}` for small N")));
    }
    let report = if a.exhaustive { finite_upper_bound_exhaustive(n)? } else { finite_upper_bound(n)? };
    out.emit(record("bound", &report))?;
    if a.closed_forms {
        for e in closed_form_table(n)? {
            out.emit(record("closed_form", &e))?;
        }
    }
    Ok(())
}

fn lp(out: &mut Output, a: LpArgs) -> Result<(), Failure> {
    let sizes: Vec<usize> = match (a.n, a.from, a.to) {
        (Some(n), _, _) => vec![n],
        (None, Some(f), Some(t)) if f <= t => (f..=t).collect(),
        _ => return Err(param("give --n or --from <= --to")),
    };
    for n in sizes {
        if n < 4 {
            return Err(param(format!("the LP needs N >= 4, got {n}")));
        }
        let p = build_lp(n)?;
        let s = solve_lp(&p)?;
        if s.status != LpStatus::Optimal {
            return Err(Failure {
                code: 4,
                message: format!("N={n}: LP {:?}", s.status),
            });
        }
        if s.violations > 0 {
            return Err(Failure {
                code: 4,
                message: format!("N={n}: {} constraints violated at the returned vertex", s.violations),
            });
        }
        let f = objective_of(&p, &counter_race::bounds::upper_test_function(n)?)?;
        let mut rec = Map::new();
        rec.insert("record".into(), Value::from("lp"));
        rec.insert("N".into(), Value::from(n));
        rec.insert("bound".into(), json!(s.bound));
        rec.insert("exact".into(), rational(s.exact_bound.as_ref().expect("optimal")));
        rec.insert("quadratic_f_bound".into(), rational(&f));
        rec.insert("h".into(), json!(s.h_values));
        rec.insert("active".into(), Value::from(s.active_set.len()));
        rec.insert("method".into(), Value::from(s.method));
        if a.fit {
            let fit = fit_parabola(&s.h_values)?;
            rec.insert("fit".into(), serde_json::to_value(&fit).expect("serializable"));
        }
        out.emit(rec)?;
    }
    Ok(())
}

fn exact(out: &mut Output, a: ExactArgs) -> Result<(), Failure> {
    match a.n {
        2 => out.emit(
            [
                ("record".to_string(), Value::from("exact")),
                ("N".to_string(), Value::from(2)),
                ("speed".to_string(), Value::from("2")),
            ]
            .into_iter()
            .collect(),
        )?,
        3 => {
            let mut rec = record("exact", &solve_n3()?);
            rec.insert("N".into(), Value::from(3));
            out.emit(rec)?;
        }
        4 => {
            let s = solve_n4(a.l, a.tol)?;
            let (lo, hi) = n4_bounds()?;
            let mut rec = record("exact", &s);
            rec.insert("N".into(), Value::from(4));
            rec.insert("lower".into(), rational(&lo));
            rec.insert("upper".into(), rational(&hi));
            out.emit(rec)?;
        }
        n => return Err(param(format!("exact analysis covers N = 2, 3, 4; got {n}"))),
    }
    Ok(())
}

fn meanfield(out: &mut Output, a: MeanfieldArgs) -> Result<(), Failure> {
    let model = match a.model {
        ModelArg::CounterRace => Model::CounterRace,
        ModelArg::PowerOfTwo => Model::PowerOfTwo,
    };
    let state = integrate_with(
        a.k,
        a.t,
        a.dt,
        IntegrateOptions {
            model,
            ..Default::default()
        },
    )?;
    if !a.curves.is_empty() {
        for &k in &a.curves {
            if k > a.k {
                return Err(param(format!("level {k} above K={}", a.k)));
            }
            let rows: Vec<(f64, f64)> = state.times.iter().zip(&state.phi).map(|(&t, row)| (t, row[k])).collect();
            out.xy("curve", Some(k), &rows)?;
        }
        return Ok(());
    }
    let start = a.window_start.unwrap_or(a.k / 2);
    let w = wave_speed(&state, (start, a.k))?;
    if a.profile {
        return Ok(out.xy("profile", Some(w.profile_level), &w.profile)?);
    }
    let tails = tail_diagnostics(&w);
    let mut rec = Map::new();
    rec.insert("record".into(), Value::from("front"));
    rec.insert("K".into(), Value::from(a.k));
    rec.insert("T".into(), json!(state.horizon));
    rec.insert("dt".into(), json!(a.dt));
    rec.insert("model".into(), serde_json::to_value(model).expect("serializable"));
    rec.insert("speed_psi".into(), json!(w.speed_psi));
    rec.insert("speed_phi".into(), json!(w.speed_phi));
    rec.insert("speed_psi_last".into(), json!(w.speed_psi_last));
    rec.insert("spacing_drift".into(), json!(w.spacing_drift));
    rec.insert("tails".into(), serde_json::to_value(&tails).expect("serializable"));
    out.emit(rec)?;
    Ok(())
}

fn drift(out: &mut Output, a: DriftArgs) -> Result<(), Failure> {
    let kinds = match a.lyapunov {
        LyapunovArg::Quadratic => vec![Lyapunov::Quadratic],
        LyapunovArg::Exponential => vec![Lyapunov::Exponential { r: a.r }],
        LyapunovArg::Both => vec![Lyapunov::Quadratic, Lyapunov::Exponential { r: a.r }],
    };
    let mut failed = Vec::new();
    for kind in kinds {
        let c = drift_check(a.n, kind, a.samples, a.seed)?;
        if c.failures > 0 {
            failed.push(format!("{:?}: {} of {} states", c.lyapunov, c.failures, c.samples));
        }
        out.emit(record("drift", &c))?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        out.sink.flush()?;
        Err(Failure {
            code: 4,
            message: format!("drift above -1 beyond the threshold ({})", failed.join("; ")),
        })
    }
}

fn increments(out: &mut Output, a: IncrementsArgs) -> Result<(), Failure> {
    if !(3..=20).contains(&a.n) {
        return Err(param(format!("increments covers 3 <= N <= 20, got {}", a.n)));
    }
    for c in all_configurations(a.n) {
        let mut rec = Map::new();
        rec.insert("record".into(), Value::from("increments"));
        rec.insert(
            "alpha".into(),
            Value::from(c.alpha().iter().map(usize::to_string).collect::<Vec<_>>().join("-")),
        );
        rec.insert("v_alpha".into(), rational(&c.v_alpha::<Rational>()));
        for (k, e) in expected_increments::<Rational>(&c).iter().enumerate() {
            rec.insert(format!("dx{}", k + 1), rational(e));
        }
        out.emit(rec)?;
    }
    Ok(())
}

fn compare(out: &mut Output, a: CompareArgs) -> Result<(), Failure> {
    for n in 4..=16usize {
        let p = build_lp(n)?;
        // the quadratic test function's certificate; for N >= 5 this is the
        // candidate-list bound
        let theoretical = objective_of(&p, &counter_race::bounds::upper_test_function(n)?)?;
        let numerical = solve_lp(&p)?;
        let sim = simulate_speed(n, a.steps, default_burn_in(n), a.seed.wrapping_add(n as u64))?;
        let mut rec = Map::new();
        rec.insert("record".into(), Value::from("compare"));
        rec.insert("N".into(), Value::from(n));
        rec.insert("theoretical".into(), json!(counter_race::Scalar::to_f64_lossy(&theoretical)));
        rec.insert("theoretical_exact".into(), rational(&theoretical));
        rec.insert("numerical".into(), json!(numerical.bound));
        rec.insert("simulated".into(), json!(sim.mean));
        rec.insert("simulated_stderr".into(), json!(sim.stderr));
        out.emit(rec)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
