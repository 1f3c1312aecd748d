//! Command-line front end: argument parsing, dispatch and report emission.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, SystemConfig};
use crate::conformal::conformal_measure;
use crate::cylinders::Refinement;
use crate::error::{Error, Result};
use crate::exec::set_threads;
use crate::gaps::{
    cascade_consistency, fit_log_corrected, fit_power_law, gap_cascade, local_exponent, tail_series, Side,
};
use crate::maps::{make_system, MarkovSystem};
use crate::orbits::{
    enumerate_periodic, h_membership, hyperbolic_times, instant_constants, orbit_analyze, periodic_up_to,
    uniform_hyperbolicity_report, PointClass,
};
use crate::pressure::{bowen_root, Method, PressureModel};
use crate::symbolic::{cut_cylinder, repair_complete_invariance, transitive_components, SubshiftSpec, Word};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "THERMOSET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "thermoset", version, about = "Pressure, dimension and gap analysis for Markov interval IFS")]
pub struct Cli {
    /// Config file, or the name of a built-in system.
    #[arg(long, short = 's', global = true, default_value = "cantor-thirds")]
    pub system: String,

    #[arg(long, short = 'f', global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the system and print its summary.
    Validate,
    /// Cylinders of a given depth.
    Refine {
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Pressure estimates over a grid of exponents.
    Pressure {
        /// Comma-separated exponents.
        #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
        t_grid: String,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value = "operator")]
        method: Method,
    },
    /// Root of the Bowen equation.
    Dimension {
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value = "operator")]
        method: Method,
    },
    /// Approximate t-conformal measure on depth-n cylinders.
    Conformal {
        /// Exponent; defaults to the Bowen root at the same depth.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Periodic points and their multipliers.
    Periodic {
        #[arg(long)]
        max_period: Option<usize>,
    },
    /// Orbit statistics and hyperbolic times.
    Hyperbolic(HyperbolicArgs),
    /// Gap cascade at a parabolic fixed point.
    Gaps(GapsArgs),
    /// Forbidden-word operations on the configured subshift.
    Subshift(SubshiftArgs),
}

#[derive(Debug, Args)]
pub struct HyperbolicArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated exponents.
    #[arg(long, default_value = "0.01,0.1,0.5,1")]
    pub alpha: String,
}

#[derive(Debug, Args)]
pub struct GapsArgs {
    #[arg(long, default_value = "+", allow_hyphen_values = true)]
    pub side: Side,
    #[arg(long)]
    pub count: Option<usize>,
    /// Location of the parabolic fixed point when there are several.
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Comma-separated exponents for the tail-series verdicts.
    #[arg(long, default_value = "1")]
    pub t: String,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct SubshiftArgs {
    #[arg(long)]
    pub repair: bool,
    #[arg(long)]
    pub components: bool,
    /// Forbid WORD (e.g. `1.2.2`) and repair.
    #[arg(long, value_name = "WORD")]
    pub cut: Option<String>,
}

/// Rows for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&'static str]) -> Self {
        Table { headers: headers.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// The self-describing result of one command.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub system: String,
    pub fingerprint: String,
    pub parameters: Value,
    pub defaults: Value,
    pub results: Value,
    pub warnings: Vec<String>,
    pub version: String,
    #[serde(skip)]
    pub table: Table,
}

struct Output {
    parameters: Value,
    results: Value,
    warnings: Vec<String>,
    table: Table,
}

fn list(src: &str) -> Result<Vec<f64>> {
    src.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number `{s}`"))))
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::InvalidArgument("empty list".into()))
            } else {
                Ok(v)
            }
        })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate => "validate",
        Command::Refine { .. } => "refine",
        Command::Pressure { .. } => "pressure",
        Command::Dimension { .. } => "dimension",
        Command::Conformal { .. } => "conformal",
        Command::Periodic { .. } => "periodic",
        Command::Hyperbolic(_) => "hyperbolic",
        Command::Gaps(_) => "gaps",
        Command::Subshift(_) => "subshift",
    }
}

/// Run one command against a loaded configuration.
pub fn run(command: &Command, cfg: &SystemConfig) -> Result<Report> {
    let out = match command {
        Command::Subshift(args) => subshift(cfg, args)?,
        other => {
            let system = make_system(cfg)?;
            let mut out = dispatch(other, &system)?;
            let mut warnings = system.warnings().to_vec();
            warnings.append(&mut out.warnings);
            out.warnings = warnings;
            out
        }
    };
    Ok(Report {
        command: command_name(command).into(),
        system: cfg.name.clone().unwrap_or_default(),
        fingerprint: cfg.fingerprint(),
        parameters: out.parameters,
        defaults: to_value(&cfg.defaults),
        results: out.results,
        warnings: out.warnings,
        version: env!("CARGO_PKG_VERSION").into(),
        table: out.table,
    })
}

fn dispatch(command: &Command, s: &MarkovSystem) -> Result<Output> {
    let d = s.defaults().clone();
    match command {
        Command::Validate => validate(s),
        Command::Refine { depth } => refine(s, depth.unwrap_or(d.depth)),
        Command::Pressure { t_grid, depth, method } => pressure(s, &list(t_grid)?, depth.unwrap_or(d.depth), *method),
        Command::Dimension { depth, tol, method } => {
            dimension(s, depth.unwrap_or(d.depth), tol.unwrap_or(d.bowen_tol), *method)
        }
        Command::Conformal { t, depth } => conformal(s, *t, depth.unwrap_or(d.depth)),
        Command::Periodic { max_period } => periodic(s, max_period.unwrap_or(d.max_period)),
        Command::Hyperbolic(a) => hyperbolic(s, a.x, a.steps.unwrap_or(d.orbit_steps), &list(&a.alpha)?),
        Command::Gaps(a) => gaps(s, a, a.count.unwrap_or(d.cascade_count)),
        Command::Subshift(_) => unreachable!("handled before the system is built"),
    }
}

fn validate(s: &MarkovSystem) -> Result<Output> {
    let summary = s.summary();
    let mut table = Table::new(&[
        "branch", "kind", "domain_lo", "domain_hi", "range_lo", "range_hi", "interval_lo", "interval_hi",
        "orientation",
    ]);
    for b in &summary.branches {
        table.push(vec![
            b.index.to_string(),
            b.kind.into(),
            num(b.domain.lo),
            num(b.domain.hi),
            num(b.range.lo),
            num(b.range.hi),
            num(b.interval.lo),
            num(b.interval.hi),
            b.orientation.to_string(),
        ]);
    }
    Ok(Output {
        parameters: json!({}),
        results: json!({ "valid": true, "summary": to_value(&summary) }),
        warnings: Vec::new(),
        table,
    })
}

fn refine(s: &MarkovSystem, depth: usize) -> Result<Output> {
    let r = Refinement::build(s, depth)?;
    let level = r.level(depth);
    let mut table = Table::new(&["word", "left", "right", "length", "deriv_mid"]);
    for c in level {
        table.push(vec![c.word.to_string(), num(c.left), num(c.right), num(c.length()), num(c.deriv_mid())]);
    }
    let cylinders: Vec<Value> = level
        .iter()
        .map(|c| {
            json!({
                "word": c.word, "left": c.left, "right": c.right,
                "length": c.length(), "deriv_mid": c.deriv_mid(),
            })
        })
        .collect();
    Ok(Output {
        parameters: json!({ "depth": depth }),
        results: json!({
            "count": level.len(),
            "cylinders": cylinders,
            "max_diameters": r.max_diameters(),
            "distortion": to_value(&r.distortion(s.theta_f(), depth)),
        }),
        warnings: Vec::new(),
        table,
    })
}

fn pressure(s: &MarkovSystem, ts: &[f64], depth: usize, method: Method) -> Result<Output> {
    let model = PressureModel::new(s, depth, method)?;
    let mut warnings = Vec::new();
    let mut table = Table::new(&["t", "lower", "upper", "method", "depth"]);
    let mut estimates = Vec::new();
    for &t in ts {
        let e = model.estimate(t)?;
        if let Some(w) = &e.dominated_by {
            warnings.push(format!("t = {t}: periodic sum dominated by the orbit of {w}"));
        }
        table.push(vec![num(t), num(e.lower), num(e.upper), method.to_string(), depth.to_string()]);
        estimates.push(e);
    }
    Ok(Output {
        parameters: json!({ "t_grid": ts, "depth": depth, "method": method }),
        results: json!({ "estimates": to_value(&estimates) }),
        warnings,
        table,
    })
}

fn dimension(s: &MarkovSystem, depth: usize, tol: f64, method: Method) -> Result<Output> {
    let r = bowen_root(s, depth, tol, method)?;
    let mut table = Table::new(&["t0", "t_lo", "t_hi", "method", "depth"]);
    table.push(vec![num(r.t0), num(r.bracket[0]), num(r.bracket[1]), method.to_string(), depth.to_string()]);
    Ok(Output {
        parameters: json!({ "depth": depth, "tol": tol, "method": method }),
        results: to_value(&r),
        warnings: Vec::new(),
        table,
    })
}

fn conformal(s: &MarkovSystem, t: Option<f64>, depth: usize) -> Result<Output> {
    let d = s.defaults();
    let t = match t {
        Some(t) => t,
        None => bowen_root(s, depth, d.bowen_tol, Method::Operator)?.t0,
    };
    let m = conformal_measure(s, t, depth, d.power_iters, d.power_tol)?;
    let mut table = Table::new(&["word", "left", "right", "mass"]);
    for ((w, c), mass) in m.words.iter().zip(&m.cells).zip(&m.weights) {
        table.push(vec![w.to_string(), num(c.lo), num(c.hi), num(*mass)]);
    }
    let mut warnings = Vec::new();
    if (m.eigenvalue - 1.0).abs() > 1e-6 {
        warnings.push(format!("eigenvalue {} is not 1: t is not the Bowen root at this depth", m.eigenvalue));
    }
    Ok(Output {
        parameters: json!({ "t": t, "depth": depth }),
        results: m.to_json(),
        warnings,
        table,
    })
}

fn periodic(s: &MarkovSystem, max_period: usize) -> Result<Output> {
    let points = periodic_up_to(s, max_period)?;
    let report = uniform_hyperbolicity_report(s, max_period)?;
    let mut table = Table::new(&["word", "period", "x", "multiplier", "class"]);
    for p in &points {
        table.push(vec![p.word.to_string(), p.period.to_string(), num(p.x), num(p.multiplier), format!("{:?}", p.class)]);
    }
    Ok(Output {
        parameters: json!({ "max_period": max_period }),
        results: json!({
            "points": to_value(&points),
            "min_rate": report.min_rate,
            "verdict": report.verdict,
        }),
        warnings: Vec::new(),
        table,
    })
}

fn hyperbolic(s: &MarkovSystem, x: f64, steps: usize, alphas: &[f64]) -> Result<Output> {
    let a = orbit_analyze(s, x, steps)?;
    let mut warnings = Vec::new();
    if a.escaped {
        warnings.push(format!("orbit left the branch intervals after {} steps", a.len()));
    }
    let times: Vec<Value> = alphas
        .iter()
        .map(|&alpha| {
            json!({
                "alpha": alpha,
                "times": hyperbolic_times(&a, alpha),
                "constants": to_value(&instant_constants(s, alpha)),
            })
        })
        .collect();
    let membership = h_membership(s, x, steps, alphas)?;
    let mut table = Table::new(&["k", "x_k", "branch", "logderiv_partial"]);
    for k in 0..a.positions.len() {
        let branch = a.branches.get(k).map(|b| b.to_string()).unwrap_or_default();
        table.push(vec![k.to_string(), num(a.positions[k]), branch, num(a.partial_sums[k])]);
    }
    Ok(Output {
        parameters: json!({ "x": x, "steps": steps, "alpha": alphas }),
        results: json!({
            "orbit": to_value(&a),
            "hyperbolic_times": times,
            "membership": to_value(&membership),
        }),
        warnings,
        table,
    })
}

fn gaps(s: &MarkovSystem, args: &GapsArgs, count: usize) -> Result<Output> {
    let ts = list(&args.t)?;
    let parabolic: Vec<_> =
        enumerate_periodic(s, 1)?.into_iter().filter(|p| p.class == PointClass::Parabolic).collect();
    let point = match args.x {
        Some(x) => parabolic.iter().min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs())),
        None => parabolic.first(),
    }
    .ok_or_else(|| Error::InvalidArgument("system has no parabolic fixed point".into()))?
    .clone();
    let cascade = gap_cascade(s, &point, args.side, count)?;
    let power = fit_power_law(&cascade, None);
    let log_fit = fit_log_corrected(&cascade, None);
    let mut warnings = Vec::new();
    if power.flagged {
        warnings.push(format!("power-law fit drifts by {:.4} across its range", power.drift));
    }
    let tails: Vec<_> = ts.iter().map(|&t| tail_series(&cascade, t)).collect();
    let mut table = Table::new(&["k", "x_k", "D_k"]);
    for (k, d) in cascade.lengths.iter().enumerate() {
        table.push(vec![k.to_string(), num(cascade.xs[k]), num(*d)]);
    }
    Ok(Output {
        parameters: json!({ "side": args.side, "count": count, "x": point.x, "t": ts }),
        results: json!({
            "point": to_value(&point),
            "gaps": cascade.len(),
            "power_law": to_value(&power),
            "log_corrected": to_value(&log_fit),
            "tail_series": to_value(&tails),
            "local_exponent": local_exponent(&cascade),
            "consistency": cascade_consistency(s, &point, &cascade)?,
        }),
        warnings,
        table,
    })
}

fn spec_value(spec: &SubshiftSpec) -> Result<Value> {
    let graph = spec.follower_graph()?;
    Ok(json!({
        "alphabet": spec.alphabet_size(),
        "forbidden": spec.forbidden(),
        "l_q": spec.max_forbidden_len(),
        "nodes": graph.nodes().len(),
        "edges": graph.edge_count(),
        "transitive": graph.is_transitive(),
    }))
}

fn subshift(cfg: &SystemConfig, args: &SubshiftArgs) -> Result<Output> {
    let forbidden = cfg.forbidden.iter().cloned().map(Word::new).collect();
    let spec = SubshiftSpec::new(cfg.branches.len(), forbidden)?;
    let (op, specs) = if args.repair {
        ("repair", vec![repair_complete_invariance(&spec)?])
    } else if args.components {
        ("components", transitive_components(&repair_complete_invariance(&spec)?.follower_graph()?))
    } else if let Some(w) = &args.cut {
        ("cut", vec![cut_cylinder(&spec, &Word::parse(w)?)?])
    } else {
        ("show", vec![spec.clone()])
    };
    let mut table = Table::new(&["component", "forbidden_word"]);
    for (i, sp) in specs.iter().enumerate() {
        for w in sp.forbidden() {
            table.push(vec![(i + 1).to_string(), w.to_string()]);
        }
    }
    let results: Vec<Value> = specs.iter().map(spec_value).collect::<Result<_>>()?;
    Ok(Output {
        parameters: json!({ "operation": op, "cut": args.cut }),
        results: json!({ "input": spec_value(&spec)?, "output": results }),
        warnings: Vec::new(),
        table,
    })
}

/// Serialize a report. JSON objects come out with sorted keys.
pub fn emit(report: &Report, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(&to_value(report))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
            w.write_record(&report.table.headers).map_err(csv_err)?;
            for row in &report.table.rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
        }
    }
}

/// Process exit code for an error: 2 for usage and configuration problems,
/// 1 for failed computations.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Validation(_)
        | Error::Parse { .. }
        | Error::InvalidWord(_)
        | Error::InvalidArgument(_)
        | Error::EmptySubshift => 2,
        _ => 1,
    }
}

fn threads(flag: Option<usize>) -> std::result::Result<usize, String> {
    match flag {
        Some(n) => Ok(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a number, got `{v}`")),
            Err(_) => Ok(0),
        },
    }
}

/// Parse `args`, run the command, and write the report to `out` and
/// warnings to `err`. Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match threads(cli.threads) {
        Ok(n) => {
            let n = if n == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { n };
            set_threads(n);
        }
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return 2;
        }
    }
    let result = load_config(&cli.system)
        .and_then(|cfg| run(&cli.command, &cfg))
        .and_then(|report| emit(&report, cli.format).map(|bytes| (report, bytes)));
    match result {
        Ok((report, bytes)) => {
            for w in &report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            if out.write_all(&bytes).is_err() {
                return 1;
            }
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
