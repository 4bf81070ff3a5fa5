//! Command-line front end.
//!
//! A `--config` file (JSON or TOML) holds the same keys as the long flags;
//! its values are spliced in ahead of the command-line flags, so flags given
//! explicitly win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::breaking::{
    alpha_g, build_breaking_graph, jn_log_slope, parse_p_values, threshold_check,
    verify_spectral_representation, LinearProcessSpec,
};
use crate::covariance::{summability_check, CovarianceModel, World};
use crate::diagram::{basis_for, oracle_cumulant, world_for, CumulantRequest, Engine};
use crate::error::{FcltError, Result};
use crate::numeric::Budget;
use crate::orthopoly::{expand, Basis, FunctionalSeries};
use crate::partitions::{
    edge_matrix, enumerate_classical_diagrams, enumerate_free_diagrams, enumerate_pair_partitions,
    is_noncrossing, Partition, RowTable,
};
use crate::simulate::{mc_distribution, rmt_clt_check, write_histogram_csv, McReport, SpectralReport};

const EXIT_CODES: &str = "Exit codes:
  0  success
  2  usage or contract error (bad flags, malformed input, world/basis mismatch)
  3  size cap or evaluation budget exceeded
  4  hypothesis violation (σ² = 0, non-summable covariance, degenerate functional)
  5  numeric failure or invalid covariance model

Errors are also written to stderr as one JSON object.
The FREECLT_BUDGET environment variable overrides the default evaluation budget.";

/// Tolerance of the oracle cross-checks run by `cumulant --oracle` and `selftest`.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "freeclt", version, about = "Diagram-formula cumulants and CLT checks", after_help = EXIT_CODES)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: all cores); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON or TOML file with flag values; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count or list pairings and diagram classes of a row table.
    Partitions(PartitionsArgs),
    /// One joint cumulant through the diagram formula.
    Cumulant(CumulantArgs),
    /// Normalized cumulants κ_R(N^{-1/2} S_N) over a list of N.
    CltScan(ScanArgs),
    /// Monte Carlo distribution of N^{-1/2} S_N for a Hermite series.
    Mc(McArgs),
    /// Random-matrix spectrum of N^{-1/2} S_N for a Chebyshev series.
    Rmt(RmtArgs),
    /// Optimal breaking, threshold conditions and spectral cumulants.
    Breaking(BreakingArgs),
    /// Diagram formulas against the Wick/Möbius oracle on a small grid.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiagramClass {
    Pairings,
    Noncrossing,
    Classical,
    Free,
    FreeConnected,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    /// H1..H3, U1..U3, expand:<x2|x3m2x|clip>, or coeffs:<c0,c1,...>.
    #[arg(long)]
    series: String,
    /// Basis for expand:/coeffs: series (default: from --world).
    #[arg(long)]
    basis: Option<BasisArg>,
    /// Truncation degree for expand: series.
    #[arg(long, default_value_t = 8)]
    max_deg: usize,
    /// Covariance model: geometric:<a>, power:<beta>, tabulated:<r0,r1,...>, white.
    #[arg(long)]
    model: String,
    /// classical or free (default: from the series basis).
    #[arg(long)]
    world: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Hermite,
    Chebyshev,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PartitionsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    rows: Vec<usize>,
    #[arg(long, value_enum, default_value = "classical")]
    class: DiagramClass,
    /// Include the partitions themselves, not just the count.
    #[arg(long)]
    list: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct CumulantArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    degrees: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    times: Vec<i64>,
    #[arg(long, default_value = "classical")]
    world: String,
    #[arg(long)]
    model: String,
    /// Cross-check against the Wick/Möbius oracle.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long = "Rmax", default_value_t = 4)]
    r_max: usize,
    /// Evaluation budget for each J_N (default: FREECLT_BUDGET or 1e9).
    #[arg(long)]
    budget: Option<u64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct RmtArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 1024)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write an eigenvalue histogram (bin_center, density) CSV here.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["check53", "alpha", "spectral", "slope"])))]
struct BreakingArgs {
    /// Check the threshold condition for --m against --p.
    #[arg(long)]
    check53: bool,
    /// Exhaustive α_G of the graph of --rows/--partition with costs from --p.
    #[arg(long)]
    alpha: bool,
    /// Spectral representation check for --c, --d, --k, --j.
    #[arg(long)]
    spectral: bool,
    /// Log-slope of J_N for the diagram --rows/--partition over --N.
    #[arg(long)]
    slope: bool,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated k:p pairs; p may be "inf".
    #[arg(long)]
    p: Option<String>,
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    /// Partition as JSON, e.g. [[1,3],[2,4]].
    #[arg(long)]
    partition: Option<String>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    c: Vec<f64>,
    /// Base cumulants as k:d pairs.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    j: Vec<i64>,
    #[arg(long, default_value_t = 256)]
    grid: usize,
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Largest Σ n_i on the grid.
    #[arg(long, default_value_t = 8)]
    max_total: usize,
    /// Largest number of slots.
    #[arg(long, default_value_t = 4)]
    max_rows: usize,
    #[command(flatten)]
    out: OutputArgs,
}

/// Runs the CLI with the process's stdout/stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = merge_config(argv).and_then(|argv| match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            Ok(None)
        }
        Err(e) => Err(FcltError::Config(e.to_string())),
    });
    let outcome = match result {
        Ok(Some(cli)) => dispatch(cli, out),
        Ok(None) => Ok(()),
        Err(e) => Err(e),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let payload = json!({
                "schema": 1,
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            let _ = writeln!(err, "{payload}");
            e.exit_code()
        }
    }
}

const SUBCOMMANDS: [&str; 7] = ["partitions", "cumulant", "clt-scan", "mc", "rmt", "breaking", "selftest"];

/// Splices config-file values in front of the subcommand's own flags.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    let mut sub_at = None;
    let mut i = 1;
    while i < strs.len() {
        let a = &strs[i];
        if let Some(v) = a.strip_prefix("--config=") {
            config_path = Some(v.to_string());
        } else if a == "--config" {
            config_path = strs.get(i + 1).cloned();
            i += 1;
        } else if a == "--threads" {
            i += 1;
        } else if sub_at.is_none() && SUBCOMMANDS.contains(&a.as_str()) {
            sub_at = Some(i);
        }
        i += 1;
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let mut table = load_config(Path::new(&path))?;
    let sub = match sub_at {
        Some(i) => strs[i].clone(),
        None => match table.remove("subcommand") {
            Some(Value::String(s)) if SUBCOMMANDS.contains(&s.as_str()) => s,
            _ => return Err(FcltError::Config("no subcommand given on the command line or in the config".into())),
        },
    };
    table.remove("subcommand");
    let given: Vec<&str> = strs
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut injected = Vec::new();
    for (key, value) in table.into_iter().filter(|(k, _)| !given.contains(&k.as_str())) {
        match value {
            Value::Bool(true) => injected.push(format!("--{key}")),
            Value::Bool(false) | Value::Null => {}
            other => {
                injected.push(format!("--{key}"));
                injected.push(config_scalar(&key, &other)?);
            }
        }
    }
    let mut merged: Vec<OsString> = Vec::with_capacity(argv.len() + injected.len() + 1);
    match sub_at {
        Some(i) => {
            merged.extend(argv[..=i].iter().cloned());
            merged.extend(injected.into_iter().map(OsString::from));
            merged.extend(argv[i + 1..].iter().cloned());
        }
        None => {
            merged.extend(argv.iter().cloned());
            merged.push(sub.into());
            merged.extend(injected.into_iter().map(OsString::from));
        }
    }
    Ok(merged)
}

fn load_config(path: &Path) -> Result<serde_json::Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FcltError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let value: Value = if is_toml {
        toml::from_str(&text).map_err(|e| FcltError::Config(format!("config TOML: {e}")))?
    } else {
        serde_json::from_str(&text).map_err(|e| FcltError::Config(format!("config JSON: {e}")))?
    };
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(FcltError::Config("config must be a table/object of flag values".into())),
    }
}

fn config_scalar(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Array(items) => items.iter().map(|x| config_scalar(key, x)).collect::<Result<Vec<_>>>()?.join(","),
        Value::Object(_) if key == "model" => {
            let m: CovarianceModel = serde_json::from_value(v.clone())
                .map_err(|e| FcltError::Config(format!("config model: {e}")))?;
            model_spec(&m.validated()?)
        }
        Value::Object(_) if key == "partition" => v.to_string(),
        _ => return Err(FcltError::Config(format!("unsupported config value for '{key}'"))),
    })
}

fn model_spec(m: &CovarianceModel) -> String {
    match m {
        CovarianceModel::Geometric { a } => format!("geometric:{a}"),
        CovarianceModel::Power { beta } => format!("power:{beta}"),
        CovarianceModel::Tabulated { values } => format!(
            "tabulated:{}",
            values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        ),
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        return Err(FcltError::Config("--threads must be ≥ 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FcltError::Config(format!("thread pool: {e}")))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| {
        let out: &mut dyn Write = &mut buf;
        match cli.command {
            Command::Partitions(a) => cmd_partitions(a, out),
            Command::Cumulant(a) => cmd_cumulant(a, out),
            Command::CltScan(a) => cmd_scan(a, out),
            Command::Mc(a) => cmd_mc(a, out),
            Command::Rmt(a) => cmd_rmt(a, out),
            Command::Breaking(a) => cmd_breaking(a, out),
            Command::Selftest(a) => cmd_selftest(a, out),
        }
    });
    out.write_all(&buf).map_err(io_err)?;
    result
}

/// Resolves a series preset in the given basis.
pub fn parse_series(spec: &str, basis: Option<Basis>, max_deg: usize) -> Result<FunctionalSeries> {
    let need_basis = || {
        basis.ok_or_else(|| FcltError::Config(format!("series '{spec}' needs --basis or --world")))
    };
    if let Some(rest) = spec.strip_prefix("expand:") {
        let f: fn(f64) -> f64 = match rest {
            "x2" => |x| x * x,
            "x3m2x" => |x| x * x * x - 2.0 * x,
            "clip" => |x| x.clamp(-1.0, 1.0),
            other => return Err(FcltError::Config(format!("unknown builtin function '{other}'"))),
        };
        let quad = (2 * max_deg + 1).max(64);
        return expand(f, need_basis()?, max_deg, quad);
    }
    if let Some(rest) = spec.strip_prefix("coeffs:") {
        let coeffs = rest
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| FcltError::Config(format!("bad coefficient '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        return FunctionalSeries::new(need_basis()?, coeffs);
    }
    let (b, deg) = spec.split_at(1.min(spec.len()));
    let preset_basis = match b {
        "H" | "h" => Basis::Hermite,
        "U" | "u" => Basis::Chebyshev,
        _ => return Err(FcltError::Config(format!("unknown series preset '{spec}'"))),
    };
    let n: usize = match deg {
        "1" | "2" | "3" => deg.parse().unwrap(),
        _ => return Err(FcltError::Config(format!("unknown series preset '{spec}'"))),
    };
    if let Some(b) = basis {
        if b != preset_basis {
            return Err(FcltError::Contract(format!("preset '{spec}' is a {preset_basis:?} series, not {b:?}")));
        }
    }
    FunctionalSeries::pure(preset_basis, n)
}

fn resolve_series(a: &SeriesArgs) -> Result<(FunctionalSeries, CovarianceModel, World)> {
    let world: Option<World> = a.world.as_deref().map(str::parse).transpose()?;
    let basis = match a.basis {
        Some(BasisArg::Hermite) => Some(Basis::Hermite),
        Some(BasisArg::Chebyshev) => Some(Basis::Chebyshev),
        None => world.map(basis_for),
    };
    let s = parse_series(&a.series, basis, a.max_deg)?;
    let world = world.unwrap_or_else(|| world_for(s.basis()));
    if basis_for(world) != s.basis() {
        return Err(FcltError::Contract(format!(
            "the {world:?} world needs a {:?} series, got {:?}",
            basis_for(world),
            s.basis()
        )));
    }
    Ok((s, CovarianceModel::parse(&a.model)?, world))
}

fn io_err(e: std::io::Error) -> FcltError {
    FcltError::Config(format!("output: {e}"))
}

fn csv_err(e: csv::Error) -> FcltError {
    FcltError::Config(format!("CSV output: {e}"))
}

/// Sends `body` to the file in `--output` or to `out`.
fn emit(o: &OutputArgs, out: &mut dyn Write, body: &[u8]) -> Result<()> {
    match &o.output {
        Some(p) => std::fs::write(p, body).map_err(io_err),
        None => out.write_all(body).map_err(io_err),
    }
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

fn with_schema<T: Serialize>(v: &T) -> Value {
    let mut value = serde_json::to_value(v).expect("reports serialize");
    if let Value::Object(map) = &mut value {
        map.entry("schema").or_insert(json!(1));
    }
    value
}

fn single_row_csv<T: Serialize>(row: &T) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row).map_err(csv_err)?;
    w.into_inner().map_err(|e| FcltError::Config(format!("CSV output: {e}")))
}

fn cmd_partitions(a: PartitionsArgs, out: &mut dyn Write) -> Result<()> {
    let table = RowTable::new(a.rows.clone())?;
    let list: Vec<Partition> = match a.class {
        DiagramClass::Pairings => enumerate_pair_partitions(table.total())?,
        DiagramClass::Noncrossing => enumerate_pair_partitions(table.total())?
            .into_iter()
            .filter(is_noncrossing)
            .collect(),
        DiagramClass::Classical => enumerate_classical_diagrams(&table)?,
        DiagramClass::Free => enumerate_free_diagrams(&table, false)?,
        DiagramClass::FreeConnected => enumerate_free_diagrams(&table, true)?,
    };
    let class = a.class.to_possible_value().expect("no skipped variants").get_name().to_string();
    match a.out.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut v = json!({"schema": 1, "rows": a.rows, "class": class, "count": list.len()});
            if a.list {
                v["partitions"] = serde_json::to_value(&list).expect("partitions serialize");
            }
            emit(&a.out, out, &json_bytes(&v))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if a.list {
                w.write_record(["index", "partition"]).map_err(csv_err)?;
                for (i, p) in list.iter().enumerate() {
                    let s = serde_json::to_string(p).expect("partitions serialize");
                    w.write_record([i.to_string(), s]).map_err(csv_err)?;
                }
            } else {
                w.write_record(["rows", "class", "count"]).map_err(csv_err)?;
                let rows = a.rows.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                w.write_record([rows, class, list.len().to_string()]).map_err(csv_err)?;
            }
            let body = w.into_inner().map_err(|e| FcltError::Config(format!("CSV output: {e}")))?;
            emit(&a.out, out, &body)
        }
    }
}

fn cmd_cumulant(a: CumulantArgs, out: &mut dyn Write) -> Result<()> {
    let world: World = a.world.parse()?;
    let req = CumulantRequest::new(a.degrees, a.times, world, CovarianceModel::parse(&a.model)?)?;
    let value = Engine::new(Budget::from_env()).joint_cumulant(&req)?;
    let mut report = json!({
        "schema": 1,
        "degrees": req.degrees,
        "times": req.times,
        "world": world,
        "value": value,
    });
    let mut mismatch = None;
    if a.oracle {
        let o = oracle_cumulant(&req)?;
        report["oracle"] = json!(o);
        report["abs_diff"] = json!((o - value).abs());
        if (o - value).abs() > ORACLE_TOLERANCE {
            mismatch = Some((value, o));
        }
    }
    match a.out.format.unwrap_or(Format::Json) {
        Format::Json => emit(&a.out, out, &json_bytes(&report))?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                value: f64,
                oracle: Option<f64>,
            }
            let body = single_row_csv(&Row { value, oracle: report.get("oracle").and_then(Value::as_f64) })?;
            emit(&a.out, out, &body)?;
        }
    }
    match mismatch {
        Some((v, o)) => Err(FcltError::Numeric(format!("diagram value {v} disagrees with oracle {o}"))),
        None => Ok(()),
    }
}

fn cmd_scan(a: ScanArgs, out: &mut dyn Write) -> Result<()> {
    let (s, m, world) = resolve_series(&a.series)?;
    let report = summability_check(&s, &m);
    if !report.summable {
        return Err(FcltError::Hypothesis(format!(
            "Σ|r(t)|^k* diverges at rank k* = {} ({})",
            report.rank, report.criterion
        )));
    }
    let budget = a.budget.map(Budget::new).unwrap_or_else(Budget::from_env);
    let scan = Engine::new(budget).scan(&s, &m, &a.n, a.r_max, world)?;
    match a.out.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut body = Vec::new();
            scan.write_csv(&mut body)?;
            emit(&a.out, out, &body)
        }
        Format::Json => emit(&a.out, out, &json_bytes(&scan.to_json())),
    }
}

fn cmd_mc(a: McArgs, out: &mut dyn Write) -> Result<()> {
    let (s, m, world) = resolve_series(&a.series)?;
    if world != World::Classical {
        return Err(FcltError::Contract("mc samples the classical world; use rmt for free".into()));
    }
    let report: McReport = mc_distribution(&s, &m, a.n, a.reps, a.seed)?;
    let body = match a.out.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&with_schema(&report)),
        Format::Csv => single_row_csv(&report)?,
    };
    emit(&a.out, out, &body)
}

fn spectral_csv(r: &SpectralReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "z_re", "z_im", "empirical_re", "empirical_im", "reference_re", "reference_im"])
        .map_err(csv_err)?;
    for (k, (e, rf)) in r.empirical_moments.iter().zip(&r.reference_moments).enumerate() {
        let rec = [format!("m{}", k + 1), String::new(), String::new(), e.to_string(), "0".into(), rf.to_string(), "0".into()];
        w.write_record(&rec).map_err(csv_err)?;
    }
    for s in &r.stieltjes_samples {
        let rec = [
            "stieltjes".to_string(),
            s.z[0].to_string(),
            s.z[1].to_string(),
            s.empirical[0].to_string(),
            s.empirical[1].to_string(),
            s.reference[0].to_string(),
            s.reference[1].to_string(),
        ];
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| FcltError::Config(format!("CSV output: {e}")))
}

fn cmd_rmt(a: RmtArgs, out: &mut dyn Write) -> Result<()> {
    let (s, m, world) = resolve_series(&a.series)?;
    if world != World::Free {
        return Err(FcltError::Contract("rmt samples the free world; use mc for classical".into()));
    }
    let report = rmt_clt_check(&s, &m, a.n, a.dim, a.seed)?;
    if let Some(path) = &a.histogram {
        let file = std::fs::File::create(path).map_err(io_err)?;
        write_histogram_csv(&report.eigenvalues, a.bins, file)?;
    }
    let body = match a.out.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&with_schema(&report)),
        Format::Csv => spectral_csv(&report)?,
    };
    emit(&a.out, out, &body)
}

fn parse_kv_f64(spec: &str) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once(':')
            .ok_or_else(|| FcltError::Config(format!("expected k:value, got '{item}'")))?;
        let k = k.trim().parse().map_err(|_| FcltError::Config(format!("bad order '{k}'")))?;
        let v = v.trim().parse().map_err(|_| FcltError::Config(format!("bad value '{v}'")))?;
        out.insert(k, v);
    }
    Ok(out)
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| FcltError::Config(format!("--{flag} is required in this mode")))
}

fn diagram_input(a: &BreakingArgs) -> Result<(RowTable, Partition)> {
    if a.rows.is_empty() {
        return Err(FcltError::Config("--rows is required in this mode".into()));
    }
    let table = RowTable::new(a.rows.clone())?;
    let blocks: Vec<Vec<usize>> = serde_json::from_str(&required(&a.partition, "partition")?)
        .map_err(|e| FcltError::Config(format!("--partition: {e}")))?;
    Ok((table, Partition::from_blocks(blocks)?))
}

fn cmd_breaking(a: BreakingArgs, out: &mut dyn Write) -> Result<()> {
    let report: Value = if a.check53 {
        let r = threshold_check(required(&a.m, "m")?, &parse_p_values(&required(&a.p, "p")?)?)?;
        with_schema(&r)
    } else if a.alpha {
        let (t, p) = diagram_input(&a)?;
        let g = build_breaking_graph(&t, &p, &parse_p_values(&required(&a.p, "p")?)?)?;
        let alpha = alpha_g(&g)?;
        json!({"schema": 1, "graph": g, "alpha": alpha.value, "witness": alpha.witness})
    } else if a.spectral {
        let spec = LinearProcessSpec::new(a.c.clone(), parse_kv_f64(&required(&a.d, "d")?)?)?;
        let k = required(&a.k, "k")?;
        with_schema(&verify_spectral_representation(&spec, k, &a.j, a.grid)?)
    } else {
        let (t, p) = diagram_input(&a)?;
        let l = edge_matrix(&p, &t)?;
        let m = CovarianceModel::parse(&required(&a.model, "model")?)?;
        let fit = jn_log_slope(&l, &m, &a.n, Budget::from_env())?;
        let mut v = with_schema(&fit);
        if let Some(p_spec) = &a.p {
            let g = build_breaking_graph(&t, &p, &parse_p_values(p_spec)?)?;
            v["alpha"] = json!(alpha_g(&g)?.value);
        }
        v
    };
    match a.out.format.unwrap_or(Format::Json) {
        Format::Json => emit(&a.out, out, &json_bytes(&report)),
        Format::Csv => {
            let flat: BTreeMap<String, String> = report
                .as_object()
                .into_iter()
                .flatten()
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(flat.keys()).map_err(csv_err)?;
            w.write_record(flat.values()).map_err(csv_err)?;
            let body = w.into_inner().map_err(|e| FcltError::Config(format!("CSV output: {e}")))?;
            emit(&a.out, out, &body)
        }
    }
}

/// Outcome of the oracle-equivalence grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub schema: u32,
    pub checked: usize,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// All degree tuples with `k ≤ max_rows` slots and `Σ n_i ≤ max_total`,
/// times in `{0,1,2}`, geometric(0.5), both worlds.
pub fn oracle_grid(max_total: usize, max_rows: usize) -> Vec<CumulantRequest> {
    fn tuples(k: usize, budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        let left = k - prefix.len() - 1;
        for n in 1..=budget.saturating_sub(left) {
            prefix.push(n);
            tuples(k, budget - n, prefix, out);
            prefix.pop();
        }
    }
    let model = CovarianceModel::geometric(0.5).expect("valid model");
    let mut reqs = Vec::new();
    for k in 1..=max_rows {
        let mut degs = Vec::new();
        tuples(k, max_total, &mut Vec::new(), &mut degs);
        for d in degs {
            for code in 0..3usize.pow(k as u32) {
                let times: Vec<i64> = (0..k).map(|i| (code / 3usize.pow(i as u32) % 3) as i64).collect();
                for world in [World::Classical, World::Free] {
                    reqs.push(CumulantRequest {
                        degrees: d.clone(),
                        times: times.clone(),
                        world,
                        model: model.clone(),
                    });
                }
            }
        }
    }
    reqs
}

pub fn selftest(max_total: usize, max_rows: usize) -> Result<SelftestReport> {
    use rayon::prelude::*;
    let engine = Engine::default();
    let errs: Vec<f64> = oracle_grid(max_total, max_rows)
        .par_iter()
        .map(|r| Ok((engine.joint_cumulant(r)? - oracle_cumulant(r)?).abs()))
        .collect::<Result<_>>()?;
    let max_abs_err = errs.iter().copied().fold(0.0, f64::max);
    Ok(SelftestReport {
        schema: 1,
        checked: errs.len(),
        max_abs_err,
        passed: max_abs_err <= ORACLE_TOLERANCE,
    })
}

fn cmd_selftest(a: SelftestArgs, out: &mut dyn Write) -> Result<()> {
    let r = selftest(a.max_total, a.max_rows)?;
    let body = match a.out.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&with_schema(&r)),
        Format::Csv => single_row_csv(&r)?,
    };
    emit(&a.out, out, &body)?;
    if r.passed {
        Ok(())
    } else {
        Err(FcltError::Numeric(format!(
            "oracle mismatch: max abs error {:e} over {} requests",
            r.max_abs_err, r.checked
        )))
    }
}

/// Help text, exposed for documentation tests.
pub fn help_text() -> String {
    Cli::command().render_long_help().to_string()
}
