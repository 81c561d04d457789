//! The `sabr-sym` command line: price, calibrate, reproduce, bench, list.
//!
//! All rates and vols are plain decimals (`0.05`, not `5`). Every flag may also
//! come from a `--config FILE` of `key = value` lines, where `key` is the flag
//! name without dashes; flags given on the command line win. Boolean flags take
//! `true` or `false`. `SABR_SYM_THREADS` caps the worker thread count.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics::{analytic_absorbed_call, asymptotic_price, black_call};
use crate::calib::{calibrate, load_market_csv, shipped_smiles, CalibOptions, MarketSmile};
use crate::error::{Result, SabrError};
use crate::fixtures;
use crate::model::{SabrParams, VariableSet};
use crate::montecarlo::{price_mc_smile, McConfig};
use crate::pde_engine::{solve_batch, solve_sequential, GridSpec};
use crate::pricer::{check_wy_beta, price_smile_per_strike, price_smile_symmetry, symmetry_grid, time_value};
use crate::spectral::{decompose, PayoffSpec};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "SABR_SYM_THREADS";
/// The only machine-output layout so far.
pub const FORMAT_VERSION: u32 = 1;
/// WY needs a finer u grid than ZX for basis-point accuracy.
pub const DEFAULT_N_U_WY: usize = 400;

#[derive(Parser, Debug)]
#[command(name = "sabr-sym", version, about = "SABR swaption prices by scaling symmetry (rates and vols are decimals)")]
struct Cli {
    /// File of `key = value` lines supplying flag defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price a smile with one method.
    Price(PriceArgs),
    /// Fit alpha0, nu and rho to market smiles at fixed beta.
    Calibrate(CalibArgs),
    /// Recompute a shipped table and compare it cell by cell.
    Reproduce(ReproArgs),
    /// Time a ten-year smile.
    Bench(BenchArgs),
    /// List shipped table and parameter ids.
    List,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    PdeZx,
    PdeWy,
    PdePerStrike,
    Mc,
    Asymptotic,
    Analytic,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Markdown,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Start from a shipped parameter set; individual flags override it.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    forward: Option<f64>,
    /// Years.
    #[arg(long)]
    expiry: Option<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<SabrParams> {
        let base = match &self.params {
            Some(id) => Some(lookup_params(id)?.params),
            None => None,
        };
        let pick = |v: Option<f64>, b: Option<f64>, name: &str| {
            v.or(b).ok_or_else(|| SabrError::Input(format!("missing --{name} (or --params ID)")))
        };
        SabrParams::new(
            pick(self.alpha, base.map(|p| p.alpha0), "alpha")?,
            pick(self.beta, base.map(|p| p.beta), "beta")?,
            pick(self.nu, base.map(|p| p.nu), "nu")?,
            pick(self.rho, base.map(|p| p.rho), "rho")?,
            pick(self.forward, base.map(|p| p.forward), "forward")?,
            pick(self.expiry, base.map(|p| p.expiry), "expiry")?,
        )
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct GridArgs {
    #[arg(long)]
    n_t: Option<usize>,
    /// u nodes; defaults to 50 for ZX and 400 for WY.
    #[arg(long)]
    n_u: Option<usize>,
    /// V nodes, a power of two.
    #[arg(long)]
    n_v: Option<usize>,
}

impl GridArgs {
    fn spec(&self, wy: bool) -> Result<GridSpec> {
        let d = GridSpec::default();
        let n_u = self.n_u.unwrap_or(if wy { DEFAULT_N_U_WY } else { d.n_u });
        let spec = GridSpec::new(self.n_t.unwrap_or(d.n_t), n_u, self.n_v.unwrap_or(d.n_v));
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct McArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps_per_year: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    antithetic: bool,
    /// Drop the in-step absorption probability.
    #[arg(long)]
    no_hit_adjustment: bool,
}

impl McArgs {
    fn config(&self, default_paths: usize) -> Result<McConfig> {
        let d = McConfig::default();
        let cfg = McConfig {
            n_paths: self.paths.unwrap_or(default_paths),
            steps_per_year: self.steps_per_year.unwrap_or(d.steps_per_year),
            seed: self.seed.unwrap_or(d.seed),
            antithetic: self.antithetic,
            hit_adjustment: !self.no_hit_adjustment,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Machine-output layout version.
    #[arg(long, default_value_t = FORMAT_VERSION)]
    format_version: u32,
}

impl OutputArgs {
    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(SabrError::Input(format!(
                "unsupported --format-version {} (supported: {FORMAT_VERSION})",
                self.format_version
            )));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct PriceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Method::PdeZx)]
    method: Method,
    /// `lo:hi:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    strikes: String,
    /// Reference strike of the symmetry solve; defaults to the forward.
    #[arg(long)]
    k0: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    mc: McArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct CalibArgs {
    /// Market quotes CSV; defaults to the shipped quotes.
    #[arg(long)]
    market: Option<PathBuf>,
    /// Only these smile ids (e.g. 20071009-1y1y); repeatable.
    #[arg(long = "smile")]
    smiles: Vec<String>,
    /// Fixed beta; defaults to the shipped parameter set of the same id.
    #[arg(long)]
    beta: Option<f64>,
    /// Zero-based quote indices left out of the fit, comma-separated.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<usize>,
    #[arg(long, default_value_t = 150)]
    max_iter: u64,
    /// Print per-quote residuals as well.
    #[arg(long)]
    residuals: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct ReproArgs {
    /// Table id; `sabr-sym list` shows them.
    id: String,
    /// Only these printed columns, comma-separated (e.g. pde_sym_zx,mc).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Tolerance in basis points before widening.
    #[arg(long, default_value_t = 1.0)]
    tolerance_bp: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    mc: McArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct BenchArgs {
    #[arg(long, default_value = "20071009-10y10y")]
    params: String,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[command(flatten)]
    grid: GridArgs,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// `reproduce` found cells outside tolerance.
    Mismatch,
}

/// Exit status for a command result: 0 ok, 1 domain or input error,
/// 2 numerical failure, 3 reproduction mismatch.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Mismatch) => 3,
        Err(e) => e.exit_code(),
    }
}

const SUBCOMMANDS: [&str; 5] = ["price", "calibrate", "reproduce", "bench", "list"];

/// Expand `--config FILE` into flags placed right after the subcommand, so that
/// explicit flags, which come later, override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| SabrError::Input(format!("cannot read config {path}: {e}")))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| SabrError::Input(format!("config {path} line {}: expected key = value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                extra.push(format!("--{key}"));
                extra.push(value.to_string());
            }
        }
    }
    let mut args = args;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map(|i| i + 1)
        .unwrap_or(args.len());
    args.splice(at..at, extra);
    Ok(args)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| SabrError::Input(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Run one command line (including the program name) and write its report.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    configure_threads()?;
    let args = expand_config(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                emit(out, &e.render().to_string())?;
                return Ok(Outcome::Success);
            }
            _ => return Err(SabrError::Input(e.render().to_string().trim_end().to_string())),
        },
    };
    let (text, outcome) = match cli.command {
        Command::Price(a) => (cmd_price(&a)?, Outcome::Success),
        Command::Calibrate(a) => (cmd_calibrate(&a)?, Outcome::Success),
        Command::Reproduce(a) => cmd_reproduce(&a)?,
        Command::Bench(a) => (cmd_bench(&a)?, Outcome::Success),
        Command::List => (cmd_list(), Outcome::Success),
    };
    emit(out, &text)?;
    Ok(outcome)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| SabrError::Input(format!("cannot write output: {e}")))
}

fn lookup_params(id: &str) -> Result<fixtures::ParamSet> {
    fixtures::param_set(id).ok_or_else(|| {
        let ids: Vec<String> = fixtures::param_sets().into_iter().map(|p| p.id).collect();
        SabrError::Input(format!("unknown parameter set '{id}'; available: {}", ids.join(", ")))
    })
}

/// Parse `lo:hi:step` (inclusive of `hi` up to rounding) or `a,b,c`.
pub fn parse_strikes(s: &str) -> Result<Vec<f64>> {
    let bad = || SabrError::Input(format!("cannot parse strikes '{s}'"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let ks = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || hi < lo {
            return Err(SabrError::Input(format!("strike range '{s}' needs lo <= hi and step > 0")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        if n > 10_000 {
            return Err(SabrError::Input(format!("strike range '{s}' has too many points")));
        }
        (0..n).map(|i| lo + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if ks.is_empty() {
        return Err(bad());
    }
    Ok(ks)
}

/// One priced smile ready for printing.
struct Rows {
    strikes: Vec<f64>,
    prices: Vec<f64>,
    std_errors: Option<Vec<f64>>,
}

fn require_analytic(p: &SabrParams) -> Result<()> {
    if p.nu != 0.0 {
        return Err(SabrError::domain("analytic limit requires nu=0"));
    }
    if p.beta != 0.0 {
        return Err(SabrError::domain("analytic limit requires beta=0"));
    }
    Ok(())
}

fn price_rows(p: &SabrParams, method: Method, strikes: &[f64], k0: f64, grid: GridArgs, mc: McArgs) -> Result<Rows> {
    let plain = |prices| Rows { strikes: strikes.to_vec(), prices, std_errors: None };
    Ok(match method {
        Method::PdeZx => plain(price_smile_symmetry(p, VariableSet::zx(), &grid.spec(false)?, k0, strikes)?.prices),
        Method::PdeWy => {
            let vs = VariableSet::wy(p.beta)?;
            check_wy_beta(vs, p.beta)?;
            plain(price_smile_symmetry(p, vs, &grid.spec(true)?, k0, strikes)?.prices)
        }
        Method::PdePerStrike => plain(price_smile_per_strike(p, VariableSet::zx(), &grid.spec(false)?, strikes)?.prices),
        Method::Mc => {
            let est = price_mc_smile(p, strikes, &mc.config(McConfig::default().n_paths)?)?;
            Rows {
                strikes: strikes.to_vec(),
                prices: est.iter().map(|e| e.mean).collect(),
                std_errors: Some(est.iter().map(|e| e.std_error).collect()),
            }
        }
        Method::Asymptotic => plain(strikes.iter().map(|&k| asymptotic_price(p, k)).collect::<Result<_>>()?),
        Method::Analytic => {
            require_analytic(p)?;
            plain(strikes.iter().map(|&k| analytic_absorbed_call(p.forward, p.alpha0, k, p.expiry)).collect())
        }
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| SabrError::Input(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| SabrError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn markdown_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn cmd_price(a: &PriceArgs) -> Result<String> {
    a.out.check()?;
    let p = a.model.resolve()?;
    let strikes = parse_strikes(&a.strikes)?;
    let k0 = a.k0.unwrap_or(p.forward);
    let rows = price_rows(&p, a.method, &strikes, k0, a.grid, a.mc)?;
    let tv = |i: usize| time_value(rows.prices[i], p.forward, rows.strikes[i]);
    let n = rows.strikes.len();
    match a.out.format {
        Format::Csv => {
            let mut header = vec!["strike", "price", "time_value"];
            if rows.std_errors.is_some() {
                header.push("std_error");
            }
            csv_text(
                &header,
                (0..n).map(|i| {
                    let mut r = vec![rows.strikes[i].to_string(), rows.prices[i].to_string(), tv(i).to_string()];
                    if let Some(se) = &rows.std_errors {
                        r.push(se[i].to_string());
                    }
                    r
                }),
            )
        }
        Format::Markdown => {
            let mut header = vec!["Strike", "Price", "Time value"];
            if rows.std_errors.is_some() {
                header.push("Std error");
            }
            Ok(markdown_text(
                &header,
                (0..n).map(|i| {
                    let mut r = vec![pct(rows.strikes[i]), pct(rows.prices[i]), pct(tv(i))];
                    if let Some(se) = &rows.std_errors {
                        r.push(pct(se[i]));
                    }
                    r
                }),
            ))
        }
    }
}

fn cmd_calibrate(a: &CalibArgs) -> Result<String> {
    a.out.check()?;
    let mut smiles = match &a.market {
        Some(path) => load_market_csv(path)?,
        None => shipped_smiles(),
    };
    if !a.smiles.is_empty() {
        for id in &a.smiles {
            if !smiles.iter().any(|s| &s.id() == id) {
                let ids: Vec<String> = smiles.iter().map(|s| s.id()).collect();
                return Err(SabrError::Input(format!("unknown smile '{id}'; available: {}", ids.join(", "))));
            }
        }
        smiles.retain(|s| a.smiles.contains(&s.id()));
    }
    let mut summary = Vec::new();
    let mut detail = Vec::new();
    for s in &smiles {
        let id = s.id();
        let beta = match a.beta {
            Some(b) => b,
            None => fixtures::param_set(&id)
                .map(|p| p.params.beta)
                .ok_or_else(|| SabrError::Input(format!("no shipped beta for smile '{id}'; pass --beta")))?,
        };
        let opts = CalibOptions {
            report_grid: a.grid.spec(false)?,
            max_iter: a.max_iter,
            exclude: a.exclude.clone(),
            ..CalibOptions::default()
        };
        let r = calibrate(s, beta, None, &opts)?;
        let worst = r.residuals.iter().map(|x| x.abs()).fold(0.0, f64::max);
        summary.push(vec![
            id.clone(),
            format!("{:.6}", r.params.alpha0),
            format!("{}", r.params.beta),
            format!("{:.6}", r.params.nu),
            format!("{:.6}", r.params.rho),
            format!("{:.4}", r.objective * 1e4),
            format!("{:.4}", worst * 1e4),
            r.iterations.to_string(),
            r.converged.to_string(),
        ]);
        let market = s.prices();
        for (i, (&(k, vol), res)) in s.quotes.iter().zip(&r.residuals).enumerate() {
            detail.push(vec![
                id.clone(),
                k.to_string(),
                vol.to_string(),
                market[i].to_string(),
                (market[i] + res).to_string(),
                format!("{:.4}", res * 1e4),
                a.exclude.contains(&i).to_string(),
            ]);
        }
    }
    let h1 = ["smile", "alpha0", "beta", "nu", "rho", "rms_bp", "max_abs_bp", "iterations", "converged"];
    let h2 = ["smile", "strike", "market_vol", "market_price", "model_price", "residual_bp", "excluded"];
    let mut text = match a.out.format {
        Format::Csv => csv_text(&h1, summary)?,
        Format::Markdown => markdown_text(&h1, summary),
    };
    if a.residuals {
        text.push('\n');
        text += &match a.out.format {
            Format::Csv => csv_text(&h2, detail)?,
            Format::Markdown => markdown_text(&h2, detail),
        };
    }
    Ok(text)
}

/// One compared cell of a reproduced table.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: String,
    pub strike: f64,
    pub printed: f64,
    pub computed: f64,
    pub tolerance: f64,
}

impl Cell {
    pub fn diff(&self) -> f64 {
        self.computed - self.printed
    }

    pub fn passes(&self) -> bool {
        self.diff().abs() <= self.tolerance
    }
}

/// Print resolution of alpha0, nu, rho and the forward in the parameter sets.
const PRINT_STEPS: [f64; 4] = [1e-4, 1e-3, 1e-3, 1e-4];
/// Tolerance of the asymptotic column, which involves our choice of formula variant.
const ASYMPTOTIC_TOL: f64 = 3e-4;

/// Comparison of one table, plus skipped columns with reasons.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub id: String,
    pub cells: Vec<Cell>,
    pub skipped: Vec<(String, String)>,
    /// Largest `|pde_sym_zx - asymptotic|` over strikes, when both were computed.
    pub asymptotic_gap: Option<(f64, f64)>,
}

impl Reproduction {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| !c.passes()).count()
    }
}

/// Per-strike time-value change from moving each printed parameter by half
/// its print step, summed over parameters.
fn rounding_envelope(p: &SabrParams, strikes: &[f64], spec: &GridSpec) -> Result<Vec<f64>> {
    let tv = |q: &SabrParams| -> Result<Vec<f64>> {
        let prices = price_smile_symmetry(q, VariableSet::zx(), spec, q.forward, strikes)?.prices;
        Ok(prices.iter().zip(strikes).map(|(&c, &k)| time_value(c, q.forward, k)).collect())
    };
    let mut env = vec![0.0; strikes.len()];
    for (i, step) in PRINT_STEPS.iter().enumerate() {
        let h = 0.5 * step;
        let bump = |s: f64| {
            let mut q = *p;
            match i {
                0 => q.alpha0 += s * h,
                1 => q.nu = (q.nu + s * h).max(0.0),
                2 => q.rho = (q.rho + s * h).clamp(-0.999, 0.999),
                _ => q.forward += s * h,
            }
            SabrParams::new(q.alpha0, q.beta, q.nu, q.rho, q.forward, q.expiry)
        };
        let (up, down) = (tv(&bump(1.0)?)?, tv(&bump(-1.0)?)?);
        for (e, (a, b)) in env.iter_mut().zip(up.iter().zip(&down)) {
            *e += 0.5 * (a - b).abs();
        }
    }
    Ok(env)
}

struct ReproSettings {
    methods: Vec<String>,
    tolerance: f64,
    zx: GridSpec,
    wy: GridSpec,
    mc: McConfig,
}

fn base_id(table: &str) -> &str {
    let t = table.strip_prefix("calib-").unwrap_or(table);
    t.strip_suffix("-per-strike").unwrap_or(t)
}

fn market_vol(smile: Option<&MarketSmile>, k: f64) -> Result<f64> {
    smile
        .and_then(|s| s.quotes.iter().find(|q| (q.0 - k).abs() < 1e-7))
        .map(|q| q.1)
        .ok_or_else(|| SabrError::Input(format!("no market quote at strike {k}")))
}

fn reproduce_table(id: &str, set: &ReproSettings) -> Result<Reproduction> {
    let ids = fixtures::table_ids();
    if !ids.iter().any(|t| t == id) {
        return Err(SabrError::Input(format!("unknown table '{id}'; available: {}", ids.join(", "))));
    }
    let p = lookup_params(base_id(id))?.params;
    let strikes = fixtures::table_strikes(id);
    let mut methods: Vec<String> = fixtures::printed_table(id).into_iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    if !set.methods.is_empty() {
        for m in &set.methods {
            if !methods.contains(m) {
                return Err(SabrError::Input(format!("table '{id}' has no column '{m}'; columns: {}", methods.join(", "))));
            }
        }
        methods.retain(|m| set.methods.contains(m));
    }

    let zx_spec = set.zx;
    let zx = |q: &SabrParams| -> Result<Vec<f64>> { Ok(price_smile_symmetry(q, VariableSet::zx(), &zx_spec, q.forward, &strikes)?.prices) };
    // Market parameter sets are printed rounded; widen by the effect of that rounding.
    let exact = lookup_params(base_id(id))?.as_of.is_none();
    let envelope = if exact || methods.iter().all(|m| m == "analytic" || m == "black") {
        vec![0.0; strikes.len()]
    } else {
        rounding_envelope(&p, &strikes, &zx_spec)?
    };
    let smile = shipped_smiles().into_iter().find(|s| s.id() == base_id(id));

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    for m in &methods {
        let (prices, extra): (Vec<f64>, Vec<f64>) = match m.as_str() {
            "pde_sym_zx" | "sabr" => (zx(&p)?, envelope.clone()),
            "pde_zx" => (price_smile_per_strike(&p, VariableSet::zx(), &zx_spec, &strikes)?.prices, envelope.clone()),
            "pde_sym_wy" => {
                let vs = VariableSet::wy(p.beta)?;
                if let Err(e) = check_wy_beta(vs, p.beta) {
                    skipped.push((m.clone(), e.to_string()));
                    continue;
                }
                (price_smile_symmetry(&p, vs, &set.wy, p.forward, &strikes)?.prices, envelope.clone())
            }
            "mc" => {
                let est = price_mc_smile(&p, &strikes, &set.mc)?;
                let extra = est.iter().zip(&envelope).map(|(e, env)| 3.0 * e.std_error + env).collect();
                (est.iter().map(|e| e.mean).collect(), extra)
            }
            "asymptotic" => {
                let prices = strikes.iter().map(|&k| asymptotic_price(&p, k)).collect::<Result<_>>()?;
                (prices, envelope.iter().map(|e| e + (ASYMPTOTIC_TOL - set.tolerance).max(0.0)).collect())
            }
            "analytic" => {
                require_analytic(&p)?;
                (strikes.iter().map(|&k| analytic_absorbed_call(p.forward, p.alpha0, k, p.expiry)).collect(), vec![0.0; strikes.len()])
            }
            "black" => {
                let s = smile.as_ref();
                let prices =
                    strikes.iter().map(|&k| Ok(black_call(p.forward, k, market_vol(s, k)?, p.expiry))).collect::<Result<_>>()?;
                (prices, vec![0.0; strikes.len()])
            }
            other => {
                skipped.push((other.to_string(), "no implementation for this column".to_string()));
                continue;
            }
        };
        for (printed_k, printed_tv) in fixtures::printed_column(id, m) {
            let i = strikes.iter().position(|&k| k == printed_k).expect("printed strike is a table strike");
            cells.push(Cell {
                method: m.clone(),
                strike: printed_k,
                printed: printed_tv,
                computed: time_value(prices[i], p.forward, printed_k),
                tolerance: set.tolerance + extra[i],
            });
        }
        by_method.push((m.clone(), prices));
    }
    let find = |name: &str| by_method.iter().find(|(m, _)| m == name).map(|(_, v)| v);
    let asymptotic_gap = match (find("pde_sym_zx"), find("asymptotic")) {
        (Some(a), Some(b)) => a
            .iter()
            .zip(b)
            .zip(&strikes)
            .map(|((x, y), &k)| ((x - y).abs(), k))
            .max_by(|a, b| a.0.total_cmp(&b.0)),
        _ => None,
    };
    Ok(Reproduction { id: id.to_string(), cells, skipped, asymptotic_gap })
}

fn cmd_reproduce(a: &ReproArgs) -> Result<(String, Outcome)> {
    a.out.check()?;
    let set = ReproSettings {
        methods: a.methods.clone(),
        tolerance: a.tolerance_bp * 1e-4,
        zx: a.grid.spec(false)?,
        wy: a.grid.spec(true)?,
        mc: a.mc.config(200_000)?,
    };
    let r = reproduce_table(&a.id, &set)?;
    let rows = r.cells.iter().map(|c| match a.out.format {
        Format::Csv => vec![
            c.method.clone(),
            c.strike.to_string(),
            c.printed.to_string(),
            c.computed.to_string(),
            format!("{:.3}", c.diff() * 1e4),
            format!("{:.3}", c.tolerance * 1e4),
            if c.passes() { "pass" } else { "FAIL" }.to_string(),
        ],
        Format::Markdown => vec![
            c.method.clone(),
            pct(c.strike),
            pct(c.printed),
            pct(c.computed),
            format!("{:+.2}", c.diff() * 1e4),
            format!("{:.2}", c.tolerance * 1e4),
            if c.passes() { "pass" } else { "FAIL" }.to_string(),
        ],
    });
    let header = ["method", "strike", "printed", "computed", "diff_bp", "tol_bp", "status"];
    let mut text = match a.out.format {
        Format::Csv => csv_text(&header, rows)?,
        Format::Markdown => markdown_text(&header, rows),
    };
    let prefix = if a.out.format == Format::Csv { "# " } else { "" };
    for (m, why) in &r.skipped {
        let _ = writeln!(text, "{prefix}skipped {m}: {why}");
    }
    if let Some((gap, k)) = r.asymptotic_gap {
        let _ = writeln!(text, "{prefix}largest pde_sym_zx vs asymptotic gap: {:.2}bp at strike {}", gap * 1e4, pct(k));
    }
    let failed = r.failures();
    let _ = writeln!(text, "{prefix}{}: {} cells, {} outside tolerance", r.id, r.cells.len(), failed);
    Ok((text, if failed == 0 { Outcome::Success } else { Outcome::Mismatch }))
}

/// Compare a table at explicit ZX and WY grids and MC settings.
pub fn reproduce(id: &str, methods: &[&str], zx: GridSpec, wy: GridSpec, mc: McConfig) -> Result<Reproduction> {
    let set = ReproSettings { methods: methods.iter().map(|s| s.to_string()).collect(), tolerance: 1e-4, zx, wy, mc };
    reproduce_table(id, &set)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Timings in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub first_ms: f64,
    pub median_ms: f64,
    pub runs: usize,
    pub sequential_ms: f64,
    pub parallel_ms: f64,
    pub threads: usize,
}

/// Time a full symmetry smile, and the mode solves alone sequentially and in parallel.
pub fn bench(params: &SabrParams, strikes: &[f64], spec: &GridSpec, runs: usize) -> Result<BenchReport> {
    if runs == 0 {
        return Err(SabrError::domain("runs must be at least 1"));
    }
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        price_smile_symmetry(params, VariableSet::zx(), spec, params.forward, strikes)?;
        times.push(ms(t));
    }
    let grid = symmetry_grid(params, VariableSet::zx(), spec, params.forward, strikes)?;
    let coefs = decompose(&grid, &PayoffSpec::put(params.forward).with_taper(0.1))?;
    let half = (grid.n_v() / 2) as i32;
    let needed = coefs.into_iter().filter(|(m, _)| *m >= 0 || *m == -half).collect();
    let best_of = |f: &dyn Fn() -> Result<()>| -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            f()?;
            best = best.min(ms(t));
        }
        Ok(best)
    };
    let sequential_ms = best_of(&|| solve_sequential(&grid, &needed).map(drop))?;
    let parallel_ms = best_of(&|| solve_batch(&grid, &needed).map(drop))?;
    Ok(BenchReport {
        first_ms: times[0],
        median_ms: median(times.clone()),
        runs,
        sequential_ms,
        parallel_ms,
        threads: rayon::current_num_threads(),
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<String> {
    let set = lookup_params(&a.params)?;
    let strikes = {
        let ks = fixtures::table_strikes(&a.params);
        if ks.is_empty() {
            vec![set.params.forward]
        } else {
            ks
        }
    };
    let spec = a.grid.spec(false)?;
    // Warm up before timing.
    price_smile_symmetry(&set.params, VariableSet::zx(), &spec, set.params.forward, &strikes)?;
    let r = bench(&set.params, &strikes, &spec, a.runs)?;
    let mut s = String::new();
    let _ = writeln!(s, "smile: {} ({} strikes), grid {}x{}x{}", a.params, strikes.len(), spec.n_t, spec.n_u, spec.n_v);
    let _ = writeln!(s, "single run: {:.2} ms", r.first_ms);
    let _ = writeln!(s, "median of {}: {:.2} ms", r.runs, r.median_ms);
    let _ = writeln!(
        s,
        "mode solves: sequential {:.2} ms, parallel {:.2} ms, speedup {:.2}x on {} threads",
        r.sequential_ms,
        r.parallel_ms,
        r.sequential_ms / r.parallel_ms,
        r.threads
    );
    Ok(s)
}

fn cmd_list() -> String {
    let mut s = String::from("tables:\n");
    for id in fixtures::table_ids() {
        let _ = writeln!(s, "  {id}");
    }
    s.push_str("parameter sets:\n");
    for p in fixtures::param_sets() {
        let q = p.params;
        let _ = writeln!(
            s,
            "  {} alpha0={} beta={} nu={} rho={} forward={} expiry={}",
            p.id, q.alpha0, q.beta, q.nu, q.rho, q.forward, q.expiry
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strike_ranges() {
        let ks = parse_strikes("0.005:0.10:0.005").unwrap();
        assert_eq!(ks.len(), 20);
        assert!((ks[19] - 0.10).abs() < 1e-12);
        assert_eq!(parse_strikes("0.01, 0.02").unwrap(), vec![0.01, 0.02]);
        assert!(parse_strikes("0.1:0.05:0.01").is_err());
        assert!(parse_strikes("a,b").is_err());
    }

    #[test]
    fn config_expansion_puts_explicit_flags_last() {
        let dir = std::env::temp_dir().join(format!("sabr-sym-cfg-{}", std::process::id()));
        std::fs::write(&dir, "# defaults\nmethod = asymptotic\nn_t = 10\nantithetic = true\nseed=false\n").unwrap();
        let args: Vec<String> =
            ["sabr-sym", "--config", dir.to_str().unwrap(), "price", "--method", "pde-zx"].iter().map(|s| s.to_string()).collect();
        let out = expand_config(args).unwrap();
        let i = out.iter().position(|a| a == "price").unwrap();
        assert_eq!(&out[i + 1..i + 6], ["--method", "asymptotic", "--n-t", "10", "--antithetic"]);
        assert_eq!(out.last().unwrap(), "pde-zx");
        std::fs::remove_file(dir).ok();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(Outcome::Success)), 0);
        assert_eq!(exit_code(&Ok(Outcome::Mismatch)), 3);
        assert_eq!(exit_code(&Err(SabrError::domain("x"))), 1);
        assert_eq!(exit_code(&Err(SabrError::numerical("x"))), 2);
    }

    #[test]
    fn base_ids() {
        assert_eq!(base_id("calib-20071009-1y1y"), "20071009-1y1y");
        assert_eq!(base_id("20071009-1y1y-per-strike"), "20071009-1y1y");
        assert_eq!(base_id("analytic-limit"), "analytic-limit");
    }
}
