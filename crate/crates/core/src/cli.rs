//! `esqubo` command line: `backtest` and `dump-qubo`.
//!
//! Exit codes: 0 when every window converged, 2 when at least one did not,
//! 1 on any error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::allocator::{allocate_series, AllocationRecord, AllocatorConfig, AllocatorError, RHO_FLOOR};
use crate::config::{ConfigError, RunConfig, Settings};
use crate::encoding::{Encoding, EncodingError};
use crate::market_data::{load_returns, window_stats, windows, MarketDataError, ReturnsPanel, WindowSpec, DATE_FORMAT};
use crate::qubo::{build, default_penalties, QuboError};
use crate::risk::{RiskConfig, RiskError};
use crate::solver::SolverSettings;

pub const RESULTS_JSON: &str = "allocations.json";
pub const RESULTS_CSV: &str = "allocations.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input: {0}")]
    MarketData(#[from] MarketDataError),
    #[error("baseline: {0}")]
    Baseline(String),
    #[error(transparent)]
    Allocator(#[from] AllocatorError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("window-index: {index} is out of range ({count} windows)")]
    BadWindow { index: usize, count: usize },
    #[error("output: {0}")]
    Output(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "esqubo", version, about = "Expected-Shortfall-targeted allocation via QUBO compilation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the allocation loop over every rolling window and write results.
    Backtest(ConfigArgs),
    /// Print one window's QUBO in the JSON interchange format.
    DumpQubo {
        #[command(flatten)]
        args: ConfigArgs,
        /// Zero-based window index.
        #[arg(long)]
        window_index: usize,
        /// Return target; defaults to the loop's starting value for that window.
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// key = value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV of per-period returns with a leading date column.
    #[arg(long)]
    pub input: Option<String>,
    /// Benchmark column name.
    #[arg(long)]
    pub benchmark: Option<String>,
    /// First date of the baseline period (YYYY-MM-DD).
    #[arg(long)]
    pub baseline_start: Option<String>,
    /// Last date of the baseline period (YYYY-MM-DD).
    #[arg(long)]
    pub baseline_end: Option<String>,
    /// ES tail probability [default: 0.01].
    #[arg(long)]
    pub alpha: Option<String>,
    /// Bits per weight [default: 4].
    #[arg(long)]
    pub bits: Option<String>,
    /// Window length in periods [default: 252].
    #[arg(long)]
    pub window: Option<String>,
    /// Periods between window starts [default: 21].
    #[arg(long)]
    pub stride: Option<String>,
    /// Relative convergence tolerance [default: 0.05].
    #[arg(long)]
    pub eta: Option<String>,
    /// Relative return-target step [default: 0.05].
    #[arg(long)]
    pub rho_step: Option<String>,
    /// Iteration cap per window [default: 60].
    #[arg(long)]
    pub max_iters: Option<String>,
    /// Solver backend: exhaustive|annealing|auto [default: auto].
    #[arg(long)]
    pub backend: Option<String>,
    /// Annealing seed [default: 42].
    #[arg(long)]
    pub seed: Option<String>,
    /// Annealing restarts [default: 20].
    #[arg(long)]
    pub reads: Option<String>,
    /// Annealing sweeps per restart [default: 200].
    #[arg(long)]
    pub sweeps: Option<String>,
    /// Output directory [default: results].
    #[arg(long)]
    pub out: Option<String>,
    /// Fixed budget penalty instead of the automatic scale.
    #[arg(long)]
    pub penalty_budget: Option<String>,
    /// Fixed return penalty instead of the automatic scale.
    #[arg(long)]
    pub penalty_return: Option<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut settings = match &self.config {
            Some(path) => Settings::parse(&fs::read_to_string(path).map_err(io_err(path))?)?,
            None => Settings::new(),
        };
        let flags = [
            ("input", &self.input),
            ("benchmark", &self.benchmark),
            ("baseline_start", &self.baseline_start),
            ("baseline_end", &self.baseline_end),
            ("alpha", &self.alpha),
            ("bits", &self.bits),
            ("window", &self.window),
            ("stride", &self.stride),
            ("eta", &self.eta),
            ("rho_step", &self.rho_step),
            ("max_iters", &self.max_iters),
            ("backend", &self.backend),
            ("seed", &self.seed),
            ("reads", &self.reads),
            ("sweeps", &self.sweeps),
            ("out", &self.out),
            ("penalty_budget", &self.penalty_budget),
            ("penalty_return", &self.penalty_return),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                settings.set(key, v)?;
            }
        }
        Ok(settings.into_config()?)
    }
}

pub fn load_panel(config: &RunConfig) -> Result<ReturnsPanel, CliError> {
    let file = fs::File::open(&config.input).map_err(io_err(&config.input))?;
    Ok(load_returns(std::io::BufReader::new(file), &config.benchmark)?)
}

/// Freezes benchmark volatility and ES over the configured baseline dates.
pub fn baseline_risk(panel: &ReturnsPanel, config: &RunConfig) -> Result<RiskConfig, CliError> {
    let (start, end) = match (config.baseline_start, config.baseline_end) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(CliError::Baseline(
                "baseline-start and baseline-end are required".into(),
            ))
        }
    };
    let first = panel.dates()[0];
    let last = panel.dates()[panel.n_periods() - 1];
    if start < first || end > last {
        return Err(CliError::Baseline(format!(
            "baseline range {start}..{end} lies outside the data range {first}..{last}"
        )));
    }
    let range = panel.date_range(start, end);
    if range.len() < 2 {
        return Err(CliError::Baseline(format!(
            "baseline range {start}..{end} covers {} periods, need at least 2",
            range.len()
        )));
    }
    RiskConfig::from_baseline(panel.benchmark_returns(range), config.alpha).map_err(|e| match e {
        RiskError::BadBaselineEs(v) => CliError::Baseline(format!(
            "benchmark ES over the baseline range is {v}; it must be negative (a loss)"
        )),
        RiskError::BadBaselineSigma(v) => {
            CliError::Baseline(format!("benchmark volatility over the baseline range is {v}"))
        }
        other => CliError::Baseline(other.to_string()),
    })
}

pub fn allocator_config(config: &RunConfig, risk: RiskConfig) -> AllocatorConfig {
    AllocatorConfig {
        eta: config.eta,
        rho_step: config.rho_step,
        max_iters: config.max_iters,
        bits_per_weight: config.bits,
        solver: SolverSettings {
            backend: config.backend,
            seed: config.seed,
            num_reads: config.reads,
            sweeps: config.sweeps,
        },
        risk,
        penalties: config.penalties(),
    }
}

#[derive(Debug, Serialize)]
struct WindowReport<'a> {
    start_date: String,
    end_date: String,
    #[serde(flatten)]
    record: &'a AllocationRecord,
}

#[derive(Debug, Serialize)]
struct ResultsReport<'a> {
    assets: &'a [String],
    benchmark: &'a str,
    risk: RiskConfig,
    eta: f64,
    rho_step: f64,
    max_iters: usize,
    bits_per_weight: usize,
    solver: SolverSettings,
    window_length: usize,
    window_stride: usize,
    windows: Vec<WindowReport<'a>>,
}

/// In-memory results of a backtest, ready to be written.
#[derive(Debug, Clone)]
pub struct BacktestOutput {
    pub records: Vec<AllocationRecord>,
    pub json: String,
    pub csv: String,
}

impl BacktestOutput {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

fn date_at(panel: &ReturnsPanel, k: usize) -> String {
    panel.dates()[k].format(DATE_FORMAT).to_string()
}

/// Loads data, runs every window and renders JSON and CSV. Nothing is written.
pub fn run_backtest(config: &RunConfig) -> Result<BacktestOutput, CliError> {
    let panel = load_panel(config)?;
    let risk = baseline_risk(&panel, config)?;
    let alloc = allocator_config(config, risk);
    let spec = WindowSpec {
        length: config.window,
        stride: config.stride,
    };
    let records = allocate_series(&panel, spec, &alloc)?;

    let report = ResultsReport {
        assets: panel.asset_ids(),
        benchmark: panel.benchmark_id(),
        risk,
        eta: alloc.eta,
        rho_step: alloc.rho_step,
        max_iters: alloc.max_iters,
        bits_per_weight: alloc.bits_per_weight,
        solver: alloc.solver,
        window_length: spec.length,
        window_stride: spec.stride,
        windows: records
            .iter()
            .map(|record| WindowReport {
                start_date: date_at(&panel, record.start),
                end_date: date_at(&panel, record.end - 1),
                record,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Output(e.to_string()))? + "\n";
    let csv = render_csv(&panel, &records)?;
    Ok(BacktestOutput { records, json, csv })
}

/// One row per window: index, dates, N weights, cash, ES pair, flag, iteration count.
pub fn render_csv(panel: &ReturnsPanel, records: &[AllocationRecord]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["window_index".to_string(), "start_date".into(), "end_date".into()];
    header.extend(panel.asset_ids().iter().map(|id| format!("w_{id}")));
    header.extend(
        ["cash_weight", "realized_es", "target_es", "converged", "iterations"]
            .iter()
            .map(|s| s.to_string()),
    );
    let out = |e: csv::Error| CliError::Output(e.to_string());
    writer.write_record(&header).map_err(out)?;
    for r in records {
        let mut row = vec![
            r.window_index.to_string(),
            date_at(panel, r.start),
            date_at(panel, r.end - 1),
        ];
        row.extend(r.weights.iter().map(f64::to_string));
        row.push(r.cash_weight.to_string());
        row.push(r.realized_es.to_string());
        row.push(r.target_es.to_string());
        row.push(r.converged.to_string());
        row.push(r.iterations().to_string());
        writer.write_record(&row).map_err(out)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

/// Writes both result files into `dir`, each via a temporary file and rename.
pub fn write_outputs(dir: &Path, output: &BacktestOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = [(RESULTS_JSON, &output.json), (RESULTS_CSV, &output.csv)];
    for (name, body) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(body.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    for (name, _) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let dest = dir.join(name);
        fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
    }
    Ok(())
}

/// QUBO JSON for one window at return target `rho` (default: the loop's starting target).
pub fn dump_qubo(config: &RunConfig, window_index: usize, rho: Option<f64>) -> Result<String, CliError> {
    let panel = load_panel(config)?;
    let spec = WindowSpec {
        length: config.window,
        stride: config.stride,
    };
    let all = windows(&panel, spec)?;
    let window = all.get(window_index).ok_or(CliError::BadWindow {
        index: window_index,
        count: all.len(),
    })?;
    let stats = window_stats(&panel, window.range(), window.index)?;
    let rho = rho.unwrap_or_else(|| {
        let mean = stats.mu.iter().sum::<f64>() / stats.mu.len() as f64;
        if mean <= 0.0 {
            RHO_FLOOR
        } else {
            mean
        }
    });
    let (budget, ret) = config
        .penalties()
        .unwrap_or_else(|| default_penalties(&stats.cov, &stats.mu, rho));
    let enc = Encoding::new(panel.n_assets(), config.bits)?;
    let problem = build(&enc, &stats.cov, &stats.mu, rho, budget, ret)?;
    Ok(problem.to_json().to_string_pretty() + "\n")
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Backtest(args) => {
            let config = args.resolve()?;
            if args.print_config {
                print!("{}", config.to_config_text());
                return Ok(0);
            }
            let output = run_backtest(&config)?;
            write_outputs(&config.out, &output)?;
            let failed = output.records.iter().filter(|r| !r.converged).count();
            eprintln!(
                "{} windows, {} converged; results in {}",
                output.records.len(),
                output.records.len() - failed,
                config.out.display()
            );
            Ok(if failed == 0 { 0 } else { 2 })
        }
        Command::DumpQubo { args, window_index, rho } => {
            let config = args.resolve()?;
            if args.print_config {
                print!("{}", config.to_config_text());
                return Ok(0);
            }
            print!("{}", dump_qubo(&config, *window_index, *rho)?);
            Ok(0)
        }
    }
}
