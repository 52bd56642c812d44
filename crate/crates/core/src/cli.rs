//! Command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.

use crate::dataset::{load_csv, Dataset, LoadOptions};
use crate::error::{Error, Result};
use crate::inference::pairwise_bootstrap_vec;
use crate::matching::{match_observations, match_observations_raw, write_match_csv};
use crate::output::{self, EstimateRecord, Inference};
use crate::process::{paired_grid_size, QuantileGrid};
use crate::rif::{rif_uqpe, RifVariant};
use crate::simulation::{
    run_experiment, write_coverage_csv, write_table_csv, CoverageOptions, EstimatorSpec, ExperimentConfig, Scenario,
};
use crate::smoothing::{bandwidth, BandwidthRule};
use crate::uqpe::{Method, Prepared};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "uqpe",
    version,
    about = "Unconditional quantile partial effects via conditional quantile regression"
)]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "UQPE_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate effects at each level with bootstrap intervals.
    Estimate(EstimateArgs),
    /// Monte Carlo bias/variance/MSE tables or bootstrap coverage.
    Simulate(SimulateArgs),
    /// Export the matched level and slope of every observation.
    Match(MatchArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Covariate whose effect is estimated.
    #[arg(long)]
    pub target: String,
    /// Additional covariates (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// Skip rows with missing values instead of failing.
    #[arg(long)]
    pub drop_na: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Nw,
    LocalLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Levels (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9")]
    pub tau: Vec<f64>,
    /// Grid size m; defaults to the size paired with the sample size.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Bandwidth exponent a in h = c sd(y) n^(-a).
    #[arg(long, default_value_t = 0.2)]
    pub bandwidth_exponent: f64,
    /// Bandwidth constant c.
    #[arg(long, default_value_t = 0.9)]
    pub bandwidth_constant: f64,
    /// Second-stage smoothers (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "nw")]
    pub method: Vec<MethodArg>,
    /// Report a0 + a1 q from the local-linear fit instead of its intercept.
    #[arg(long)]
    pub ll_literal: bool,
    /// RIF-OLS polynomial degrees to add (comma separated, 1-3).
    #[arg(long, value_delimiter = ',')]
    pub rif_ols: Vec<usize>,
    /// Add the RIF-Logit estimator.
    #[arg(long)]
    pub rif_logit: bool,
    /// Bootstrap replications (0 disables inference).
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    /// Root seed of the bootstrap resampling streams.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Confidence intervals have level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Output file (stdout when absent).
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// One of loc-normal, locscale-normal, locscale-chi2, locscale-normal-w, locscale-normal-wcorr.
    #[arg(long, default_value = "loc-normal")]
    pub dgp: String,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "250,500,2500")]
    pub n: Vec<usize>,
    /// Monte Carlo replications per sample size.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Root seed; replication and bootstrap streams derive from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9")]
    pub tau: Vec<f64>,
    /// Grid size override; defaults to the size paired with each n.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Run NW under bandwidth exponents 1/4, 1/5 and 1/6.
    #[arg(long)]
    pub sweep_bandwidth: bool,
    /// Also run the local-linear smoother.
    #[arg(long)]
    pub local_linear: bool,
    /// Skip the RIF baselines.
    #[arg(long)]
    pub no_rif: bool,
    /// Bootstrap NW at each replication and report interval coverage.
    #[arg(long)]
    pub coverage: bool,
    /// Bootstrap replications in coverage mode.
    #[arg(long = "B", default_value_t = 100)]
    pub b: usize,
    /// Confidence intervals have level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// csv writes the table layout; json writes the full report.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Levels (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub tau: Vec<f64>,
    /// Grid size m; defaults to the size paired with the sample size.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Match on raw (unrearranged) curves, lowest bracket first.
    #[arg(long)]
    pub raw: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

/// Parse, run, and map the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let outcome = if cli.threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
        }
    } else {
        dispatch(&cli.command)
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Match(a) => cmd_match(a),
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load(args: &DataArgs) -> Result<Dataset> {
    load_csv(
        &args.data,
        &args.outcome,
        &args.target,
        &args.controls,
        LoadOptions { drop_na: args.drop_na },
    )
    .map_err(|e| e.at_stage("load"))
}

fn grid_for(requested: Option<usize>, n: usize) -> Result<QuantileGrid> {
    QuantileGrid::uniform(requested.unwrap_or_else(|| paired_grid_size(n)))
}

#[derive(Debug, Serialize)]
struct EstimateConfig<'a> {
    version: &'static str,
    #[serde(flatten)]
    args: &'a EstimateArgs,
    n: usize,
    grid_m: usize,
    methods: Vec<Method>,
    rif_variants: Vec<RifVariant>,
}

/// Every requested estimator at every level, in output order.
fn all_estimates(
    data: &Dataset,
    taus: &[f64],
    grid: &QuantileGrid,
    rule: &BandwidthRule,
    methods: &[Method],
    variants: &[RifVariant],
) -> Result<Vec<EstimateRecord>> {
    let mut records = Vec::new();
    if !methods.is_empty() {
        let prep = Prepared::new(data, grid, rule)?;
        for &m in methods {
            for &t in taus {
                records.push(EstimateRecord::from(&prep.estimate(data, t, m)?));
            }
        }
    }
    if !variants.is_empty() {
        let h = bandwidth(rule, data.y()).map_err(|e| e.at_stage("bandwidth"))?;
        for &v in variants {
            for &t in taus {
                let e = rif_uqpe(data, t, v, h).map_err(|e| e.at_stage("rif"))?;
                records.push(EstimateRecord::from(&e));
            }
        }
    }
    Ok(records)
}

fn check_taus(taus: &[f64]) -> Result<Vec<f64>> {
    if taus.is_empty() {
        return Err(Error::EmptyInput("tau list"));
    }
    for &t in taus {
        crate::error::check_level("tau", t)?;
    }
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let taus = check_taus(&args.tau)?;
    let rule = BandwidthRule::new(args.bandwidth_constant, args.bandwidth_exponent)?;
    crate::error::check_level("alpha", args.alpha)?;
    if args.bootstrap == 1 {
        return Err(Error::InvalidArgument("--bootstrap must be 0 or at least 2".into()));
    }
    let methods: Vec<Method> = args
        .method
        .iter()
        .map(|m| match m {
            MethodArg::Nw => Method::Nw,
            MethodArg::LocalLinear if args.ll_literal => Method::LocalLinearLiteral,
            MethodArg::LocalLinear => Method::LocalLinear,
        })
        .collect();
    let mut variants = args
        .rif_ols
        .iter()
        .map(|&d| RifVariant::ols_degree(d))
        .collect::<Result<Vec<_>>>()?;
    if args.rif_logit {
        variants.push(RifVariant::Logit);
    }
    let data = load(&args.data)?;
    let grid = grid_for(args.grid, data.n())?;
    log::info!("n = {}, grid m = {}", data.n(), grid.m());

    let mut records = all_estimates(&data, &taus, &grid, &rule, &methods, &variants)?;
    if args.bootstrap >= 2 {
        log::info!("bootstrap with {} replications", args.bootstrap);
        let stat = |d: &Dataset| -> Result<Vec<f64>> {
            Ok(all_estimates(d, &taus, &grid, &rule, &methods, &variants)?
                .iter()
                .map(|r| r.estimate)
                .collect())
        };
        let boot = pairwise_bootstrap_vec(&data, stat, args.bootstrap, args.seed, args.alpha)
            .map_err(|e| e.at_stage("bootstrap"))?;
        for (r, b) in records.iter_mut().zip(&boot) {
            r.inference = Some(Inference::from(b));
        }
    }

    let config = EstimateConfig {
        version: env!("CARGO_PKG_VERSION"),
        args,
        n: data.n(),
        grid_m: grid.m(),
        methods,
        rif_variants: variants,
    };
    let out = open_output(&args.output)?;
    match args.format {
        Format::Json => output::write_json(&config, &records, out),
        Format::Csv => output::write_csv(&config, &records, out),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let taus = check_taus(&args.tau)?;
    if args.n.is_empty() {
        return Err(Error::EmptyInput("sample size list"));
    }
    let scenarios = args
        .n
        .iter()
        .map(|&n| Scenario::from_name(&args.dgp, n))
        .collect::<Result<Vec<_>>>()?;
    let mut estimators = Vec::new();
    if args.coverage {
        // coverage mode bootstraps NW only
    } else if args.sweep_bandwidth {
        estimators.extend([4, 5, 6].map(EstimatorSpec::nw_exponent));
    } else {
        estimators.push(EstimatorSpec::nw());
    }
    if !args.coverage {
        if args.local_linear {
            estimators.push(EstimatorSpec::uqpe(Method::LocalLinear, BandwidthRule::default()));
        }
        if !args.no_rif {
            estimators.push(EstimatorSpec::rif(RifVariant::OlsCubic));
            estimators.push(EstimatorSpec::rif(RifVariant::Logit));
        }
    }
    let config = ExperimentConfig {
        scenarios,
        estimators,
        taus,
        reps: args.reps,
        seed: args.seed,
        grid_m: args.grid,
        coverage: args.coverage.then_some(CoverageOptions {
            b: args.b,
            alpha: args.alpha,
        }),
    };
    let report = run_experiment(&config)?;
    let mut out = open_output(&args.output)?;
    match (args.format, args.coverage) {
        (Format::Json, _) => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            Ok(())
        }
        (Format::Csv, true) => write_coverage_csv(&report, out),
        (Format::Csv, false) => write_table_csv(&report, out),
    }
}

#[derive(Debug, Serialize)]
struct MatchConfig<'a> {
    version: &'static str,
    #[serde(flatten)]
    args: &'a MatchArgs,
    n: usize,
    grid_m: usize,
}

pub fn cmd_match(args: &MatchArgs) -> Result<()> {
    let taus = check_taus(&args.tau)?;
    let data = load(&args.data)?;
    let grid = grid_for(args.grid, data.n())?;
    let fit = crate::process::fit_process(&data, &grid).map_err(|e| e.at_stage("qr process"))?;
    let results = taus
        .iter()
        .map(|&t| {
            if args.raw {
                match_observations_raw(&fit, &data, t)
            } else {
                match_observations(&fit, &data, t)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("matching"))?;
    let config = MatchConfig {
        version: env!("CARGO_PKG_VERSION"),
        args,
        n: data.n(),
        grid_m: grid.m(),
    };
    let mut out = open_output(&args.output)?;
    writeln!(out, "# config: {}", serde_json::to_string(&config)?)?;
    write_match_csv(&results, data.target(), out)
}
