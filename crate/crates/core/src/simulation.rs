//! Data generating processes, the ground-truth oracle and the Monte Carlo
//! experiment runner.

use crate::dataset::Dataset;
use crate::dist::ErrorDist;
use crate::error::{check_level, Error, Result};
use crate::inference::pairwise_bootstrap_vec;
use crate::process::{paired_grid_size, QuantileGrid};
use crate::rif::{rif_uqpe, RifVariant};
use crate::rng::{child_seed, derive_seed, stream};
use crate::smoothing::{bandwidth, BandwidthRule};
use crate::uqpe::{Method, Prepared};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtraCovariate {
    #[default]
    None,
    /// `w ~ N(10, 1)` independent of `x`.
    Independent,
    /// `w = 10 + (x + z - 20) / sqrt(2)` with `z ~ N(10, 1)`.
    Correlated,
}

/// A DGP design without a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub theta: f64,
    pub u_dist: ErrorDist,
    pub extra_covariate: ExtraCovariate,
    pub n: usize,
}

impl Scenario {
    pub const NAMES: [&'static str; 5] = [
        "loc-normal",
        "locscale-normal",
        "locscale-chi2",
        "locscale-normal-w",
        "locscale-normal-wcorr",
    ];

    pub fn from_name(name: &str, n: usize) -> Result<Self> {
        let (theta, u_dist, extra_covariate) = match name {
            "loc-normal" => (0.0, ErrorDist::Normal, ExtraCovariate::None),
            "locscale-normal" => (1.0, ErrorDist::Normal, ExtraCovariate::None),
            "locscale-chi2" => (1.0, ErrorDist::Chi2Standardized, ExtraCovariate::None),
            "locscale-normal-w" => (1.0, ErrorDist::Normal, ExtraCovariate::Independent),
            "locscale-normal-wcorr" => (1.0, ErrorDist::Normal, ExtraCovariate::Correlated),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown DGP `{other}`; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(Scenario {
            theta,
            u_dist,
            extra_covariate,
            n,
        })
    }

    pub fn with_seed(&self, seed: u64) -> DgpSpec {
        DgpSpec {
            theta: self.theta,
            u_dist: self.u_dist,
            extra_covariate: self.extra_covariate,
            n: self.n,
            seed,
        }
    }
}

/// `y = 1 + [w +] x + (1 + theta x) u`, `x ~ N(10, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub theta: f64,
    pub u_dist: ErrorDist,
    pub extra_covariate: ExtraCovariate,
    pub n: usize,
    pub seed: u64,
}

/// One draw of `(w, x, u)`; `w` is NaN without an extra covariate.
fn draw_unit<R: Rng + ?Sized>(rng: &mut R, u_dist: ErrorDist, extra: ExtraCovariate) -> (f64, f64, f64) {
    let x = 10.0 + rng.sample::<f64, _>(StandardNormal);
    let w = match extra {
        ExtraCovariate::None => f64::NAN,
        ExtraCovariate::Independent => 10.0 + rng.sample::<f64, _>(StandardNormal),
        ExtraCovariate::Correlated => {
            let z = 10.0 + rng.sample::<f64, _>(StandardNormal);
            10.0 + (x + z - 20.0) / std::f64::consts::SQRT_2
        }
    };
    let u = u_dist.sample(rng);
    (w, x, u)
}

fn outcome(theta: f64, w: f64, x: f64, u: f64) -> f64 {
    let shift = if w.is_nan() { 0.0 } else { w };
    1.0 + shift + x + (1.0 + theta * x) * u
}

pub fn draw_dgp(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n < 10 {
        return Err(Error::InvalidArgument(format!("DGP needs n >= 10, got {}", spec.n)));
    }
    let mut rng = stream(spec.seed);
    let mut xs = Vec::with_capacity(spec.n);
    let mut ws = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (w, x, u) = draw_unit(&mut rng, spec.u_dist, spec.extra_covariate);
        xs.push(x);
        ws.push(w);
        ys.push(outcome(spec.theta, w, x, u));
    }
    let controls = match spec.extra_covariate {
        ExtraCovariate::None => vec![],
        _ => vec![("w", ws)],
    };
    Dataset::from_columns(("y", ys), ("x", xs), controls)
}

/// Band oracle settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub draws: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            draws: 10_000_000,
            seed: 0x5EED_0AC1E,
        }
    }
}

const ORACLE_CHUNK: usize = 100_000;

/// Exact UQPE of `x` for the design in `spec` (its `n` and `seed` are ignored).
///
/// For `theta = 0` the conditional slope is 1 at every level, so the answer is
/// exactly 1. Otherwise the conditional mean of the matched slope
/// `1 + theta Q_U(xi_tau(x, w))` given `Y` in shrinking bands around the
/// population quantile is extrapolated with Richardson steps; results are
/// cached per design and level.
pub fn true_uqpe(spec: &DgpSpec, tau: f64) -> Result<f64> {
    check_level("tau", tau)?;
    if spec.theta == 0.0 {
        return Ok(1.0);
    }
    type Key = (u64, ErrorDist, ExtraCovariate, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    let key = (spec.theta.to_bits(), spec.u_dist, spec.extra_covariate, tau.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("oracle cache poisoned").get(&key) {
        return Ok(*v);
    }
    let v = true_uqpe_with(spec, tau, &OracleOptions::default())?;
    cache.lock().expect("oracle cache poisoned").insert(key, v);
    Ok(v)
}

/// Uncached band oracle.
pub fn true_uqpe_with(spec: &DgpSpec, tau: f64, opts: &OracleOptions) -> Result<f64> {
    check_level("tau", tau)?;
    if spec.theta == 0.0 {
        return Ok(1.0);
    }
    let chunks = opts.draws.div_ceil(ORACLE_CHUNK);
    let chunk_len = |c: usize| ORACLE_CHUNK.min(opts.draws - c * ORACLE_CHUNK);
    let (theta, u_dist, extra) = (spec.theta, spec.u_dist, spec.extra_covariate);

    // pass 1: outcomes only, for the quantile and the scale
    let mut y: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(child_seed(opts.seed, c as u64));
            (0..chunk_len(c))
                .map(|_| {
                    let (w, x, u) = draw_unit(&mut rng, u_dist, extra);
                    outcome(theta, w, x, u)
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat();
    let sd = crate::smoothing::sample_sd(&y);
    let q = crate::qr::unconditional_quantile(&y, tau)?;
    drop(std::mem::take(&mut y));

    // pass 2: regenerate the same draws and accumulate band sums
    let widths = [0.04 * sd, 0.02 * sd, 0.01 * sd];
    let lower = u_dist.quantile(0.0);
    let partial: Vec<Result<[(f64, usize); 3]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(child_seed(opts.seed, c as u64));
            let mut acc = [(0.0, 0usize); 3];
            for _ in 0..chunk_len(c) {
                let (w, x, u) = draw_unit(&mut rng, u_dist, extra);
                let yi = outcome(theta, w, x, u);
                let gap = (yi - q).abs();
                if gap > widths[0] {
                    continue;
                }
                let scale = 1.0 + theta * x;
                if scale <= 0.0 {
                    return Err(Error::ScaleNonPositive(scale));
                }
                let shift = if w.is_nan() { 0.0 } else { w };
                // Q_U(F_U(t)) = t on the support of U
                let t = ((q - 1.0 - shift - x) / scale).max(lower);
                let slope = 1.0 + theta * t;
                for (k, width) in widths.iter().enumerate() {
                    if gap <= *width {
                        acc[k].0 += slope;
                        acc[k].1 += 1;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut sums = [(0.0, 0usize); 3];
    for p in partial {
        for (s, a) in sums.iter_mut().zip(p?) {
            s.0 += a.0;
            s.1 += a.1;
        }
    }
    if sums.iter().any(|s| s.1 == 0) {
        return Err(Error::OracleNotConverged(f64::INFINITY));
    }
    let m: Vec<f64> = sums.iter().map(|s| s.0 / s.1 as f64).collect();
    let r12 = (4.0 * m[1] - m[0]) / 3.0;
    let r23 = (4.0 * m[2] - m[1]) / 3.0;
    let sensitivity = (r23 - r12).abs();
    if sensitivity > 0.005 {
        return Err(Error::OracleNotConverged(sensitivity));
    }
    Ok(r23)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Uqpe { method: Method, rule: BandwidthRule },
    Rif { variant: RifVariant },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub label: String,
    #[serde(flatten)]
    pub kind: EstimatorKind,
}

impl EstimatorSpec {
    pub fn uqpe(method: Method, rule: BandwidthRule) -> Self {
        EstimatorSpec {
            label: method.name().to_string(),
            kind: EstimatorKind::Uqpe { method, rule },
        }
    }

    pub fn nw() -> Self {
        Self::uqpe(Method::Nw, BandwidthRule::default())
    }

    /// NW under `0.9 sd n^(-exponent)`, labelled by the exponent.
    pub fn nw_exponent(denominator: u32) -> Self {
        EstimatorSpec {
            label: format!("nw-n^-1/{denominator}"),
            kind: EstimatorKind::Uqpe {
                method: Method::Nw,
                rule: BandwidthRule {
                    constant: 0.9,
                    exponent: 1.0 / denominator as f64,
                },
            },
        }
    }

    pub fn rif(variant: RifVariant) -> Self {
        EstimatorSpec {
            label: format!("rif-{}", variant.name()),
            kind: EstimatorKind::Rif { variant },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageOptions {
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions { b: 100, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<Scenario>,
    pub estimators: Vec<EstimatorSpec>,
    pub taus: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    /// Grid size override; defaults to the size paired with each `n`.
    pub grid_m: Option<usize>,
    /// Bootstrap NW at every replication and record interval coverage.
    pub coverage: Option<CoverageOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub estimator: String,
    pub theta: f64,
    pub u_dist: ErrorDist,
    pub extra_covariate: ExtraCovariate,
    pub tau: f64,
    pub n: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub theta: f64,
    pub u_dist: ErrorDist,
    pub extra_covariate: ExtraCovariate,
    pub tau: f64,
    pub n: usize,
    pub truth: f64,
    pub gaussian: f64,
    pub percentile: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub coverage: Vec<CoverageCell>,
}

impl SimulationReport {
    pub fn cell(&self, estimator: &str, tau: f64, n: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.tau == tau && c.n == n)
    }

    pub fn coverage_cell(&self, tau: f64, n: usize) -> Option<&CoverageCell> {
        self.coverage.iter().find(|c| c.tau == tau && c.n == n)
    }
}

struct RepOutcome {
    /// `[estimator][tau]`.
    values: Vec<Vec<Option<f64>>>,
    /// Per tau: (gaussian covers, percentile covers).
    coverage: Option<Vec<Option<(bool, bool)>>>,
}

fn grid_for(config: &ExperimentConfig, n: usize) -> Result<QuantileGrid> {
    QuantileGrid::uniform(config.grid_m.unwrap_or_else(|| paired_grid_size(n)))
}

fn run_rep(
    config: &ExperimentConfig,
    scenario: &Scenario,
    scenario_index: usize,
    rep: usize,
    truths: &[f64],
) -> Result<RepOutcome> {
    let seed = derive_seed(config.seed, &[scenario_index as u64, rep as u64]);
    let data = draw_dgp(&scenario.with_seed(seed))?;
    let grid = grid_for(config, scenario.n)?;
    let taus = &config.taus;
    let needs_process = config
        .estimators
        .iter()
        .any(|e| matches!(e.kind, EstimatorKind::Uqpe { .. }));
    let default_rule = BandwidthRule::default();

    // shared stages; a failure here fails every UQPE cell of the replication
    let shared = if needs_process {
        match Prepared::new(&data, &grid, &default_rule) {
            Ok(p) => {
                let matched: Vec<_> = taus.iter().map(|&t| p.matching(&data, t).ok()).collect();
                Some((p, matched))
            }
            Err(e) => {
                log::debug!("replication {rep}: {e}");
                None
            }
        }
    } else {
        None
    };
    let default_h = bandwidth(&default_rule, data.y()).ok();

    let values = config
        .estimators
        .iter()
        .map(|est| {
            taus.iter()
                .enumerate()
                .map(|(k, &tau)| match &est.kind {
                    EstimatorKind::Uqpe { method, rule } => {
                        let (prep, matched) = shared.as_ref()?;
                        let m = matched[k].as_ref()?;
                        let h = bandwidth(rule, data.y()).ok()?;
                        prep.estimate_matched_with(&data, m, *method, h)
                            .ok()
                            .map(|e| e.estimate)
                    }
                    EstimatorKind::Rif { variant } => {
                        rif_uqpe(&data, tau, *variant, default_h?).ok().map(|e| e.estimate)
                    }
                })
                .collect()
        })
        .collect();

    let coverage = config.coverage.map(|cov| {
        let stat = |d: &Dataset| -> Result<Vec<f64>> {
            let p = Prepared::new(d, &grid, &default_rule)?;
            taus.iter()
                .map(|&t| p.estimate(d, t, Method::Nw).map(|e| e.estimate))
                .collect()
        };
        match pairwise_bootstrap_vec(&data, stat, cov.b, derive_seed(seed, &[1]), cov.alpha) {
            Ok(results) => results
                .iter()
                .zip(truths)
                .map(|(r, &t)| {
                    Some((
                        r.gaussian_ci.0 <= t && t <= r.gaussian_ci.1,
                        r.percentile_ci.0 <= t && t <= r.percentile_ci.1,
                    ))
                })
                .collect(),
            Err(e) => {
                log::debug!("replication {rep} bootstrap: {e}");
                vec![None; taus.len()]
            }
        }
    });
    Ok(RepOutcome { values, coverage })
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    if config.reps < 2 {
        return Err(Error::InvalidArgument(format!(
            "reps must be at least 2, got {}",
            config.reps
        )));
    }
    if config.taus.is_empty() {
        return Err(Error::EmptyInput("tau list"));
    }
    for &t in &config.taus {
        check_level("tau", t)?;
    }
    if config.scenarios.is_empty() {
        return Err(Error::EmptyInput("scenario list"));
    }
    if config.estimators.is_empty() && config.coverage.is_none() {
        return Err(Error::EmptyInput("estimator list"));
    }
    for s in &config.scenarios {
        if s.n < 10 {
            return Err(Error::InvalidArgument(format!("DGP needs n >= 10, got {}", s.n)));
        }
        grid_for(config, s.n)?;
    }
    for e in &config.estimators {
        if let EstimatorKind::Uqpe { rule, .. } = &e.kind {
            rule.validate()?;
        }
    }
    if let Some(c) = &config.coverage {
        check_level("alpha", c.alpha)?;
        if c.b < 2 {
            return Err(Error::InvalidArgument(format!("bootstrap needs B >= 2, got {}", c.b)));
        }
    }
    Ok(())
}

/// Monte Carlo bias, variance and MSE of every estimator at every level, per scenario.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SimulationReport> {
    validate(config)?;
    let reps = config.reps;
    let max_failures = (0.01 * reps as f64).floor() as usize;
    let mut cells = Vec::new();
    let mut coverage = Vec::new();
    let mut invalid = Vec::new();

    for (si, scenario) in config.scenarios.iter().enumerate() {
        log::info!(
            "scenario theta={} u={:?} extra={:?} n={}: {reps} replications",
            scenario.theta,
            scenario.u_dist,
            scenario.extra_covariate,
            scenario.n
        );
        let spec = scenario.with_seed(0);
        let truths: Vec<f64> = config
            .taus
            .iter()
            .map(|&t| true_uqpe(&spec, t))
            .collect::<Result<_>>()?;
        let outcomes: Vec<RepOutcome> = (0..reps)
            .into_par_iter()
            .map(|r| run_rep(config, scenario, si, r, &truths))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_>>()?;

        for (ei, est) in config.estimators.iter().enumerate() {
            for (k, (&tau, &truth)) in config.taus.iter().zip(&truths).enumerate() {
                let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.values[ei][k]).collect();
                let failures = reps - vals.len();
                if failures > max_failures || vals.is_empty() {
                    invalid.push(format!(
                        "{} tau={tau} n={}: {failures} of {reps} failed",
                        est.label, scenario.n
                    ));
                }
                let r = vals.len().max(1) as f64;
                let mean = vals.iter().sum::<f64>() / r;
                let variance = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r;
                let mse = vals.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / r;
                cells.push(Cell {
                    estimator: est.label.clone(),
                    theta: scenario.theta,
                    u_dist: scenario.u_dist,
                    extra_covariate: scenario.extra_covariate,
                    tau,
                    n: scenario.n,
                    truth,
                    mean,
                    bias: mean - truth,
                    variance,
                    mse,
                    reps: vals.len(),
                    failures,
                });
            }
        }

        if config.coverage.is_some() {
            for (k, (&tau, &truth)) in config.taus.iter().zip(&truths).enumerate() {
                let hits: Vec<(bool, bool)> = outcomes
                    .iter()
                    .filter_map(|o| o.coverage.as_ref().and_then(|c| c[k]))
                    .collect();
                let failures = reps - hits.len();
                if failures > max_failures || hits.is_empty() {
                    invalid.push(format!(
                        "coverage tau={tau} n={}: {failures} of {reps} failed",
                        scenario.n
                    ));
                }
                let r = hits.len().max(1) as f64;
                coverage.push(CoverageCell {
                    theta: scenario.theta,
                    u_dist: scenario.u_dist,
                    extra_covariate: scenario.extra_covariate,
                    tau,
                    n: scenario.n,
                    truth,
                    gaussian: hits.iter().filter(|h| h.0).count() as f64 / r,
                    percentile: hits.iter().filter(|h| h.1).count() as f64 / r,
                    reps: hits.len(),
                    failures,
                });
            }
        }
    }
    if !invalid.is_empty() {
        return Err(Error::InvalidReport(invalid.join("; ")));
    }
    Ok(SimulationReport {
        config: config.clone(),
        cells,
        coverage,
    })
}

fn config_line<W: Write>(report: &SimulationReport, w: &mut W) -> Result<()> {
    writeln!(w, "# config: {}", serde_json::to_string(&report.config)?)?;
    Ok(())
}

/// `estimator,tau,n,bias,variance,mse` after a config comment line.
pub fn write_table_csv<W: Write>(report: &SimulationReport, mut writer: W) -> Result<()> {
    config_line(report, &mut writer)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimator", "tau", "n", "bias", "variance", "mse"])?;
    for c in &report.cells {
        w.write_record([
            c.estimator.clone(),
            c.tau.to_string(),
            c.n.to_string(),
            c.bias.to_string(),
            c.variance.to_string(),
            c.mse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `tau,n,gaussian,percentile` after a config comment line.
pub fn write_coverage_csv<W: Write>(report: &SimulationReport, mut writer: W) -> Result<()> {
    config_line(report, &mut writer)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "n", "gaussian", "percentile"])?;
    for c in &report.coverage {
        w.write_record([
            c.tau.to_string(),
            c.n.to_string(),
            c.gaussian.to_string(),
            c.percentile.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
    }

    #[test]
    fn location_dgp_marginal_moments() {
        let spec = Scenario::from_name("loc-normal", 100_000).unwrap().with_seed(1);
        let data = draw_dgp(&spec).unwrap();
        let (m, v) = moments(data.y());
        assert!((m - 11.0).abs() < 0.02, "{m}");
        assert!((v - 2.0).abs() < 0.02, "{v}");
        assert_eq!(data.column_names(), &["(intercept)".to_string(), "x".to_string()]);
        assert_eq!(data.outcome_name(), "y");
    }

    #[test]
    fn chi2_errors_are_standardized() {
        let mut rng = stream(2);
        let u: Vec<f64> = (0..100_000)
            .map(|_| ErrorDist::Chi2Standardized.sample(&mut rng))
            .collect();
        let (m, v) = moments(&u);
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.02, "{m} {v}");
    }

    #[test]
    fn correlated_covariate_design() {
        let spec = Scenario::from_name("locscale-normal-wcorr", 100_000)
            .unwrap()
            .with_seed(3);
        let data = draw_dgp(&spec).unwrap();
        assert_eq!(data.target_name(), "x");
        assert_eq!(data.column_names()[1], "w");
        let (x, w) = (data.target(), data.column(1));
        let (mx, vx) = moments(x);
        let (mw, vw) = moments(w);
        let cov = x.iter().zip(w).map(|(a, b)| (a - mx) * (b - mw)).sum::<f64>() / x.len() as f64;
        let corr = cov / (vx * vw).sqrt();
        assert!((corr - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "{corr}");
    }

    #[test]
    fn small_samples_and_unknown_names_are_rejected() {
        let spec = Scenario::from_name("loc-normal", 9).unwrap().with_seed(0);
        assert!(draw_dgp(&spec).is_err());
        assert!(Scenario::from_name("nope", 100).is_err());
    }

    #[test]
    fn location_truth_is_exactly_one() {
        let spec = Scenario::from_name("loc-normal", 100).unwrap().with_seed(0);
        for tau in [0.1, 0.5, 0.9] {
            assert_eq!(true_uqpe(&spec, tau).unwrap(), 1.0);
        }
    }

    #[test]
    fn heterogeneous_truth_varies_with_tau() {
        let spec = Scenario::from_name("locscale-normal", 100).unwrap().with_seed(0);
        let opts = OracleOptions {
            draws: 2_000_000,
            ..Default::default()
        };
        let lo = true_uqpe_with(&spec, 0.25, &opts).unwrap();
        let hi = true_uqpe_with(&spec, 0.75, &opts).unwrap();
        assert!(hi - lo > 0.5, "{lo} {hi}");
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            scenarios: vec![Scenario::from_name("loc-normal", 200).unwrap()],
            estimators: vec![EstimatorSpec::nw(), EstimatorSpec::rif(RifVariant::OlsCubic)],
            taus: vec![0.25, 0.5],
            reps: 4,
            seed: 11,
            grid_m: Some(9),
            coverage: None,
        }
    }

    #[test]
    fn mse_identity_and_layout() {
        let mut config = small_config();
        config.reps = 2;
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.cells.len(), 4);
        for c in &report.cells {
            assert!((c.mse - c.bias * c.bias - c.variance).abs() <= 1e-12);
            assert_eq!(c.reps, 2);
        }
        let mut buf = Vec::new();
        write_table_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config: {"));
        assert_eq!(lines.next().unwrap(), "estimator,tau,n,bias,variance,mse");
        assert!(lines.next().unwrap().starts_with("nw,0.25,200,"));
    }

    #[test]
    fn reports_are_thread_count_invariant() {
        let config = small_config();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&config).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn coverage_mode_produces_fractions() {
        let mut config = small_config();
        config.estimators.clear();
        config.coverage = Some(CoverageOptions { b: 10, alpha: 0.05 });
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.coverage.len(), 2);
        for c in &report.coverage {
            assert!((0.0..=1.0).contains(&c.gaussian) && (0.0..=1.0).contains(&c.percentile));
            assert_eq!(c.reps, 4);
        }
        let mut buf = Vec::new();
        write_coverage_csv(&report, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(1) == Some("tau,n,gaussian,percentile"));
    }

    #[test]
    fn invalid_configs() {
        let mut c = small_config();
        c.reps = 1;
        assert!(run_experiment(&c).unwrap_err().is_validation());
        let mut c = small_config();
        c.taus = vec![1.0];
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn estimator_labels() {
        assert_eq!(EstimatorSpec::nw().label, "nw");
        assert_eq!(EstimatorSpec::nw_exponent(4).label, "nw-n^-1/4");
        assert_relative_eq!(
            match EstimatorSpec::nw_exponent(6).kind {
                EstimatorKind::Uqpe { rule, .. } => rule.exponent,
                _ => unreachable!(),
            },
            1.0 / 6.0
        );
        assert_eq!(EstimatorSpec::rif(RifVariant::Logit).label, "rif-logit");
        let json = serde_json::to_string(&EstimatorSpec::nw()).unwrap();
        assert!(json.contains("\"kind\":\"uqpe\""), "{json}");
    }
}
