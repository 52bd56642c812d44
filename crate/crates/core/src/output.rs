//! Result records shared by the CLI and the FFI layer.

use crate::error::Result;
use crate::inference::BootstrapResult;
use crate::rif::{RifEstimate, RifVariant};
use crate::uqpe::{Method, UqpeEstimate};
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inference {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub se: f64,
    pub gaussian_ci: [f64; 2],
    pub percentile_ci: [f64; 2],
}

impl From<&BootstrapResult> for Inference {
    fn from(r: &BootstrapResult) -> Self {
        Inference {
            b: r.b,
            seed: r.seed,
            alpha: r.alpha,
            se: r.se,
            gaussian_ci: [r.gaussian_ci.0, r.gaussian_ci.1],
            percentile_ci: [r.percentile_ci.0, r.percentile_ci.1],
        }
    }
}

/// One estimate at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    /// `nw`, `local-linear`, `local-linear-literal`, `rif-ols-linear`, ..., `rif-logit`.
    pub estimator: String,
    pub method: Option<Method>,
    pub variant: Option<RifVariant>,
    pub tau: f64,
    pub estimate: f64,
    pub q_tau: f64,
    pub bandwidth: f64,
    pub n: usize,
    pub grid_m: Option<usize>,
    pub boundary_hits: Option<usize>,
    pub density_at_q: Option<f64>,
    pub inference: Option<Inference>,
}

impl From<&UqpeEstimate> for EstimateRecord {
    fn from(e: &UqpeEstimate) -> Self {
        EstimateRecord {
            estimator: e.method.name().to_string(),
            method: Some(e.method),
            variant: None,
            tau: e.tau,
            estimate: e.estimate,
            q_tau: e.q_tau,
            bandwidth: e.bandwidth,
            n: e.n,
            grid_m: Some(e.grid_m),
            boundary_hits: Some(e.boundary_hits),
            density_at_q: None,
            inference: None,
        }
    }
}

impl From<&RifEstimate> for EstimateRecord {
    fn from(e: &RifEstimate) -> Self {
        EstimateRecord {
            estimator: format!("rif-{}", e.variant.name()),
            method: None,
            variant: Some(e.variant),
            tau: e.tau,
            estimate: e.estimate,
            q_tau: e.q_tau,
            bandwidth: e.bandwidth,
            n: e.n,
            grid_m: None,
            boundary_hits: None,
            density_at_q: Some(e.density_at_q),
            inference: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct Document<'a, C: Serialize> {
    config: &'a C,
    records: &'a [EstimateRecord],
}

/// `{"config": ..., "records": [...]}`, pretty-printed.
pub fn write_json<W: Write, C: Serialize>(config: &C, records: &[EstimateRecord], mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &Document { config, records })?;
    writeln!(writer)?;
    Ok(())
}

pub const CSV_COLUMNS: [&str; 13] = [
    "estimator",
    "tau",
    "estimate",
    "q_tau",
    "bandwidth",
    "n",
    "grid_m",
    "boundary_hits",
    "se",
    "gaussian_lo",
    "gaussian_hi",
    "percentile_lo",
    "percentile_hi",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat records after a `# config: {json}` comment line; absent fields are empty.
pub fn write_csv<W: Write, C: Serialize>(config: &C, records: &[EstimateRecord], mut writer: W) -> Result<()> {
    writeln!(writer, "# config: {}", serde_json::to_string(config)?)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let inf = r.inference.as_ref();
        w.write_record([
            r.estimator.clone(),
            r.tau.to_string(),
            r.estimate.to_string(),
            r.q_tau.to_string(),
            r.bandwidth.to_string(),
            r.n.to_string(),
            opt(r.grid_m),
            opt(r.boundary_hits),
            opt(inf.map(|i| i.se)),
            opt(inf.map(|i| i.gaussian_ci[0])),
            opt(inf.map(|i| i.gaussian_ci[1])),
            opt(inf.map(|i| i.percentile_ci[0])),
            opt(inf.map(|i| i.percentile_ci[1])),
        ])?;
    }
    w.flush()?;
    Ok(())
}
