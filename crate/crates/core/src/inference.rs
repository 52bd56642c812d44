//! Pairwise (row) bootstrap.
//!
//! Replicate `b`, attempt `a` draws its resample indices from the stream
//! `derive_seed(seed, [b, a])`. A failed replicate is retried once with
//! attempt 1 before the whole call fails.

use crate::dataset::Dataset;
use crate::dist::norm_quantile;
use crate::error::{check_level, Error, Result};
use crate::qr::ceil_rank;
use crate::rng::{derive_seed, stream};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub replicates: Vec<f64>,
    pub se: f64,
    pub gaussian_ci: (f64, f64),
    pub percentile_ci: (f64, f64),
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
}

/// Two-sided normal multiplier; exactly 1.96 at the 5% level.
pub fn normal_multiplier(alpha: f64) -> f64 {
    if alpha == 0.05 {
        1.96
    } else {
        norm_quantile(1.0 - alpha / 2.0)
    }
}

/// Summary of a replicate vector around a point estimate.
pub fn summarize(point: f64, replicates: Vec<f64>, seed: u64, alpha: f64) -> Result<BootstrapResult> {
    check_level("alpha", alpha)?;
    let b = replicates.len();
    if b < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicates, got {b}")));
    }
    let mean = replicates.iter().sum::<f64>() / b as f64;
    let se = (replicates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / b as f64).sqrt();
    let z = normal_multiplier(alpha);
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[ceil_rank(b, alpha / 2.0) - 1];
    let hi = sorted[ceil_rank(b, 1.0 - alpha / 2.0) - 1];
    Ok(BootstrapResult {
        point,
        replicates,
        se,
        gaussian_ci: (point - z * se, point + z * se),
        percentile_ci: (lo, hi),
        b,
        seed,
        alpha,
    })
}

fn resample_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap a vector-valued statistic; one result per component.
pub fn pairwise_bootstrap_vec<F>(
    data: &Dataset,
    estimator: F,
    b: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    check_level("alpha", alpha)?;
    if b < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs B >= 2, got {b}")));
    }
    let point = estimator(data)?;
    let k = point.len();
    let n = data.n();
    let outcomes: Vec<Result<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let attempt = |a: u64| -> Result<Vec<f64>> {
                let idx = resample_indices(n, derive_seed(seed, &[rep as u64, a]));
                let v = estimator(&data.resample(&idx))?;
                if v.len() != k {
                    return Err(Error::NumericalInvariant(format!(
                        "statistic length {} differs from {k}",
                        v.len()
                    )));
                }
                Ok(v)
            };
            attempt(0).or_else(|first| {
                log::debug!("bootstrap replicate {rep} failed ({first}); retrying");
                attempt(1).map_err(|cause| Error::ReplicateFailure {
                    replicate: rep,
                    cause: Box::new(cause),
                })
            })
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(b); k];
    for out in outcomes {
        for (c, v) in columns.iter_mut().zip(out?) {
            c.push(v);
        }
    }
    point
        .into_iter()
        .zip(columns)
        .map(|(p, reps)| summarize(p, reps, seed, alpha))
        .collect()
}

/// Bootstrap a scalar statistic.
pub fn pairwise_bootstrap<F>(data: &Dataset, estimator: F, b: usize, seed: u64, alpha: f64) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    let mut out = pairwise_bootstrap_vec(data, |d| estimator(d).map(|v| vec![v]), b, seed, alpha)?;
    Ok(out.remove(0))
}
