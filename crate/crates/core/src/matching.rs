//! Matching each observation's conditional quantile curve to an
//! unconditional quantile.

use crate::dataset::Dataset;
use crate::dist::ErrorDist;
use crate::error::{check_level, Error, Result};
use crate::process::{evaluate_curves, raw_curves, rearrange_row, FittedCurves, QuantileProcessFit};
use crate::qr::unconditional_quantile;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `q` below the lowest fitted quantile; matched to the trimming level.
    Below,
    Bracket,
    /// `q` at or above the highest fitted quantile.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matched {
    pub xi: f64,
    /// Grid row used for the slope lookup.
    pub row: usize,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub tau: f64,
    pub q_tau: f64,
    pub xi: Vec<f64>,
    pub rows: Vec<usize>,
    pub matched_slope: Vec<f64>,
    pub boundary_hits: usize,
}

/// Locate `q` on one curve. Rearranged curves have a unique bracket; raw
/// curves take the smallest bracketing index.
fn bracket(curve: &[f64], q: f64, levels: &[f64], epsilon: f64, monotone: bool) -> Matched {
    let m = curve.len();
    let c = if monotone {
        curve.partition_point(|&v| v <= q)
    } else {
        let hits: Vec<usize> = (0..m - 1).filter(|&j| curve[j] <= q && q < curve[j + 1]).collect();
        if hits.len() > 1 {
            log::debug!("raw curve brackets q = {q} at {} levels; using the lowest", hits.len());
        }
        match hits.first() {
            Some(&j) => j + 1,
            None if q < curve[0] => 0,
            None => m,
        }
    };
    if c == 0 {
        Matched {
            xi: epsilon,
            row: 0,
            branch: Branch::Below,
        }
    } else if c == m {
        Matched {
            xi: levels[m - 1],
            row: m - 1,
            branch: Branch::Above,
        }
    } else {
        Matched {
            xi: levels[c - 1],
            row: c - 1,
            branch: Branch::Bracket,
        }
    }
}

/// Match every row of precomputed curves against `q_tau`.
pub fn match_curves(fit: &QuantileProcessFit, curves: &FittedCurves, tau: f64, q_tau: f64) -> Result<MatchResult> {
    check_level("tau", tau)?;
    if curves.n() != fit.n {
        return Err(Error::GridMismatch {
            fitted: fit.n,
            data: curves.n(),
        });
    }
    let levels = fit.grid.levels();
    let eps = fit.grid.epsilon();
    let monotone = fit.rearranged;
    let matched: Vec<Matched> = (0..curves.n())
        .into_par_iter()
        .map(|i| bracket(curves.row(i), q_tau, levels, eps, monotone))
        .collect();
    let boundary_hits = matched.iter().filter(|m| m.branch != Branch::Bracket).count();
    if boundary_hits as f64 > 0.05 * curves.n() as f64 {
        log::warn!(
            "tau = {tau}: {boundary_hits} of {} observations matched outside the grid; consider a finer or wider grid",
            curves.n()
        );
    }
    Ok(MatchResult {
        tau,
        q_tau,
        xi: matched.iter().map(|m| m.xi).collect(),
        rows: matched.iter().map(|m| m.row).collect(),
        matched_slope: matched.iter().map(|m| fit.slope(m.row)).collect(),
        boundary_hits,
    })
}

pub fn match_observations(fit: &QuantileProcessFit, data: &Dataset, tau: f64) -> Result<MatchResult> {
    check_level("tau", tau)?;
    let curves = evaluate_curves(fit, data)?;
    let q = unconditional_quantile(data.y(), tau)?;
    match_curves(fit, &curves, tau, q)
}

/// Debug variant on unrearranged curves.
pub fn match_observations_raw(fit: &QuantileProcessFit, data: &Dataset, tau: f64) -> Result<MatchResult> {
    check_level("tau", tau)?;
    let curves = raw_curves(fit, data)?;
    let q = unconditional_quantile(data.y(), tau)?;
    let raw_fit = QuantileProcessFit {
        rearranged: false,
        ..fit.clone()
    };
    match_curves(&raw_fit, &curves, tau, q)
}

/// Matched level for an arbitrary covariate row.
pub fn match_at(fit: &QuantileProcessFit, x_row: &[f64], q: f64) -> Result<Matched> {
    if x_row.len() != fit.betas.ncols() {
        return Err(Error::InvalidArgument(format!(
            "covariate row has {} entries, process has {}",
            x_row.len(),
            fit.betas.ncols()
        )));
    }
    let mut curve: Vec<f64> = (0..fit.m())
        .map(|j| x_row.iter().enumerate().map(|(k, v)| v * fit.betas[(j, k)]).sum())
        .collect();
    if fit.rearranged {
        rearrange_row(&mut curve);
    }
    Ok(bracket(
        &curve,
        q,
        fit.grid.levels(),
        fit.grid.epsilon(),
        fit.rearranged,
    ))
}

/// Matching level in the model `Y = alpha0 + alpha1 x1 + (1 + theta x1) U`.
pub fn oracle_xi_location_scale(
    alpha0: f64,
    alpha1: f64,
    theta: f64,
    dist: ErrorDist,
    q_tau: f64,
    x1: f64,
) -> Result<f64> {
    let scale = 1.0 + theta * x1;
    if scale <= 0.0 {
        return Err(Error::ScaleNonPositive(scale));
    }
    Ok(dist.cdf((q_tau - alpha0 - alpha1 * x1) / scale))
}

/// `tau,row,x_target,xi,matched_slope`, sorted by the target within each result.
pub fn write_match_csv<W: Write>(results: &[MatchResult], target: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tau", "row", "x_target", "xi", "matched_slope"])?;
    for r in results {
        if r.xi.len() != target.len() {
            return Err(Error::GridMismatch {
                fitted: r.xi.len(),
                data: target.len(),
            });
        }
        let mut order: Vec<usize> = (0..target.len()).collect();
        order.sort_by(|&a, &b| target[a].total_cmp(&target[b]).then(a.cmp(&b)));
        for i in order {
            w.write_record([
                r.tau.to_string(),
                (i + 1).to_string(),
                target[i].to_string(),
                r.xi[i].to_string(),
                r.matched_slope[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
