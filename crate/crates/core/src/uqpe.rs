//! End-to-end estimation: process fit, matching, and smoothing of matched
//! slopes on the outcome at the unconditional quantile.

use crate::dataset::Dataset;
use crate::error::{check_level, Error, Result};
use crate::matching::{match_curves, MatchResult};
use crate::process::{evaluate_curves, fit_process, paired_grid_size, FittedCurves, QuantileGrid, QuantileProcessFit};
use crate::qr::unconditional_quantile;
use crate::smoothing::{bandwidth, local_linear_fit, nw_regress, BandwidthRule, Kernel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Nw,
    /// Intercept of the local-linear fit in `(y - q) / h`.
    LocalLinear,
    /// `a0 + a1 * q` from the same local-linear fit, for comparison.
    LocalLinearLiteral,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nw => "nw",
            Method::LocalLinear => "local-linear",
            Method::LocalLinearLiteral => "local-linear-literal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UqpeEstimate {
    pub tau: f64,
    pub estimate: f64,
    pub method: Method,
    pub q_tau: f64,
    pub bandwidth: f64,
    pub grid_m: usize,
    pub boundary_hits: usize,
    pub n: usize,
    /// Local-linear design was singular and the NW value was reported.
    pub fell_back_to_nw: bool,
}

/// Stages shared by every level: the process fit, rearranged curves and
/// the outcome bandwidth.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub fit: QuantileProcessFit,
    pub curves: FittedCurves,
    pub bandwidth: f64,
}

impl Prepared {
    pub fn new(data: &Dataset, grid: &QuantileGrid, rule: &BandwidthRule) -> Result<Self> {
        let h = bandwidth(rule, data.y()).map_err(|e| e.at_stage("bandwidth"))?;
        let fit = fit_process(data, grid).map_err(|e| e.at_stage("qr process"))?;
        let curves = evaluate_curves(&fit, data).map_err(|e| e.at_stage("qr process"))?;
        Ok(Prepared {
            fit,
            curves,
            bandwidth: h,
        })
    }

    pub fn matching(&self, data: &Dataset, tau: f64) -> Result<MatchResult> {
        check_level("tau", tau)?;
        let q = unconditional_quantile(data.y(), tau)?;
        match_curves(&self.fit, &self.curves, tau, q).map_err(|e| e.at_stage("matching"))
    }

    pub fn estimate(&self, data: &Dataset, tau: f64, method: Method) -> Result<UqpeEstimate> {
        let matched = self.matching(data, tau)?;
        self.estimate_matched(data, &matched, method)
    }

    pub fn estimate_matched(&self, data: &Dataset, matched: &MatchResult, method: Method) -> Result<UqpeEstimate> {
        self.estimate_matched_with(data, matched, method, self.bandwidth)
    }

    /// Second stage with an explicit bandwidth, reusing the matched slopes.
    pub fn estimate_matched_with(
        &self,
        data: &Dataset,
        matched: &MatchResult,
        method: Method,
        h: f64,
    ) -> Result<UqpeEstimate> {
        let (estimate, fell_back) = smooth(data.y(), matched, h, method).map_err(|e| e.at_stage("smoothing"))?;
        Ok(UqpeEstimate {
            tau: matched.tau,
            estimate,
            method,
            q_tau: matched.q_tau,
            bandwidth: h,
            grid_m: self.fit.m(),
            boundary_hits: matched.boundary_hits,
            n: data.n(),
            fell_back_to_nw: fell_back,
        })
    }
}

fn smooth(y: &[f64], matched: &MatchResult, h: f64, method: Method) -> Result<(f64, bool)> {
    let slopes = &matched.matched_slope;
    let q = matched.q_tau;
    let nw = || -> Result<f64> {
        let est = nw_regress(slopes, y, q, h, Kernel::Gaussian)?;
        let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(est >= lo && est <= hi) {
            return Err(Error::NumericalInvariant(format!(
                "NW estimate {est} outside matched slope range [{lo}, {hi}]"
            )));
        }
        Ok(est)
    };
    match method {
        Method::Nw => Ok((nw()?, false)),
        Method::LocalLinear | Method::LocalLinearLiteral => match local_linear_fit(slopes, y, q, h, Kernel::Gaussian) {
            Ok((a0, _)) if method == Method::LocalLinear => Ok((a0, false)),
            Ok((a0, a1)) => Ok((a0 + a1 * q, false)),
            Err(Error::SingularLocalDesign) => {
                log::warn!("tau = {}: local design singular, using NW", matched.tau);
                Ok((nw()?, true))
            }
            Err(e) => Err(e),
        },
    }
}

/// Estimates for every level in `taus`, sorted by level.
pub fn estimate_uqpe(
    data: &Dataset,
    taus: &[f64],
    grid: &QuantileGrid,
    rule: &BandwidthRule,
    method: Method,
) -> Result<Vec<UqpeEstimate>> {
    if taus.is_empty() {
        return Err(Error::EmptyInput("tau list"));
    }
    for &t in taus {
        check_level("tau", t)?;
    }
    let prepared = Prepared::new(data, grid, rule)?;
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.par_iter().map(|&t| prepared.estimate(data, t, method)).collect()
}

/// Grid paired with the sample size.
pub fn default_grid_for(n: usize) -> QuantileGrid {
    QuantileGrid::uniform(paired_grid_size(n)).expect("paired grid sizes are at least 3")
}

/// Target slope at the grid row nearest `eta`.
pub fn cqpe_at(fit: &QuantileProcessFit, eta: f64) -> Result<f64> {
    let levels = fit.grid.levels();
    let (lo, hi) = (levels[0], levels[levels.len() - 1]);
    let tol = 1e-12;
    if !(eta >= lo - tol && eta <= hi + tol) {
        return Err(Error::OutOfGridRange { eta, lo, hi });
    }
    let j = levels
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - eta).abs().total_cmp(&(b.1 - eta).abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    Ok(fit.slope(j))
}
