//! Recentered influence function regressions for unconditional quantiles.

use crate::dataset::Dataset;
use crate::error::{check_level, Error, Result};
use crate::qr::{ensure_full_rank, unconditional_quantile};
use crate::smoothing::{kde_at, pairwise_sum, sample_sd, Kernel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RifVariant {
    OlsLinear,
    OlsQuadratic,
    OlsCubic,
    Logit,
}

impl RifVariant {
    pub fn name(self) -> &'static str {
        match self {
            RifVariant::OlsLinear => "ols-linear",
            RifVariant::OlsQuadratic => "ols-quadratic",
            RifVariant::OlsCubic => "ols-cubic",
            RifVariant::Logit => "logit",
        }
    }

    pub fn ols_degree(degree: usize) -> Result<Self> {
        match degree {
            1 => Ok(RifVariant::OlsLinear),
            2 => Ok(RifVariant::OlsQuadratic),
            3 => Ok(RifVariant::OlsCubic),
            _ => Err(Error::InvalidArgument(format!(
                "polynomial degree {degree} must be 1, 2 or 3"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RifEstimate {
    pub tau: f64,
    pub estimate: f64,
    pub variant: RifVariant,
    pub density_at_q: f64,
    pub q_tau: f64,
    pub bandwidth: f64,
    pub n: usize,
}

/// Quantile, its density estimate, and the RIF values.
#[derive(Debug, Clone, PartialEq)]
pub struct Rif {
    pub q: f64,
    pub density: f64,
    pub values: Vec<f64>,
}

pub fn rif_components(y: &[f64], tau: f64, h: f64) -> Result<Rif> {
    check_level("tau", tau)?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let q = unconditional_quantile(y, tau)?;
    let density = kde_at(y, q, h, Kernel::Gaussian);
    if !(density > 1e-12) {
        return Err(Error::ZeroDensity(density));
    }
    let values = y
        .iter()
        .map(|&v| q + (tau - if v <= q { 1.0 } else { 0.0 }) / density)
        .collect();
    Ok(Rif { q, density, values })
}

/// `q + (tau - 1{y_i <= q}) / f(q)`.
pub fn compute_rif(y: &[f64], tau: f64, h: f64) -> Result<Vec<f64>> {
    rif_components(y, tau, h).map(|r| r.values)
}

/// Standardized non-intercept columns: (index in design, mean, sd, values).
struct Standardized {
    columns: Vec<(usize, f64, f64, Vec<f64>)>,
}

fn standardize(data: &Dataset) -> Result<Standardized> {
    let mut columns = Vec::new();
    for j in 1..data.d() {
        let col = data.column(j);
        let mean = pairwise_sum(col) / col.len() as f64;
        let sd = sample_sd(col);
        if !(sd > 0.0) {
            return Err(Error::RankDeficientDesign);
        }
        columns.push((j, mean, sd, col.iter().map(|v| (v - mean) / sd).collect()));
    }
    Ok(Standardized { columns })
}

/// OLS of the RIF on per-covariate polynomials; the estimate is the sample
/// average of the fitted derivative in the target.
pub fn rif_ols_uqpe(data: &Dataset, tau: f64, degree: usize, h: f64) -> Result<RifEstimate> {
    let variant = RifVariant::ols_degree(degree)?;
    let rif = rif_components(data.y(), tau, h)?;
    let std = standardize(data)?;
    let n = data.n();
    let k = 1 + std.columns.len() * degree;
    let mut design = DMatrix::<f64>::zeros(n, k);
    let mut target_cols = Vec::new();
    for i in 0..n {
        design[(i, 0)] = 1.0;
    }
    for (c, (j, _, _, z)) in std.columns.iter().enumerate() {
        for p in 1..=degree {
            let col = 1 + c * degree + (p - 1);
            if *j == data.target_index() {
                target_cols.push((col, p));
            }
            for i in 0..n {
                design[(i, col)] = z[i].powi(p as i32);
            }
        }
    }
    ensure_full_rank(&design)?;
    let coef = least_squares(design, &rif.values)?;

    let (_, _, sd, z) = std
        .columns
        .iter()
        .find(|c| c.0 == data.target_index())
        .expect("target is a non-intercept column");
    let deriv: Vec<f64> = z
        .iter()
        .map(|&zi| {
            target_cols
                .iter()
                .map(|&(col, p)| p as f64 * coef[col] * zi.powi(p as i32 - 1))
                .sum::<f64>()
                / sd
        })
        .collect();
    Ok(RifEstimate {
        tau,
        estimate: pairwise_sum(&deriv) / n as f64,
        variant,
        density_at_q: rif.density,
        q_tau: rif.q,
        bandwidth: h,
        n,
    })
}

/// Householder QR least squares.
fn least_squares(design: DMatrix<f64>, rhs: &[f64]) -> Result<DVector<f64>> {
    let qr = design.qr();
    let qty = qr.q().transpose() * DVector::from_column_slice(rhs);
    qr.r().solve_upper_triangular(&qty).ok_or(Error::RankDeficientDesign)
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(design: &DMatrix<f64>, d: &[f64], gamma: &DVector<f64>) -> f64 {
    let eta = design * gamma;
    let terms: Vec<f64> = eta
        .iter()
        .zip(d)
        .map(|(&t, &di)| {
            // log(1 + e^t) computed stably
            let softplus = if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            };
            di * t - softplus
        })
        .collect();
    pairwise_sum(&terms)
}

#[derive(Debug, Clone)]
pub struct LogitFit {
    pub gamma: DVector<f64>,
    pub log_likelihood: Vec<f64>,
}

/// Newton-Raphson with step halving; gradient tolerance 1e-8, 100 iterations.
pub fn fit_logit(design: &DMatrix<f64>, d: &[f64]) -> Result<LogitFit> {
    let (n, k) = design.shape();
    let mut gamma = DVector::<f64>::zeros(k);
    let mut ll = log_likelihood(design, d, &gamma);
    let mut path = vec![ll];
    for _ in 0..100 {
        let eta = design * &gamma;
        let p: Vec<f64> = eta.iter().map(|&t| logistic(t)).collect();
        let mut grad = DVector::<f64>::zeros(k);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let r = d[i] - p[i];
            let w = p[i] * (1.0 - p[i]);
            for a in 0..k {
                grad[a] += design[(i, a)] * r;
                for b in 0..=a {
                    hess[(a, b)] += w * design[(i, a)] * design[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        if grad.amax() / n as f64 <= 1e-8 {
            // a vanishing gradient with every observation fitted perfectly means
            // the likelihood supremum is at infinity
            if p.iter().zip(d).all(|(pi, di)| (pi - di).abs() < 1e-6) {
                return Err(Error::SeparationDetected);
            }
            return Ok(LogitFit {
                gamma,
                log_likelihood: path,
            });
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(Error::SeparationDetected),
        };
        let mut t = 1.0;
        loop {
            let cand = &gamma + &step * t;
            let cand_ll = log_likelihood(design, d, &cand);
            if cand_ll >= ll {
                gamma = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::SeparationDetected);
            }
        }
        path.push(ll);
        if gamma.amax() > 50.0 {
            return Err(Error::SeparationDetected);
        }
    }
    Err(Error::SeparationDetected)
}

/// Logit of `1{y > q}` on the standardized covariates; the effect is the
/// average logistic density times the target coefficient, over `f(q)`.
pub fn rif_logit_uqpe(data: &Dataset, tau: f64, h: f64) -> Result<RifEstimate> {
    let rif = rif_components(data.y(), tau, h)?;
    let indicator: Vec<f64> = data.y().iter().map(|&v| if v > rif.q { 1.0 } else { 0.0 }).collect();
    let ones = indicator.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == indicator.len() {
        return Err(Error::DegenerateIndicator);
    }
    let std = standardize(data)?;
    let n = data.n();
    let k = 1 + std.columns.len();
    let design = DMatrix::from_fn(n, k, |i, c| if c == 0 { 1.0 } else { std.columns[c - 1].3[i] });
    ensure_full_rank(&design)?;
    let fit = fit_logit(&design, &indicator)?;
    let c = std
        .columns
        .iter()
        .position(|c| c.0 == data.target_index())
        .expect("target is a non-intercept column");
    let slope = fit.gamma[1 + c] / std.columns[c].2;
    let eta = &design * &fit.gamma;
    let dens: Vec<f64> = eta.iter().map(|&t| logistic(t) * (1.0 - logistic(t))).collect();
    Ok(RifEstimate {
        tau,
        estimate: pairwise_sum(&dens) / n as f64 * slope / rif.density,
        variant: RifVariant::Logit,
        density_at_q: rif.density,
        q_tau: rif.q,
        bandwidth: h,
        n,
    })
}

/// Dispatch on the variant.
pub fn rif_uqpe(data: &Dataset, tau: f64, variant: RifVariant, h: f64) -> Result<RifEstimate> {
    match variant {
        RifVariant::OlsLinear => rif_ols_uqpe(data, tau, 1, h),
        RifVariant::OlsQuadratic => rif_ols_uqpe(data, tau, 2, h),
        RifVariant::OlsCubic => rif_ols_uqpe(data, tau, 3, h),
        RifVariant::Logit => rif_logit_uqpe(data, tau, h),
    }
}
