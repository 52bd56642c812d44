//! Kernel weights, bandwidths, density estimation and the second-stage
//! regressions on the outcome.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Standard normal density: symmetric, second order, infinitely smooth.
    #[default]
    Gaussian,
}

impl Kernel {
    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => crate::dist::norm_pdf(u),
        }
    }

    /// `log K(u)` up to an additive constant shared by all `u`.
    fn log_shape(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * u * u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub constant: f64,
    pub exponent: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule {
            constant: 0.9,
            exponent: 0.2,
        }
    }
}

impl BandwidthRule {
    pub fn new(constant: f64, exponent: f64) -> Result<Self> {
        let rule = BandwidthRule { constant, exponent };
        rule.validate()?;
        Ok(rule)
    }

    /// Accepts 1/4, 1/5, 1/6, or any exponent in [1/5, 1/2).
    pub fn validate(&self) -> Result<()> {
        if !(self.constant > 0.0 && self.constant.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth constant {} must be positive",
                self.constant
            )));
        }
        let named = [0.25, 0.2, 1.0 / 6.0].iter().any(|a| (self.exponent - a).abs() < 1e-12);
        if named || (self.exponent >= 0.2 && self.exponent < 0.5) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bandwidth exponent {} must be 1/4, 1/5, 1/6 or lie in [1/5, 1/2)",
                self.exponent
            )))
        }
    }
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = pairwise_sum(y) / n;
    let dev: Vec<f64> = y.iter().map(|v| (v - mean) * (v - mean)).collect();
    (pairwise_sum(&dev) / (n - 1.0)).sqrt()
}

/// `constant * sd(y) * n^(-exponent)`.
pub fn bandwidth(rule: &BandwidthRule, y: &[f64]) -> Result<f64> {
    rule.validate()?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument("bandwidth needs at least 2 observations".into()));
    }
    let sd = sample_sd(y);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    Ok(rule.constant * sd * (y.len() as f64).powf(-rule.exponent))
}

/// `K(u / h) / h`.
pub fn kernel_weight(kernel: Kernel, u: f64, h: f64) -> f64 {
    kernel.density(u / h) / h
}

/// Fixed-order recursive summation; the result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if v.len() <= BLOCK {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// `(1/n) sum K_h(y_i - point)`.
pub fn kde_at(y: &[f64], point: f64, h: f64, kernel: Kernel) -> f64 {
    let w: Vec<f64> = y.iter().map(|&v| kernel_weight(kernel, v - point, h)).collect();
    pairwise_sum(&w) / y.len() as f64
}

fn check_inputs(responses: &[f64], y: &[f64], h: f64) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput("y"));
    }
    if responses.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} responses for {} outcomes",
            responses.len(),
            y.len()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    Ok(())
}

/// Kernel weights rescaled so the largest is 1; the ratio estimators are
/// invariant to this and it avoids underflow far from the data.
fn relative_weights(y: &[f64], point: f64, h: f64, kernel: Kernel) -> Result<Vec<f64>> {
    let logs: Vec<f64> = y.iter().map(|&v| kernel.log_shape((v - point) / h)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::ZeroWeightMass);
    }
    Ok(logs.iter().map(|l| (l - top).exp()).collect())
}

/// Nadaraya-Watson estimate of `E[r | y = point]`.
pub fn nw_regress(responses: &[f64], y: &[f64], point: f64, h: f64, kernel: Kernel) -> Result<f64> {
    check_inputs(responses, y, h)?;
    let w = relative_weights(y, point, h, kernel)?;
    let wr: Vec<f64> = w.iter().zip(responses).map(|(a, b)| a * b).collect();
    let mass = pairwise_sum(&w);
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    let est = pairwise_sum(&wr) / mass;
    // clamp rounding excursions so the estimate stays a convex combination
    let (lo, hi) = responses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    Ok(est.clamp(lo, hi))
}

/// Coefficients of the kernel-weighted fit `r ~ a0 + a1 (y - point) / h`.
pub fn local_linear_fit(responses: &[f64], y: &[f64], point: f64, h: f64, kernel: Kernel) -> Result<(f64, f64)> {
    check_inputs(responses, y, h)?;
    let w = relative_weights(y, point, h, kernel)?;
    let t: Vec<f64> = y.iter().map(|v| (v - point) / h).collect();
    let prod = |f: &dyn Fn(usize) -> f64| -> f64 {
        let v: Vec<f64> = (0..y.len()).map(f).collect();
        pairwise_sum(&v)
    };
    let s0 = pairwise_sum(&w);
    let s1 = prod(&|i| w[i] * t[i]);
    let s2 = prod(&|i| w[i] * t[i] * t[i]);
    let t0 = prod(&|i| w[i] * responses[i]);
    let t1 = prod(&|i| w[i] * t[i] * responses[i]);
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-12 * s0 * s2) {
        return Err(Error::SingularLocalDesign);
    }
    Ok(((s2 * t0 - s1 * t1) / det, (s0 * t1 - s1 * t0) / det))
}

/// Local-linear estimate at `point` (the fitted intercept).
pub fn local_linear_regress(responses: &[f64], y: &[f64], point: f64, h: f64, kernel: Kernel) -> Result<f64> {
    local_linear_fit(responses, y, point, h, kernel).map(|(a0, _)| a0)
}
