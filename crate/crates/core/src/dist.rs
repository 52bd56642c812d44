//! Error distributions used by the data generating processes and the
//! closed-form matching oracle. Both are standardized to mean 0, variance 1.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;

fn standard_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(Normal::standard)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    standard_normal().pdf(x)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorDist {
    /// N(0, 1).
    Normal,
    /// (chi2_1 - 1) / sqrt(2): right-skewed, support (-1/sqrt(2), inf).
    Chi2Standardized,
}

impl ErrorDist {
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            ErrorDist::Normal => norm_cdf(u),
            ErrorDist::Chi2Standardized => {
                let v = std::f64::consts::SQRT_2 * u + 1.0;
                if v <= 0.0 {
                    0.0
                } else {
                    // P(Z^2 <= v) = 2 Phi(sqrt v) - 1
                    statrs::function::erf::erf((v / 2.0).sqrt())
                }
            }
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            ErrorDist::Normal => norm_quantile(p),
            ErrorDist::Chi2Standardized => {
                let z = norm_quantile(0.5 * (1.0 + p));
                (z * z - 1.0) / std::f64::consts::SQRT_2
            }
        }
    }

    pub fn pdf(self, u: f64) -> f64 {
        match self {
            ErrorDist::Normal => norm_pdf(u),
            ErrorDist::Chi2Standardized => {
                let v = std::f64::consts::SQRT_2 * u + 1.0;
                if v <= 0.0 {
                    0.0
                } else {
                    std::f64::consts::SQRT_2 * (-v / 2.0).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            ErrorDist::Normal => z,
            ErrorDist::Chi2Standardized => (z * z - 1.0) / std::f64::consts::SQRT_2,
        }
    }
}
