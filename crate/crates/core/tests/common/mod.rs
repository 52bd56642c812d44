//! Numerical integration helpers for `y = 1 + x + (1 + theta x) u`,
//! `x ~ N(10, 1)`, `u ~ N(0, 1)`.

#![allow(dead_code)]

use uqpe::dist::{norm_cdf, norm_pdf};

/// Composite Simpson rule on `[10 - 9, 10 + 9]`.
pub fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, k) = (1.0, 19.0, 20_000);
    let h = (hi - lo) / k as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..k {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn standardized(theta: f64, q: f64, x: f64) -> f64 {
    (q - 1.0 - x) / (1.0 + theta * x)
}

/// Marginal cdf of `y` at `q`.
pub fn population_cdf(theta: f64, q: f64) -> f64 {
    simpson(|x| norm_cdf(standardized(theta, q, x)) * norm_pdf(x - 10.0))
}

/// Marginal `tau`-quantile of `y` by bisection.
pub fn population_quantile(theta: f64, tau: f64) -> f64 {
    let (mut lo, mut hi) = (-200.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if population_cdf(theta, mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `E[1 + theta t(X) | Y = q]` at the marginal `tau`-quantile.
pub fn quadrature_uqpe(theta: f64, tau: f64) -> f64 {
    let q = population_quantile(theta, tau);
    let t = |x: f64| standardized(theta, q, x);
    let dens = |x: f64| norm_pdf(t(x)) / (1.0 + theta * x) * norm_pdf(x - 10.0);
    simpson(|x| (1.0 + theta * t(x)) * dens(x)) / simpson(dens)
}
