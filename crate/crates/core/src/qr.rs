//! Linear quantile regression by check-loss minimization.
//!
//! The solver works on the bounded dual of the check-loss LP
//!
//! ```text
//! max_a  y'a   s.t.  X'a = (1 - eta) X'1,   0 <= a <= 1
//! ```
//!
//! with a primal-dual Mehrotra predictor-corrector (Frisch-Newton). The
//! regression coefficients are the negated equality multipliers. Once the
//! duality gap closes, the iterate is purified to the basic solution through
//! the `d` observations with the smallest residuals, which is then checked
//! with an exact vertex optimality certificate.

use crate::dataset::Dataset;
use crate::error::{check_level, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// `u * (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Mean check loss of the residuals `y - X beta`.
pub fn mean_check_loss(y: &[f64], x: &DMatrix<f64>, beta: &[f64], tau: f64) -> f64 {
    let n = y.len();
    let cols = x.as_slice();
    let mut total = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for (j, b) in beta.iter().enumerate() {
            fit += cols[j * n + i] * b;
        }
        total += check_loss(y[i] - fit, tau);
    }
    total / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QrFit {
    pub eta: f64,
    pub beta: Vec<f64>,
    /// Mean check loss at `beta`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality gap at which the interior point loop stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// Fit `beta(eta)` on a validated dataset.
pub fn fit_quantile(data: &Dataset, eta: f64) -> Result<QrFit> {
    fit_design(data.y(), data.x(), eta, &SolverOptions::default())
}

/// Fit on an arbitrary design (no intercept requirement).
pub fn fit_design(y: &[f64], x: &DMatrix<f64>, eta: f64, opts: &SolverOptions) -> Result<QrFit> {
    check_level("eta", eta)?;
    if y.is_empty() {
        return Err(Error::EmptyInput("y"));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, outcome has {}",
            x.nrows(),
            y.len()
        )));
    }
    ensure_full_rank(x)?;
    solve(y, x, eta, opts)
}

/// Fails with `RankDeficientDesign` when the column-equilibrated Gram matrix
/// is numerically singular.
pub fn ensure_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficientDesign);
    }
    let gram = x.tr_mul(x);
    let scale: Vec<f64> = (0..p).map(|j| gram[(j, j)].sqrt()).collect();
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficientDesign);
    }
    let corr = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (scale[i] * scale[j]));
    let eig = corr.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-12 {
        return Err(Error::RankDeficientDesign);
    }
    Ok(())
}

/// Smallest minimizer of the sample check loss: the order statistic
/// `y_(ceil(n tau))`.
pub fn unconditional_quantile(y: &[f64], tau: f64) -> Result<f64> {
    check_level("tau", tau)?;
    if y.is_empty() {
        return Err(Error::EmptyInput("y"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("y contains non-finite values".into()));
    }
    let k = ceil_rank(y.len(), tau);
    let mut buf = y.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*v)
}

/// `ceil(n * p)` clamped to `1..=n`, treating products within rounding
/// error of an integer as that integer.
pub(crate) fn ceil_rank(n: usize, p: f64) -> usize {
    let t = n as f64 * p;
    let r = t.round();
    let k = if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
        r
    } else {
        t.ceil()
    };
    (k.max(1.0) as usize).min(n)
}

/// Solver entry point once the design has been validated.
pub(crate) fn solve(y: &[f64], x: &DMatrix<f64>, eta: f64, opts: &SolverOptions) -> Result<QrFit> {
    let n = y.len();
    let p = x.ncols();
    let ipm = interior_point(y, x, eta, opts);
    let (start, iterations, gap, ok) = match ipm {
        Ok(r) => (r.beta, r.iterations, r.gap, r.gap <= opts.tolerance),
        Err(partial) => (partial.beta, partial.iterations, partial.gap, false),
    };
    let start_loss = mean_check_loss(y, x, &start, eta);

    let mut best = (start.clone(), start_loss);
    if let Some(vertex) = purify(y, x, &start) {
        let loss = mean_check_loss(y, x, &vertex, eta);
        if loss <= start_loss + 1e-12 * (1.0 + start_loss) {
            best = (vertex, loss);
        }
    }
    if ok {
        return Ok(QrFit {
            eta,
            beta: best.0,
            objective: best.1,
            iterations,
            converged: true,
        });
    }

    log::debug!("interior point stalled at eta={eta} (gap {gap:e}); trying subgradient descent");
    let descended = subgradient_descent(y, x, eta, &best.0, 4000);
    let mut candidates = vec![best.0.clone(), descended.clone()];
    if let Some(v) = purify(y, x, &descended) {
        candidates.push(v);
    }
    for beta in candidates {
        if vertex_is_optimal(y, x, &beta, eta) {
            let objective = mean_check_loss(y, x, &beta, eta);
            return Ok(QrFit {
                eta,
                beta,
                objective,
                iterations,
                converged: true,
            });
        }
    }
    let _ = (n, p);
    Err(Error::SolverDivergence { iterations, gap })
}

struct IpmOutcome {
    beta: Vec<f64>,
    iterations: usize,
    gap: f64,
}

/// Step length keeping `v + alpha dv > 0`, damped and capped at 1.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (a, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(-a / d);
        }
    }
    (0.99995 * alpha).min(1.0)
}

fn interior_point(
    y: &[f64],
    x: &DMatrix<f64>,
    eta: f64,
    opts: &SolverOptions,
) -> std::result::Result<IpmOutcome, IpmOutcome> {
    let n = y.len();
    let p = x.ncols();
    let cols = x.as_slice();
    let col = |j: usize| &cols[j * n..(j + 1) * n];

    // Least-squares start for the multipliers.
    let gram = x.tr_mul(x);
    let xty = x.tr_mul(&DVector::from_column_slice(y));
    let ols = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => {
            return Err(IpmOutcome {
                beta: vec![0.0; p],
                iterations: 0,
                gap: f64::INFINITY,
            })
        }
    };
    let mut beta: Vec<f64> = ols.iter().copied().collect();

    // Residuals r = y - X beta; dual slacks satisfy z - w = -r exactly.
    let residuals = |beta: &[f64]| -> Vec<f64> {
        let mut r = y.to_vec();
        for (j, b) in beta.iter().enumerate() {
            for (ri, xi) in r.iter_mut().zip(col(j)) {
                *ri -= xi * b;
            }
        }
        r
    };
    let r0 = residuals(&beta);
    let mean_abs = r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let y_scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let shift = mean_abs.max(1e-10 * y_scale);

    let mut a = vec![1.0 - eta; n];
    let mut s = vec![eta; n];
    let mut z: Vec<f64> = r0.iter().map(|&r| (-r).max(0.0) + shift).collect();
    let mut w: Vec<f64> = r0.iter().map(|&r| r.max(0.0) + shift).collect();

    let mut dx = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut qinv = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut dx_aff = vec![0.0; n];
    let mut dz_aff = vec![0.0; n];
    let mut dw_aff = vec![0.0; n];
    let mut ds_aff = vec![0.0; n];

    let gap_of = |a: &[f64], z: &[f64], s: &[f64], w: &[f64]| -> f64 {
        a.iter().zip(z).map(|(u, v)| u * v).sum::<f64>() + s.iter().zip(w).map(|(u, v)| u * v).sum::<f64>()
    };
    let relative = |gap: f64, beta: &[f64]| -> f64 {
        let loss: f64 = residuals(beta).iter().map(|&r| check_loss(r, eta)).sum();
        gap / (1.0 + loss)
    };

    let mut gap = gap_of(&a, &z, &s, &w);
    let mut rel = relative(gap, &beta);
    let mut it = 0;
    while rel > opts.tolerance {
        if it >= opts.max_iterations {
            return Err(IpmOutcome {
                beta,
                iterations: it,
                gap: rel,
            });
        }
        it += 1;

        // primal residual X'a - (1 - eta) X'1 drifts only by rounding
        let mut rp = vec![0.0; p];
        for (j, rpj) in rp.iter_mut().enumerate() {
            let cj = col(j);
            let mut acc = 0.0;
            for i in 0..n {
                acc += cj[i] * ((1.0 - eta) - a[i]);
            }
            *rpj = acc;
        }

        // Normal matrix X' Q^{-1} X with Q = z/a + w/s.
        for i in 0..n {
            qinv[i] = 1.0 / (z[i] / a[i] + w[i] / s[i]);
        }
        let mut m = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            let cj = col(j);
            for k in 0..=j {
                let ck = col(k);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += cj[i] * qinv[i] * ck[i];
                }
                m[(j, k)] = acc;
                m[(k, j)] = acc;
            }
        }
        let chol = match m.clone().cholesky() {
            Some(c) => c,
            None => {
                let ridge = 1e-13 * m.trace().max(1e-300);
                for j in 0..p {
                    m[(j, j)] += ridge;
                }
                match m.cholesky() {
                    Some(c) => c,
                    None => {
                        return Err(IpmOutcome {
                            beta,
                            iterations: it,
                            gap: rel,
                        })
                    }
                }
            }
        };

        // Solves for (dx, dlambda) given the complementarity targets.
        // Dual feasibility holds exactly, so r_d = 0 and g = -rc_x/a + rc_s/s.
        let newton =
            |rc_x: &dyn Fn(usize) -> f64, rc_s: &dyn Fn(usize) -> f64, g: &mut [f64], dx: &mut [f64]| -> Vec<f64> {
                for i in 0..n {
                    g[i] = -rc_x(i) / a[i] + rc_s(i) / s[i];
                }
                let mut rhs = DVector::from_column_slice(&rp);
                for j in 0..p {
                    let cj = col(j);
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += cj[i] * qinv[i] * g[i];
                    }
                    rhs[j] += acc;
                }
                let dlam = chol.solve(&rhs);
                for i in 0..n {
                    let mut xd = 0.0;
                    for j in 0..p {
                        xd += cols[j * n + i] * dlam[j];
                    }
                    dx[i] = qinv[i] * (xd - g[i]);
                }
                dlam.iter().copied().collect()
            };

        // Predictor.
        newton(&|i| -a[i] * z[i], &|i| -s[i] * w[i], &mut g, &mut dx_aff);
        for i in 0..n {
            ds_aff[i] = -dx_aff[i];
            dz_aff[i] = (-a[i] * z[i] - z[i] * dx_aff[i]) / a[i];
            dw_aff[i] = (-s[i] * w[i] + w[i] * dx_aff[i]) / s[i];
        }
        let ap = max_step(&a, &dx_aff).min(max_step(&s, &ds_aff));
        let ad = max_step(&z, &dz_aff).min(max_step(&w, &dw_aff));
        let mu = gap / (2 * n) as f64;
        let mut gap_aff = 0.0;
        for i in 0..n {
            gap_aff +=
                (a[i] + ap * dx_aff[i]) * (z[i] + ad * dz_aff[i]) + (s[i] + ap * ds_aff[i]) * (w[i] + ad * dw_aff[i]);
        }
        let mu_aff = gap_aff / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3).min(1.0);
        let target = sigma * mu;

        // Corrector.
        let dlam = newton(
            &|i| target - a[i] * z[i] - dx_aff[i] * dz_aff[i],
            &|i| target - s[i] * w[i] - ds_aff[i] * dw_aff[i],
            &mut g,
            &mut dx,
        );
        for i in 0..n {
            let rcx = target - a[i] * z[i] - dx_aff[i] * dz_aff[i];
            let rcs = target - s[i] * w[i] - ds_aff[i] * dw_aff[i];
            ds[i] = -dx[i];
            dz[i] = (rcx - z[i] * dx[i]) / a[i];
            dw[i] = (rcs + w[i] * dx[i]) / s[i];
        }
        let ap = max_step(&a, &dx).min(max_step(&s, &ds));
        let ad = max_step(&z, &dz).min(max_step(&w, &dw));
        for i in 0..n {
            a[i] += ap * dx[i];
            s[i] += ap * ds[i];
            z[i] += ad * dz[i];
            w[i] += ad * dw[i];
        }
        // lambda = -beta
        for (b, dl) in beta.iter_mut().zip(&dlam) {
            *b -= ad * dl;
        }
        gap = gap_of(&a, &z, &s, &w);
        rel = relative(gap, &beta);
        if !rel.is_finite() {
            return Err(IpmOutcome {
                beta,
                iterations: it,
                gap: rel,
            });
        }
    }
    Ok(IpmOutcome {
        beta,
        iterations: it,
        gap: rel,
    })
}

/// Observations ordered by |residual|, greedily keeping `p` whose rows are
/// linearly independent.
fn basis_from_residuals(y: &[f64], x: &DMatrix<f64>, beta: &[f64]) -> Option<Vec<usize>> {
    let (n, p) = x.shape();
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            ((y[i] - fit).abs(), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Gram-Schmidt against rows already accepted.
    let mut basis: Vec<usize> = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for &(_, i) in &order {
        let row: Vec<f64> = (0..p).map(|j| x[(i, j)]).collect();
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.clone();
        for q in &ortho {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vk, qk) in v.iter_mut().zip(q) {
                *vk -= dot * qk;
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 {
            for t in v.iter_mut() {
                *t /= norm;
            }
            ortho.push(v);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

/// Basic solution interpolating the `p` best-fitting observations.
fn purify(y: &[f64], x: &DMatrix<f64>, beta: &[f64]) -> Option<Vec<f64>> {
    let p = x.ncols();
    let basis = basis_from_residuals(y, x, beta)?;
    let xh = DMatrix::from_fn(p, p, |r, j| x[(basis[r], j)]);
    let yh = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
    let sol = xh.lu().solve(&yh)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().copied().collect())
    } else {
        None
    }
}

/// Exact optimality test for a basic solution: the multipliers of the
/// basic rows must lie in [eta - 1, eta].
pub(crate) fn vertex_is_optimal(y: &[f64], x: &DMatrix<f64>, beta: &[f64], eta: f64) -> bool {
    let (n, p) = x.shape();
    let Some(basis) = basis_from_residuals(y, x, beta) else {
        return false;
    };
    let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut in_basis = vec![false; n];
    for &i in &basis {
        let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        if (y[i] - fit).abs() > 1e-9 * scale {
            return false;
        }
        in_basis[i] = true;
    }
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..n {
        if in_basis[i] {
            continue;
        }
        let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let psi = if y[i] - fit < 0.0 { eta - 1.0 } else { eta };
        for j in 0..p {
            rhs[j] -= psi * x[(i, j)];
        }
    }
    let xh_t = DMatrix::from_fn(p, p, |j, r| x[(basis[r], j)]);
    match xh_t.lu().solve(&rhs) {
        Some(v) => v.iter().all(|&vi| vi >= eta - 1.0 - 1e-9 && vi <= eta + 1e-9),
        None => false,
    }
}

/// Normalized subgradient descent with diminishing steps; returns the best
/// iterate seen.
fn subgradient_descent(y: &[f64], x: &DMatrix<f64>, eta: f64, start: &[f64], iters: usize) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut beta = start.to_vec();
    let mut best = beta.clone();
    let mut best_loss = mean_check_loss(y, x, &beta, eta);
    let scale = 1.0 + beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
    for k in 1..=iters {
        let mut g = vec![0.0; p];
        for i in 0..n {
            let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            let psi = if y[i] - fit < 0.0 { eta - 1.0 } else { eta };
            for j in 0..p {
                g[j] -= psi * x[(i, j)] / n as f64;
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.1 * scale / (k as f64).sqrt();
        for j in 0..p {
            beta[j] -= step * g[j] / norm;
        }
        let loss = mean_check_loss(y, x, &beta, eta);
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&beta);
        }
    }
    best
}
