//! Quantile regression process over a uniform grid of levels.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::qr::{self, SolverOptions};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileGrid {
    levels: Vec<f64>,
    epsilon: f64,
}

impl QuantileGrid {
    /// Uniform grid `j / (m + 1)`, `j = 1..=m`, trimmed at `1 / (m + 1)`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::GridTooSmall(m));
        }
        let denom = (m + 1) as f64;
        Ok(QuantileGrid {
            levels: (1..=m).map(|j| j as f64 / denom).collect(),
            epsilon: 1.0 / denom,
        })
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn step(&self) -> f64 {
        self.levels[1] - self.levels[0]
    }
}

pub fn default_grid(m: usize) -> Result<QuantileGrid> {
    QuantileGrid::uniform(m)
}

/// Grid size paired with a sample size: the nearest of the
/// (250, 9), (500, 24), (2500, 99), (5000, 199) reference designs.
pub fn paired_grid_size(n: usize) -> usize {
    const PAIRS: [(usize, usize); 4] = [(250, 9), (500, 24), (2500, 99), (5000, 199)];
    PAIRS
        .iter()
        .min_by_key(|(size, _)| size.abs_diff(n))
        .map(|&(_, m)| m)
        .unwrap_or(99)
}

#[derive(Debug, Clone)]
pub struct QuantileProcessFit {
    pub grid: QuantileGrid,
    /// `m x d`, row `j` holds the coefficients at level `j`.
    pub betas: DMatrix<f64>,
    /// Number of (observation, j) pairs with a raw fitted value below its predecessor.
    pub crossing_count: usize,
    /// True when evaluated curves are sorted per observation before use.
    pub rearranged: bool,
    pub n: usize,
    pub target_index: usize,
    pub column_names: Vec<String>,
    pub iterations: Vec<usize>,
}

impl QuantileProcessFit {
    pub fn m(&self) -> usize {
        self.grid.m()
    }

    /// Target-covariate coefficient at grid row `j`.
    pub fn slope(&self, j: usize) -> f64 {
        self.betas[(j, self.target_index)]
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.slope(j)).collect()
    }

    /// Rows are levels, columns are `eta` followed by coefficient names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["eta".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (j, eta) in self.grid.levels().iter().enumerate() {
            let mut rec = vec![eta.to_string()];
            rec.extend((0..self.betas.ncols()).map(|k| self.betas[(j, k)].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit every grid level; the design is checked for rank once.
pub fn fit_process(data: &Dataset, grid: &QuantileGrid) -> Result<QuantileProcessFit> {
    qr::ensure_full_rank(data.x())?;
    let opts = SolverOptions::default();
    let fits: Vec<qr::QrFit> = grid
        .levels()
        .par_iter()
        .map(|&eta| {
            qr::solve(data.y(), data.x(), eta, &opts).map_err(|e| Error::AtLevel {
                eta,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let m = grid.m();
    let d = data.d();
    let betas = DMatrix::from_fn(m, d, |j, k| fits[j].beta[k]);
    let mut fit = QuantileProcessFit {
        grid: grid.clone(),
        betas,
        crossing_count: 0,
        rearranged: true,
        n: data.n(),
        target_index: data.target_index(),
        column_names: data.column_names().to_vec(),
        iterations: fits.iter().map(|f| f.iterations).collect(),
    };
    let raw = raw_curves(&fit, data)?;
    fit.crossing_count = raw.crossings();
    Ok(fit)
}

/// `n x m` fitted conditional quantiles, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCurves {
    values: Vec<f64>,
    n: usize,
    m: usize,
}

impl FittedCurves {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    /// Adjacent pairs that decrease along the grid.
    pub fn crossings(&self) -> usize {
        self.rows().map(|r| r.windows(2).filter(|w| w[1] < w[0]).count()).sum()
    }

    pub fn rearrange(&mut self) {
        for row in self.values.chunks_exact_mut(self.m) {
            rearrange_row(row);
        }
    }
}

/// Monotone rearrangement of one observation's curve.
pub fn rearrange_row(row: &mut [f64]) {
    row.sort_by(f64::total_cmp);
}

fn check_dims(fit: &QuantileProcessFit, data: &Dataset) -> Result<()> {
    if fit.n != data.n() {
        return Err(Error::GridMismatch {
            fitted: fit.n,
            data: data.n(),
        });
    }
    if fit.betas.ncols() != data.d() {
        return Err(Error::InvalidArgument(format!(
            "process has {} coefficients, design has {} columns",
            fit.betas.ncols(),
            data.d()
        )));
    }
    Ok(())
}

/// `x_i' beta(eta_j)` without rearrangement.
pub fn raw_curves(fit: &QuantileProcessFit, data: &Dataset) -> Result<FittedCurves> {
    check_dims(fit, data)?;
    let n = data.n();
    let m = fit.m();
    let d = data.d();
    let x = data.x();
    let mut values = vec![0.0; n * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                acc += x[(i, k)] * fit.betas[(j, k)];
            }
            *v = acc;
        }
    });
    Ok(FittedCurves { values, n, m })
}

/// Fitted curves, rearranged per observation when the fit is flagged for it.
pub fn evaluate_curves(fit: &QuantileProcessFit, data: &Dataset) -> Result<FittedCurves> {
    let mut curves = raw_curves(fit, data)?;
    if fit.rearranged {
        curves.rearrange();
    }
    Ok(curves)
}
