//! C ABI over the `uqpe` estimators.
//!
//! Objects are opaque handles created by `*_new`/`*_fit` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! status code; on failure `uqpe_last_error_message` describes the cause for
//! the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use uqpe::dataset::{load_csv, Dataset, LoadOptions};
use uqpe::inference::pairwise_bootstrap_vec;
use uqpe::process::{paired_grid_size, QuantileGrid};
use uqpe::rif::{rif_uqpe, RifVariant};
use uqpe::smoothing::{bandwidth, BandwidthRule};
use uqpe::uqpe::{Method, Prepared};
use uqpe::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UqpeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad input: data shape, arguments, files.
    InvalidInput = 2,
    /// Numerical failure: rank deficiency, divergence, degenerate samples.
    Numeric = 3,
    /// Output buffer shorter than required.
    BufferTooSmall = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

/// Second-stage smoother selector.
pub type UqpeMethod = u32;
pub const UQPE_METHOD_NW: UqpeMethod = 0;
pub const UQPE_METHOD_LOCAL_LINEAR: UqpeMethod = 1;
pub const UQPE_METHOD_LOCAL_LINEAR_LITERAL: UqpeMethod = 2;

/// RIF baseline selector.
pub type UqpeRifVariant = u32;
pub const UQPE_RIF_OLS_LINEAR: UqpeRifVariant = 1;
pub const UQPE_RIF_OLS_QUADRATIC: UqpeRifVariant = 2;
pub const UQPE_RIF_OLS_CUBIC: UqpeRifVariant = 3;
pub const UQPE_RIF_LOGIT: UqpeRifVariant = 4;

/// Outcome, intercept, target and controls.
pub struct UqpeDataset(Dataset);

/// A fitted quantile regression process with matched curves.
pub struct UqpeModel {
    data: Dataset,
    prepared: Prepared,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UqpeEstimate {
    pub tau: f64,
    pub estimate: f64,
    pub q_tau: f64,
    pub bandwidth: f64,
    pub n: usize,
    /// Grid size of the process; 0 for RIF baselines.
    pub grid_m: usize,
    pub boundary_hits: usize,
    /// Estimated density of the outcome at `q_tau`; NaN for process-based estimates.
    pub density_at_q: f64,
    pub fell_back_to_nw: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UqpeInterval {
    pub tau: f64,
    pub point: f64,
    pub se: f64,
    pub gaussian_lo: f64,
    pub gaussian_hi: f64,
    pub percentile_lo: f64,
    pub percentile_hi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UqpeStatus {
    if e.is_validation() {
        UqpeStatus::InvalidInput
    } else {
        UqpeStatus::Numeric
    }
}

enum Failure {
    Null(&'static str),
    Buffer { needed: usize, got: usize },
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UqpeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            UqpeStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("NullPointer: `{what}` is null"));
            UqpeStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, got })) => {
            set_last_error(format!("BufferTooSmall: need {needed} elements, got {got}"));
            UqpeStatus::BufferTooSmall
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("Panic: {msg}"));
            UqpeStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid C objects.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, needed: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len < needed {
        return Err(Failure::Buffer { needed, got: len });
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Core(Error::InvalidArgument(format!("`{what}` is not valid UTF-8"))))
}

fn method_of(m: UqpeMethod) -> Result<Method, Failure> {
    match m {
        UQPE_METHOD_NW => Ok(Method::Nw),
        UQPE_METHOD_LOCAL_LINEAR => Ok(Method::LocalLinear),
        UQPE_METHOD_LOCAL_LINEAR_LITERAL => Ok(Method::LocalLinearLiteral),
        other => Err(Error::InvalidArgument(format!("unknown method code {other}")).into()),
    }
}

fn variant_of(v: UqpeRifVariant) -> Result<RifVariant, Failure> {
    match v {
        UQPE_RIF_LOGIT => Ok(RifVariant::Logit),
        1..=3 => Ok(RifVariant::ols_degree(v as usize)?),
        other => Err(Error::InvalidArgument(format!("unknown RIF variant code {other}")).into()),
    }
}

fn grid_of(m: usize, n: usize) -> Result<QuantileGrid, Failure> {
    Ok(QuantileGrid::uniform(if m == 0 { paired_grid_size(n) } else { m })?)
}

fn publish<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    // SAFETY: checked non-null; the caller owns the slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null after a success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn uqpe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn uqpe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Dataset from in-memory columns.
///
/// `controls` holds `n_controls` columns of length `n`, column after column.
///
/// # Safety
/// `y` and `target` must point to `n` doubles, `controls` to `n * n_controls`
/// doubles (or be null when `n_controls` is 0), and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn uqpe_dataset_new(
    y: *const f64,
    target: *const f64,
    controls: *const f64,
    n: usize,
    n_controls: usize,
    out: *mut *mut UqpeDataset,
) -> UqpeStatus {
    guard(|| {
        let y = slice(y, n, "y")?.to_vec();
        let x = slice(target, n, "target")?.to_vec();
        let len = n
            .checked_mul(n_controls)
            .ok_or_else(|| Error::InvalidArgument("control matrix size overflows".into()))?;
        let c = slice(controls, len, "controls")?;
        let names: Vec<String> = (1..=n_controls).map(|j| format!("c{j}")).collect();
        let cols = names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.as_str(), c[j * n..(j + 1) * n].to_vec()))
            .collect();
        let data = Dataset::from_columns(("y", y), ("x", x), cols)?;
        publish(out, UqpeDataset(data))
    })
}

/// Dataset from a CSV file with a header row.
///
/// # Safety
/// String arguments must be nul-terminated; `controls` must hold
/// `n_controls` such strings (or be null when `n_controls` is 0).
#[no_mangle]
pub unsafe extern "C" fn uqpe_dataset_load_csv(
    path: *const c_char,
    outcome: *const c_char,
    target: *const c_char,
    controls: *const *const c_char,
    n_controls: usize,
    drop_na: bool,
    out: *mut *mut UqpeDataset,
) -> UqpeStatus {
    guard(|| {
        let path = string(path, "path")?;
        let outcome = string(outcome, "outcome")?;
        let target = string(target, "target")?;
        let mut names = Vec::with_capacity(n_controls);
        if n_controls > 0 {
            if controls.is_null() {
                return Err(Failure::Null("controls"));
            }
            for j in 0..n_controls {
                names.push(string(*controls.add(j), "controls[j]")?);
            }
        }
        let data = load_csv(&path, &outcome, &target, &names, LoadOptions { drop_na })?;
        publish(out, UqpeDataset(data))
    })
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uqpe_dataset_n(data: *const UqpeDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uqpe_dataset_free(data: *mut UqpeDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits the quantile regression process on `grid_m` levels (0 selects the
/// size paired with the sample size) and prepares matching.
///
/// # Safety
/// `data` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_fit(
    data: *const UqpeDataset,
    grid_m: usize,
    bandwidth_constant: f64,
    bandwidth_exponent: f64,
    out: *mut *mut UqpeModel,
) -> UqpeStatus {
    guard(|| {
        let data = &non_null(data, "data")?.0;
        let grid = grid_of(grid_m, data.n())?;
        let rule = BandwidthRule::new(bandwidth_constant, bandwidth_exponent)?;
        let prepared = Prepared::new(data, &grid, &rule)?;
        publish(
            out,
            UqpeModel {
                data: data.clone(),
                prepared,
            },
        )
    })
}

/// Grid size of a fitted model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_grid_size(model: *const UqpeModel) -> usize {
    model.as_ref().map_or(0, |m| m.prepared.fit.m())
}

/// Copies the grid levels and the target slope at each level.
///
/// # Safety
/// `levels` and `slopes` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_slopes(
    model: *const UqpeModel,
    levels: *mut f64,
    slopes: *mut f64,
    len: usize,
) -> UqpeStatus {
    guard(|| {
        let fit = &non_null(model, "model")?.prepared.fit;
        let m = fit.m();
        slice_mut(levels, len, m, "levels")?.copy_from_slice(fit.grid.levels());
        slice_mut(slopes, len, m, "slopes")?.copy_from_slice(&fit.slopes());
        Ok(())
    })
}

/// Effect estimate at `tau`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_estimate(
    model: *const UqpeModel,
    tau: f64,
    method: UqpeMethod,
    out: *mut UqpeEstimate,
) -> UqpeStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let e = model.prepared.estimate(&model.data, tau, method_of(method)?)?;
        *out = UqpeEstimate {
            tau: e.tau,
            estimate: e.estimate,
            q_tau: e.q_tau,
            bandwidth: e.bandwidth,
            n: e.n,
            grid_m: e.grid_m,
            boundary_hits: e.boundary_hits,
            density_at_q: f64::NAN,
            fell_back_to_nw: e.fell_back_to_nw,
        };
        Ok(())
    })
}

/// Matched level and matched slope for every observation at `tau`.
///
/// # Safety
/// `xi` and `slopes` must each hold `len >= n` doubles.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_matching(
    model: *const UqpeModel,
    tau: f64,
    xi: *mut f64,
    slopes: *mut f64,
    len: usize,
) -> UqpeStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let m = model.prepared.matching(&model.data, tau)?;
        let n = model.data.n();
        slice_mut(xi, len, n, "xi")?.copy_from_slice(&m.xi);
        slice_mut(slopes, len, n, "slopes")?.copy_from_slice(&m.matched_slope);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uqpe_model_free(model: *mut UqpeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// RIF-regression baseline at `tau`, with the density bandwidth from the
/// given rule.
///
/// # Safety
/// `data` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uqpe_rif_estimate(
    data: *const UqpeDataset,
    tau: f64,
    variant: UqpeRifVariant,
    bandwidth_constant: f64,
    bandwidth_exponent: f64,
    out: *mut UqpeEstimate,
) -> UqpeStatus {
    guard(|| {
        let data = &non_null(data, "data")?.0;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let rule = BandwidthRule::new(bandwidth_constant, bandwidth_exponent)?;
        let h = bandwidth(&rule, data.y())?;
        let e = rif_uqpe(data, tau, variant_of(variant)?, h)?;
        *out = UqpeEstimate {
            tau: e.tau,
            estimate: e.estimate,
            q_tau: e.q_tau,
            bandwidth: e.bandwidth,
            n: e.n,
            grid_m: 0,
            boundary_hits: 0,
            density_at_q: e.density_at_q,
            fell_back_to_nw: false,
        };
        Ok(())
    })
}

/// Pairwise bootstrap of the process-based estimator at each of `n_taus`
/// levels, with `replications` resamples seeded by `seed`.
///
/// # Safety
/// `taus` must hold `n_taus` doubles and `out` room for `n_taus` intervals.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn uqpe_bootstrap(
    data: *const UqpeDataset,
    taus: *const f64,
    n_taus: usize,
    method: UqpeMethod,
    grid_m: usize,
    bandwidth_constant: f64,
    bandwidth_exponent: f64,
    replications: usize,
    seed: u64,
    alpha: f64,
    out: *mut UqpeInterval,
) -> UqpeStatus {
    guard(|| {
        let data = &non_null(data, "data")?.0;
        let taus = slice(taus, n_taus, "taus")?;
        if taus.is_empty() {
            return Err(Error::EmptyInput("tau list").into());
        }
        let out = slice_mut(out, n_taus, n_taus, "out")?;
        let method = method_of(method)?;
        let grid = grid_of(grid_m, data.n())?;
        let rule = BandwidthRule::new(bandwidth_constant, bandwidth_exponent)?;
        let stat = |d: &Dataset| -> uqpe::Result<Vec<f64>> {
            let p = Prepared::new(d, &grid, &rule)?;
            taus.iter()
                .map(|&t| p.estimate(d, t, method).map(|e| e.estimate))
                .collect()
        };
        let results = pairwise_bootstrap_vec(data, stat, replications, seed, alpha)?;
        for ((slot, r), &tau) in out.iter_mut().zip(&results).zip(taus) {
            *slot = UqpeInterval {
                tau,
                point: r.point,
                se: r.se,
                gaussian_lo: r.gaussian_ci.0,
                gaussian_hi: r.gaussian_ci.1,
                percentile_lo: r.percentile_ci.0,
                percentile_hi: r.percentile_ci.1,
            };
        }
        Ok(())
    })
}
