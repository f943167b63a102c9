//! C interface to kgm-core.
//!
//! Objects cross the boundary as opaque handles. Each handle is released with
//! the matching `*_free` function. Every fallible call
//! returns a [`KgmStatus`]; the message of the most recent failure on the
//! calling thread is available from [`kgm_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kgm_core::data::{covariance_lags, CovLags, Series};
use kgm_core::io::{to_json_string, ResultFile};
use kgm_core::pipeline::{edge_residual_spectrum, estimate, EstimationConfig, EstimationResult, Grouping, Method};
use kgm_core::spectral::FreqGrid;
use kgm_core::{ErrorKind, KgmError};
use nalgebra::DMatrix;

/// Status codes. The nonzero values 2-4 match the `kgm` exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgmStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Data = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgmMethod {
    K1 = 0,
    K2 = 1,
    P1 = 2,
    P2 = 3,
    S = 4,
    Burg = 5,
}

impl From<KgmMethod> for Method {
    fn from(m: KgmMethod) -> Self {
        match m {
            KgmMethod::K1 => Method::K1,
            KgmMethod::K2 => Method::K2,
            KgmMethod::P1 => Method::P1,
            KgmMethod::P2 => Method::P2,
            KgmMethod::S => Method::S,
            KgmMethod::Burg => Method::Burg,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgmGrouping {
    Modules = 0,
    Nodes = 1,
}

/// Estimator settings. Obtain defaults from [`kgm_estimate_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KgmEstimateOptions {
    pub eps: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub grid_points: usize,
}

/// Sample covariance lags.
pub struct KgmLags {
    inner: CovLags,
}

/// An estimate together with the data and settings that produced it.
pub struct KgmResult {
    result: EstimationResult,
    lags: CovLags,
    config: EstimationConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: KgmError) -> KgmStatus {
    let status = match e.kind() {
        ErrorKind::Validation => KgmStatus::Validation,
        ErrorKind::Data => KgmStatus::Data,
        ErrorKind::Numerical => KgmStatus::Numerical,
    };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> KgmStatus) -> KgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            KgmStatus::Panic
        }
    }
}

fn null_arg(name: &str) -> KgmStatus {
    set_error(format!("{name} is null"));
    KgmStatus::NullPointer
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kgm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn kgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn kgm_estimate_options_default() -> KgmEstimateOptions {
    let d = EstimationConfig::default();
    KgmEstimateOptions {
        eps: d.eps,
        outer_tol: d.outer_tol,
        max_outer: d.max_outer,
        grid_points: d.grid_points,
    }
}

/// Lags R̂_0..R̂_order of a row-major `nobs × channels` series.
///
/// # Safety
/// `data` must point to `nobs * channels` readable doubles and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn kgm_lags_from_series(
    data: *const f64,
    nobs: usize,
    channels: usize,
    order: usize,
    out: *mut *mut KgmLags,
) -> KgmStatus {
    guard(|| {
        if data.is_null() {
            return null_arg("data");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let Some(len) = nobs.checked_mul(channels) else {
            return fail(KgmError::InvalidArgument("series size overflows".into()));
        };
        let slice = std::slice::from_raw_parts(data, len);
        let lags = Series::new(DMatrix::from_row_slice(nobs, channels, slice))
            .and_then(|s| covariance_lags(&s, order));
        match lags {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(KgmLags { inner }));
                KgmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `lags` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgm_lags_free(lags: *mut KgmLags) {
    if !lags.is_null() {
        drop(Box::from_raw(lags));
    }
}

/// Runs an estimator on the lags. A null `options` uses the defaults.
///
/// # Safety
/// Handles must be live; `options` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kgm_estimate(
    lags: *const KgmLags,
    method: KgmMethod,
    m1: usize,
    m2: usize,
    options: *const KgmEstimateOptions,
    out: *mut *mut KgmResult,
) -> KgmStatus {
    guard(|| {
        if lags.is_null() {
            return null_arg("lags");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let opts = if options.is_null() {
            kgm_estimate_options_default()
        } else {
            *options
        };
        let config = EstimationConfig {
            eps: opts.eps,
            outer_tol: opts.outer_tol,
            max_outer: opts.max_outer,
            grid_points: opts.grid_points,
            ..EstimationConfig::new(method.into(), m1, m2)
        };
        let lags = &(*lags).inner;
        match estimate(lags, &config) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(KgmResult {
                    result,
                    lags: lags.clone(),
                    config,
                }));
                KgmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_free(result: *mut KgmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Channel count m = m1·m2, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_dim(result: *const KgmResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.sigma.dim())
}

/// AR order n, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_order(result: *const KgmResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.sigma.order())
}

/// Fraction of tuples where the raw support differs from Ê1 ⊗ Ê2, or NaN for a
/// null handle.
///
/// # Safety
/// `result` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_defect(result: *const KgmResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.result.support.defect)
}

/// # Safety
/// `result` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_outer_iterations(result: *const KgmResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.outer_iterations())
}

/// Copies S_0..S_n as (n+1) row-major m×m blocks into `buf`.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_coefficients(result: *const KgmResult, buf: *mut f64, len: usize) -> KgmStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return null_arg("result");
        };
        if buf.is_null() {
            return null_arg("buf");
        }
        let sigma = &r.result.sigma;
        let m = sigma.dim();
        let need = (sigma.order() + 1) * m * m;
        if len < need {
            set_error(format!("buffer holds {len} values, {need} needed"));
            return KgmStatus::BufferTooSmall;
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (t, blk) in sigma.coeffs().iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    out[t * m * m + i * m + j] = blk[(i, j)];
                }
            }
        }
        KgmStatus::Ok
    })
}

/// Copies Ê1 (m1×m1) and Ê2 (m2×m2) row-major as 0/1 bytes.
///
/// # Safety
/// `e1` must hold `len1` and `e2` `len2` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_supports(
    result: *const KgmResult,
    e1: *mut u8,
    len1: usize,
    e2: *mut u8,
    len2: usize,
) -> KgmStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return null_arg("result");
        };
        if e1.is_null() || e2.is_null() {
            return null_arg("support buffer");
        }
        let s = &r.result.support.support;
        for (mat, buf, len) in [(&s.e1, e1, len1), (&s.e2, e2, len2)] {
            let k = mat.size();
            if len < k * k {
                set_error(format!("buffer holds {len} values, {} needed", k * k));
                return KgmStatus::BufferTooSmall;
            }
            let out = std::slice::from_raw_parts_mut(buf, k * k);
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] = mat.get(i, j) as u8;
                }
            }
        }
        KgmStatus::Ok
    })
}

/// Serializes the result in the `result.json` format. Release the string
/// with [`kgm_string_free`].
///
/// # Safety
/// `result` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kgm_result_to_json(result: *const KgmResult, out: *mut *mut c_char) -> KgmStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return null_arg("result");
        };
        if out.is_null() {
            return null_arg("out");
        }
        match to_json_string(&ResultFile::new(&r.result, &r.lags, &r.config)) {
            Ok(s) => {
                *out = CString::new(s).expect("json has no nul").into_raw();
                KgmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn kgm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Residual cross-spectrum norm for the pair (a, b) on a `grid_points` grid,
/// written to `buf` (one value per grid angle θ_g = −π + 2πg/G).
///
/// # Safety
/// `result` must be live and `buf` hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kgm_edge_residual_spectrum(
    result: *const KgmResult,
    grouping: KgmGrouping,
    a: usize,
    b: usize,
    grid_points: usize,
    buf: *mut f64,
    len: usize,
) -> KgmStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return null_arg("result");
        };
        if buf.is_null() {
            return null_arg("buf");
        }
        let grouping = match grouping {
            KgmGrouping::Modules => Grouping::Modules,
            KgmGrouping::Nodes => Grouping::Nodes,
        };
        let curve = FreqGrid::new(grid_points).and_then(|g| {
            edge_residual_spectrum(&r.result.sigma, r.result.m1, r.result.m2, grouping, (a, b), &g)
        });
        match curve {
            Ok(c) if c.len() > len => {
                set_error(format!("buffer holds {len} values, {} needed", c.len()));
                KgmStatus::BufferTooSmall
            }
            Ok(c) => {
                std::slice::from_raw_parts_mut(buf, c.len()).copy_from_slice(&c);
                KgmStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
