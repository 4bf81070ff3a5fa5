//! C interface to the freeclt engine.
//!
//! Every fallible call returns an [`FcltStatus`] whose numeric value matches
//! the CLI exit codes and writes results through out-pointers. On failure the
//! message is available from [`fclt_last_error`] on the same thread.
//! Series and models are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use freeclt::covariance::{sigma_squared, CovarianceModel, World};
use freeclt::diagram::{kappa_r_sn, oracle_cumulant, world_for, CumulantRequest, Engine};
use freeclt::orthopoly::{Basis, FunctionalSeries};
use freeclt::partitions::{
    enumerate_classical_diagrams, enumerate_free_diagrams, enumerate_pair_partitions, is_noncrossing,
    RowTable,
};
use freeclt::simulate::stieltjes_semicircle;
use freeclt::{FcltError, Result};
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcltStatus {
    Ok = 0,
    Usage = 2,
    Cap = 3,
    Hypothesis = 4,
    Numeric = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 70,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcltBasis {
    Hermite = 0,
    Chebyshev = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcltWorld {
    Classical = 0,
    Free = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcltDiagramClass {
    Pairings = 0,
    Noncrossing = 1,
    Classical = 2,
    Free = 3,
    FreeConnected = 4,
}

/// Opaque functional series `Σ c_k P_k`.
pub struct FcltSeries(FunctionalSeries);

/// Opaque stationary covariance model.
pub struct FcltModel(CovarianceModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &FcltError) -> FcltStatus {
    match e.exit_code() {
        2 => FcltStatus::Usage,
        3 => FcltStatus::Cap,
        4 => FcltStatus::Hypothesis,
        _ => FcltStatus::Numeric,
    }
}

fn guard(f: impl FnOnce() -> Result<()>) -> FcltStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FcltStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            FcltStatus::Internal
        }
    }
}

fn null_arg(name: &str) -> FcltError {
    FcltError::Contract(format!("null pointer passed for {name}"))
}

/// Copies `len` values from `p`; a null pointer is allowed only when `len == 0`.
///
/// # Safety
/// `p` must point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_arg(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or valid for a write of `T`.
unsafe fn write<T>(out: *mut T, v: T, name: &str) -> Result<()> {
    if out.is_null() {
        return Err(null_arg(name));
    }
    out.write(v);
    Ok(())
}

fn basis(b: FcltBasis) -> Basis {
    match b {
        FcltBasis::Hermite => Basis::Hermite,
        FcltBasis::Chebyshev => Basis::Chebyshev,
    }
}

fn world(w: FcltWorld) -> World {
    match w {
        FcltWorld::Classical => World::Classical,
        FcltWorld::Free => World::Free,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fclt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a series from `c_0..c_{len-1}`; `c_0` must be 0.
///
/// # Safety
/// `coeffs` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_series_new(
    b: FcltBasis,
    coeffs: *const f64,
    len: usize,
    out: *mut *mut FcltSeries,
) -> FcltStatus {
    guard(|| {
        let s = FunctionalSeries::new(basis(b), slice(coeffs, len, "coeffs")?.to_vec())?;
        write(out, Box::into_raw(Box::new(FcltSeries(s))), "out")
    })
}

/// Releases a series; null is ignored.
///
/// # Safety
/// `s` must come from [`fclt_series_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fclt_series_free(s: *mut FcltSeries) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_model_geometric(a: f64, out: *mut *mut FcltModel) -> FcltStatus {
    guard(|| write(out, Box::into_raw(Box::new(FcltModel(CovarianceModel::geometric(a)?))), "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_model_power(beta: f64, out: *mut *mut FcltModel) -> FcltStatus {
    guard(|| write(out, Box::into_raw(Box::new(FcltModel(CovarianceModel::power(beta)?))), "out"))
}

/// Finite-support model `r(t) = values[|t|]`; `values[0]` must be 1.
///
/// # Safety
/// `values` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_model_tabulated(
    values: *const f64,
    len: usize,
    out: *mut *mut FcltModel,
) -> FcltStatus {
    guard(|| {
        let m = CovarianceModel::tabulated(slice(values, len, "values")?.to_vec())?;
        write(out, Box::into_raw(Box::new(FcltModel(m))), "out")
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `m` must come from one of the `fclt_model_*` constructors and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fclt_model_free(m: *mut FcltModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `model` must be a live handle or null.
unsafe fn model_ref<'a>(model: *const FcltModel) -> Result<&'a CovarianceModel> {
    model.as_ref().map(|m| &m.0).ok_or_else(|| null_arg("model"))
}

/// # Safety
/// `series` must be a live handle or null.
unsafe fn series_ref<'a>(series: *const FcltSeries) -> Result<&'a FunctionalSeries> {
    series.as_ref().map(|s| &s.0).ok_or_else(|| null_arg("series"))
}

/// # Safety
/// `degrees` and `times` must each point to `k` values.
unsafe fn request(
    w: FcltWorld,
    degrees: *const usize,
    times: *const i64,
    k: usize,
    model: *const FcltModel,
) -> Result<CumulantRequest> {
    CumulantRequest::new(
        slice(degrees, k, "degrees")?.to_vec(),
        slice(times, k, "times")?.to_vec(),
        world(w),
        model_ref(model)?.clone(),
    )
}

/// Joint cumulant of `P_{n_i}(X_{t_i})`, `i < k`, by the diagram formula.
///
/// # Safety
/// `degrees` and `times` must point to `k` values, `model` must be live and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_joint_cumulant(
    w: FcltWorld,
    degrees: *const usize,
    times: *const i64,
    k: usize,
    model: *const FcltModel,
    out: *mut f64,
) -> FcltStatus {
    guard(|| {
        let req = request(w, degrees, times, k, model)?;
        write(out, Engine::default().joint_cumulant(&req)?, "out")
    })
}

/// The same cumulant through the Wick/Möbius oracle (`Σ n_i ≤ 12`).
///
/// # Safety
/// As for [`fclt_joint_cumulant`].
#[no_mangle]
pub unsafe extern "C" fn fclt_oracle_cumulant(
    w: FcltWorld,
    degrees: *const usize,
    times: *const i64,
    k: usize,
    model: *const FcltModel,
    out: *mut f64,
) -> FcltStatus {
    guard(|| {
        let req = request(w, degrees, times, k, model)?;
        write(out, oracle_cumulant(&req)?, "out")
    })
}

/// `σ² = Σ_t` of the functional covariance, with the truncation tail bound.
///
/// # Safety
/// Handles must be live; `value` must be writable; `tail_bound` may be null.
#[no_mangle]
pub unsafe extern "C" fn fclt_sigma_squared(
    series: *const FcltSeries,
    model: *const FcltModel,
    tail_tol: f64,
    value: *mut f64,
    tail_bound: *mut f64,
) -> FcltStatus {
    guard(|| {
        let r = sigma_squared(series_ref(series)?, model_ref(model)?, tail_tol)?;
        write(value, r.value, "value")?;
        if !tail_bound.is_null() {
            tail_bound.write(r.tail_bound);
        }
        Ok(())
    })
}

/// Raw cumulant `κ_R(S_N)`; the world follows the series basis.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_kappa(
    series: *const FcltSeries,
    model: *const FcltModel,
    n: usize,
    r: usize,
    out: *mut f64,
) -> FcltStatus {
    guard(|| {
        let s = series_ref(series)?;
        write(out, kappa_r_sn(s, model_ref(model)?, n, r, world_for(s.basis()))?, "out")
    })
}

/// Number of partitions of the given class for the row table `rows[0..k]`.
///
/// # Safety
/// `rows` must point to `k` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_count_diagrams(
    class: FcltDiagramClass,
    rows: *const usize,
    k: usize,
    out: *mut u64,
) -> FcltStatus {
    guard(|| {
        let t = RowTable::new(slice(rows, k, "rows")?.to_vec())?;
        let count = match class {
            FcltDiagramClass::Pairings => enumerate_pair_partitions(t.total())?.len(),
            FcltDiagramClass::Noncrossing => enumerate_pair_partitions(t.total())?
                .iter()
                .filter(|p| is_noncrossing(p))
                .count(),
            FcltDiagramClass::Classical => enumerate_classical_diagrams(&t)?.len(),
            FcltDiagramClass::Free => enumerate_free_diagrams(&t, false)?.len(),
            FcltDiagramClass::FreeConnected => enumerate_free_diagrams(&t, true)?.len(),
        };
        write(out, count as u64, "out")
    })
}

/// Stieltjes transform of the semicircle law of variance `sigma²` at `re + i·im`.
///
/// # Safety
/// `out_re` and `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fclt_stieltjes_semicircle(
    re: f64,
    im: f64,
    sigma: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> FcltStatus {
    guard(|| {
        let s = stieltjes_semicircle(Complex64::new(re, im), sigma)?;
        write(out_re, s.re, "out_re")?;
        write(out_im, s.im, "out_im")
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fclt_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(fclt_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_out_pointer_is_a_usage_error() {
        let st = unsafe { fclt_model_geometric(0.5, ptr::null_mut()) };
        assert_eq!(st, FcltStatus::Usage);
        assert!(last_error().contains("null"));
    }

    #[test]
    fn invalid_model_reports_message() {
        let mut m = ptr::null_mut();
        let st = unsafe { fclt_model_geometric(1.5, &mut m) };
        assert_ne!(st, FcltStatus::Ok);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(fclt_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
