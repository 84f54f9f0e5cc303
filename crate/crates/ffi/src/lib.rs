//! C interface to `epitruss`.
//!
//! Fallible functions return an [`EptStatus`]; the message of the last
//! failure is available from [`ept_last_error`] on the same thread. Matrices
//! are dense row-major `n * n` arrays of which only the symmetric part is
//! read. An infinite eigenvalue is written as IEEE `+inf`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use epitruss::cli::{execute, Command, ResultRecord, RunConfig};
use epitruss::geneig::{lambda_max_eps, lambda_max_ext, lambda_min_ext};
use epitruss::problems::{phi_eps, phi_exact, psi_eps, psi_exact};
use epitruss::symmat::{SymMatrix, TolerancePolicy};
use epitruss::truss::TrussModel;
use epitruss::Error;
use nalgebra::DVector;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPsd = 4,
    InvalidConfig = 5,
    Bracket = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EptCommand {
    Solve = 0,
    SweepEps = 1,
    Bisect = 2,
}

/// Assembled truss model.
pub struct EptModel {
    model: TrussModel,
}

/// Outcome of a run.
pub struct EptResult {
    record: ResultRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EptStatus {
    match err {
        Error::DimensionMismatch { .. } => EptStatus::DimensionMismatch,
        Error::NotPositiveSemidefinite { .. } | Error::NotPositiveDefinite => EptStatus::NotPsd,
        Error::InvalidMatrix(_)
        | Error::InvalidEpsilon(_)
        | Error::InvalidSmoothing(_)
        | Error::DegeneratePair
        | Error::OutOfDomain { .. } => EptStatus::InvalidArgument,
        Error::NoFreeDofs
        | Error::InvalidStructure(_)
        | Error::InvalidLoadNode(_)
        | Error::EmptyFeasibleSet(_)
        | Error::InvalidConfig(_)
        | Error::Json(_) => EptStatus::InvalidConfig,
        Error::BracketError(_) => EptStatus::Bracket,
        Error::Io(_) | Error::Csv(_) => EptStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EptStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            EptStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            EptStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EptStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix(n: usize, p: *const f64, name: &'static str) -> Result<SymMatrix, Failure> {
    let len = n.checked_mul(n).ok_or_else(|| Failure::Arg(format!("{name}: dimension {n} overflows")))?;
    Ok(SymMatrix::from_row_major(n, slice(p, len, name)?)?)
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(format!("{name}: not valid UTF-8")))
}

unsafe fn design<'a>(model: *const EptModel, x: *const f64, len: usize) -> Result<(&'a TrussModel, DVector<f64>), Failure> {
    let m = &non_null(model, "model")?.model;
    if len != m.num_vars() {
        return Err(Error::DimensionMismatch { expected: m.num_vars(), got: len }.into());
    }
    Ok((m, DVector::from_column_slice(slice(x, len, "x")?)))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ept_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ept_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `lambda_max(X, Y)` for PSD `X`, `Y`; `+inf` when a kernel direction of `Y`
/// is not in the kernel of `X`.
///
/// # Safety
/// `x` and `y` point to `n * n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ept_lambda_max(n: usize, x: *const f64, y: *const f64, out_value: *mut f64) -> EptStatus {
    guard(|| {
        let (x, y) = (matrix(n, x, "x")?, matrix(n, y, "y")?);
        *out(out_value, "out_value")? = lambda_max_ext(&x, &y, &TolerancePolicy::default())?.value.to_f64();
        Ok(())
    })
}

/// `lambda_min(X, Y)`; `+inf` when `Y = 0`.
///
/// # Safety
/// As [`ept_lambda_max`].
#[no_mangle]
pub unsafe extern "C" fn ept_lambda_min(n: usize, x: *const f64, y: *const f64, out_value: *mut f64) -> EptStatus {
    guard(|| {
        let (x, y) = (matrix(n, x, "x")?, matrix(n, y, "y")?);
        *out(out_value, "out_value")? = lambda_min_ext(&x, &y, &TolerancePolicy::default())?.to_f64();
        Ok(())
    })
}

/// `lambda_max(X, Y + eps I)` for `eps > 0`.
///
/// # Safety
/// As [`ept_lambda_max`].
#[no_mangle]
pub unsafe extern "C" fn ept_lambda_max_eps(
    n: usize,
    x: *const f64,
    y: *const f64,
    eps: f64,
    out_value: *mut f64,
) -> EptStatus {
    guard(|| {
        let (x, y) = (matrix(n, x, "x")?, matrix(n, y, "y")?);
        *out(out_value, "out_value")? = lambda_max_eps(&x, &y, eps)?.value.to_f64();
        Ok(())
    })
}

/// Builds the model described by a run configuration (JSON text).
///
/// # Safety
/// `config_json` is a NUL-terminated string; `out_model` is writable. The
/// handle is released with [`ept_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ept_model_from_json(config_json: *const c_char, out_model: *mut *mut EptModel) -> EptStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let cfg = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        *slot = Box::into_raw(Box::new(EptModel { model: cfg.model()? }));
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle from [`ept_model_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ept_model_free(model: *mut EptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of design variables, 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ept_model_num_vars(model: *const EptModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_vars())
}

/// Number of free degrees of freedom, 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ept_model_dim(model: *const EptModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim())
}

/// Robust compliance `lambda_max(QQ', K(x))`.
///
/// # Safety
/// `model` is a live handle, `x` points to `len` doubles, `out_value` is writable.
#[no_mangle]
pub unsafe extern "C" fn ept_model_psi(
    model: *const EptModel,
    x: *const f64,
    len: usize,
    out_value: *mut f64,
) -> EptStatus {
    guard(|| {
        let (m, x) = design(model, x, len)?;
        *out(out_value, "out_value")? = psi_exact(m, &x)?.to_f64();
        Ok(())
    })
}

/// Robust compliance with `K(x) + eps I`.
///
/// # Safety
/// As [`ept_model_psi`].
#[no_mangle]
pub unsafe extern "C" fn ept_model_psi_eps(
    model: *const EptModel,
    x: *const f64,
    len: usize,
    eps: f64,
    out_value: *mut f64,
) -> EptStatus {
    guard(|| {
        let (m, x) = design(model, x, len)?;
        *out(out_value, "out_value")? = psi_eps(m, &x, eps)?;
        Ok(())
    })
}

/// `lambda_max(M(x), K(x))`, the reciprocal of the squared fundamental frequency.
///
/// # Safety
/// As [`ept_model_psi`].
#[no_mangle]
pub unsafe extern "C" fn ept_model_phi(
    model: *const EptModel,
    x: *const f64,
    len: usize,
    out_value: *mut f64,
) -> EptStatus {
    guard(|| {
        let (m, x) = design(model, x, len)?;
        *out(out_value, "out_value")? = phi_exact(m, &x)?.to_f64();
        Ok(())
    })
}

/// `lambda_max(M(x), K(x) + eps I)`.
///
/// # Safety
/// As [`ept_model_psi`].
#[no_mangle]
pub unsafe extern "C" fn ept_model_phi_eps(
    model: *const EptModel,
    x: *const f64,
    len: usize,
    eps: f64,
    out_value: *mut f64,
) -> EptStatus {
    guard(|| {
        let (m, x) = design(model, x, len)?;
        *out(out_value, "out_value")? = phi_eps(m, &x, eps)?;
        Ok(())
    })
}

/// Runs a configuration. Nothing is written to disk and `GENEIG_SEED` is
/// ignored; the seed comes from the configuration.
///
/// # Safety
/// `config_json` is a NUL-terminated string; `out_result` is writable. The
/// handle is released with [`ept_result_free`].
#[no_mangle]
pub unsafe extern "C" fn ept_solve(
    config_json: *const c_char,
    command: EptCommand,
    out_result: *mut *mut EptResult,
) -> EptStatus {
    guard(|| {
        let slot = out(out_result, "out_result")?;
        *slot = ptr::null_mut();
        let cfg = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        let command = match command {
            EptCommand::Solve => Command::Solve,
            EptCommand::SweepEps => Command::SweepEps,
            EptCommand::Bisect => Command::Bisect,
        };
        let record = execute(&cfg, command)?.record;
        *slot = Box::into_raw(Box::new(EptResult { record }));
        Ok(())
    })
}

/// # Safety
/// `result` is null or a handle from [`ept_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ept_result_free(result: *mut EptResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Final solver objective and the exact objective at the final design.
///
/// # Safety
/// `result` is a live handle; the outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn ept_result_objective(
    result: *const EptResult,
    out_final: *mut f64,
    out_exact: *mut f64,
) -> EptStatus {
    guard(|| {
        let r = &non_null(result, "result")?.record.report;
        *out(out_final, "out_final")? = r.obj_final;
        *out(out_exact, "out_exact")? = r.obj_exact.to_f64();
        Ok(())
    })
}

/// Copies up to `cap` entries of the final design into `buf` and stores the
/// full length in `out_len`. Pass `cap = 0` to query the length.
///
/// # Safety
/// `result` is a live handle; `buf` has room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ept_result_design(
    result: *const EptResult,
    buf: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> EptStatus {
    guard(|| {
        let x = &non_null(result, "result")?.record.report.x_final;
        *out(out_len, "out_len")? = x.len();
        let k = cap.min(x.len());
        if k > 0 {
            if buf.is_null() {
                return Err(Failure::Null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, k).copy_from_slice(&x.as_slice()[..k]);
        }
        Ok(())
    })
}

/// The full result record as JSON, or null on failure. Release with
/// [`ept_string_free`].
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ept_result_to_json(result: *const EptResult) -> *mut c_char {
    let mut text = ptr::null_mut();
    let status = guard(|| {
        let r = &non_null(result, "result")?.record;
        let json = serde_json::to_string(r).map_err(Error::from)?;
        text = CString::new(json).expect("JSON has no nul").into_raw();
        Ok(())
    });
    if status == EptStatus::Ok {
        text
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `s` is null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ept_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
