//! C interface to `wassdro`.
//!
//! Every fallible function returns a [`WdStatus`]; on failure the message is
//! available from [`wd_last_error`] on the same thread. Handles are opaque
//! and must be released with the matching `*_free` function. Strings returned
//! by the library are released with [`wd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wassdro::conic::{export, ExportFormat, SolveSettings, SolveStatus};
use wassdro::copos::{build_full_problem, build_wce_upper};
use wassdro::exact_lp::solve_lp;
use wassdro::model::{from_json_str, load_problem, validate, TwoStageProblem};
use wassdro::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Dimension = 3,
    Precondition = 4,
    InvalidInput = 5,
    Parse = 6,
    Solver = 7,
    NotSufficientlyExpensive = 8,
    UnboundedSupport = 9,
    NoFeasibleCandidate = 10,
    UnsupportedCone = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
    Other = 15,
}

/// Termination of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdSolveStatus {
    Optimal = 0,
    PrimalInfeasible = 1,
    DualInfeasible = 2,
    NumericalTrouble = 3,
    IterLimit = 4,
}

/// Conic file formats.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdFormat {
    Cbf = 0,
    Sdpa = 1,
}

/// Opaque two-stage instance.
pub struct WdProblem {
    inner: TwoStageProblem,
}

/// Opaque solve result.
pub struct WdSolution {
    status: SolveStatus,
    objective: f64,
    x: Vec<f64>,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code(e: &Error) -> WdStatus {
    match e {
        Error::Dimension(_) => WdStatus::Dimension,
        Error::Precondition(_) | Error::EnumerationGuard(_) => WdStatus::Precondition,
        Error::InvalidInput(_) | Error::NotSymmetric(_) => WdStatus::InvalidInput,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => WdStatus::Parse,
        Error::Solver { .. } => WdStatus::Solver,
        Error::NotSufficientlyExpensive(_) => WdStatus::NotSufficientlyExpensive,
        Error::UnboundedSupport => WdStatus::UnboundedSupport,
        Error::NoFeasibleCandidate => WdStatus::NoFeasibleCandidate,
        Error::UnsupportedCone { .. } => WdStatus::UnsupportedCone,
        Error::Io(_) => WdStatus::Io,
        #[allow(unreachable_patterns)]
        _ => WdStatus::Other,
    }
}

/// Runs `f`, records its error or panic, and maps it to a status code.
fn guard(f: impl FnOnce() -> Result<(), WdStatusError>) -> WdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WdStatus::Ok
        }
        Ok(Err(WdStatusError(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside wassdro".into());
            WdStatus::Panic
        }
    }
}

struct WdStatusError(WdStatus, String);

impl From<Error> for WdStatusError {
    fn from(e: Error) -> Self {
        WdStatusError(code(&e), e.to_string())
    }
}

fn null(what: &str) -> WdStatusError {
    WdStatusError(WdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, WdStatusError> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| WdStatusError(WdStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn solve_status(s: SolveStatus) -> WdSolveStatus {
    match s {
        SolveStatus::Optimal => WdSolveStatus::Optimal,
        SolveStatus::PrimalInfeasible => WdSolveStatus::PrimalInfeasible,
        SolveStatus::DualInfeasible => WdSolveStatus::DualInfeasible,
        SolveStatus::NumericalTrouble => WdSolveStatus::NumericalTrouble,
        SolveStatus::IterLimit => WdSolveStatus::IterLimit,
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn wd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an instance from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wd_problem_from_json(json: *const c_char, out: *mut *mut WdProblem) -> WdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = from_json_str(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(WdProblem { inner: p }));
        Ok(())
    })
}

/// Loads an instance from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wd_problem_load(path: *const c_char, out: *mut *mut WdProblem) -> WdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = load_problem(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(WdProblem { inner: p }));
        Ok(())
    })
}

/// Releases an instance. Null is ignored.
///
/// # Safety
/// `p` must come from `wd_problem_from_json` or `wd_problem_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wd_problem_free(p: *mut WdProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// First-stage dimension, uncertainty dimension and sample count.
///
/// # Safety
/// `p` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn wd_problem_dims(
    p: *const WdProblem,
    n1: *mut usize,
    k: *mut usize,
    samples: *mut usize,
) -> WdStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.inner;
        for (ptr, v) in [(n1, p.n1()), (k, p.k()), (samples, p.num_samples())] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// Writes the number of validation findings to `findings` (0 means valid)
/// and, if `report` is non-null, the JSON report to `*report`.
///
/// # Safety
/// `p` must be a live handle and `findings` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wd_problem_validate(
    p: *const WdProblem,
    findings: *mut usize,
    report: *mut *mut c_char,
) -> WdStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.inner;
        if findings.is_null() {
            return Err(null("findings"));
        }
        let rep = validate(p);
        *findings = rep.findings.len();
        if !report.is_null() {
            *report = to_c_string(serde_json::to_string(&rep).map_err(Error::from)?);
        }
        Ok(())
    })
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn first_stage<'a>(x: *const f64, len: usize) -> Option<&'a [f64]> {
    if x.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(x, len))
    }
}

/// Solves the copositive program with regularization `delta`. With `x` null
/// the first stage is optimized; otherwise the worst-case cost of the
/// `x_len` given values is bounded. An infeasible program is not an error:
/// the solution reports its status and an infinite objective.
///
/// # Safety
/// `p` must be a live handle, `x` null or `x_len` readable doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wd_solve_copositive(
    p: *const WdProblem,
    delta: f64,
    x: *const f64,
    x_len: usize,
    out: *mut *mut WdSolution,
) -> WdStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let prog = match first_stage(x, x_len) {
            Some(x) => build_wce_upper(p, x, delta)?,
            None => build_full_problem(p, delta)?,
        };
        let sol = prog.solve(&SolveSettings::psd())?;
        let json = serde_json::to_string(&sol).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(WdSolution { status: sol.status, objective: sol.objective, x: sol.x, json }));
        Ok(())
    })
}

/// Solves the exact linear program of a 1-Wasserstein instance.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wd_solve_lp(p: *const WdProblem, out: *mut *mut WdSolution) -> WdStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = solve_lp(p)?;
        let json = serde_json::to_string(&sol).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(WdSolution { status: sol.status, objective: sol.objective, x: sol.x, json }));
        Ok(())
    })
}

/// Exports the copositive program (first stage optimized) in `format`.
///
/// # Safety
/// `p` must be a live handle and `out` a valid pointer; free `*out` with `wd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn wd_export(
    p: *const WdProblem,
    delta: f64,
    format: WdFormat,
    out: *mut *mut c_char,
) -> WdStatus {
    guard(|| {
        let p = &p.as_ref().ok_or_else(|| null("problem"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = match format {
            WdFormat::Cbf => ExportFormat::Cbf,
            WdFormat::Sdpa => ExportFormat::SdpaSparse,
        };
        *out = to_c_string(export(&build_full_problem(p, delta)?.program, f)?);
        Ok(())
    })
}

/// Solve status of a solution. Returns `NumericalTrouble` for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_solution_status(s: *const WdSolution) -> WdSolveStatus {
    s.as_ref().map_or(WdSolveStatus::NumericalTrouble, |s| solve_status(s.status))
}

/// Objective value including the first-stage cost; NaN for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_solution_objective(s: *const WdSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.objective)
}

/// Copies the first-stage decision into `buf`. `needed` receives its length;
/// if `len` is smaller, nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `s` must be a live handle, `buf` null or `len` writable doubles, `needed` valid.
#[no_mangle]
pub unsafe extern "C" fn wd_solution_x(
    s: *const WdSolution,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> WdStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solution"))?;
        if needed.is_null() {
            return Err(null("needed"));
        }
        *needed = s.x.len();
        if s.x.is_empty() {
            return Ok(());
        }
        if buf.is_null() || len < s.x.len() {
            return Err(WdStatusError(
                WdStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", s.x.len()),
            ));
        }
        ptr::copy_nonoverlapping(s.x.as_ptr(), buf, s.x.len());
        Ok(())
    })
}

/// Full solution record as JSON; free with `wd_string_free`. Null for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wd_solution_to_json(s: *const WdSolution) -> *mut c_char {
    s.as_ref().map_or(ptr::null_mut(), |s| to_c_string(s.json.clone()))
}

/// Releases a solution. Null is ignored.
///
/// # Safety
/// `s` must come from a solve function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wd_solution_free(s: *mut WdSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
