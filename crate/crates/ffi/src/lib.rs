//! C ABI for `sipsdp`.
//!
//! Problems are opaque handles built from the JSON problem-file format.
//! Every call returns a [`SipsdpStatus`]; on failure the message is kept in
//! thread-local storage and read with [`sipsdp_last_error_message`].
//! Strings returned through out-parameters are owned by the caller and
//! released with [`sipsdp_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;
use sipsdp::problem::ProblemFile;
use sipsdp::relax::{self, HierarchyOptions, OrderPair, SipProblem, ThetaForm};
use sipsdp::sdp::Settings;
use sipsdp::{sos, Error};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SipsdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    Precondition = 5,
    /// A solve did not reach an optimal answer.
    SolverFailure = 6,
    Panic = 7,
}

/// Opaque problem handle.
pub struct SipsdpProblem {
    prob: SipProblem,
    settings: Settings,
    schedule: Option<Vec<OrderPair>>,
    grid: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> SipsdpStatus {
    match e {
        Error::Parse { .. } | Error::ProblemFile(_) | Error::Json(_) | Error::Io(_) => {
            SipsdpStatus::Parse
        }
        Error::Precondition(_) | Error::OrderTooSmall { .. } => SipsdpStatus::Precondition,
        Error::Solver(_) | Error::Extraction(_) | Error::EmptyGrid => SipsdpStatus::SolverFailure,
        Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => {
            SipsdpStatus::InvalidArgument
        }
    }
}

fn guard<F>(f: F) -> SipsdpStatus
where
    F: FnOnce() -> Result<(), (SipsdpStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SipsdpStatus::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside sipsdp");
            SipsdpStatus::Panic
        }
    }
}

fn lift(e: Error) -> (SipsdpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SipsdpStatus, String) {
    (SipsdpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn problem_ref<'a>(
    p: *const SipsdpProblem,
) -> Result<&'a SipsdpProblem, (SipsdpStatus, String)> {
    p.as_ref().ok_or_else(|| null("problem"))
}

fn to_c_string(s: String) -> Result<*mut c_char, (SipsdpStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (SipsdpStatus::InvalidArgument, "string contains NUL".into()))
}

/// Parse a JSON problem file. On success `*out` holds a handle to release
/// with `sipsdp_problem_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_problem_from_json(
    json: *const c_char,
    out: *mut *mut SipsdpProblem,
) -> SipsdpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (SipsdpStatus::InvalidUtf8, e.to_string()))?;
        let file = ProblemFile::from_json(text).map_err(lift)?;
        let handle = SipsdpProblem {
            prob: file.problem().map_err(lift)?,
            settings: file.settings().map_err(lift)?,
            schedule: file.schedule(),
            grid: file
                .options
                .grid_density
                .unwrap_or(sipsdp::preprocess::DEFAULT_GRID_DENSITY),
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Release a problem handle. Null is ignored.
///
/// # Safety
/// `p` must come from `sipsdp_problem_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_problem_free(p: *mut SipsdpProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of x and y variables.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_problem_dims(
    p: *const SipsdpProblem,
    m: *mut usize,
    n: *mut usize,
) -> SipsdpStatus {
    guard(|| {
        let h = problem_ref(p)?;
        if m.is_null() || n.is_null() {
            return Err(null("out"));
        }
        *m = h.prob.m();
        *n = h.prob.n();
        Ok(())
    })
}

/// Run the hierarchy at `(r, t)` and return the JSON report in `*out_json`.
/// `t == 0` selects the file's schedule or the default one; `r == 0` with
/// `t > 0` picks the smallest admissible `r`. Timings are omitted. The
/// report is returned also when a solve fails, with status
/// `SIPSDP_STATUS_SOLVER_FAILURE`.
///
/// # Safety
/// `p` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_solve(
    p: *const SipsdpProblem,
    r: u32,
    t: u32,
    out_json: *mut *mut c_char,
) -> SipsdpStatus {
    guard(|| {
        let h = problem_ref(p)?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let mode = relax::resolve_mode(&h.prob, h.grid).map_err(lift)?;
        let d = h.prob.degrees();
        let schedule = if t == 0 {
            h.schedule
                .clone()
                .unwrap_or_else(|| relax::default_schedule(&h.prob, mode.sosconvex))
        } else {
            let r = if r == 0 {
                d.d_p.div_ceil(2).max(1).max(t)
            } else {
                r
            };
            vec![OrderPair { r, t }]
        };
        let opts = HierarchyOptions {
            settings: h.settings.clone(),
            timing: false,
            grid_density: h.grid,
            refine_active: true,
        };
        let report =
            relax::run_hierarchy_with_mode(&h.prob, &schedule, mode, &opts).map_err(lift)?;
        let text =
            serde_json::to_string(&report).map_err(|e| (SipsdpStatus::Panic, e.to_string()))?;
        *out_json = to_c_string(text)?;
        if report.all_optimal() {
            Ok(())
        } else {
            Err((
                SipsdpStatus::SolverFailure,
                "at least one relaxation was not solved to optimality".into(),
            ))
        }
    })
}

/// Support function of `Lambda_{r,t}` in direction `a` (length `m`).
/// Writes the value and the maximizing point (length `m`).
///
/// # Safety
/// `a` and `out_point` must hold `len` doubles; `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_support_value(
    p: *const SipsdpProblem,
    a: *const f64,
    len: usize,
    r: u32,
    t: u32,
    out_value: *mut f64,
    out_point: *mut f64,
) -> SipsdpStatus {
    guard(|| {
        let h = problem_ref(p)?;
        if a.is_null() || out_value.is_null() || out_point.is_null() {
            return Err(null("argument"));
        }
        let dir = std::slice::from_raw_parts(a, len);
        let s = relax::support_value_with(&h.prob, dir, r, t, ThetaForm::Single, &h.settings)
            .map_err(lift)?;
        *out_value = s.value;
        std::slice::from_raw_parts_mut(out_point, len).copy_from_slice(&s.point);
        Ok(())
    })
}

/// Whether the objective is s.o.s-convex.
///
/// # Safety
/// `p` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_is_sos_convex_objective(
    p: *const SipsdpProblem,
    out: *mut bool,
) -> SipsdpStatus {
    guard(|| {
        let h = problem_ref(p)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sos::is_sos_convex_with(&h.prob.f, &h.settings).map_err(lift)?;
        Ok(())
    })
}

/// `eps*_r` of the objective on `[-1, 1]^m`.
///
/// # Safety
/// `p` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_eps_star_objective(
    p: *const SipsdpProblem,
    r: u32,
    out: *mut f64,
) -> SipsdpStatus {
    guard(|| {
        let h = problem_ref(p)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sos::eps_star_with(&h.prob.f, r, &h.settings).map_err(lift)?;
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sipsdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sipsdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
