//! C ABI over `contest-core`.
//!
//! Contests live behind an opaque `ContestHandle`. Every fallible call returns
//! a status code (`CONTEST_OK` on success) and writes results through out
//! pointers; the message of the last failure on the calling thread is
//! available from `contest_last_error_message`. Strings returned by the
//! library must be released with `contest_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use contest_core::equilibrium::finite_shift;
use contest_core::{
    calibrate_rho, general_metrics, optimize, solve_threshold, uniform_closed_threshold, ContestError, ContestSpec,
    DensitySpec, InterventionSpec, MeritFn,
};

pub const CONTEST_OK: i32 = 0;
pub const CONTEST_ERR_NULL_POINTER: i32 = 1;
pub const CONTEST_ERR_INVALID_UTF8: i32 = 2;
pub const CONTEST_ERR_PARSE: i32 = 3;
pub const CONTEST_ERR_VALIDATION: i32 = 4;
pub const CONTEST_ERR_DOMAIN: i32 = 5;
pub const CONTEST_ERR_INFINITE_MEAN: i32 = 6;
pub const CONTEST_ERR_NON_UNIQUE_THRESHOLD: i32 = 7;
pub const CONTEST_ERR_POPULATION_TOO_SMALL: i32 = 8;
pub const CONTEST_ERR_DEGENERATE_METRIC: i32 = 9;
pub const CONTEST_ERR_UNSUPPORTED: i32 = 10;
pub const CONTEST_ERR_INFEASIBLE: i32 = 11;
pub const CONTEST_ERR_CALIBRATION_OUT_OF_RANGE: i32 = 12;
pub const CONTEST_ERR_NO_CONVERGENCE: i32 = 13;
pub const CONTEST_ERR_PANIC: i32 = 14;

/// Opaque handle to a validated contest.
pub struct ContestHandle {
    spec: ContestSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl From<ContestError> for Failure {
    fn from(e: ContestError) -> Self {
        let code = match &e {
            ContestError::Validation(_) => CONTEST_ERR_VALIDATION,
            ContestError::Domain(_) => CONTEST_ERR_DOMAIN,
            ContestError::InfiniteMean => CONTEST_ERR_INFINITE_MEAN,
            ContestError::NonUniqueThreshold { .. } => CONTEST_ERR_NON_UNIQUE_THRESHOLD,
            ContestError::PopulationTooSmall { .. } => CONTEST_ERR_POPULATION_TOO_SMALL,
            ContestError::DegenerateMetric(_) => CONTEST_ERR_DEGENERATE_METRIC,
            ContestError::Unsupported(_) => CONTEST_ERR_UNSUPPORTED,
            ContestError::Infeasible { .. } => CONTEST_ERR_INFEASIBLE,
            ContestError::CalibrationOutOfRange { .. } => CONTEST_ERR_CALIBRATION_OUT_OF_RANGE,
            ContestError::NoConvergence(_) => CONTEST_ERR_NO_CONVERGENCE,
        };
        Failure {
            code,
            message: format!("{}: {e}", e.name()),
        }
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CONTEST_OK
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.code
        }
        Err(_) => {
            set_last_error("internal panic");
            CONTEST_ERR_PANIC
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(fail(CONTEST_ERR_NULL_POINTER, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CONTEST_ERR_INVALID_UTF8, format!("{what} is not valid UTF-8")))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| fail(CONTEST_ERR_PARSE, format!("cannot parse {what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(CONTEST_ERR_NULL_POINTER, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle_ref<'a>(h: *const ContestHandle) -> Result<&'a ContestHandle, Failure> {
    h.as_ref().ok_or_else(|| fail(CONTEST_ERR_NULL_POINTER, "contest handle is null"))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(CONTEST_ERR_PARSE, "output contains an interior NUL"))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map_err(|e| fail(CONTEST_ERR_PARSE, e.to_string()))
}

/// Short machine-readable name for a status code; never null, static storage.
#[no_mangle]
pub extern "C" fn contest_status_name(code: i32) -> *const c_char {
    let s: &'static CStr = match code {
        CONTEST_OK => c"ok",
        CONTEST_ERR_NULL_POINTER => c"null_pointer",
        CONTEST_ERR_INVALID_UTF8 => c"invalid_utf8",
        CONTEST_ERR_PARSE => c"parse_error",
        CONTEST_ERR_VALIDATION => c"validation_error",
        CONTEST_ERR_DOMAIN => c"domain_error",
        CONTEST_ERR_INFINITE_MEAN => c"infinite_mean",
        CONTEST_ERR_NON_UNIQUE_THRESHOLD => c"non_unique_threshold",
        CONTEST_ERR_POPULATION_TOO_SMALL => c"population_too_small",
        CONTEST_ERR_DEGENERATE_METRIC => c"degenerate_metric",
        CONTEST_ERR_UNSUPPORTED => c"unsupported_configuration",
        CONTEST_ERR_INFEASIBLE => c"infeasible",
        CONTEST_ERR_CALIBRATION_OUT_OF_RANGE => c"calibration_out_of_range",
        CONTEST_ERR_NO_CONVERGENCE => c"no_convergence",
        CONTEST_ERR_PANIC => c"panic",
        _ => c"unknown",
    };
    s.as_ptr()
}

/// Message of the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn contest_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a contest from its JSON form and validate it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_spec_from_json(json: *const c_char, out: *mut *mut ContestHandle) -> i32 {
    guard(|| {
        let spec: ContestSpec = parse_json(read_str(json, "json")?, "contest")?;
        spec.validate()?;
        write_out(out, Box::into_raw(Box::new(ContestHandle { spec })))
    })
}

/// Two-group contest with `p1 = Uniform(0,1)`, its `rho`-biased copy, and no ability.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_spec_two_group_uniform(
    rho: f64,
    c: f64,
    alpha: f64,
    out: *mut *mut ContestHandle,
) -> i32 {
    guard(|| {
        let spec = ContestSpec::two_group(
            DensitySpec::uniform(0.0, 1.0),
            rho,
            alpha,
            DensitySpec::point_mass(0.0),
            c,
        );
        spec.validate()?;
        write_out(out, Box::into_raw(Box::new(ContestHandle { spec })))
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn contest_spec_free(handle: *mut ContestHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Serialize a handle back to JSON.
///
/// # Safety
/// `handle` must be valid; `out_json` must be writable. Free the result with `contest_string_free`.
#[no_mangle]
pub unsafe extern "C" fn contest_spec_to_json(handle: *const ContestHandle, out_json: *mut *mut c_char) -> i32 {
    guard(|| {
        let h = handle_ref(handle)?;
        write_out(out_json, into_c_string(to_json(&h.spec)?)?)
    })
}

/// Equilibrium score threshold `t`.
///
/// # Safety
/// `handle` must be valid; `t_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_solve_threshold(handle: *const ContestHandle, t_out: *mut f64) -> i32 {
    guard(|| {
        let h = handle_ref(handle)?;
        let policy = solve_threshold(&h.spec)?;
        write_out(t_out, policy.t)
    })
}

/// Finite-population shift at size `n`: participation cut `delta_n` and slack `epsilon_n`.
///
/// # Safety
/// `handle` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_finite_shift(
    handle: *const ContestHandle,
    n: u64,
    delta_out: *mut f64,
    epsilon_out: *mut f64,
) -> i32 {
    guard(|| {
        let h = handle_ref(handle)?;
        let policy = solve_threshold(&h.spec)?;
        let (delta, eps) = finite_shift(&policy, &h.spec, n)?;
        write_out(delta_out, delta)?;
        write_out(epsilon_out, eps)
    })
}

/// Representation ratio, welfare ratio and average revenue with identity merit.
///
/// # Safety
/// `handle` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_metrics(
    handle: *const ContestHandle,
    r_r_out: *mut f64,
    r_s_out: *mut f64,
    rv_out: *mut f64,
) -> i32 {
    guard(|| {
        let h = handle_ref(handle)?;
        let policy = solve_threshold(&h.spec)?;
        let m = general_metrics(&h.spec, &policy, &MeritFn::Identity)?;
        write_out(r_r_out, m.rep_ratio)?;
        write_out(r_s_out, m.welfare_ratio)?;
        write_out(rv_out, m.avg_revenue)
    })
}

/// Full metrics report as JSON; `merit_json` may be null for the identity merit.
///
/// # Safety
/// `handle` must be valid; `merit_json` null or NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn contest_metrics_json(
    handle: *const ContestHandle,
    merit_json: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let h = handle_ref(handle)?;
        let merit: MeritFn = if merit_json.is_null() {
            MeritFn::Identity
        } else {
            parse_json(read_str(merit_json, "merit_json")?, "merit")?
        };
        let policy = solve_threshold(&h.spec)?;
        let m = general_metrics(&h.spec, &policy, &merit)?;
        let doc = serde_json::json!({ "t": policy.t, "metrics": m });
        write_out(out_json, into_c_string(doc.to_string())?)
    })
}

/// Closed-form threshold for the uniform pair.
///
/// # Safety
/// `t_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_uniform_closed_threshold(rho: f64, c: f64, alpha: f64, t_out: *mut f64) -> i32 {
    guard(|| {
        if !(rho > 0.0 && rho <= 1.0 && c > 0.0 && c < 1.0 && alpha > 0.0 && alpha < 1.0) {
            return Err(fail(CONTEST_ERR_DOMAIN, "domain_error: parameters outside their ranges"));
        }
        write_out(t_out, uniform_closed_threshold(rho, c, alpha))
    })
}

/// Recover `rho` from an observed representation ratio.
///
/// # Safety
/// `rho_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contest_calibrate_rho(r_obs: f64, c: f64, alpha: f64, rho_out: *mut f64) -> i32 {
    guard(|| write_out(rho_out, calibrate_rho(r_obs, c, alpha)?))
}

/// Solve an intervention problem given as JSON; the solution is returned as JSON.
///
/// # Safety
/// `spec_json` must be NUL-terminated; `out_json` writable. Free the result with `contest_string_free`.
#[no_mangle]
pub unsafe extern "C" fn contest_intervene_json(spec_json: *const c_char, out_json: *mut *mut c_char) -> i32 {
    guard(|| {
        let spec: InterventionSpec = parse_json(read_str(spec_json, "spec_json")?, "intervention")?;
        let solution = optimize(&spec)?;
        write_out(out_json, into_c_string(to_json(&solution)?)?)
    })
}

/// Release a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn contest_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
