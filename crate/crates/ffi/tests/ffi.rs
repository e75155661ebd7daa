use std::ffi::{c_char, CStr, CString};
use std::ptr;

use contest_ffi::*;

fn name(code: i32) -> String {
    unsafe { CStr::from_ptr(contest_status_name(code)) }.to_string_lossy().into_owned()
}

fn last_message() -> Option<String> {
    let p = contest_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { contest_string_free(p) };
    s
}

#[test]
fn uniform_handle_round_trip() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { contest_spec_two_group_uniform(0.9, 0.1, 0.5, &mut h) }, CONTEST_OK);
    let mut t = 0.0;
    assert_eq!(unsafe { contest_solve_threshold(h, &mut t) }, CONTEST_OK);
    assert!((t - 0.9 * 0.9 / 0.95).abs() < 1e-9);

    let (mut r_r, mut r_s, mut rv) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { contest_metrics(h, &mut r_r, &mut r_s, &mut rv) }, CONTEST_OK);
    assert!((r_r - 0.05 / 0.14).abs() < 1e-9);
    assert!((rv - t).abs() < 1e-9);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { contest_spec_to_json(h, &mut json) }, CONTEST_OK);
    let text = CString::new(take_string(json)).unwrap();
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { contest_spec_from_json(text.as_ptr(), &mut h2) }, CONTEST_OK);
    let mut t2 = 0.0;
    assert_eq!(unsafe { contest_solve_threshold(h2, &mut t2) }, CONTEST_OK);
    assert_eq!(t, t2);
    unsafe {
        contest_spec_free(h);
        contest_spec_free(h2);
    }
}

#[test]
fn metrics_json_with_merit() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { contest_spec_two_group_uniform(1.0, 0.1, 0.5, &mut h) }, CONTEST_OK);
    let merit = CString::new(r#"{"kind":"affine","x":2.0,"y":1.0}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { contest_metrics_json(h, merit.as_ptr(), &mut out) }, CONTEST_OK);
    let doc: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    let rv = doc["metrics"]["RV"].as_f64().unwrap();
    assert!((rv - 2.8).abs() < 1e-9, "{doc}");
    unsafe { contest_spec_free(h) };
}

#[test]
fn finite_shift_values() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { contest_spec_two_group_uniform(0.8, 0.1, 0.5, &mut h) }, CONTEST_OK);
    let (mut delta, mut eps) = (0.0, 0.0);
    assert_eq!(unsafe { contest_finite_shift(h, 10_000, &mut delta, &mut eps) }, CONTEST_OK);
    assert!((delta - 0.769651).abs() < 1e-5, "{delta}");
    assert!((eps - 0.045742).abs() < 1e-5, "{eps}");
    assert_eq!(
        unsafe { contest_finite_shift(h, 1, &mut delta, &mut eps) },
        CONTEST_ERR_POPULATION_TOO_SMALL
    );
    unsafe { contest_spec_free(h) };
}

#[test]
fn error_codes_and_messages() {
    let mut h = ptr::null_mut();
    let code = unsafe { contest_spec_two_group_uniform(0.8, 1.5, 0.5, &mut h) };
    assert_eq!(code, CONTEST_ERR_VALIDATION);
    assert_eq!(name(code), "validation_error");
    assert!(h.is_null());
    assert!(last_message().unwrap().starts_with("validation_error"));

    let bad = CString::new("not json").unwrap();
    assert_eq!(unsafe { contest_spec_from_json(bad.as_ptr(), &mut h) }, CONTEST_ERR_PARSE);
    assert_eq!(unsafe { contest_spec_from_json(ptr::null(), &mut h) }, CONTEST_ERR_NULL_POINTER);
    let mut t = 0.0;
    assert_eq!(unsafe { contest_solve_threshold(ptr::null(), &mut t) }, CONTEST_ERR_NULL_POINTER);

    let mut rho = 0.0;
    assert_eq!(unsafe { contest_calibrate_rho(0.671, 0.268, 0.228, &mut rho) }, CONTEST_OK);
    assert!(last_message().is_none());
    assert!((rho - 0.882).abs() < 1e-3);
    assert_eq!(unsafe { contest_calibrate_rho(0.0, 0.268, 0.228, &mut rho) }, CONTEST_ERR_DOMAIN);

    let infeasible = CString::new(r#"{"rho":0.882,"c":0.268,"alpha":0.228,"cost_coeff":5,"cost_exponent":1.1,"tau":1.2}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { contest_intervene_json(infeasible.as_ptr(), &mut out) }, CONTEST_ERR_INFEASIBLE);
    assert_eq!(name(CONTEST_ERR_INFEASIBLE), "infeasible");
    assert_eq!(name(999), "unknown");

    unsafe {
        contest_spec_free(ptr::null_mut());
        contest_string_free(ptr::null_mut());
    }
}

#[test]
fn closed_threshold_domain() {
    let mut t = 0.0;
    assert_eq!(unsafe { contest_uniform_closed_threshold(0.5, 0.04, 0.5, &mut t) }, CONTEST_OK);
    assert_eq!(unsafe { contest_uniform_closed_threshold(0.5, 0.0, 0.5, &mut t) }, CONTEST_ERR_DOMAIN);
}
