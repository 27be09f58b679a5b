use std::ffi::CStr;
use std::ptr;

use qbell_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe { qbell_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn operator(d: usize) -> *mut QbellOperator {
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { qbell_operator_new(d, &mut op) }, QbellStatus::Ok);
    op
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(qbell_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn operator_spectrum_and_max_entangled_value() {
    let op = operator(3);
    assert_eq!(unsafe { qbell_operator_dim(op) }, 3);
    let mut ev = [0.0; 9];
    assert_eq!(
        unsafe { qbell_operator_eigenvalues(op, ev.as_mut_ptr(), 9) },
        QbellStatus::Ok
    );
    assert!((ev[0] - 2.9149).abs() < 1e-4);

    let mut psi = ptr::null_mut();
    assert_eq!(
        unsafe { qbell_state_max_entangled(3, &mut psi) },
        QbellStatus::Ok
    );
    let mut s = 0.0;
    assert_eq!(
        unsafe { qbell_bell_value(op, psi, &mut s) },
        QbellStatus::Ok
    );
    assert!((s - 2.8729).abs() < 1e-4);
    unsafe {
        qbell_state_free(psi);
        qbell_operator_free(op);
    }
}

#[test]
fn operator_entries_match_the_d2_operator() {
    let op = operator(2);
    let (mut re, mut im) = ([0.0; 16], [0.0; 16]);
    let st = unsafe { qbell_operator_entries(op, re.as_mut_ptr(), im.as_mut_ptr(), 16) };
    assert_eq!(st, QbellStatus::Ok);
    let r2 = 2.0 * 2f64.sqrt();
    assert!((re[3] - r2).abs() < 1e-12 && (re[12] - r2).abs() < 1e-12);
    assert_eq!(re.iter().filter(|x| **x != 0.0).count(), 2);
    unsafe { qbell_operator_free(op) };
}

#[test]
fn errors_set_status_and_message() {
    let mut op = ptr::null_mut();
    assert_eq!(
        unsafe { qbell_operator_new(15, &mut op) },
        QbellStatus::InvalidArgument
    );
    assert!(op.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { qbell_operator_new(2, ptr::null_mut()) },
        QbellStatus::NullPointer
    );
    assert!(last_error().contains("null"));

    let op = operator(2);
    let mut ev = [0.0; 3];
    assert_eq!(
        unsafe { qbell_operator_eigenvalues(op, ev.as_mut_ptr(), 3) },
        QbellStatus::InvalidArgument
    );
    unsafe { qbell_operator_free(op) };
    assert!(unsafe { qbell_last_error_message(ptr::null_mut(), 0) } > 0);

    let op = operator(2);
    assert_eq!(unsafe { qbell_operator_dim(op) }, 2);
    let mut ev = [0.0; 4];
    unsafe { qbell_operator_eigenvalues(op, ev.as_mut_ptr(), 4) };
    assert_eq!(unsafe { qbell_last_error_message(ptr::null_mut(), 0) }, 0);
    unsafe { qbell_operator_free(op) };
}

#[test]
fn error_message_truncates() {
    unsafe { qbell_operator_new(1, &mut ptr::null_mut()) };
    let mut buf = [0x7f as std::ffi::c_char; 4];
    let full = unsafe { qbell_last_error_message(buf.as_mut_ptr(), 4) };
    assert!(full > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let op = operator(3);
    let mut psi = ptr::null_mut();
    unsafe { qbell_state_max_entangled(4, &mut psi) };
    let mut s = 0.0;
    assert_eq!(
        unsafe { qbell_bell_value(op, psi, &mut s) },
        QbellStatus::InvalidArgument
    );
    unsafe {
        qbell_state_free(psi);
        qbell_operator_free(op);
    }
}

#[test]
fn filtering_the_source_raises_violation() {
    let d = 5;
    let mut src = ptr::null_mut();
    assert_eq!(
        unsafe { qbell_state_lorentzian(7.58, d, &mut src) },
        QbellStatus::Ok
    );
    assert_eq!(unsafe { qbell_state_dim(src) }, d);
    let op = operator(d);
    let mut before = 0.0;
    unsafe { qbell_bell_value(op, src, &mut before) };

    let diag = [1.0, 0.975287088539, 0.966909099534, 0.975287088539, 1.0];
    let (mut filtered, mut p) = (ptr::null_mut(), 0.0);
    let st =
        unsafe { qbell_state_filter(src, diag.as_ptr(), diag.as_ptr(), d, &mut filtered, &mut p) };
    assert_eq!(st, QbellStatus::Ok);
    assert!(p > 0.0 && p < 1.0);
    let mut after = 0.0;
    unsafe { qbell_bell_value(op, filtered, &mut after) };
    assert!(after > before);

    let mut designed = ptr::null_mut();
    unsafe { qbell_state_source(7.58, d, true, &mut designed) };
    let mut s = 0.0;
    unsafe { qbell_bell_value(op, designed, &mut s) };
    assert!((s - after).abs() < 1e-9);

    let bad = [1.5, 1.0, 1.0, 1.0, 1.0];
    let st =
        unsafe { qbell_state_filter(src, bad.as_ptr(), diag.as_ptr(), d, &mut filtered, &mut p) };
    assert_eq!(st, QbellStatus::InvalidArgument);
    unsafe {
        qbell_state_free(src);
        qbell_state_free(designed);
        qbell_operator_free(op);
    }
}

#[test]
fn counts_estimate_and_fit() {
    let d = 2;
    // perfectly correlated outcomes in every setting pair
    let mut counts = vec![0u64; 4 * d * d];
    for ab in 0..4 {
        for v in 0..d {
            counts[(ab * d + v) * d + v] = 1000;
        }
    }
    let (mut s, mut sigma) = (0.0, 0.0);
    let st = unsafe { qbell_s_from_counts(d, counts.as_ptr(), counts.len(), &mut s, &mut sigma) };
    assert_eq!(st, QbellStatus::Ok);
    assert!(s.is_finite() && sigma >= 0.0);
    let st = unsafe { qbell_s_from_counts(d, counts.as_ptr(), 3, &mut s, &mut sigma) };
    assert_eq!(st, QbellStatus::InvalidArgument);

    let ells: Vec<i32> = (-5..=5).collect();
    let rates: Vec<f64> = ells
        .iter()
        .map(|l| (30.0 * 7.58 / (7.58f64.powi(2) + (*l as f64).powi(2))).powi(2))
        .collect();
    let (mut g, mut a) = (0.0, 0.0);
    let st = unsafe {
        qbell_fit_gamma(
            ells.as_ptr(),
            rates.as_ptr(),
            ptr::null(),
            ells.len(),
            &mut g,
            &mut a,
        )
    };
    assert_eq!(st, QbellStatus::Ok);
    assert!((g - 7.58).abs() < 1e-6 && (a - 30.0).abs() < 1e-6);
}

#[test]
fn certification() {
    let (mut sep, mut ok) = (0.0, false);
    assert_eq!(
        unsafe { qbell_certify(2.14, 2.39, 0.07, 3.0, &mut sep, &mut ok) },
        QbellStatus::Ok
    );
    assert!((sep - 25.0 / 7.0).abs() < 1e-12 && ok);
    assert_eq!(
        unsafe { qbell_certify(2.14, 2.39, 0.0, 3.0, &mut sep, &mut ok) },
        QbellStatus::InvalidArgument
    );
}

#[test]
fn witness_runs_through_the_abi() {
    let mut best = 0.0;
    assert_eq!(
        unsafe { qbell_witness_paper_scenario(4, 3, &mut best) },
        QbellStatus::Ok
    );
    assert!(best > 2.0 && best < 3.0);
}
