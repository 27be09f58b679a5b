//! C ABI over `qbell`.
//!
//! Every fallible call returns a [`QbellStatus`]; on failure the message is
//! kept per thread and read back with [`qbell_last_error_message`]. Objects
//! are opaque handles released with their `_free` function. Output pointers
//! are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qbell::bell::{cached_bell_operator, BellOperator};
use qbell::concentration::{apply_filter, FilterSpec};
use qbell::error::Error;
use qbell::sim::{estimate_s_with_sigma, source_state, CountRecord};
use qbell::spdc::{fit_gamma, lorentzian_state, max_entangled_state, RatePoint};
use qbell::state::DensityMatrix;
use qbell::witness::{certify_dimension, maximize_s11, paper_scenario, WitnessOptions};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbellStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Computation = 3,
    Infeasible = 4,
    Io = 5,
    Panic = 6,
}

/// Bell operator for one dimension.
pub struct QbellOperator {
    op: &'static BellOperator,
}

/// Two-qudit density matrix.
pub struct QbellState {
    rho: DensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QbellStatus {
    match e {
        Error::Infeasible { .. } => QbellStatus::Infeasible,
        Error::Io { .. } | Error::Json { .. } => QbellStatus::Io,
        e if e.is_usage() => QbellStatus::InvalidArgument,
        Error::DimensionMismatch { .. } | Error::Completeness { .. } => {
            QbellStatus::InvalidArgument
        }
        _ => QbellStatus::Computation,
    }
}

struct Null;

impl From<Null> for Failure {
    fn from(_: Null) -> Self {
        Failure(QbellStatus::NullPointer, "null pointer argument".into())
    }
}

struct Failure(QbellStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(QbellStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QbellStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QbellStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QbellStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Null> {
    p.as_mut().ok_or(Null)
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Null> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Null> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qbell_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length excluding the NUL.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn qbell_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds (or fetches from the cache) the Bell operator for `d` in 2..=14.
///
/// # Safety
/// `out_op` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbell_operator_new(
    d: usize,
    out_op: *mut *mut QbellOperator,
) -> QbellStatus {
    guard(|| {
        let slot = out(out_op)?;
        let op = cached_bell_operator(d)?;
        *slot = Box::into_raw(Box::new(QbellOperator { op }));
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`qbell_operator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbell_operator_free(op: *mut QbellOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Local dimension `d`, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qbell_operator_dim(op: *const QbellOperator) -> usize {
    op.as_ref().map_or(0, |o| o.op.d())
}

/// Writes the `d^2` eigenvalues in descending order.
///
/// # Safety
/// `values` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qbell_operator_eigenvalues(
    op: *const QbellOperator,
    values: *mut f64,
    len: usize,
) -> QbellStatus {
    guard(|| {
        let op = op.as_ref().ok_or(Null)?.op;
        let n = op.d() * op.d();
        if len != n {
            return Err(invalid(&format!(
                "expected {n} eigenvalues, buffer holds {len}"
            )));
        }
        let dst = slice_mut(values, len)?;
        dst.copy_from_slice(&op.spectrum()?.eigenvalues);
        Ok(())
    })
}

/// Writes the `d^2 x d^2` matrix row-major as separate real and imaginary parts.
///
/// # Safety
/// `re` and `im` must each be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qbell_operator_entries(
    op: *const QbellOperator,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> QbellStatus {
    guard(|| {
        let m = op.as_ref().ok_or(Null)?.op.matrix();
        let n = m.rows() * m.cols();
        if len != n {
            return Err(invalid(&format!(
                "expected {n} entries, buffer holds {len}"
            )));
        }
        let (re, im) = (slice_mut(re, len)?, slice_mut(im, len)?);
        for (k, z) in m.as_slice().iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

fn new_state(rho: DensityMatrix, out_state: *mut *mut QbellState) -> Result<(), Failure> {
    let slot = unsafe { out(out_state)? };
    *slot = Box::into_raw(Box::new(QbellState { rho }));
    Ok(())
}

/// The maximally entangled state `sum_l |l>|-l> / sqrt(d)`.
///
/// # Safety
/// `out_state` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_max_entangled(
    d: usize,
    out_state: *mut *mut QbellState,
) -> QbellStatus {
    guard(|| new_state(max_entangled_state(d)?.to_density(), out_state))
}

/// The spiral-spectrum state with Lorentzian amplitudes of width `gamma`.
///
/// # Safety
/// `out_state` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_lorentzian(
    gamma: f64,
    d: usize,
    out_state: *mut *mut QbellState,
) -> QbellStatus {
    guard(|| new_state(lorentzian_state(gamma, d)?.to_density(), out_state))
}

/// The source state, optionally after the designed equalizing filter.
///
/// # Safety
/// `out_state` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_source(
    gamma: f64,
    d: usize,
    filtered: bool,
    out_state: *mut *mut QbellState,
) -> QbellStatus {
    guard(|| new_state(source_state(gamma, d, filtered)?, out_state))
}

/// Applies diagonal local filters (entries per pair label, ascending) and
/// returns the renormalized state and the success probability.
///
/// # Safety
/// `diag_a` and `diag_b` must each be valid for `len` doubles; the output
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_filter(
    state: *const QbellState,
    diag_a: *const f64,
    diag_b: *const f64,
    len: usize,
    out_state: *mut *mut QbellState,
    out_probability: *mut f64,
) -> QbellStatus {
    guard(|| {
        let rho = &state.as_ref().ok_or(Null)?.rho;
        let p = out(out_probability)?;
        if out_state.is_null() {
            return Err(Null.into());
        }
        let spec = FilterSpec::new(
            len,
            slice(diag_a, len)?.to_vec(),
            slice(diag_b, len)?.to_vec(),
        )?;
        spec.validate()?;
        let outcome = apply_filter(rho, &spec)?;
        new_state(outcome.state, out_state)?;
        *p = outcome.success_probability;
        Ok(())
    })
}

/// Local dimension `d`, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_dim(state: *const QbellState) -> usize {
    state.as_ref().map_or(0, |s| s.rho.d())
}

/// # Safety
/// `state` must come from a `qbell_state_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbell_state_free(state: *mut QbellState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// `S_d = Tr(B rho)` for matching dimensions.
///
/// # Safety
/// Handles must be live and `out_s` valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_bell_value(
    op: *const QbellOperator,
    state: *const QbellState,
    out_s: *mut f64,
) -> QbellStatus {
    guard(|| {
        let op = op.as_ref().ok_or(Null)?.op;
        let rho = &state.as_ref().ok_or(Null)?.rho;
        let s = out(out_s)?;
        *s = op.expectation(rho)?;
        Ok(())
    })
}

/// `S_d` and its Poisson standard deviation from coincidence counts laid out
/// as `counts[((a*2 + b)*d + v)*d + w]`, `len = 4 d^2`.
///
/// # Safety
/// `counts` must be valid for `len` values; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_s_from_counts(
    d: usize,
    counts: *const u64,
    len: usize,
    out_s: *mut f64,
    out_sigma: *mut f64,
) -> QbellStatus {
    guard(|| {
        if len != 4 * d * d {
            return Err(invalid(&format!(
                "expected {} counts, got {len}",
                4 * d * d
            )));
        }
        let c = slice(counts, len)?;
        let (s, sigma) = (out(out_s)?, out(out_sigma)?);
        let mut recs = Vec::with_capacity(len);
        for a in 0..2 {
            for b in 0..2 {
                for v in 0..d {
                    for w in 0..d {
                        recs.push(CountRecord {
                            a,
                            b,
                            v,
                            w,
                            count: c[((a * 2 + b) * d + v) * d + w],
                        });
                    }
                }
            }
        }
        let bv = estimate_s_with_sigma(d, &recs)?;
        *s = bv.s;
        *sigma = bv.sigma.unwrap_or(0.0);
        Ok(())
    })
}

/// Fits `rate(l) = (A f(l, gamma))^2` to per-mode pair rates. `sigmas` may be
/// null for unweighted data.
///
/// # Safety
/// Arrays must be valid for `len` elements; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_fit_gamma(
    ells: *const i32,
    rates: *const f64,
    sigmas: *const f64,
    len: usize,
    out_gamma: *mut f64,
    out_amplitude: *mut f64,
) -> QbellStatus {
    guard(|| {
        let (ells, rates) = (slice(ells, len)?, slice(rates, len)?);
        let sig = if sigmas.is_null() {
            None
        } else {
            Some(slice(sigmas, len)?)
        };
        let (g, a) = (out(out_gamma)?, out(out_amplitude)?);
        let pts: Vec<RatePoint> = (0..len)
            .map(|i| RatePoint {
                ell: ells[i],
                rate: rates[i],
                sigma: sig.map_or(0.0, |s| s[i]),
            })
            .collect();
        let fit = fit_gamma(&pts)?;
        *g = fit.gamma;
        *a = fit.amplitude;
        Ok(())
    })
}

/// Runs the witness maximization on the built-in d = 11 constraint set.
///
/// # Safety
/// `out_best` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_witness_paper_scenario(
    n_starts: usize,
    seed: u64,
    out_best: *mut f64,
) -> QbellStatus {
    guard(|| {
        let best = out(out_best)?;
        let opts = WitnessOptions {
            n_starts,
            seed,
            ..Default::default()
        };
        *best = maximize_s11(&paper_scenario(), &opts)?.best_s;
        Ok(())
    })
}

/// Separation `(measured - bound) / sigma` and whether it reaches `significance`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbell_certify(
    bound: f64,
    measured: f64,
    sigma: f64,
    significance: f64,
    out_separation: *mut f64,
    out_certified: *mut bool,
) -> QbellStatus {
    guard(|| {
        let (sep, ok) = (out(out_separation)?, out(out_certified)?);
        if !(sigma > 0.0) {
            return Err(invalid("sigma must be positive"));
        }
        let c = certify_dimension(bound, measured, sigma, significance);
        *sep = c.separation;
        *ok = c.certified;
        Ok(())
    })
}
