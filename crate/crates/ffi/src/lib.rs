//! C ABI over `longmem`.
//!
//! Every fallible call returns an [`LmStatus`]; on failure the message is
//! available from [`lm_last_error_message`] on the same thread until the
//! next failing call. Estimators and bias-correction traces are opaque
//! handles released with their `_free` function. Output buffers are owned
//! by the caller.

use longmem::arfima::{arfima_acf, simulate_gaussian, ArfimaModel};
use longmem::bootstrap::{hpd_interval, BiasChain, BiasCorrectionTrace, SieveConfig, StopReason, StopRule};
use longmem::estimators::{asymptotic_interval, Bandwidth, Estimate, EstimatorPlan, EstimatorSpec, Family};
use longmem::fracdiff::frac_filter;
use longmem::spectral::periodogram;
use longmem::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    InvalidArgument = 1,
    InvalidModel = 2,
    InvalidAcf = 3,
    InvalidInput = 4,
    DegenerateInput = 5,
    RankDeficient = 6,
    ResourceLimit = 7,
    TooManyFailures = 8,
    Internal = 9,
    Io = 10,
    NullPointer = 11,
    Panic = 12,
}

pub const LM_FAMILY_LPR: u32 = 0;
pub const LM_FAMILY_SPLW: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStopReason {
    Cauchy = 0,
    Accumulated = 1,
    DeterministicBound = 2,
    MaxIter = 3,
    Completed = 4,
}

/// Result of one estimation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmEstimate {
    pub d_hat: f64,
    pub asym_var: f64,
    pub n: usize,
    pub family: u32,
    pub p: usize,
    pub boundary: bool,
}

/// Estimator bound to one series length.
pub struct LmEstimator {
    plan: EstimatorPlan,
}

/// Bias-correction trace plus the draws of its last bootstrap step.
pub struct LmTrace {
    trace: BiasCorrectionTrace,
    draws: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => LmStatus::InvalidArgument,
            Error::InvalidModel(_) => LmStatus::InvalidModel,
            Error::InvalidAcf(_) => LmStatus::InvalidAcf,
            Error::InvalidInput(_) => LmStatus::InvalidInput,
            Error::DegenerateInput(_) => LmStatus::DegenerateInput,
            Error::RankDeficient(_) => LmStatus::RankDeficient,
            Error::ResourceLimit(_) => LmStatus::ResourceLimit,
            Error::TooManyFailures { .. } => LmStatus::TooManyFailures,
            Error::Io(_) | Error::Json(_) => LmStatus::Io,
            _ => LmStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(LmStatus::NullPointer, format!("{name} is null"))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn run(f: impl FnOnce() -> Result<(), Failure>) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside longmem".into());
            LmStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn input<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn output<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn family(code: u32) -> Result<Family, Failure> {
    match code {
        LM_FAMILY_LPR => Ok(Family::Lpr),
        LM_FAMILY_SPLW => Ok(Family::Splw),
        other => Err(Failure(LmStatus::InvalidArgument, format!("unknown estimator family {other}"))),
    }
}

fn family_code(f: Family) -> u32 {
    match f {
        Family::Lpr => LM_FAMILY_LPR,
        Family::Splw => LM_FAMILY_SPLW,
    }
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn lm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Fractional difference `(1 - L)^d` of `series[0..len]` into `out[0..len]`.
///
/// # Safety
/// `series` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_frac_filter(series: *const f64, len: usize, d: f64, out: *mut f64) -> LmStatus {
    run(|| {
        let x = input(series, len, "series")?;
        let y = frac_filter(x, d)?;
        output(out, len, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Exact Gaussian ARFIMA(1, d, 0) path of length `len`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_simulate_arfima(
    d: f64,
    phi: f64,
    sigma2: f64,
    len: usize,
    seed: u64,
    out: *mut f64,
) -> LmStatus {
    run(|| {
        if len == 0 {
            return Err(Failure(LmStatus::InvalidArgument, "length must be at least 1".into()));
        }
        let dst = output(out, len, "out")?;
        let model = ArfimaModel { sigma2, ..ArfimaModel::ar1(d, phi) };
        let acf = arfima_acf(&model, len - 1)?;
        let y = simulate_gaussian(&acf, len, &mut ChaCha8Rng::seed_from_u64(seed))?;
        dst.copy_from_slice(&y);
        Ok(())
    })
}

/// Periodogram ordinates j = 1..=n_freqs.
///
/// # Safety
/// `series` must point to `len` doubles and `out` to `n_freqs` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_periodogram(series: *const f64, len: usize, n_freqs: usize, out: *mut f64) -> LmStatus {
    run(|| {
        let p = periodogram(input(series, len, "series")?, n_freqs)?;
        output(out, n_freqs, "out")?.copy_from_slice(&p.ordinates);
        Ok(())
    })
}

/// Estimator for series of length `series_len` with N = floor(T^ν).
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to free
/// with [`lm_estimator_free`].
#[no_mangle]
pub unsafe extern "C" fn lm_estimator_new(
    family_code: u32,
    p: usize,
    bandwidth_exponent: f64,
    series_len: usize,
    out: *mut *mut LmEstimator,
) -> LmStatus {
    run(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = EstimatorSpec::new(family(family_code)?, p).with_bandwidth(Bandwidth::Exponent(bandwidth_exponent));
        let plan = EstimatorPlan::new(spec, series_len)?;
        *out = Box::into_raw(Box::new(LmEstimator { plan }));
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle from [`lm_estimator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_estimator_free(est: *mut LmEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Ordinate count N, or 0 for a null handle.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_estimator_bandwidth(est: *const LmEstimator) -> usize {
    est.as_ref().map_or(0, |e| e.plan.bandwidth())
}

/// # Safety
/// `est` must be a live handle, `series` must point to `len` doubles and
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lm_estimator_estimate(
    est: *const LmEstimator,
    series: *const f64,
    len: usize,
    out: *mut LmEstimate,
) -> LmStatus {
    run(|| {
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = est.plan.estimate(input(series, len, "series")?)?;
        *out = LmEstimate {
            d_hat: e.d_hat,
            asym_var: e.asym_var,
            n: e.n,
            family: family_code(e.family),
            p: e.p,
            boundary: e.boundary,
        };
        Ok(())
    })
}

/// Normal interval `d̂ ± z √asym_var`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_asymptotic_interval(
    estimate: *const LmEstimate,
    level: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> LmStatus {
    run(|| {
        let e = estimate.as_ref().ok_or_else(|| null("estimate"))?;
        if lower.is_null() || upper.is_null() {
            return Err(null("lower/upper"));
        }
        let core = Estimate {
            d_hat: e.d_hat,
            n: e.n,
            family: family(e.family)?,
            p: e.p,
            asym_var: e.asym_var,
            boundary: e.boundary,
        };
        let (lo, hi) = asymptotic_interval(&core, level)?;
        *lower = lo;
        *upper = hi;
        Ok(())
    })
}

/// Pre-filtered sieve bootstrap bias correction with `boot` draws per step.
/// `steps = 0` applies the stochastic stopping rule with the default
/// schedule for the estimator's P; otherwise exactly `steps` bias steps run.
///
/// # Safety
/// `est` must be a live handle, `series` must point to `len` doubles and
/// `out` must be valid; on success it receives a handle to free with
/// [`lm_trace_free`].
#[no_mangle]
pub unsafe extern "C" fn lm_bias_correct(
    est: *const LmEstimator,
    series: *const f64,
    len: usize,
    boot: usize,
    steps: usize,
    max_iter: usize,
    seed: u64,
    out: *mut *mut LmTrace,
) -> LmStatus {
    run(|| {
        let est = est.as_ref().ok_or_else(|| null("estimator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = input(series, len, "series")?;
        let rule = if steps == 0 { StopRule::default_for(est.plan.spec().p) } else { StopRule::Steps(steps) };
        let mut chain = BiasChain::new(x, &est.plan, SieveConfig::default(), boot, seed)?;
        let trace = chain.run(&rule, max_iter)?;
        let draws = chain.last_draws(&trace).unwrap_or_default().to_vec();
        *out = Box::into_raw(Box::new(LmTrace { trace, draws }));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from [`lm_bias_correct`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_free(trace: *mut LmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Selected estimate; NaN for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_estimate(trace: *const LmTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.trace.estimate)
}

/// Number of bias steps executed.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_steps(trace: *const LmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.steps())
}

/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_stop_reason(trace: *const LmTrace) -> LmStopReason {
    match trace.as_ref().map(|t| t.trace.stop_reason) {
        Some(StopReason::Cauchy) => LmStopReason::Cauchy,
        Some(StopReason::Accumulated) => LmStopReason::Accumulated,
        Some(StopReason::DeterministicBound) => LmStopReason::DeterministicBound,
        Some(StopReason::MaxIter) => LmStopReason::MaxIter,
        Some(StopReason::Completed) | None => LmStopReason::Completed,
    }
}

unsafe fn copy_out(src: &[f64], out: *mut f64, cap: usize) -> usize {
    if !out.is_null() {
        let n = src.len().min(cap);
        ptr::copy_nonoverlapping(src.as_ptr(), out, n);
    }
    src.len()
}

/// Copies up to `cap` iterates d̃^(0), d̃^(1), … and returns the full count.
/// Pass a null `out` to query the count.
///
/// # Safety
/// `trace` must be a live handle and `out` null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_iterates(trace: *const LmTrace, out: *mut f64, cap: usize) -> usize {
    trace.as_ref().map_or(0, |t| copy_out(&t.trace.iterates, out, cap))
}

/// As [`lm_trace_iterates`], for the bootstrap bias estimates.
///
/// # Safety
/// `trace` must be a live handle and `out` null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_bias_estimates(trace: *const LmTrace, out: *mut f64, cap: usize) -> usize {
    trace.as_ref().map_or(0, |t| copy_out(&t.trace.bias_estimates, out, cap))
}

/// As [`lm_trace_iterates`], for the bootstrap estimates of the last step.
///
/// # Safety
/// `trace` must be a live handle and `out` null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_draws(trace: *const LmTrace, out: *mut f64, cap: usize) -> usize {
    trace.as_ref().map_or(0, |t| copy_out(&t.draws, out, cap))
}

/// HPD interval of the last step's bootstrap estimates.
///
/// # Safety
/// `trace` must be a live handle; `lower` and `upper` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_trace_hpd(trace: *const LmTrace, level: f64, lower: *mut f64, upper: *mut f64) -> LmStatus {
    run(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        write_hpd(&t.draws, level, lower, upper)
    })
}

/// Narrowest window holding ceil(level·len) of the draws.
///
/// # Safety
/// `draws` must point to `len` doubles; `lower` and `upper` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_hpd_interval(
    draws: *const f64,
    len: usize,
    level: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> LmStatus {
    run(|| write_hpd(input(draws, len, "draws")?, level, lower, upper))
}

unsafe fn write_hpd(draws: &[f64], level: f64, lower: *mut f64, upper: *mut f64) -> Result<(), Failure> {
    if lower.is_null() || upper.is_null() {
        return Err(null("lower/upper"));
    }
    let h = hpd_interval(draws, level)?;
    *lower = h.lower;
    *upper = h.upper;
    Ok(())
}
