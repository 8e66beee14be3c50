use longmem_ffi::*;
use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lm_last_error_message()).to_string_lossy().into_owned() }
}

fn simulate(d: f64, phi: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let st = unsafe { lm_simulate_arfima(d, phi, 1.0, len, seed, out.as_mut_ptr()) };
    assert_eq!(st, LmStatus::Ok);
    out
}

#[test]
fn frac_filter_matches_core() {
    let x = simulate(0.3, 0.0, 64, 1);
    let mut y = vec![0.0; x.len()];
    let st = unsafe { lm_frac_filter(x.as_ptr(), x.len(), 0.3, y.as_mut_ptr()) };
    assert_eq!(st, LmStatus::Ok);
    assert_eq!(y, longmem::fracdiff::frac_filter(&x, 0.3).unwrap());
}

#[test]
fn null_and_invalid_arguments_report_errors() {
    let st = unsafe { lm_frac_filter(ptr::null(), 4, 0.2, ptr::null_mut()) };
    assert_eq!(st, LmStatus::NullPointer);
    assert!(last_error().contains("series"));

    let mut h = ptr::null_mut();
    let st = unsafe { lm_estimator_new(7, 0, 0.7, 100, &mut h) };
    assert_eq!(st, LmStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("family"));

    let mut out = [0.0; 8];
    let st = unsafe { lm_simulate_arfima(0.6, 0.0, 1.0, 8, 0, out.as_mut_ptr()) };
    assert_eq!(st, LmStatus::InvalidModel, "{}", last_error());

    unsafe {
        lm_estimator_free(ptr::null_mut());
        lm_trace_free(ptr::null_mut());
    }
}

#[test]
fn periodogram_matches_core() {
    let x = simulate(0.2, 0.3, 50, 2);
    let mut out = vec![0.0; 24];
    assert_eq!(unsafe { lm_periodogram(x.as_ptr(), x.len(), 24, out.as_mut_ptr()) }, LmStatus::Ok);
    assert_eq!(out, longmem::spectral::periodogram(&x, 24).unwrap().ordinates);
}

#[test]
fn estimator_handle_roundtrip() {
    let x = simulate(0.3, 0.0, 500, 3);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lm_estimator_new(LM_FAMILY_LPR, 1, 0.7, x.len(), &mut h) }, LmStatus::Ok);
    assert_eq!(unsafe { lm_estimator_bandwidth(h) }, 77);

    let mut e = LmEstimate { d_hat: 0.0, asym_var: 0.0, n: 0, family: 9, p: 9, boundary: true };
    assert_eq!(unsafe { lm_estimator_estimate(h, x.as_ptr(), x.len(), &mut e) }, LmStatus::Ok);
    let spec = longmem::estimators::EstimatorSpec::lpr(1);
    let core = longmem::estimators::estimate(&x, &spec).unwrap();
    assert_eq!(e.d_hat, core.d_hat);
    assert_eq!(e.asym_var, core.asym_var);
    assert_eq!((e.n, e.family, e.p, e.boundary), (77, LM_FAMILY_LPR, 1, false));

    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(unsafe { lm_asymptotic_interval(&e, 0.95, &mut lo, &mut hi) }, LmStatus::Ok);
    let (clo, chi) = longmem::estimators::asymptotic_interval(&core, 0.95).unwrap();
    assert_eq!((lo, hi), (clo, chi));

    // wrong length for the plan
    let st = unsafe { lm_estimator_estimate(h, x.as_ptr(), 400, &mut e) };
    assert_ne!(st, LmStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe { lm_estimator_free(h) };
}

#[test]
fn bias_correct_trace_accessors() {
    let x = simulate(0.2, 0.6, 200, 4);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lm_estimator_new(LM_FAMILY_LPR, 0, 0.7, x.len(), &mut h) }, LmStatus::Ok);
    let mut t = ptr::null_mut();
    let st = unsafe { lm_bias_correct(h, x.as_ptr(), x.len(), 40, 2, 20, 11, &mut t) };
    assert_eq!(st, LmStatus::Ok, "{}", last_error());

    unsafe {
        assert_eq!(lm_trace_steps(t), 2);
        assert_eq!(lm_trace_stop_reason(t), LmStopReason::Completed);
        let n = lm_trace_iterates(t, ptr::null_mut(), 0);
        assert_eq!(n, 3);
        let mut it = vec![0.0; n];
        assert_eq!(lm_trace_iterates(t, it.as_mut_ptr(), n), n);
        assert_eq!(lm_trace_estimate(t), it[2]);
        let mut b = vec![0.0; 2];
        assert_eq!(lm_trace_bias_estimates(t, b.as_mut_ptr(), 2), 2);
        assert!((it[1] - (it[0] - b[0])).abs() < 1e-12);

        let nd = lm_trace_draws(t, ptr::null_mut(), 0);
        assert!((38..=40).contains(&nd));
        let mut draws = vec![0.0; nd];
        lm_trace_draws(t, draws.as_mut_ptr(), nd);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(lm_trace_hpd(t, 0.9, &mut lo, &mut hi), LmStatus::Ok);
        let (mut lo2, mut hi2) = (0.0, 0.0);
        assert_eq!(lm_hpd_interval(draws.as_ptr(), nd, 0.9, &mut lo2, &mut hi2), LmStatus::Ok);
        assert_eq!((lo, hi), (lo2, hi2));
        assert!(lo < hi);
        lm_trace_free(t);
    }

    // same seed, same trace
    let mut t2 = ptr::null_mut();
    let mut t3 = ptr::null_mut();
    unsafe {
        lm_bias_correct(h, x.as_ptr(), x.len(), 40, 1, 20, 5, &mut t2);
        lm_bias_correct(h, x.as_ptr(), x.len(), 40, 1, 20, 5, &mut t3);
        assert_eq!(lm_trace_estimate(t2), lm_trace_estimate(t3));
        lm_trace_free(t2);
        lm_trace_free(t3);
        lm_estimator_free(h);
    }
}

#[test]
fn hpd_interval_rejects_bad_level() {
    let draws: Vec<f64> = (0..20).map(f64::from).collect();
    let (mut lo, mut hi) = (0.0, 0.0);
    let st = unsafe { lm_hpd_interval(draws.as_ptr(), draws.len(), 1.5, &mut lo, &mut hi) };
    assert_eq!(st, LmStatus::InvalidArgument);
    let st = unsafe { lm_hpd_interval(draws.as_ptr(), draws.len(), 0.5, &mut lo, &mut hi) };
    assert_eq!(st, LmStatus::Ok);
    assert_eq!(hi - lo, 9.0);
}

fn target_dir() -> PathBuf {
    // tests/ffi-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/longmem.h");
    let text = std::fs::read_to_string(&header).expect("header is generated by build.rs");
    for sym in ["lm_bias_correct", "lm_estimator_new", "LM_STATUS_OK", "typedef struct LmTrace LmTrace"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }

    let lib = target_dir().join("liblongmem_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "longmem.h"
int main(void) {
    double x[256];
    if (lm_simulate_arfima(0.3, 0.0, 1.0, 256, 7, x) != LM_STATUS_OK) return 1;
    LmEstimator *h = NULL;
    if (lm_estimator_new(LM_FAMILY_SPLW, 0, 0.7, 256, &h) != LM_STATUS_OK) return 2;
    LmEstimate e;
    if (lm_estimator_estimate(h, x, 256, &e) != LM_STATUS_OK) return 3;
    lm_estimator_free(h);
    if (lm_estimator_new(99, 0, 0.7, 256, &h) != LM_STATUS_INVALID_ARGUMENT) return 4;
    printf("%.6f %zu\n", e.d_hat, e.n);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C smoke program failed to compile");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke program exited with {:?}", out.status);
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[1], "48");
    let d: f64 = fields[0].parse().unwrap();
    assert!(d > -0.2 && d < 0.8, "{d}");
    std::fs::remove_dir_all(&dir).ok();
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("longmem-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
