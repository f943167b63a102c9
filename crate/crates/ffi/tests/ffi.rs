use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use kgm_ffi::*;

fn series(nobs: usize, m: usize) -> Vec<f64> {
    // deterministic AR(1)-like data with a single cross coupling
    let mut s: u64 = 7;
    let mut y = vec![0.0; nobs * m];
    for t in 0..nobs {
        for c in 0..m {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let e = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let prev = if t > 0 { y[(t - 1) * m + c] } else { 0.0 };
            let cross = if t > 0 && c == 1 { 0.3 * y[(t - 1) * m] } else { 0.0 };
            y[t * m + c] = 0.5 * prev + cross + e;
        }
    }
    y
}

fn last_error() -> String {
    let p = kgm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn estimate_round_trip() {
    let y = series(2000, 4);
    let mut lags = ptr::null_mut();
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(kgm_lags_from_series(y.as_ptr(), 2000, 4, 1, &mut lags), KgmStatus::Ok);
        assert_eq!(kgm_estimate(lags, KgmMethod::K1, 2, 2, ptr::null(), &mut res), KgmStatus::Ok);
        assert_eq!(kgm_result_dim(res), 4);
        assert_eq!(kgm_result_order(res), 1);
        assert!(kgm_result_defect(res) >= 0.0);

        let mut coeffs = vec![0.0; 32];
        assert_eq!(kgm_result_coefficients(res, coeffs.as_mut_ptr(), 32), KgmStatus::Ok);
        // S_0 is symmetric with a positive diagonal
        assert!(coeffs[0] > 0.0);
        assert_eq!(coeffs[1], coeffs[4]);

        let (mut e1, mut e2) = ([0u8; 4], [0u8; 4]);
        assert_eq!(kgm_result_supports(res, e1.as_mut_ptr(), 4, e2.as_mut_ptr(), 4), KgmStatus::Ok);
        assert_eq!((e1[0], e1[3], e2[0], e2[3]), (1, 1, 1, 1));

        let mut json = ptr::null_mut();
        assert_eq!(kgm_result_to_json(res, &mut json), KgmStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        kgm_string_free(json);
        let file: kgm_core::io::ResultFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.m1, 2);
        assert_eq!(file.method, kgm_core::pipeline::Method::K1);

        let mut curve = vec![0.0; 32];
        assert_eq!(
            kgm_edge_residual_spectrum(res, KgmGrouping::Nodes, 0, 1, 32, curve.as_mut_ptr(), 32),
            KgmStatus::Ok
        );
        assert!(curve.iter().all(|v| v.is_finite() && *v >= 0.0));

        kgm_result_free(res);
        kgm_lags_free(lags);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let y = series(100, 4);
    let mut lags = ptr::null_mut();
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(
            kgm_lags_from_series(ptr::null(), 10, 2, 1, &mut lags),
            KgmStatus::NullPointer
        );
        assert!(last_error().contains("data"));
        assert_eq!(kgm_lags_from_series(y.as_ptr(), 100, 4, 1, &mut lags), KgmStatus::Ok);
        // m1·m2 disagrees with the channel count
        assert_eq!(kgm_estimate(lags, KgmMethod::K1, 3, 2, ptr::null(), &mut res), KgmStatus::Validation);
        assert!(res.is_null());
        let mut opts = kgm_estimate_options_default();
        opts.grid_points = 100;
        assert_eq!(kgm_estimate(lags, KgmMethod::Burg, 2, 2, &opts, &mut res), KgmStatus::Validation);

        assert_eq!(kgm_estimate(lags, KgmMethod::Burg, 2, 2, ptr::null(), &mut res), KgmStatus::Ok);
        let mut small = [0.0; 3];
        assert_eq!(kgm_result_coefficients(res, small.as_mut_ptr(), 3), KgmStatus::BufferTooSmall);
        let mut curve = [0.0; 16];
        assert_eq!(
            kgm_edge_residual_spectrum(res, KgmGrouping::Modules, 1, 1, 16, curve.as_mut_ptr(), 16),
            KgmStatus::Validation
        );
        kgm_result_free(res);
        kgm_lags_free(lags);
        kgm_result_free(ptr::null_mut());
        assert_eq!(kgm_result_dim(ptr::null()), 0);
        assert!(kgm_result_defect(ptr::null()).is_nan());
    }

    // constant channel: lag matrix is singular
    let flat = vec![1.0; 400];
    unsafe {
        assert_eq!(kgm_lags_from_series(flat.as_ptr(), 100, 4, 1, &mut lags), KgmStatus::Ok);
        assert_eq!(kgm_estimate(lags, KgmMethod::K1, 2, 2, ptr::null(), &mut res), KgmStatus::Numerical);
        kgm_lags_free(lags);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(kgm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include").join("kgm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["kgm_estimate", "kgm_lags_from_series", "KGM_STATUS_NUMERICAL", "typedef struct KgmResult KgmResult"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // the static library sits next to the test executable's parent directory
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libkgm_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests").join("c").join("smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("dim 4 order 1"));
}
