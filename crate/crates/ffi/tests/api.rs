use std::ffi::{CStr, CString};
use std::ptr;

use egolog_ffi::*;

fn last_error() -> String {
    let p = egolog_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const TINY: &str = r#"
seed = 9
[corpus]
scenario_train = 8
scenario_test = 4
drift_pool = 4
drift_val = 2
drift_test = 2
har_train_per_class = 1
har_test_per_class = 1
spatial_static_train = 4
spatial_moving_train = 4
spatial_static_test_pairs = 1
spatial_moving_test = 2
[temporal]
contrastive_epochs = 1
aggregator_epochs = 2
"#;

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(egolog_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported_not_dereferenced() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(egolog_session_new(ptr::null(), ptr::null(), &mut s), EgologStatus::NullArgument);
        assert!(s.is_null());
        assert!(last_error().contains("workspace"));
        assert_eq!(egolog_train(ptr::null(), EgologTrainTarget::Har), EgologStatus::NullArgument);
        assert_eq!(egolog_metrics_len(ptr::null()), 0);
        assert!(egolog_metrics_name(ptr::null(), 0).is_null());
        egolog_session_free(ptr::null_mut());
        egolog_metrics_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(egolog_session_new(root.as_ptr(), ptr::null(), &mut s), EgologStatus::Ok);
        let bad = CString::new("seed = \"nope\"").unwrap();
        assert_eq!(egolog_session_set_config(s, bad.as_ptr()), EgologStatus::Format);
        // No corpus yet.
        let mut m = ptr::null_mut();
        assert_eq!(egolog_eval(s, &mut m), EgologStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("generate"), "{}", last_error());
        egolog_session_free(s);

        let missing = CString::new("absent.toml").unwrap();
        assert_eq!(egolog_session_new(root.as_ptr(), missing.as_ptr(), &mut s), EgologStatus::Io);
        assert!(s.is_null());
    }
}

#[test]
fn tdoa_recovers_an_integer_delay() {
    let sr = 48_000u32;
    let n = sr as usize / 2;
    let delay = 7;
    // Deterministic broadband noise.
    let mut x = 0x1234_5678u32;
    let src: Vec<f32> = (0..n + delay)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            x as f32 / u32::MAX as f32 - 0.5
        })
        .collect();
    let left = &src[delay..];
    let right = &src[..n];
    let mut tau = 0.0;
    let status = unsafe { egolog_estimate_tdoa(left.as_ptr(), right.as_ptr(), n, sr, &mut tau) };
    assert_eq!(status, EgologStatus::Ok, "{}", last_error());
    // Left leads, so t_left - t_right is negative.
    assert!((tau * f64::from(sr) + delay as f64).abs() < 0.5, "tau = {tau}");

    let status = unsafe { egolog_estimate_tdoa(left.as_ptr(), ptr::null(), n, sr, &mut tau) };
    assert_eq!(status, EgologStatus::NullArgument);
    let status = unsafe { egolog_estimate_tdoa(left.as_ptr(), right.as_ptr(), 10, sr, &mut tau) };
    assert_eq!(status, EgologStatus::InvalidArgument);
}

#[test]
fn session_runs_generate_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    let tiny = CString::new(TINY).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(egolog_session_new(root.as_ptr(), ptr::null(), &mut s), EgologStatus::Ok);
        assert_eq!(egolog_session_set_config(s, tiny.as_ptr()), EgologStatus::Ok);
        assert_eq!(egolog_session_set_seed(s, 11), EgologStatus::Ok);
        let mut windows = 0usize;
        assert_eq!(egolog_generate(s, &mut windows), EgologStatus::Ok, "{}", last_error());
        assert!(windows > 0);
        for t in [EgologTrainTarget::Temporal, EgologTrainTarget::Scenario] {
            assert_eq!(egolog_train(s, t), EgologStatus::Ok, "{}", last_error());
        }
        let mut m = ptr::null_mut();
        assert_eq!(egolog_eval(s, &mut m), EgologStatus::Ok, "{}", last_error());
        let len = egolog_metrics_len(m);
        assert!(len > 0);
        let mut names = Vec::new();
        for i in 0..len {
            names.push(CStr::from_ptr(egolog_metrics_name(m, i)).to_str().unwrap().to_string());
        }
        assert!(names.iter().any(|n| n == "scenario_f1"), "{names:?}");
        assert!(egolog_metrics_name(m, len).is_null());
        let key = CString::new("scenario_f1").unwrap();
        let mut f1 = -1.0;
        assert_eq!(egolog_metrics_get(m, key.as_ptr(), &mut f1), EgologStatus::Ok);
        assert!((0.0..=1.0).contains(&f1));
        let mut v = 0.0;
        assert_eq!(egolog_metrics_value(m, len, &mut v), EgologStatus::InvalidArgument);
        let absent = CString::new("no_such_metric").unwrap();
        assert_eq!(egolog_metrics_get(m, absent.as_ptr(), &mut v), EgologStatus::InvalidArgument);
        egolog_metrics_free(m);
        assert!(dir.path().join("reports/metrics.csv").exists());

        // The activity model was never trained.
        assert_eq!(egolog_daily_log(s, ptr::null_mut()), EgologStatus::InvalidArgument);
        assert!(last_error().contains("train har"), "{}", last_error());
        egolog_session_free(s);
    }
}
