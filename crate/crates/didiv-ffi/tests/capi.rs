//! Round-trip tests driving the C ABI from Rust, the way a foreign binding
//! would.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use didiv_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null(), "null result; last error: {}", last_error());
    let s = CStr::from_ptr(ptr).to_string_lossy().into_owned();
    didiv_string_free(ptr);
    s
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(didiv_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

fn write_staggered_csv(path: &std::path::Path) {
    let mut text = String::from("unit,time,y,d,z\n");
    let mut k = 0;
    for (e, count) in [(Some(2i64), 8), (Some(3), 7), (None, 9)] {
        for _ in 0..count {
            k += 1;
            for t in 1..=4i64 {
                let z = matches!(e, Some(date) if t >= date) as u8;
                let effect = match e {
                    Some(date) if t >= date => 1.0 + 0.5 * (t - date) as f64,
                    _ => 0.0,
                };
                let y = 0.3 * t as f64 + 0.01 * k as f64 + effect * z as f64;
                text.push_str(&format!("u{k:03},{t},{y},{z},{z}\n"));
            }
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn version_is_a_cstring() {
    let v = unsafe { CStr::from_ptr(didiv_version()) };
    assert!(!v.to_string_lossy().is_empty());
}

#[test]
fn load_estimate_aggregate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_staggered_csv(&csv);

    unsafe {
        let path = cstr(csv.to_str().unwrap());
        let ds = didiv_dataset_load_csv(path.as_ptr(), 0, std::ptr::null());
        assert!(!ds.is_null(), "{}", last_error());
        assert_eq!(didiv_dataset_n_units(ds), 24);
        assert_eq!(didiv_dataset_n_rows(ds), 96);

        // Estimation before cohort derivation is an error with a message.
        assert!(didiv_estimate_cells_json(ds, 1e-10, 2).is_null());
        assert!(last_error().contains("derive"));

        let rule = cstr("never");
        assert_eq!(didiv_derive_cohorts(ds, rule.as_ptr()), DidivStatus::Ok);

        let validation = take_string(didiv_validate_json(ds));
        let v: serde_json::Value = serde_json::from_str(&validation).unwrap();
        assert!(v["violations"].as_array().unwrap().is_empty());

        let cells_json = take_string(didiv_estimate_cells_json(ds, 1e-10, 2));
        let cells: serde_json::Value = serde_json::from_str(&cells_json).unwrap();
        assert_eq!(cells.as_array().unwrap().len(), 5);
        assert_eq!(cells[0]["e"], 2);
        assert_eq!(cells[0]["l"], 0);

        let kind = cstr("sel");
        let agg_json = take_string(didiv_aggregate_json(
            ds,
            kind.as_ptr(),
            0,
            0,
            2,
            0,
            0,
            1e-10,
            2,
        ));
        let agg: serde_json::Value = serde_json::from_str(&agg_json).unwrap();
        let weights = agg["weights"].as_array().unwrap();
        let sum: f64 = weights.iter().map(|w| w["w"].as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-10);

        let fit_json = take_string(didiv_twfeiv_json(ds, 1e-10, 0, 42));
        let fit: serde_json::Value = serde_json::from_str(&fit_json).unwrap();
        assert!(fit["beta_iv"].as_f64().unwrap().is_finite());

        let pre_json = take_string(didiv_pretrend_json(ds, 2));
        let pre: serde_json::Value = serde_json::from_str(&pre_json).unwrap();
        assert!(pre["joint_outcome"]["p_value"].as_f64().is_some());

        didiv_dataset_free(ds);
    }
}

#[test]
fn decompose_requires_two_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_staggered_csv(&csv); // three cohorts

    unsafe {
        let path = cstr(csv.to_str().unwrap());
        let ds = didiv_dataset_load_csv(path.as_ptr(), 0, std::ptr::null());
        let rule = cstr("never");
        assert_eq!(didiv_derive_cohorts(ds, rule.as_ptr()), DidivStatus::Ok);
        let out = didiv_decompose_json(ds, 1e-10, 0, 1);
        assert!(out.is_null());
        assert!(last_error().contains("two cohorts"), "{}", last_error());
        didiv_dataset_free(ds);
    }
}

#[test]
fn simulate_and_oracle_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let spec = didiv_core::sim::fig1_spec().to_toml().unwrap();
    unsafe {
        let toml = cstr(&spec);
        let out = cstr(dir.path().to_str().unwrap());
        let status = didiv_simulate_csv(toml.as_ptr(), 500, 7, 0, out.as_ptr());
        assert_eq!(status, DidivStatus::Ok, "{}", last_error());
        assert!(dir.path().join("data.csv").exists());
        assert!(dir.path().join("audit.csv").exists());

        let oracle_json = take_string(didiv_oracle_json(toml.as_ptr()));
        let oracle: serde_json::Value = serde_json::from_str(&oracle_json).unwrap();
        let wald = oracle["two_period"]["wald_did"].as_f64().unwrap();
        assert!((wald - 10.0).abs() < 1e-9);
    }
}

#[test]
fn error_paths_set_messages() {
    unsafe {
        let missing = cstr("/no/such/file.csv");
        let ds = didiv_dataset_load_csv(missing.as_ptr(), 0, std::ptr::null());
        assert!(ds.is_null());
        assert!(!last_error().is_empty());

        let bad_mode = cstr("/tmp/whatever.csv");
        let ds = didiv_dataset_load_csv(bad_mode.as_ptr(), 9, std::ptr::null());
        assert!(ds.is_null());
        assert!(last_error().contains("mode"));
    }
}
