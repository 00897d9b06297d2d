use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use wgflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(wgf_last_error()) }.to_string_lossy().into_owned()
}

fn spec(name: &str) -> *mut WgfSpec {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { wgf_spec_from_preset(name.as_ptr(), &mut out) }, WgfStatus::Ok);
    out
}

#[test]
fn presets_are_listed() {
    let n = wgf_preset_count();
    assert!(n >= 20);
    let first = unsafe { CStr::from_ptr(wgf_preset_name(0)) }.to_str().unwrap();
    assert!(!first.is_empty());
    assert!(wgf_preset_name(n).is_null());
    assert!(!unsafe { CStr::from_ptr(wgf_version()) }.to_bytes().is_empty());
}

#[test]
fn line_run_round_trip() {
    let s = spec("barenblatt-m2");
    unsafe {
        assert_eq!(wgf_spec_dimension(s), 1);
        assert_eq!(wgf_spec_set_cells(s, 40), WgfStatus::Ok);
        assert_eq!(wgf_spec_set_dt(s, 0.01), WgfStatus::Ok);
        assert_eq!(wgf_spec_set_end_time(s, 0.05), WgfStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(wgf_run(s, &mut run), WgfStatus::Ok);
        assert_eq!(wgf_run_outcome(run), 0);
        assert_eq!(wgf_run_trace_len(run), 6);
        let mut first = WgfTraceRow::default();
        let mut last = WgfTraceRow::default();
        assert_eq!(wgf_run_trace_row(run, 0, &mut first), WgfStatus::Ok);
        assert_eq!(wgf_run_trace_row(run, 5, &mut last), WgfStatus::Ok);
        assert_eq!(last.step, 5);
        assert!((last.total_mass - first.total_mass).abs() <= 1e-12 * first.total_mass);
        assert!(last.energy <= first.energy);
        assert_eq!(wgf_run_trace_row(run, 6, &mut last), WgfStatus::OutOfRange);
        assert!((wgf_run_final_time(run) - 0.05).abs() < 1e-12);

        let mut len = 0;
        assert_eq!(wgf_run_final_field(run, WgfField::X, ptr::null_mut(), &mut len), WgfStatus::Ok);
        assert_eq!(len, 41);
        let mut small = vec![0.0; 10];
        let mut cap = small.len();
        assert_eq!(wgf_run_final_field(run, WgfField::X, small.as_mut_ptr(), &mut cap), WgfStatus::OutOfRange);
        assert_eq!(cap, 41);
        let mut x = vec![0.0; len];
        assert_eq!(wgf_run_final_field(run, WgfField::X, x.as_mut_ptr(), &mut len), WgfStatus::Ok);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        let mut y_len = 0;
        assert_eq!(wgf_run_final_field(run, WgfField::Y, ptr::null_mut(), &mut y_len), WgfStatus::InvalidInput);
        wgf_run_free(run);
        wgf_spec_free(s);
    }
}

#[test]
fn planar_failure_keeps_partial_result() {
    let s = spec("ks2d-m2");
    unsafe {
        assert_eq!(wgf_spec_dimension(s), 2);
        assert_eq!(wgf_spec_set_end_time(s, 0.05), WgfStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(wgf_run(s, &mut run), WgfStatus::Numerical);
        assert!(last_error().contains("distorted"), "{}", last_error());
        assert_eq!(wgf_run_outcome(run), 2);
        assert!(wgf_run_trace_len(run) > 1);
        let mut len = 0;
        assert_eq!(wgf_run_final_field(run, WgfField::Density, ptr::null_mut(), &mut len), WgfStatus::Ok);
        assert_eq!(len, 65 * 65);
        wgf_run_free(run);
        wgf_spec_free(s);
    }
}

#[test]
fn invalid_arguments() {
    unsafe {
        let mut out = ptr::null_mut();
        let bad = CString::new("no-such-preset").unwrap();
        assert_eq!(wgf_spec_from_preset(bad.as_ptr(), &mut out), WgfStatus::InvalidInput);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(wgf_spec_from_preset(ptr::null(), &mut out), WgfStatus::NullArgument);
        let toml = CString::new("end_time = [").unwrap();
        assert_eq!(wgf_spec_from_toml(toml.as_ptr(), &mut out), WgfStatus::InvalidInput);

        let s = spec("table1");
        assert_eq!(wgf_spec_set_dt(s, -1.0), WgfStatus::InvalidInput);
        assert_eq!(wgf_spec_set_end_time(ptr::null_mut(), 1.0), WgfStatus::NullArgument);
        let mut run = ptr::null_mut();
        assert_eq!(wgf_run(ptr::null(), &mut run), WgfStatus::NullArgument);
        assert_eq!(wgf_run_outcome(ptr::null()), -1);
        assert_eq!(wgf_run_trace_len(ptr::null()), 0);
        assert_eq!(wgf_spec_dimension(ptr::null()), 0);
        wgf_spec_free(s);
        wgf_spec_free(ptr::null_mut());
        wgf_run_free(ptr::null_mut());
    }
}

#[test]
fn spec_from_toml_matches_preset() {
    let text = wgflow::presets::preset("fp-one-well").unwrap().to_toml().unwrap();
    let text = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(wgf_spec_from_toml(text.as_ptr(), &mut out), WgfStatus::Ok);
        assert_eq!(wgf_spec_dimension(out), 1);
        wgf_spec_free(out);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/wgflow.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
