use std::ffi::{CStr, CString};
use std::ptr;

use cbwk_ffi::*;

fn last_error() -> String {
    let p = cbwk_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn loan(horizon: usize) -> *mut CbwkInstance {
    let cfg = CString::new(format!(r#"{{"horizon": {horizon}, "budget": {}}}"#, 0.032 * horizon as f64)).unwrap();
    let mut inst = ptr::null_mut();
    let st = unsafe { cbwk_instance_loan(cfg.as_ptr(), &mut inst) };
    assert_eq!(st, CbwkStatus::Ok);
    assert!(!inst.is_null());
    inst
}

#[test]
fn loan_instance_shape_and_opt() {
    let inst = loan(500);
    let (mut nx, mut na, mut d) = (0, 0, 0);
    assert_eq!(unsafe { cbwk_instance_shape(inst, &mut nx, &mut na, &mut d) }, CbwkStatus::Ok);
    assert_eq!((nx, na, d), (25, 6, 2));
    let mut opt = 0.0;
    assert_eq!(unsafe { cbwk_instance_opt(inst, &mut opt) }, CbwkStatus::Ok);
    assert!(opt > 0.0);
    unsafe { cbwk_instance_free(inst) };
}

#[test]
fn simulate_respects_budget_and_replays() {
    let inst = loan(400);
    let policy = CString::new(r#"{"working_budget":"full","nu_mode":"empirical","bonus":"practical","explore_scale":0.1}"#).unwrap();
    let run_once = || {
        let mut run = ptr::null_mut();
        assert_eq!(unsafe { cbwk_simulate(inst, policy.as_ptr(), 3, &mut run) }, CbwkStatus::Ok);
        run
    };
    let (a, b) = (run_once(), run_once());
    assert_eq!(unsafe { cbwk_run_len(a) }, 400);
    let (mut ra, mut rb) = (0.0, 0.0);
    unsafe {
        cbwk_run_cumulative_reward(a, &mut ra);
        cbwk_run_cumulative_reward(b, &mut rb);
    }
    assert_eq!(ra, rb);
    for i in 0..2 {
        let mut c = 0.0;
        assert_eq!(unsafe { cbwk_run_cumulative_cost(a, i, &mut c) }, CbwkStatus::Ok);
        assert!(c <= 0.032 * 400.0);
    }
    let mut c = 0.0;
    assert_eq!(unsafe { cbwk_run_cumulative_cost(a, 2, &mut c) }, CbwkStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cbwk_run_write_csv(a, path.as_ptr()) }, CbwkStatus::Ok);
    assert!(dir.path().join("run_seed3.csv").exists());
    unsafe {
        cbwk_run_free(a);
        cbwk_run_free(b);
        cbwk_instance_free(inst);
    }
}

#[test]
fn errors_are_reported() {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { cbwk_instance_loan(ptr::null(), ptr::null_mut()) }, CbwkStatus::NullPointer);
    let bad = CString::new(r#"{"bogus": 1}"#).unwrap();
    assert_eq!(unsafe { cbwk_instance_loan(bad.as_ptr(), &mut inst) }, CbwkStatus::Parse);
    assert!(inst.is_null());
    assert!(!last_error().is_empty());

    let inst = loan(100);
    let cfg = CString::new(r#"{"policy":"box-d"}"#).unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { cbwk_simulate(inst, cfg.as_ptr(), 1, &mut run) }, CbwkStatus::InvalidConfig);
    assert!(last_error().contains('Z'));
    assert!(run.is_null());
    assert_eq!(unsafe { cbwk_run_len(ptr::null()) }, 0);
    unsafe {
        cbwk_instance_free(inst);
        cbwk_instance_free(ptr::null_mut());
        cbwk_run_free(ptr::null_mut());
        cbwk_string_free(ptr::null_mut());
    }
    // A successful call clears the message.
    let mut opt = 0.0;
    let inst = loan(100);
    assert_eq!(unsafe { cbwk_instance_opt(inst, &mut opt) }, CbwkStatus::Ok);
    assert!(cbwk_last_error_message().is_null());
    unsafe { cbwk_instance_free(inst) };
}

#[test]
fn custom_instance_from_json() {
    let doc = CString::new(
        r#"{"actions":["null","a"],"null_action":0,"contexts":[[0.0]],
            "transfer":[[[0.0,0.0],[0.6,0.0]]],"reward":[[0.0,0.5]],"cost":[[[0.0],[0.4]]],
            "horizon":10,"budget":3,"theta_bound":1,"context_weights":[1.0]}"#,
    )
    .unwrap();
    let theta = [0.5, 0.0];
    let mut inst = ptr::null_mut();
    assert_eq!(
        unsafe { cbwk_instance_from_json(doc.as_ptr(), theta.as_ptr(), 2, &mut inst) },
        CbwkStatus::Ok
    );
    unsafe { cbwk_instance_free(inst) };
    let far = [5.0, 0.0];
    let mut inst = ptr::null_mut();
    assert_eq!(
        unsafe { cbwk_instance_from_json(doc.as_ptr(), far.as_ptr(), 2, &mut inst) },
        CbwkStatus::InvalidProblem
    );
}

#[test]
fn lp_solve_round_trip() {
    let lp = CString::new(
        r#"{"nu":[1.0],"gain":[[0.0,1.0]],"cost_rate":[[[0.0],[0.5]]],"budget":2.0,"horizon":10.0}"#,
    )
    .unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cbwk_lp_solve_json(lp.as_ptr(), 1e-8, &mut out) }, CbwkStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { cbwk_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["solution"]["value"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert_eq!(v["kkt"]["passed"], true);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(cbwk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_generated_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cbwk.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["cbwk_simulate", "cbwk_last_error_message", "CBWK_STATUS_OK", "typedef struct CbwkInstance"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
