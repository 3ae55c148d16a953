//! C ABI over the `cbwk` library.
//!
//! Objects cross the boundary as opaque handles created by the
//! `cbwk_instance_*` and `cbwk_simulate` calls and released by the matching
//! `*_free`. Every fallible call
//! returns a [`CbwkStatus`]; on failure the message is available from
//! [`cbwk_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cbwk::bench::{gen_loan_instance, persist_run, Instance, LoanInstanceConfig};
use cbwk::policy::{build_policy, PolicyConfig};
use cbwk::runner::{run_policy, RunRecord};
use cbwk::{check_kkt, solve_lp, Error, LpProblem};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbwkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidProblem = 4,
    InvalidConfig = 5,
    NumericalInstability = 6,
    Parse = 7,
    Io = 8,
    Other = 9,
    Panic = 10,
}

impl From<&Error> for CbwkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::MissingField(_)
            | Error::NormViolation { .. }
            | Error::RangeViolation { .. }
            | Error::NullActionNonzero { .. }
            | Error::InvalidProblem(_)
            | Error::MissingDistribution
            | Error::CoefficientMismatch(_)
            | Error::TooLarge(_) => Self::InvalidProblem,
            Error::InvalidConfig(_) => Self::InvalidConfig,
            Error::NumericalInstability(_) | Error::NoConvergence { .. } => {
                Self::NumericalInstability
            }
            Error::Json(_) | Error::Csv(_) | Error::SchemaError(_) => Self::Parse,
            Error::Io(_) => Self::Io,
            _ => Self::Other,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CbwkStatus, msg: impl Into<String>) -> CbwkStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), CbwkStatus>) -> CbwkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CbwkStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(CbwkStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> CbwkStatus {
    fail(CbwkStatus::from(&e), e.to_string())
}

unsafe fn read_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, CbwkStatus> {
    if s.is_null() {
        return Err(fail(CbwkStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| fail(CbwkStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn check_out<T>(out: *mut T, name: &str) -> Result<(), CbwkStatus> {
    if out.is_null() {
        Err(fail(CbwkStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(h: *const T, name: &str) -> Result<&'a T, CbwkStatus> {
    // SAFETY: non-null handles come from this library.
    unsafe { h.as_ref() }.ok_or_else(|| fail(CbwkStatus::NullPointer, format!("`{name}` is null")))
}

/// Opaque problem instance with its true conversion parameter.
pub struct CbwkInstance(Instance);

/// Opaque record of one simulated run.
pub struct CbwkRun(RunRecord);

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn cbwk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cbwk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the loan-discount instance from a JSON configuration; null or an
/// empty string selects the defaults.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_instance_loan(
    config_json: *const c_char,
    out: *mut *mut CbwkInstance,
) -> CbwkStatus {
    guard(|| {
        check_out(out, "out")?;
        let cfg: LoanInstanceConfig = if config_json.is_null() {
            LoanInstanceConfig::default()
        } else {
            let text = unsafe { read_str(config_json, "config_json") }?;
            if text.trim().is_empty() {
                LoanInstanceConfig::default()
            } else {
                serde_json::from_str(text).map_err(|e| lib_err(e.into()))?
            }
        };
        let inst = gen_loan_instance(&cfg).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(CbwkInstance(inst))) };
        Ok(())
    })
}

/// Builds an instance from a problem document and a true parameter of
/// length `theta_len`.
///
/// # Safety
/// `problem_json` is NUL-terminated, `theta` points to `theta_len` doubles
/// and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_instance_from_json(
    problem_json: *const c_char,
    theta: *const f64,
    theta_len: usize,
    out: *mut *mut CbwkInstance,
) -> CbwkStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = unsafe { read_str(problem_json, "problem_json") }?;
        if theta.is_null() && theta_len > 0 {
            return Err(fail(CbwkStatus::NullPointer, "`theta` is null"));
        }
        let theta = if theta_len == 0 {
            Vec::new()
        } else {
            // SAFETY: checked non-null; the caller guarantees the length.
            unsafe { std::slice::from_raw_parts(theta, theta_len) }.to_vec()
        };
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| lib_err(e.into()))?;
        let inst = Instance {
            spec: cbwk::validate_spec(&raw).map_err(lib_err)?,
            true_theta: theta,
            linear_features: None,
        };
        inst.env(0).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(CbwkInstance(inst))) };
        Ok(())
    })
}

/// # Safety
/// `inst` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbwk_instance_free(inst: *mut CbwkInstance) {
    if !inst.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(inst) });
    }
}

/// Number of contexts, actions (including the no-op) and cost components.
///
/// # Safety
/// `inst` is a live handle; the output pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_instance_shape(
    inst: *const CbwkInstance,
    n_contexts: *mut usize,
    n_actions: *mut usize,
    n_costs: *mut usize,
) -> CbwkStatus {
    guard(|| {
        let inst = unsafe { handle(inst, "inst") }?;
        check_out(n_contexts, "n_contexts")?;
        check_out(n_actions, "n_actions")?;
        check_out(n_costs, "n_costs")?;
        let spec = &inst.0.spec;
        unsafe {
            *n_contexts = spec.n_contexts();
            *n_actions = spec.n_actions();
            *n_costs = spec.n_costs();
        }
        Ok(())
    })
}

/// Value of the static benchmark program under the true parameters.
///
/// # Safety
/// `inst` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_instance_opt(inst: *const CbwkInstance, out: *mut f64) -> CbwkStatus {
    guard(|| {
        let inst = unsafe { handle(inst, "inst") }?;
        check_out(out, "out")?;
        let v = inst.0.opt().map_err(lib_err)?.value;
        unsafe { *out = v };
        Ok(())
    })
}

/// Runs the policy described by `policy_json` (null for defaults) for one
/// seed.
///
/// # Safety
/// `inst` is a live handle, `policy_json` is null or NUL-terminated and
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_simulate(
    inst: *const CbwkInstance,
    policy_json: *const c_char,
    seed: u64,
    out: *mut *mut CbwkRun,
) -> CbwkStatus {
    guard(|| {
        let inst = unsafe { handle(inst, "inst") }?;
        check_out(out, "out")?;
        let cfg: PolicyConfig = if policy_json.is_null() {
            PolicyConfig::default()
        } else {
            let text = unsafe { read_str(policy_json, "policy_json") }?;
            serde_json::from_str(text).map_err(|e| lib_err(e.into()))?
        };
        let inst = &inst.0;
        let env = inst.env(seed).map_err(lib_err)?;
        let mut policy = build_policy(
            &inst.spec,
            &cfg,
            Some(&inst.true_theta),
            inst.linear_features.as_deref(),
        )
        .map_err(lib_err)?;
        let run = run_policy(&env, policy.as_mut(), seed, false).map_err(lib_err)?;
        unsafe { *out = Box::into_raw(Box::new(CbwkRun(run))) };
        Ok(())
    })
}

/// # Safety
/// `run` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_free(run: *mut CbwkRun) {
    if !run.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Number of rounds played.
///
/// # Safety
/// `run` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_len(run: *const CbwkRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.0.history.len())
}

/// Cumulative realized reward.
///
/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_cumulative_reward(run: *const CbwkRun, out: *mut f64) -> CbwkStatus {
    guard(|| {
        let run = unsafe { handle(run, "run") }?;
        check_out(out, "out")?;
        unsafe { *out = run.0.history.cumulative_reward };
        Ok(())
    })
}

/// Cumulative realized cost of component `i`.
///
/// # Safety
/// `run` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_cumulative_cost(
    run: *const CbwkRun,
    i: usize,
    out: *mut f64,
) -> CbwkStatus {
    guard(|| {
        let run = unsafe { handle(run, "run") }?;
        check_out(out, "out")?;
        let costs = &run.0.history.cumulative_cost;
        let c = *costs.get(i).ok_or_else(|| {
            fail(
                CbwkStatus::InvalidArgument,
                format!("cost index {i} out of range ({} components)", costs.len()),
            )
        })?;
        unsafe { *out = c };
        Ok(())
    })
}

/// First round at which the budget guard fired, or 0 if it never did.
///
/// # Safety
/// `run` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_lock_round(run: *const CbwkRun) -> usize {
    unsafe { run.as_ref() }.and_then(|r| r.0.lock_round).unwrap_or(0)
}

/// Writes the per-round CSV of the run into directory `dir`.
///
/// # Safety
/// `run` is a live handle; `dir` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cbwk_run_write_csv(run: *const CbwkRun, dir: *const c_char) -> CbwkStatus {
    guard(|| {
        let run = unsafe { handle(run, "run") }?;
        let dir = unsafe { read_str(dir, "dir") }?;
        persist_run(&run.0, Path::new(dir)).map_err(lib_err)?;
        Ok(())
    })
}

/// Solves an LP document and returns `{solution, kkt}` as a JSON string
/// to be released with [`cbwk_string_free`].
///
/// # Safety
/// `lp_json` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cbwk_lp_solve_json(
    lp_json: *const c_char,
    kkt_tol: f64,
    out: *mut *mut c_char,
) -> CbwkStatus {
    guard(|| {
        check_out(out, "out")?;
        let text = unsafe { read_str(lp_json, "lp_json") }?;
        let lp: LpProblem = serde_json::from_str(text).map_err(|e| lib_err(e.into()))?;
        let solution = solve_lp(&lp).map_err(lib_err)?;
        let kkt = check_kkt(&lp, &solution, kkt_tol);
        let doc = serde_json::json!({ "solution": solution, "kkt": kkt });
        let s = CString::new(doc.to_string()).map_err(|_| fail(CbwkStatus::Other, "NUL in output"))?;
        unsafe { *out = s.into_raw() };
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbwk_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: created by CString::into_raw in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}
