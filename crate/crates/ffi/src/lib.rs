//! C ABI over the experiment harness: opaque plan handles, integer
//! status codes, and JSON strings for structured results.
//!
//! Ownership rules:
//! - every `GuardsimPlan` pointer returned by a constructor is released
//!   with [`guardsim_plan_free`]
//! - every `char` pointer returned through an out-parameter is released
//!   with [`guardsim_string_free`]
//! - the pointer from [`guardsim_last_error`] stays valid until the next
//!   failed call on the same thread and must not be freed
//!
//! All functions are panic-safe: a caught panic reports
//! `GUARDSIM_STATUS_PANIC` instead of unwinding across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use guardsim::harness::execute_task;
use guardsim::{default_sweep_plan, execute_plan, Error, ExperimentPlan};

/// Result of every fallible call. Anything other than `Ok` leaves a
/// human-readable message in `guardsim_last_error`.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardsimStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The plan text could not be parsed.
    ParseError = 3,
    /// The plan parsed but failed validation, or an argument referred to
    /// a policy, cell, or replication the plan does not contain.
    InvalidConfig = 4,
    /// Simulation or file output failed.
    ExecutionError = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Opaque experiment plan handle.
pub struct GuardsimPlan {
    inner: ExperimentPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn error_status(err: &Error) -> GuardsimStatus {
    match err {
        Error::ConfigParse(_) => GuardsimStatus::ParseError,
        Error::InvalidConfig { .. } | Error::InvalidParameter { .. } => {
            GuardsimStatus::InvalidConfig
        }
        _ => GuardsimStatus::ExecutionError,
    }
}

fn fail(err: &Error) -> GuardsimStatus {
    set_error(&err.to_string());
    error_status(err)
}

/// Runs `body` with panics converted to `GUARDSIM_STATUS_PANIC`.
fn guarded(body: impl FnOnce() -> GuardsimStatus) -> GuardsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic at the C boundary".to_string());
            set_error(&msg);
            GuardsimStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char) -> Result<&'a str, GuardsimStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(GuardsimStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        GuardsimStatus::InvalidUtf8
    })
}

fn write_out<T>(out: *mut T, value: T) -> GuardsimStatus {
    if out.is_null() {
        set_error("null out-parameter");
        return GuardsimStatus::NullPointer;
    }
    unsafe { out.write(value) };
    GuardsimStatus::Ok
}

fn export_plan(plan: ExperimentPlan, out: *mut *mut GuardsimPlan) -> GuardsimStatus {
    match plan.validate() {
        Ok(()) => write_out(out, Box::into_raw(Box::new(GuardsimPlan { inner: plan }))),
        Err(e) => fail(&e),
    }
}

fn export_string(value: String, out: *mut *mut c_char) -> GuardsimStatus {
    match CString::new(value) {
        Ok(s) => write_out(out, s.into_raw()),
        Err(_) => {
            set_error("result contained an interior NUL byte");
            GuardsimStatus::ExecutionError
        }
    }
}

/// Message from the most recent failed call on this thread, empty when
/// nothing failed yet. Do not free.
#[no_mangle]
pub extern "C" fn guardsim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string. Do not free.
#[no_mangle]
pub extern "C" fn guardsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a TOML experiment plan.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid
/// destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_from_toml(
    text: *const c_char,
    out: *mut *mut GuardsimPlan,
) -> GuardsimStatus {
    guarded(|| {
        let text = match required_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match toml::from_str::<ExperimentPlan>(text) {
            Ok(plan) => export_plan(plan, out),
            Err(e) => fail(&Error::ConfigParse(e.to_string())),
        }
    })
}

/// Parses and validates a JSON experiment plan.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid
/// destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_from_json(
    text: *const c_char,
    out: *mut *mut GuardsimPlan,
) -> GuardsimStatus {
    guarded(|| {
        let text = match required_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match serde_json::from_str::<ExperimentPlan>(text) {
            Ok(plan) => export_plan(plan, out),
            Err(e) => fail(&Error::ConfigParse(e.to_string())),
        }
    })
}

/// The built-in budget x truncation x attacker sweep. Never fails.
#[no_mangle]
pub extern "C" fn guardsim_plan_default_sweep() -> *mut GuardsimPlan {
    Box::into_raw(Box::new(GuardsimPlan {
        inner: default_sweep_plan(),
    }))
}

/// Releases a plan handle. Null is a no-op.
///
/// # Safety
/// `plan` must be null or a pointer returned by a plan constructor that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_free(plan: *mut GuardsimPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Overrides the base seed every stream is derived from.
///
/// # Safety
/// `plan` must be a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_set_base_seed(
    plan: *mut GuardsimPlan,
    seed: u64,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_mut() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        plan.inner.base_seed = Some(seed);
        GuardsimStatus::Ok
    })
}

/// Redirects the plan's output tree.
///
/// # Safety
/// `plan` must be a live plan handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_set_output_dir(
    plan: *mut GuardsimPlan,
    dir: *const c_char,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_mut() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        let dir = match required_str(dir) {
            Ok(d) => d,
            Err(status) => return status,
        };
        plan.inner.output_dir = PathBuf::from(dir);
        GuardsimStatus::Ok
    })
}

/// Number of runs the plan expands to.
///
/// # Safety
/// `plan` must be a live plan handle; `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_run_count(
    plan: *const GuardsimPlan,
    out: *mut usize,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_ref() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        write_out(out, plan.inner.tasks().len())
    })
}

/// Serializes the resolved plan as JSON.
///
/// # Safety
/// `plan` must be a live plan handle; `out` a valid destination. Free the
/// result with `guardsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_to_json(
    plan: *const GuardsimPlan,
    out: *mut *mut c_char,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_ref() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        match serde_json::to_string_pretty(&plan.inner) {
            Ok(json) => export_string(json, out),
            Err(e) => {
                set_error(&e.to_string());
                GuardsimStatus::ExecutionError
            }
        }
    })
}

/// Executes every run of the plan and writes the output tree. On success
/// `out` receives a JSON object with the run count and output paths.
///
/// # Safety
/// `plan` must be a live plan handle; `out` a valid destination. Free the
/// result with `guardsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn guardsim_plan_execute(
    plan: *const GuardsimPlan,
    out: *mut *mut c_char,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_ref() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        match execute_plan(&plan.inner, None) {
            Ok(outputs) => {
                let json = serde_json::json!({
                    "dir": outputs.dir.display().to_string(),
                    "plan_json": outputs.plan_json.display().to_string(),
                    "rounds_csv": outputs.rounds_csv.display().to_string(),
                    "aggregate_csv": outputs.aggregate_csv.display().to_string(),
                    "learned_csv": outputs.learned_csv.display().to_string(),
                    "run_count": outputs.run_count,
                });
                export_string(json.to_string(), out)
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs one (cell, policy, replication) task in memory, without touching
/// the filesystem. On success `out` receives the run summary as JSON.
///
/// # Safety
/// `plan` must be a live plan handle; `policy` a NUL-terminated string;
/// `out` a valid destination. Free the result with `guardsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn guardsim_run_single(
    plan: *const GuardsimPlan,
    policy: *const c_char,
    cell: u32,
    replication: u32,
    out: *mut *mut c_char,
) -> GuardsimStatus {
    guarded(|| {
        let Some(plan) = plan.as_ref() else {
            set_error("null plan handle");
            return GuardsimStatus::NullPointer;
        };
        let policy_name = match required_str(policy) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let plan = &plan.inner;
        let Some(policy_spec) = plan.policies.iter().find(|p| p.name() == policy_name) else {
            set_error(&format!("plan has no policy named `{policy_name}`"));
            return GuardsimStatus::InvalidConfig;
        };
        let cells = plan.cells();
        let Some(cell_spec) = cells.get(cell as usize) else {
            set_error(&format!(
                "cell index {cell} out of range: plan has {} cells",
                cells.len()
            ));
            return GuardsimStatus::InvalidConfig;
        };
        if replication as usize >= plan.replications {
            set_error(&format!(
                "replication {replication} out of range: plan has {}",
                plan.replications
            ));
            return GuardsimStatus::InvalidConfig;
        }
        let base_seed = plan.base_seed();
        let world_seed = plan
            .world
            .world_seed
            .unwrap_or_else(|| guardsim::harness::derive_seed(base_seed, "world", &[]));
        let task = guardsim::harness::RunTask {
            cell: cell_spec.clone(),
            policy: policy_spec.clone(),
            replication: replication as usize,
        };
        let world = match plan.world.build(plan.game.n_targets, world_seed) {
            Ok(w) => w,
            Err(e) => return fail(&e),
        };
        match execute_task(plan, &world, base_seed, world_seed, &task) {
            Ok(output) => match serde_json::to_string(&output.summary) {
                Ok(json) => export_string(json, out),
                Err(e) => {
                    set_error(&e.to_string());
                    GuardsimStatus::ExecutionError
                }
            },
            Err(e) => fail(&e),
        }
    })
}

/// Releases a string returned through an out-parameter. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn guardsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
