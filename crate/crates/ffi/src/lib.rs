//! C ABI over the wgflow solvers.
//!
//! Specs and run results are opaque heap handles owned by the caller and
//! released with the matching `*_free`. Every entry point returns a
//! [`WgfStatus`]; the message of the last failure on the calling thread is
//! available through [`wgf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use wgflow::config::{parse_config, RunSpec};
use wgflow::presets::{list_presets, preset};
use wgflow::simulation::{run, FinalState, RunOutput, RunStatus};
use wgflow::Error;

/// Result codes. The nonzero values other than `NullArgument` and `Panic`
/// match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgfStatus {
    Ok = 0,
    NullArgument = 1,
    /// Bad configuration, unknown preset, unsupported combination.
    InvalidInput = 2,
    /// Newton failure, distorted map, lost positivity and the like.
    Numerical = 3,
    Io = 4,
    /// Index or buffer size out of range.
    OutOfRange = 5,
    Panic = 6,
}

/// Opaque run specification.
pub struct WgfSpec {
    spec: RunSpec,
}

/// Opaque result of one run.
pub struct WgfRun {
    out: RunOutput,
}

/// One diagnostics row.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WgfTraceRow {
    pub step: u64,
    pub time: f64,
    pub total_mass: f64,
    pub energy: f64,
    pub regularized_energy: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub min_det: f64,
    pub newton_iterations: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WgfStatus {
    match e.exit_code() {
        2 => WgfStatus::InvalidInput,
        4 => WgfStatus::Io,
        _ => WgfStatus::Numerical,
    }
}

fn fail(e: Error) -> WgfStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn guard(f: impl FnOnce() -> WgfStatus) -> WgfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            WgfStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, WgfStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(WgfStatus::NullArgument);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not UTF-8");
        WgfStatus::InvalidInput
    })
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, WgfStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        WgfStatus::NullArgument
    })
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn emit_spec(spec: RunSpec, out: *mut *mut WgfSpec) -> WgfStatus {
    if let Err(e) = spec.validate() {
        return fail(e);
    }
    unsafe { *out = Box::into_raw(Box::new(WgfSpec { spec })) };
    WgfStatus::Ok
}

/// Message of the last failure on this thread (empty if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wgf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string (static).
#[no_mangle]
pub extern "C" fn wgf_version() -> *const c_char {
    static V: OnceLock<CString> = OnceLock::new();
    V.get_or_init(|| CString::new(wgflow::output::VERSION).unwrap_or_default()).as_ptr()
}

fn preset_names() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| list_presets().into_iter().filter_map(|(n, _)| CString::new(n).ok()).collect())
}

#[no_mangle]
pub extern "C" fn wgf_preset_count() -> usize {
    preset_names().len()
}

/// Name of preset `index` (static string), or null when out of range.
#[no_mangle]
pub extern "C" fn wgf_preset_name(index: usize) -> *const c_char {
    preset_names().get(index).map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_from_preset(name: *const c_char, out: *mut *mut WgfSpec) -> WgfStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return WgfStatus::NullArgument;
        }
        let name = tri!(text(name));
        match preset(name) {
            Ok(spec) => emit_spec(spec, out),
            Err(e) => fail(e),
        }
    })
}

/// Parses a TOML run specification.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_from_toml(toml: *const c_char, out: *mut *mut WgfSpec) -> WgfStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return WgfStatus::NullArgument;
        }
        let t = tri!(text(toml));
        match parse_config(t) {
            Ok(spec) => emit_spec(spec, out),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `spec` must come from a `wgf_spec_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_free(spec: *mut WgfSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

unsafe fn edit_spec(spec: *mut WgfSpec, f: impl FnOnce(&mut RunSpec)) -> WgfStatus {
    guard(|| {
        let Some(s) = spec.as_mut() else {
            set_error("null handle");
            return WgfStatus::NullArgument;
        };
        let mut next = s.spec.clone();
        f(&mut next);
        match next.validate() {
            Ok(()) => {
                s.spec = next;
                WgfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Final time. The spec is left unchanged if the result does not validate.
///
/// # Safety
/// `spec` must be a live spec handle.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_set_end_time(spec: *mut WgfSpec, end_time: f64) -> WgfStatus {
    edit_spec(spec, |s| s.end_time = end_time)
}

/// # Safety
/// `spec` must be a live spec handle.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_set_dt(spec: *mut WgfSpec, dt: f64) -> WgfStatus {
    edit_spec(spec, |s| s.scheme = s.scheme.with_dt(dt))
}

/// Cells per direction.
///
/// # Safety
/// `spec` must be a live spec handle.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_set_cells(spec: *mut WgfSpec, cells: usize) -> WgfStatus {
    edit_spec(spec, |s| s.grid = s.grid.with_cells(cells))
}

/// Spatial dimension of the spec (1 or 2), 0 for a null handle.
///
/// # Safety
/// `spec` must be a live spec handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgf_spec_dimension(spec: *const WgfSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.spec.dimension())
}

/// Runs the spec. A run that stops on a numerical failure still produces a
/// result handle with its partial trace; the return value is then
/// `Numerical`.
///
/// # Safety
/// `spec` must be a live spec handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wgf_run(spec: *const WgfSpec, out: *mut *mut WgfRun) -> WgfStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return WgfStatus::NullArgument;
        }
        let s = tri!(handle(spec));
        let result = run(&s.spec);
        let status = match &result.error {
            Some(e) => {
                set_error(&e.to_string());
                status_of(e)
            }
            None => WgfStatus::Ok,
        };
        *out = Box::into_raw(Box::new(WgfRun { out: result }));
        status
    })
}

/// # Safety
/// `run` must come from [`wgf_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_free(run: *mut WgfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// 0 completed, 1 stopped at the density cap, 2 failed; -1 for null.
///
/// # Safety
/// `run` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_outcome(run: *const WgfRun) -> i32 {
    match run.as_ref().map(|r| &r.out.status) {
        Some(RunStatus::Completed) => 0,
        Some(RunStatus::DensityCap) => 1,
        Some(RunStatus::Failed(_)) => 2,
        None => -1,
    }
}

/// # Safety
/// `run` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_trace_len(run: *const WgfRun) -> usize {
    run.as_ref().map_or(0, |r| r.out.trace.rows.len())
}

/// # Safety
/// `run` must be a live result handle and `row` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_trace_row(run: *const WgfRun, index: usize, row: *mut WgfTraceRow) -> WgfStatus {
    guard(|| {
        let r = tri!(handle(run));
        if row.is_null() {
            set_error("null output pointer");
            return WgfStatus::NullArgument;
        }
        let Some(t) = r.out.trace.rows.get(index) else {
            set_error(&format!("trace row {index} of {}", r.out.trace.rows.len()));
            return WgfStatus::OutOfRange;
        };
        *row = WgfTraceRow {
            step: t.step as u64,
            time: t.time,
            total_mass: t.total_mass,
            energy: t.energy,
            regularized_energy: t.regularized_energy,
            rho_min: t.rho_min,
            rho_max: t.rho_max,
            min_det: t.min_det,
            newton_iterations: t.newton_iterations as u64,
        };
        WgfStatus::Ok
    })
}

/// Which field of the final state to copy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgfField {
    /// Node positions (line) or x coordinates, row-major (plane).
    X = 0,
    /// y coordinates, row-major (plane only).
    Y = 1,
    /// Cell densities (line) or node densities, row-major (plane).
    Density = 2,
}

fn field(state: &FinalState, which: WgfField) -> Option<Vec<f64>> {
    match (state, which) {
        (FinalState::Line(s), WgfField::X) => Some(s.map.positions.clone()),
        (FinalState::Line(s), WgfField::Density) => Some(s.rho.cells.clone()),
        (FinalState::Line(_), WgfField::Y) => None,
        (FinalState::Plane(s), WgfField::X) => Some(s.map.x.iter().copied().collect()),
        (FinalState::Plane(s), WgfField::Y) => Some(s.map.y.iter().copied().collect()),
        (FinalState::Plane(s), WgfField::Density) => Some(s.rho.values.iter().copied().collect()),
    }
}

/// Copies a field of the last accepted state into `buf`. With a null `buf`
/// only the required length is written to `len`; otherwise `*len` is the
/// buffer capacity on input and the number of values on output.
///
/// # Safety
/// `run` must be a live result handle, `len` a valid pointer and `buf`
/// either null or valid for `*len` values.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_final_field(run: *const WgfRun, which: WgfField, buf: *mut f64, len: *mut usize) -> WgfStatus {
    guard(|| {
        let r = tri!(handle(run));
        if len.is_null() {
            set_error("null length pointer");
            return WgfStatus::NullArgument;
        }
        let Some(values) = field(&r.out.final_state, which) else {
            set_error("field not defined for this dimension");
            return WgfStatus::InvalidInput;
        };
        if buf.is_null() {
            *len = values.len();
            return WgfStatus::Ok;
        }
        if *len < values.len() {
            set_error(&format!("buffer holds {} values, {} needed", *len, values.len()));
            *len = values.len();
            return WgfStatus::OutOfRange;
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        *len = values.len();
        WgfStatus::Ok
    })
}

/// Time of the last accepted state, NaN for null.
///
/// # Safety
/// `run` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn wgf_run_final_time(run: *const WgfRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.out.final_state.time())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_error_kind() {
        assert_eq!(status_of(&Error::validation("dt", "must be positive")), WgfStatus::InvalidInput);
        assert_eq!(status_of(&Error::MissingPrevState), WgfStatus::Numerical);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, WgfStatus::Panic);
        let msg = unsafe { CStr::from_ptr(wgf_last_error()) }.to_str().unwrap().to_string();
        assert!(msg.contains("boom"));
    }
}
