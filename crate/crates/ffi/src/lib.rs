//! C ABI for the rotating shallow water solver.
//!
//! The interface follows the opaque-handle pattern: configure a run through
//! an [`RswConfig`] handle, execute it into an [`RswRun`] handle, then read
//! scalar series and final fields out of the run. All functions return
//! [`RswStatus`] (or a pointer that is null on failure); the last error
//! message of the current thread is available via [`rsw_last_error_message`].
//!
//! Field buffers are row-major with x fastest (j-major cell ordering), one
//! value per cell.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rsw_core::diagnostics::potential_vorticity;
use rsw_core::run::{run_from_config, RunConfig, RunOutput};
use rsw_core::state::potential;
use rsw_core::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RswStatus {
    Ok = 0,
    /// Bad configuration, unknown case, or I/O trouble.
    ConfigError = 2,
    /// The numerics failed (positivity loss, solver divergence, energy rise).
    NumericalError = 3,
    /// Null pointer, wrong buffer length, or invalid enum value.
    InvalidArgument = 4,
}

/// Cell fields exposed from a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RswField {
    H = 0,
    U = 1,
    V = 2,
    B = 3,
    Phi = 4,
    Pv = 5,
}

/// Columns of the per-step diagnostics ledger.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RswLedgerColumn {
    T = 0,
    Dt = 1,
    Energy = 2,
    Mass = 3,
    MomX = 4,
    MomY = 5,
    MinH = 6,
    MaxH = 7,
    Q2 = 8,
    R2 = 9,
    Iters = 10,
}

/// Opaque run configuration handle.
pub struct RswConfig {
    inner: RunConfig,
}

/// Opaque handle to a finished run.
pub struct RswRun {
    inner: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> RswStatus {
    if err.is_numerical() {
        RswStatus::NumericalError
    } else {
        RswStatus::ConfigError
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Number of catalog cases.
#[no_mangle]
pub extern "C" fn rsw_case_count() -> usize {
    rsw_core::cases::catalog().len()
}

/// Write the NUL-terminated name of catalog case `index` into `buf`.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rsw_case_name(index: usize, buf: *mut c_char, len: usize) -> RswStatus {
    if buf.is_null() || len == 0 {
        return RswStatus::InvalidArgument;
    }
    let catalog = rsw_core::cases::catalog();
    let Some(info) = catalog.get(index) else {
        set_error("case index out of range");
        return RswStatus::InvalidArgument;
    };
    let bytes = info.name.as_bytes();
    if bytes.len() + 1 > len {
        set_error("name buffer too small");
        return RswStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    RswStatus::Ok
}

/// Create a configuration for the named catalog case. Returns null when the
/// name is not valid UTF-8; unknown names surface when the run executes.
///
/// # Safety
/// `case_name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_new(case_name: *const c_char) -> *mut RswConfig {
    if case_name.is_null() {
        set_error("null case name");
        return ptr::null_mut();
    }
    let Ok(name) = CStr::from_ptr(case_name).to_str() else {
        set_error("case name is not valid UTF-8");
        return ptr::null_mut();
    };
    Box::into_raw(Box::new(RswConfig {
        inner: RunConfig {
            case: Some(name.to_string()),
            ..Default::default()
        },
    }))
}

/// # Safety
/// `config` must come from [`rsw_config_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_free(config: *mut RswConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Override the resolution (cell count along x for quasi-1D cases).
///
/// # Safety
/// `config` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_set_resolution(
    config: *mut RswConfig,
    nx: usize,
    ny: usize,
) -> RswStatus {
    let Some(config) = config.as_mut() else {
        return RswStatus::InvalidArgument;
    };
    config.inner.nx = Some(nx);
    config.inner.ny = Some(ny);
    RswStatus::Ok
}

/// Override the final time.
///
/// # Safety
/// `config` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_set_t_final(
    config: *mut RswConfig,
    t_final: f64,
) -> RswStatus {
    let Some(config) = config.as_mut() else {
        return RswStatus::InvalidArgument;
    };
    config.inner.t_final = Some(t_final);
    RswStatus::Ok
}

/// Override a scalar parameter by name: one of "g", "omega", "eta", "zeta",
/// "alpha", "cfl_safety".
///
/// # Safety
/// `config` must be a valid handle and `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_set_param(
    config: *mut RswConfig,
    name: *const c_char,
    value: f64,
) -> RswStatus {
    let Some(config) = config.as_mut() else {
        return RswStatus::InvalidArgument;
    };
    if name.is_null() {
        return RswStatus::InvalidArgument;
    }
    let Ok(name) = CStr::from_ptr(name).to_str() else {
        set_error("parameter name is not valid UTF-8");
        return RswStatus::InvalidArgument;
    };
    let slot = match name {
        "g" => &mut config.inner.g,
        "omega" => &mut config.inner.omega,
        "eta" => &mut config.inner.eta,
        "zeta" => &mut config.inner.zeta,
        "alpha" => &mut config.inner.alpha,
        "cfl_safety" => &mut config.inner.cfl_safety,
        other => {
            set_error(&format!("unknown parameter `{other}`"));
            return RswStatus::InvalidArgument;
        }
    };
    *slot = Some(value);
    RswStatus::Ok
}

/// Write run outputs (ledger CSV, snapshots, manifest) under `dir`.
///
/// # Safety
/// `config` must be a valid handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rsw_config_set_output_dir(
    config: *mut RswConfig,
    dir: *const c_char,
) -> RswStatus {
    let Some(config) = config.as_mut() else {
        return RswStatus::InvalidArgument;
    };
    if dir.is_null() {
        config.inner.out_dir = None;
        return RswStatus::Ok;
    }
    let Ok(dir) = CStr::from_ptr(dir).to_str() else {
        set_error("output directory is not valid UTF-8");
        return RswStatus::InvalidArgument;
    };
    config.inner.out_dir = Some(dir.to_string());
    RswStatus::Ok
}

/// Execute the configured run. On success returns a run handle and stores
/// `RSW_STATUS_OK` in `status_out` (when non-null); on failure returns
/// null with the status and thread-local error message set.
///
/// # Safety
/// `config` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_execute(
    config: *const RswConfig,
    status_out: *mut RswStatus,
) -> *mut RswRun {
    let write_status = |s: RswStatus| {
        if !status_out.is_null() {
            *status_out = s;
        }
    };
    let Some(config) = config.as_ref() else {
        write_status(RswStatus::InvalidArgument);
        return ptr::null_mut();
    };
    let result = catch_unwind(AssertUnwindSafe(|| run_from_config(config.inner.clone())));
    match result {
        Ok(Ok(output)) => {
            write_status(RswStatus::Ok);
            Box::into_raw(Box::new(RswRun { inner: output }))
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            write_status(status_of(&e));
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic during run execution");
            write_status(RswStatus::NumericalError);
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `run` must come from [`rsw_run_execute`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_free(run: *mut RswRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Accepted steps of the run.
///
/// # Safety
/// `run` must be a valid run handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_steps(run: *const RswRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.steps)
}

/// Physical time reached.
///
/// # Safety
/// `run` must be a valid run handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_final_time(run: *const RswRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.inner.final_state.t)
}

/// Grid extents; either output pointer may be null.
///
/// # Safety
/// `run` must be a valid run handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_grid(
    run: *const RswRun,
    nx_out: *mut usize,
    ny_out: *mut usize,
) -> RswStatus {
    let Some(run) = run.as_ref() else {
        return RswStatus::InvalidArgument;
    };
    if !nx_out.is_null() {
        *nx_out = run.inner.setup.grid.nx;
    }
    if !ny_out.is_null() {
        *ny_out = run.inner.setup.grid.ny;
    }
    RswStatus::Ok
}

/// Copy a final-state cell field into `out` (length must be nx * ny).
///
/// # Safety
/// `run` must be valid and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_field(
    run: *const RswRun,
    field: RswField,
    out: *mut f64,
    len: usize,
) -> RswStatus {
    let Some(run) = run.as_ref() else {
        return RswStatus::InvalidArgument;
    };
    if out.is_null() {
        return RswStatus::InvalidArgument;
    }
    let inner = &run.inner;
    let values = match field {
        RswField::H => inner.final_state.h.values().to_vec(),
        RswField::U => inner.final_state.u.values().to_vec(),
        RswField::V => inner.final_state.v.values().to_vec(),
        RswField::B => inner.setup.bathymetry.b.values().to_vec(),
        RswField::Phi => {
            potential(&inner.final_state, &inner.setup.bathymetry, inner.setup.params.g)
                .values()
                .to_vec()
        }
        RswField::Pv => {
            match potential_vorticity(
                &inner.final_state,
                inner.setup.params.omega,
                &inner.setup.grid,
                inner.setup.frozen.as_ref(),
            ) {
                Ok(pv) => pv.values().to_vec(),
                Err(e) => {
                    set_error(&e.to_string());
                    return RswStatus::ConfigError;
                }
            }
        }
    };
    if values.len() != len {
        set_error(&format!(
            "field buffer length {len} does not match cell count {}",
            values.len()
        ));
        return RswStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    RswStatus::Ok
}

/// Rows in the diagnostics ledger (initial row plus one per step).
///
/// # Safety
/// `run` must be a valid run handle.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_ledger_rows(run: *const RswRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.ledger.rows.len())
}

/// Copy one ledger column into `out` (length must equal the row count;
/// the iteration column is widened to double).
///
/// # Safety
/// `run` must be valid and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsw_run_ledger_column(
    run: *const RswRun,
    column: RswLedgerColumn,
    out: *mut f64,
    len: usize,
) -> RswStatus {
    let Some(run) = run.as_ref() else {
        return RswStatus::InvalidArgument;
    };
    if out.is_null() {
        return RswStatus::InvalidArgument;
    }
    let rows = &run.inner.ledger.rows;
    if rows.len() != len {
        set_error(&format!(
            "ledger buffer length {len} does not match row count {}",
            rows.len()
        ));
        return RswStatus::InvalidArgument;
    }
    for (k, row) in rows.iter().enumerate() {
        let v = match column {
            RswLedgerColumn::T => row.t,
            RswLedgerColumn::Dt => row.dt,
            RswLedgerColumn::Energy => row.energy,
            RswLedgerColumn::Mass => row.mass,
            RswLedgerColumn::MomX => row.momx,
            RswLedgerColumn::MomY => row.momy,
            RswLedgerColumn::MinH => row.min_h,
            RswLedgerColumn::MaxH => row.max_h,
            RswLedgerColumn::Q2 => row.q2,
            RswLedgerColumn::R2 => row.r2,
            RswLedgerColumn::Iters => row.iters as f64,
        };
        *out.add(k) = v;
    }
    RswStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn make_config(case: &str) -> *mut RswConfig {
        let name = CString::new(case).unwrap();
        unsafe { rsw_config_new(name.as_ptr()) }
    }

    #[test]
    fn run_through_the_c_surface() {
        unsafe {
            let config = make_config("constant_rotation");
            assert!(!config.is_null());
            assert_eq!(rsw_config_set_resolution(config, 48, 3), RswStatus::Ok);
            assert_eq!(rsw_config_set_t_final(config, 0.05), RswStatus::Ok);
            let name = CString::new("cfl_safety").unwrap();
            assert_eq!(
                rsw_config_set_param(config, name.as_ptr(), 0.8),
                RswStatus::Ok
            );

            let mut status = RswStatus::InvalidArgument;
            let run = rsw_run_execute(config, &mut status);
            assert_eq!(status, RswStatus::Ok);
            assert!(!run.is_null());

            let (mut nx, mut ny) = (0usize, 0usize);
            assert_eq!(rsw_run_grid(run, &mut nx, &mut ny), RswStatus::Ok);
            assert_eq!((nx, ny), (48, 3));
            assert!(rsw_run_steps(run) > 0);
            assert!((rsw_run_final_time(run) - 0.05).abs() < 1e-12);

            let mut h = vec![0.0; nx * ny];
            assert_eq!(
                rsw_run_field(run, RswField::H, h.as_mut_ptr(), h.len()),
                RswStatus::Ok
            );
            assert!(h.iter().all(|v| (*v - 1.0).abs() < 1e-12));

            let rows = rsw_run_ledger_rows(run);
            assert!(rows > 1);
            let mut energy = vec![0.0; rows];
            assert_eq!(
                rsw_run_ledger_column(
                    run,
                    RswLedgerColumn::Energy,
                    energy.as_mut_ptr(),
                    rows
                ),
                RswStatus::Ok
            );
            // Periodic run: the energy column must be non-increasing.
            for w in energy.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }

            rsw_run_free(run);
            rsw_config_free(config);
        }
    }

    #[test]
    fn unknown_case_reports_config_error() {
        unsafe {
            let config = make_config("no_such_case");
            let mut status = RswStatus::Ok;
            let run = rsw_run_execute(config, &mut status);
            assert!(run.is_null());
            assert_eq!(status, RswStatus::ConfigError);
            let msg = CStr::from_ptr(rsw_last_error_message());
            assert!(msg.to_string_lossy().contains("no_such_case"));
            rsw_config_free(config);
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        unsafe {
            assert!(rsw_config_new(std::ptr::null()).is_null());
            assert_eq!(
                rsw_config_set_resolution(std::ptr::null_mut(), 4, 4),
                RswStatus::InvalidArgument
            );
            let config = make_config("wb_test4");
            rsw_config_set_resolution(config, 64, 3);
            rsw_config_set_t_final(config, 0.05);
            let mut status = RswStatus::Ok;
            let run = rsw_run_execute(config, &mut status);
            assert!(!run.is_null());
            // Wrong buffer length.
            let mut too_small = vec![0.0; 5];
            assert_eq!(
                rsw_run_field(run, RswField::H, too_small.as_mut_ptr(), 5),
                RswStatus::InvalidArgument
            );
            rsw_run_free(run);
            rsw_config_free(config);
        }
    }

    #[test]
    fn case_catalog_is_reachable() {
        let n = rsw_case_count();
        assert!(n >= 11);
        let mut buf = vec![0 as c_char; 64];
        unsafe {
            assert_eq!(rsw_case_name(0, buf.as_mut_ptr(), buf.len()), RswStatus::Ok);
            let name = CStr::from_ptr(buf.as_ptr());
            assert_eq!(name.to_str().unwrap(), "wb_test1");
            assert_eq!(
                rsw_case_name(n, buf.as_mut_ptr(), buf.len()),
                RswStatus::InvalidArgument
            );
        }
    }
}
