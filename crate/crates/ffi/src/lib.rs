//! C ABI over the cylvm solver.
//!
//! A session owns one parsed run configuration and, after [`cylvm_session_solve`], the converged
//! state. Every call returns a [`CylvmStatus`]; on failure the message is kept per thread and read
//! with [`cylvm_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cylvm::bounds::EnvelopePair;
use cylvm::config::RunConfig;
use cylvm::run::{confine_report, profile_row, solve, Solved};
use cylvm::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylvmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration or violated precondition.
    Config = 3,
    /// Iteration limit, non-finite integrand or failed integration.
    Numerical = 4,
    /// The call needs a solved session.
    NotSolved = 5,
    /// Column index or buffer length does not fit.
    OutOfRange = 6,
    Io = 7,
    Panic = 8,
}

/// Columns of the profile table.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylvmColumn {
    R = 0,
    Phi = 1,
    APhi = 2,
    A3 = 3,
    Rho = 4,
    JPhi = 5,
    J3 = 6,
    Er = 7,
    BPhi = 8,
    B3 = 9,
    Xi = 10,
    Zeta = 11,
}

/// Opaque session handle.
pub struct CylvmSession {
    config: RunConfig,
    solved: Option<Solved>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    // interior NULs would truncate the message on the C side
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: CylvmStatus, msg: impl Into<String>) -> CylvmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> CylvmStatus {
    let status = match &e {
        Error::Io(_) => CylvmStatus::Io,
        e if e.is_config() => CylvmStatus::Config,
        _ => CylvmStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> CylvmStatus) -> CylvmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CylvmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn utf8<'a>(s: *const c_char) -> Result<&'a str, CylvmStatus> {
    if s.is_null() {
        return Err(fail(CylvmStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CylvmStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn session<'a>(s: *const CylvmSession) -> Result<&'a CylvmSession, CylvmStatus> {
    s.as_ref()
        .ok_or_else(|| fail(CylvmStatus::NullPointer, "null session"))
}

unsafe fn solved<'a>(s: *const CylvmSession) -> Result<&'a Solved, CylvmStatus> {
    session(s)?
        .solved
        .as_ref()
        .ok_or_else(|| fail(CylvmStatus::NotSolved, "session has not been solved"))
}

fn status_of(r: Result<(), CylvmStatus>) -> CylvmStatus {
    r.err().unwrap_or(CylvmStatus::Ok)
}

/// Parse and validate a TOML run configuration. `base_dir` resolves tabulated-profile paths and
/// may be null for the current directory. On success `*out` owns a session that must be released
/// with [`cylvm_session_free`].
///
/// # Safety
/// `toml` must be a NUL-terminated string, `base_dir` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_new(
    toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut CylvmSession,
) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            if out.is_null() {
                return Err(fail(CylvmStatus::NullPointer, "null output pointer"));
            }
            *out = ptr::null_mut();
            let text = utf8(toml)?;
            let dir = if base_dir.is_null() {
                PathBuf::from(".")
            } else {
                PathBuf::from(utf8(base_dir)?)
            };
            let config = RunConfig::from_toml(text, dir).map_err(from_error)?;
            config.validate().map_err(from_error)?;
            *out = Box::into_raw(Box::new(CylvmSession {
                config,
                solved: None,
            }));
            Ok(())
        })())
    })
}

/// Release a session. Null is ignored.
///
/// # Safety
/// `s` must come from [`cylvm_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_free(s: *mut CylvmSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Run the fixed-point solve and reconstruct the fields. Replaces any earlier result.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_solve(s: *mut CylvmSession) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let s = s
                .as_mut()
                .ok_or_else(|| fail(CylvmStatus::NullPointer, "null session"))?;
            s.solved = None;
            s.solved = Some(solve(&s.config).map_err(from_error)?);
            Ok(())
        })())
    })
}

/// Number of radial nodes of the configured grid; 0 for a null session.
///
/// # Safety
/// `s` must be null or a live session.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_grid_len(s: *const CylvmSession) -> usize {
    s.as_ref().map_or(0, |s| s.config.domain.grid)
}

/// Copy one profile column (a [`CylvmColumn`] value) into `buf`, which must hold at least the grid length.
///
/// # Safety
/// `s` must be a live session and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_profile(
    s: *const CylvmSession,
    column: u32,
    buf: *mut f64,
    len: usize,
) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let sol = solved(s)?;
            let n = sol.grid.len();
            if buf.is_null() {
                return Err(fail(CylvmStatus::NullPointer, "null buffer"));
            }
            if len < n {
                return Err(fail(
                    CylvmStatus::OutOfRange,
                    format!("buffer holds {len} values, grid has {n}"),
                ));
            }
            let col = column as usize;
            if col > CylvmColumn::Zeta as usize {
                return Err(fail(
                    CylvmStatus::OutOfRange,
                    format!("no profile column {col}"),
                ));
            }
            let out = std::slice::from_raw_parts_mut(buf, n);
            for (i, v) in out.iter_mut().enumerate() {
                *v = profile_row(sol, i)[col];
            }
            Ok(())
        })())
    })
}

/// Picard sweeps taken by the last solve.
///
/// # Safety
/// `s` must be a live session and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_iterations(
    s: *const CylvmSession,
    out: *mut usize,
) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let sol = solved(s)?;
            *out.as_mut()
                .ok_or_else(|| fail(CylvmStatus::NullPointer, "null output pointer"))? =
                sol.iterations;
            Ok(())
        })())
    })
}

/// Certified sup-norm residual of the last solve.
///
/// # Safety
/// `s` must be a live session and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_residual(
    s: *const CylvmSession,
    out: *mut f64,
) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let sol = solved(s)?;
            *out.as_mut()
                .ok_or_else(|| fail(CylvmStatus::NullPointer, "null output pointer"))? =
                sol.residual;
            Ok(())
        })())
    })
}

/// Envelope confinement verdict for the configured pinch mode. Solves internally, so the session
/// need not be solved first. `*pass` is 1 when the inequality holds and the outer sources vanish.
///
/// # Safety
/// `s` must be a live session, `margin` and `pass` writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_session_confinement(
    s: *const CylvmSession,
    margin: *mut f64,
    pass: *mut i32,
) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let s = session(s)?;
            if margin.is_null() || pass.is_null() {
                return Err(fail(CylvmStatus::NullPointer, "null output pointer"));
            }
            let rep = confine_report(&s.config).map_err(from_error)?;
            *margin = rep.verdict.worst_margin;
            *pass = i32::from(rep.pass);
            Ok(())
        })())
    })
}

unsafe fn envelope(c1: f64, c2: f64, r: f64, out: *mut f64, zeta: bool) -> CylvmStatus {
    guarded(|| {
        status_of((|| {
            let out = out
                .as_mut()
                .ok_or_else(|| fail(CylvmStatus::NullPointer, "null output pointer"))?;
            if !(r >= 0.0 && r.is_finite()) {
                return Err(fail(
                    CylvmStatus::OutOfRange,
                    format!("radius {r} must be finite and nonnegative"),
                ));
            }
            let p = EnvelopePair::new(c1, c2).map_err(from_error)?;
            *out = if zeta { p.zeta(r) } else { p.xi(r) };
            Ok(())
        })())
    })
}

/// Envelope `ξ(r)` for the constants `c₁, c₂ ≥ 0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_envelope_xi(c1: f64, c2: f64, r: f64, out: *mut f64) -> CylvmStatus {
    envelope(c1, c2, r, out, false)
}

/// Envelope `ζ(r)` for the constants `c₁, c₂ ≥ 0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cylvm_envelope_zeta(
    c1: f64,
    c2: f64,
    r: f64,
    out: *mut f64,
) -> CylvmStatus {
    envelope(c1, c2, r, out, true)
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call on
/// the same thread.
#[no_mangle]
pub extern "C" fn cylvm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
