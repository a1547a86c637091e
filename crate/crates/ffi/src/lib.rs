//! C ABI over `sps_ems`.
//!
//! Every function returns an [`SpsStatus`]. On failure a message is kept
//! per thread and can be read with [`sps_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sps_ems::config::{Config, ScenarioChoice};
use sps_ems::harness::{self, SimLog};
use sps_ems::mpc::SolveEvent;
use sps_ems::nalgebra::{DMatrix, DVector};
use sps_ems::plant::{self, Fidelity};
use sps_ems::qp::{self, QpProblem, QpStatus, ToleranceSet};
use sps_ems::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    DomainError = 4,
    DimensionError = 5,
    RunAborted = 6,
    IoError = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Plant fidelity; `Default` keeps the mode written in the config.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsMode {
    Default = 0,
    Device = 1,
    Dispatch = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpsSolveEvent {
    #[default]
    Optimal = 0,
    Relaxed = 1,
    MaxIterationsRelaxed = 2,
    Failed = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsQpStatus {
    Optimal = 0,
    MaxIterations = 1,
    InfeasibleDetected = 2,
}

/// One sampled row of a simulation log, SI units.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SpsRow {
    pub t: f64,
    pub p_load: f64,
    pub cmd_pg: f64,
    pub cmd_pb: f64,
    pub p_g: f64,
    pub p_b: f64,
    pub v_c: f64,
    pub soc: f64,
    /// Ampere-seconds.
    pub ah_throughput: f64,
    /// Ampere-hours.
    pub q_loss: f64,
    pub loss_pct: f64,
    pub delta_q_pct: f64,
    pub slack: f64,
    pub iterations: usize,
    pub status: SpsSolveEvent,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SpsSummary {
    pub final_q_loss: f64,
    pub final_loss_pct: f64,
    pub final_delta_q_pct: f64,
    pub ah_throughput: f64,
    pub max_soc_deviation: f64,
    pub max_pg_step: f64,
    pub max_abs_pb: f64,
    pub mean_iterations: f64,
    pub ramp_saturated_pg_steps: usize,
    pub relaxed_steps: usize,
    pub failed_steps: usize,
    pub max_iterations: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpsQpInfo {
    pub status: SpsQpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
}

/// Opaque configuration handle.
pub struct SpsConfig {
    inner: Config,
}

/// Opaque simulation log handle.
pub struct SpsSimLog {
    inner: SimLog,
}

impl From<SolveEvent> for SpsSolveEvent {
    fn from(e: SolveEvent) -> Self {
        match e {
            SolveEvent::Optimal => SpsSolveEvent::Optimal,
            SolveEvent::Relaxed => SpsSolveEvent::Relaxed,
            SolveEvent::MaxIterationsRelaxed => SpsSolveEvent::MaxIterationsRelaxed,
            SolveEvent::Failed => SpsSolveEvent::Failed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SpsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } => SpsStatus::ConfigError,
            Error::Domain(_) | Error::Divergence { .. } => SpsStatus::DomainError,
            Error::Dimension(_) => SpsStatus::DimensionError,
            Error::RunAborted { .. } => SpsStatus::RunAborted,
            Error::Io(_) | Error::Export(_) => SpsStatus::IoError,
            Error::Json(_) => SpsStatus::InvalidArgument,
            Error::Comparison(_) => SpsStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SpsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SpsStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SpsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a handle holding the shipped default configuration.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sps_config_default(out: *mut *mut SpsConfig) -> SpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let h = Box::new(SpsConfig {
            inner: Config::shipped_default(),
        });
        write_out(out, Box::into_raw(h), "out")
    })
}

/// Parses a JSON configuration document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_config_from_json(
    json: *const c_char,
    out: *mut *mut SpsConfig,
) -> SpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::from_json(text(json, "json")?)?;
        write_out(
            out,
            Box::into_raw(Box::new(SpsConfig { inner: cfg })),
            "out",
        )
    })
}

/// Serializes the resolved configuration. Release the string with
/// [`sps_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_config_to_json(
    cfg: *const SpsConfig,
    out: *mut *mut c_char,
) -> SpsStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CString::new(cfg.inner.to_json_pretty()).expect("JSON has no NUL bytes");
        write_out(out, s.into_raw(), "out")
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sps_config_free(cfg: *mut SpsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs one scenario (`"scenario-1"`, `"scenario-2"`, `"scenario-3"` or
/// `"custom"`). When the run aborts, the partial log is still returned in
/// `out` together with `SPS_STATUS_RUN_ABORTED`.
///
/// # Safety
/// `cfg` must be a live handle, `scenario` a NUL-terminated string and
/// `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_run(
    cfg: *const SpsConfig,
    scenario: *const c_char,
    mode: SpsMode,
    out: *mut *mut SpsSimLog,
) -> SpsStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let choice: ScenarioChoice = text(scenario, "scenario")?
            .parse()
            .map_err(|e: Error| Fail(SpsStatus::InvalidArgument, e.to_string()))?;
        let mode = match mode {
            SpsMode::Default => None,
            SpsMode::Device => Some(Fidelity::Device),
            SpsMode::Dispatch => Some(Fidelity::Dispatch),
        };
        let spec = cfg.inner.spec(choice, mode)?;
        match harness::run(&spec) {
            Ok(log) => {
                out.write(Box::into_raw(Box::new(SpsSimLog { inner: log })));
                Ok(())
            }
            Err(Error::RunAborted { t, reason, log }) => {
                out.write(Box::into_raw(Box::new(SpsSimLog { inner: *log })));
                Err(Fail(
                    SpsStatus::RunAborted,
                    format!("run aborted at t = {t} s: {reason}"),
                ))
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// # Safety
/// `log` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_free(log: *mut SpsSimLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// # Safety
/// `log` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_row_count(log: *const SpsSimLog, out: *mut usize) -> SpsStatus {
    guard(|| write_out(out, borrow(log, "log")?.inner.rows.len(), "out"))
}

/// Number of controller solves recorded.
///
/// # Safety
/// `log` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_solve_count(
    log: *const SpsSimLog,
    out: *mut usize,
) -> SpsStatus {
    guard(|| write_out(out, borrow(log, "log")?.inner.solves.len(), "out"))
}

/// # Safety
/// `log` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_row(
    log: *const SpsSimLog,
    index: usize,
    out: *mut SpsRow,
) -> SpsStatus {
    guard(|| {
        let rows = &borrow(log, "log")?.inner.rows;
        let r = rows.get(index).ok_or_else(|| {
            Fail(
                SpsStatus::OutOfRange,
                format!("row {index} of {}", rows.len()),
            )
        })?;
        let row = SpsRow {
            t: r.t,
            p_load: r.p_load,
            cmd_pg: r.cmd_pg,
            cmd_pb: r.cmd_pb,
            p_g: r.p_g,
            p_b: r.p_b,
            v_c: r.v_c,
            soc: r.soc,
            ah_throughput: r.ah_throughput,
            q_loss: r.q_loss,
            loss_pct: r.loss_pct,
            delta_q_pct: r.delta_q_pct,
            slack: r.slack,
            iterations: r.iterations,
            status: r.status.into(),
        };
        write_out(out, row, "out")
    })
}

/// # Safety
/// `log` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_summary(
    log: *const SpsSimLog,
    out: *mut SpsSummary,
) -> SpsStatus {
    guard(|| {
        let s = harness::summarize(&borrow(log, "log")?.inner)?;
        let summary = SpsSummary {
            final_q_loss: s.final_q_loss,
            final_loss_pct: s.final_loss_pct,
            final_delta_q_pct: s.final_delta_q_pct,
            ah_throughput: s.ah_throughput,
            max_soc_deviation: s.max_soc_deviation,
            max_pg_step: s.max_pg_step,
            max_abs_pb: s.max_abs_pb,
            mean_iterations: s.mean_iterations,
            ramp_saturated_pg_steps: s.ramp_saturated_pg_steps,
            relaxed_steps: s.relaxed_steps,
            failed_steps: s.failed_steps,
            max_iterations: s.max_iterations,
        };
        write_out(out, summary, "out")
    })
}

/// Writes the row log as CSV.
///
/// # Safety
/// `log` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sps_simlog_write_csv(
    log: *const SpsSimLog,
    path: *const c_char,
) -> SpsStatus {
    guard(|| {
        let log = borrow(log, "log")?;
        let path = text(path, "path")?;
        let file = std::fs::File::create(Path::new(path))
            .map_err(|e| Fail(SpsStatus::IoError, format!("{path}: {e}")))?;
        log.inner
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Fail(SpsStatus::IoError, format!("{path}: {e}")))
    })
}

/// One step of the charge balance: `soc - p_b ts / (v_c capacity_as)`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sps_soc_update(
    soc: f64,
    p_b: f64,
    v_c: f64,
    ts: f64,
    capacity_as: f64,
    out: *mut f64,
) -> SpsStatus {
    guard(|| {
        write_out(
            out,
            plant::soc_update(soc, p_b, v_c, ts, capacity_as)?,
            "out",
        )
    })
}

/// Solves `min ½xᵀPx + cᵀx  s.t.  lo ≤ Ax ≤ up` with default tolerances.
/// Matrices are dense and row-major; infinite bounds are allowed. `y_out`
/// and `info` may be NULL.
///
/// # Safety
/// `p` must hold `n*n` values, `c` and `x_out` `n`, `a` `m*n`, and `lo`,
/// `up`, `y_out` `m` each. With `m == 0` the constraint pointers may be
/// NULL.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sps_qp_solve(
    n: usize,
    m: usize,
    p: *const f64,
    c: *const f64,
    a: *const f64,
    lo: *const f64,
    up: *const f64,
    x_out: *mut f64,
    y_out: *mut f64,
    info: *mut SpsQpInfo,
) -> SpsStatus {
    guard(|| {
        if n == 0 {
            return Err(Fail(SpsStatus::InvalidArgument, "n must be >= 1".into()));
        }
        if x_out.is_null() {
            return Err(null("x_out"));
        }
        let problem = QpProblem::new(
            DMatrix::from_row_slice(n, n, slice(p, n * n, "p")?),
            DVector::from_column_slice(slice(c, n, "c")?),
            DMatrix::from_row_slice(m, n, slice(a, m * n, "a")?),
            DVector::from_column_slice(slice(lo, m, "lo")?),
            DVector::from_column_slice(slice(up, m, "up")?),
        )?;
        let sol = qp::solve(&problem, None, &ToleranceSet::default());
        std::slice::from_raw_parts_mut(x_out, n).copy_from_slice(sol.x.as_slice());
        if !y_out.is_null() && m > 0 {
            std::slice::from_raw_parts_mut(y_out, m).copy_from_slice(sol.duals.as_slice());
        }
        if !info.is_null() {
            info.write(SpsQpInfo {
                status: match sol.status {
                    QpStatus::Optimal => SpsQpStatus::Optimal,
                    QpStatus::MaxIterations => SpsQpStatus::MaxIterations,
                    QpStatus::InfeasibleDetected => SpsQpStatus::InfeasibleDetected,
                },
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
                objective: sol.objective,
                polished: sol.polished,
            });
        }
        Ok(())
    })
}
