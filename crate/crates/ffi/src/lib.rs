//! C interface to `aflow`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every function returns an [`AflowStatus`];
//! on failure a message is available from [`aflow_last_error`] on the same
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aflow::config::{parse_config, render, RunConfig};
use aflow::driver::{audit_metric, execute};
use aflow::flow::FlowState;
use aflow::identities::Verdict as IdVerdict;
use aflow::monitor::{
    alpha_thresholds, extension_certificate, mu_exact, AssumptionBounds, Verdict, ENTRY_EXTENSION, ENTRY_G_LP,
    ENTRY_G_SUP, ENTRY_GPRIME_LP, ENTRY_GPRIME_SUP, ENTRY_K2_LP, ENTRY_K2_SUP, ENTRY_SHI3_SUP, ENTRY_SHI_LP,
    ENTRY_SHI_SUP,
};
use aflow::snapshot::save_snapshot;
use aflow::Error;
use num_traits::ToPrimitive;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Snapshot = 5,
    /// The flow stopped before t_max; any returned state is the last accepted one.
    Breakdown = 6,
    Numeric = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Parsed run configuration.
pub struct AflowConfig {
    inner: RunConfig,
}

/// Metric state at one time, with `alpha_prime` carried for snapshots.
pub struct AflowState {
    inner: FlowState,
    alpha_prime: f64,
}

/// Threshold values in floating point; infinite bounds are `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AflowThresholds {
    pub shi_k_ge2_lp: f64,
    pub shi_k_ge2_sup: f64,
    pub shi_k_ge3_sup: f64,
    pub shi_k2_lp: f64,
    pub shi_k2_sup: f64,
    pub weighted_g_lp: f64,
    pub weighted_g_sup: f64,
    pub weighted_gprime_lp: f64,
    pub weighted_gprime_sup: f64,
    pub extension: f64,
    pub mu: f64,
    pub pi1: f64,
    pub pi2: f64,
    /// 1 when the extension certificate holds for the given `alpha_prime`.
    pub extendable: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AflowAuditSummary {
    pub entries: u32,
    pub passed: u32,
    pub failed: u32,
    pub not_applicable: u32,
    /// Largest residual among judged entries.
    pub worst_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> AflowStatus {
    match e {
        Error::Config { .. } => AflowStatus::Config,
        Error::Io(_) | Error::Csv(_) => AflowStatus::Io,
        Error::Snapshot { .. } => AflowStatus::Snapshot,
        e if e.is_breakdown() => AflowStatus::Breakdown,
        Error::InvalidInput(_) | Error::InvalidGrid(_) | Error::AxisOutOfRange(..) | Error::GridMismatch => {
            AflowStatus::InvalidArgument
        }
        _ => AflowStatus::Numeric,
    }
}

fn fail(e: Error) -> AflowStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn guard<F: FnOnce() -> AflowStatus>(f: F) -> AflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == AflowStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            AflowStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, AflowStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(AflowStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not UTF-8");
        AflowStatus::InvalidArgument
    })
}

/// Copies `text` NUL-terminated into `buf`. `*needed` (if non-null) receives
/// the size including the terminator.
unsafe fn write_str(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> AflowStatus {
    let n = text.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        set_error(format!("buffer of {len} bytes too small, need {n}"));
        return AflowStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    AflowStatus::Ok
}

/// Copies the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null; `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> AflowStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len, needed)
}

/// Parses configuration text into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_config_parse(text: *const c_char, out: *mut *mut AflowConfig) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(AflowConfig { inner: c }));
                AflowStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Renders the configuration with every default filled in.
///
/// # Safety
/// `cfg` must come from [`aflow_config_parse`]; buffer rules as in [`aflow_last_error`].
#[no_mangle]
pub unsafe extern "C" fn aflow_config_render(
    cfg: *const AflowConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> AflowStatus {
    guard(|| match cfg.as_ref() {
        None => {
            set_error("null config");
            AflowStatus::NullPointer
        }
        Some(c) => write_str(&render(&c.inner), buf, len, needed),
    })
}

/// Sets the output directory used when `aflow_run` writes files.
///
/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aflow_config_set_output_dir(cfg: *mut AflowConfig, dir: *const c_char) -> AflowStatus {
    guard(|| {
        let Some(c) = cfg.as_mut() else {
            set_error("null config");
            return AflowStatus::NullPointer;
        };
        match str_arg(dir) {
            Ok(d) => {
                c.inner.output.directory = PathBuf::from(d);
                AflowStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`aflow_config_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn aflow_config_free(cfg: *mut AflowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured flow. `write_output` enables the output directory.
/// On `AFLOW_STATUS_BREAKDOWN` the last accepted state is still returned.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_run(cfg: *const AflowConfig, write_output: bool, out: *mut *mut AflowState) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let Some(c) = cfg.as_ref() else {
            set_error("null config");
            return AflowStatus::NullPointer;
        };
        match execute(&c.inner, write_output) {
            Ok(o) => {
                let alpha_prime = c.inner.flow.alpha_prime;
                *out = Box::into_raw(Box::new(AflowState {
                    inner: o.state,
                    alpha_prime,
                }));
                match o.breakdown {
                    Some(e) => fail(e),
                    None => AflowStatus::Ok,
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_load(path: *const c_char, out: *mut *mut AflowState) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let path = match str_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match aflow::snapshot::read_snapshot(&path) {
            Ok((h, s)) => {
                *out = Box::into_raw(Box::new(AflowState {
                    inner: s,
                    alpha_prime: h.alpha_prime,
                }));
                AflowStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `state` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_save(state: *const AflowState, path: *const c_char) -> AflowStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            set_error("null state");
            return AflowStatus::NullPointer;
        };
        let path = match str_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(st) => return st,
        };
        match save_snapshot(&s.inner, s.alpha_prime, &path) {
            Ok(()) => AflowStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `state` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_free(state: *mut AflowState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `state` must be a live handle and `t` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_time(state: *const AflowState, t: *mut f64) -> AflowStatus {
    guard(|| match (state.as_ref(), t.is_null()) {
        (Some(s), false) => {
            *t = s.inner.t;
            AflowStatus::Ok
        }
        _ => {
            set_error("null argument");
            AflowStatus::NullPointer
        }
    })
}

/// Grid size, active-axis bitmask and number of lattice points.
///
/// # Safety
/// `state` must be a live handle; output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_grid(
    state: *const AflowState,
    n: *mut u32,
    mask: *mut u8,
    points: *mut usize,
) -> AflowStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            set_error("null state");
            return AflowStatus::NullPointer;
        };
        if n.is_null() || mask.is_null() || points.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        let grid = s.inner.g.grid();
        *n = grid.n() as u32;
        *mask = grid.active_mask();
        *points = grid.num_points();
        AflowStatus::Ok
    })
}

/// Copies `g_{p̄q}` as interleaved (re, im) doubles, point-major, then p̄,
/// then q: `18 * points` values.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn aflow_state_metric(state: *const AflowState, buf: *mut f64, len: usize) -> AflowStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            set_error("null state");
            return AflowStatus::NullPointer;
        };
        let g = &s.inner.g;
        let npts = g.grid().num_points();
        if buf.is_null() || len < 18 * npts {
            set_error(format!("metric buffer needs {} doubles", 18 * npts));
            return AflowStatus::BufferTooSmall;
        }
        let out = std::slice::from_raw_parts_mut(buf, 18 * npts);
        let data = g.data();
        for pt in 0..npts {
            for pq in 0..9 {
                let z = data[pq * npts + pt];
                out[(pt * 9 + pq) * 2] = z.re;
                out[(pt * 9 + pq) * 2 + 1] = z.im;
            }
        }
        AflowStatus::Ok
    })
}

/// Evaluates all α′ thresholds for `(a0, B, C0, p)`; `alpha_prime` only
/// affects `extendable`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_thresholds(
    a0: f64,
    b: f64,
    c0: f64,
    p: f64,
    alpha_prime: f64,
    out: *mut AflowThresholds,
) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        let ok = |x: f64| x.is_finite();
        if !(ok(a0) && a0 > 0.0 && ok(b) && b > 0.0 && ok(c0) && c0 >= 0.0 && ok(p) && p >= 1.0)
            || !(alpha_prime >= 0.0 && alpha_prime.is_finite())
        {
            set_error("need a0 > 0, B > 0, C0 >= 0, p >= 1 and alpha_prime >= 0");
            return AflowStatus::InvalidArgument;
        }
        let bounds = AssumptionBounds {
            b,
            c0,
            cq: Vec::new(),
            a0,
            measured_at: 0.0,
        };
        let rep = alpha_thresholds(&bounds, p, alpha_prime);
        let v = |name: &str| rep.entry(name).map_or(f64::NAN, |e| e.bound_f64());
        *out = AflowThresholds {
            shi_k_ge2_lp: v(ENTRY_SHI_LP),
            shi_k_ge2_sup: v(ENTRY_SHI_SUP),
            shi_k_ge3_sup: v(ENTRY_SHI3_SUP),
            shi_k2_lp: v(ENTRY_K2_LP),
            shi_k2_sup: v(ENTRY_K2_SUP),
            weighted_g_lp: v(ENTRY_G_LP),
            weighted_g_sup: v(ENTRY_G_SUP),
            weighted_gprime_lp: v(ENTRY_GPRIME_LP),
            weighted_gprime_sup: v(ENTRY_GPRIME_SUP),
            extension: v(ENTRY_EXTENSION),
            mu: mu_exact(a0, b, p).to_f64().unwrap_or(f64::NAN),
            pi1: rep.pi1.to_f64().unwrap_or(f64::NAN),
            pi2: rep.pi2.to_f64().unwrap_or(f64::NAN),
            extendable: (extension_certificate(&bounds, alpha_prime).verdict == Verdict::Extendable) as i32,
        };
        AflowStatus::Ok
    })
}

/// Exact rational form (e.g. `1/14`) of the threshold entry `name`.
///
/// # Safety
/// `name` NUL-terminated; buffer rules as in [`aflow_last_error`].
#[no_mangle]
pub unsafe extern "C" fn aflow_threshold_exact(
    a0: f64,
    b: f64,
    c0: f64,
    p: f64,
    name: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> AflowStatus {
    guard(|| {
        let name = match str_arg(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        if !(a0 > 0.0 && b > 0.0 && c0 >= 0.0 && p >= 1.0) || ![a0, b, c0, p].iter().all(|x| x.is_finite()) {
            set_error("need a0 > 0, B > 0, C0 >= 0 and p >= 1");
            return AflowStatus::InvalidArgument;
        }
        let bounds = AssumptionBounds {
            b,
            c0,
            cq: Vec::new(),
            a0,
            measured_at: 0.0,
        };
        let text = if name == "mu" {
            mu_exact(a0, b, p).to_string()
        } else {
            match alpha_thresholds(&bounds, p, 0.0).entry(name) {
                Some(e) => e.bound_string(),
                None => {
                    set_error(format!("unknown threshold '{name}'"));
                    return AflowStatus::InvalidArgument;
                }
            }
        };
        write_str(&text, buf, len, needed)
    })
}

/// Runs the identity audit on the state's metric.
///
/// # Safety
/// `state` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_audit(state: *const AflowState, out: *mut AflowAuditSummary) -> AflowStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            set_error("null state");
            return AflowStatus::NullPointer;
        };
        if out.is_null() {
            set_error("null output pointer");
            return AflowStatus::NullPointer;
        }
        match audit_metric(&s.inner.g, "ffi") {
            Ok(r) => {
                let count = |v: IdVerdict| r.entries.iter().filter(|e| e.verdict == v).count() as u32;
                *out = AflowAuditSummary {
                    entries: r.entries.len() as u32,
                    passed: count(IdVerdict::Pass),
                    failed: count(IdVerdict::Fail),
                    not_applicable: count(IdVerdict::NotApplicable),
                    worst_residual: r
                        .entries
                        .iter()
                        .filter(|e| matches!(e.verdict, IdVerdict::Pass | IdVerdict::Fail))
                        .map(|e| e.residual)
                        .fold(0.0, f64::max),
                };
                AflowStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
