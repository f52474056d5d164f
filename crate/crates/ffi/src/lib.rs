//! C interface to the curvpath engine.
//!
//! Every function returns a [`CpStatus`]; on failure the message is available
//! from [`cp_last_error_message`] on the same thread. Handles are opaque and
//! released with their `_free` function. Strings returned by the library are
//! released with [`cp_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, c_int, size_t};

use curvpath::cli::{self, Command, OutputFormat, RunConfig, RunReport};
use curvpath::geometry::{ManifoldModel, Point, Preset};
use curvpath::linalg::Vector;
use curvpath::Error;

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Geometry = 5,
    Numerical = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpCommand {
    Check = 0,
    Estimate = 1,
    Sweep = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpFormat {
    Csv = 0,
    Json = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpVerdict {
    Holds = 0,
    Violated = 1,
    Inconclusive = 2,
    /// Estimates and series rows.
    None = 3,
}

/// Numeric part of a report row; empty cells are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpRow {
    pub horizon: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub margin: f64,
    pub verdict: CpVerdict,
}

/// Parsed run configuration.
pub struct CpConfig {
    inner: RunConfig,
}

/// Result of a run.
pub struct CpReport {
    inner: RunReport,
}

/// A manifold preset.
pub struct CpModel {
    inner: ManifoldModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CpStatus {
    match e {
        Error::Config { .. } => CpStatus::Config,
        Error::Io(_) => CpStatus::Io,
        Error::OutOfChart { .. } | Error::SingularMetric | Error::NoCoveringChart | Error::InvalidBounds { .. } | Error::NegativeMass { .. } => CpStatus::Geometry,
        Error::StepRejected { .. } | Error::AllZeroExits { .. } | Error::NonDifferentiableRadius { .. } | Error::InconclusivePower { .. } => CpStatus::Numerical,
        _ => CpStatus::InvalidArgument,
    }
}

fn fail(status: CpStatus, msg: &str) -> CpStatus {
    set_error(msg);
    status
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CpStatus, String)>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CpStatus::Ok
        }
        Ok(Err((s, m))) => fail(s, &m),
        Err(_) => fail(CpStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: curvpath::Result<T>) -> Result<T, (CpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CpStatus, String)> {
    if p.is_null() {
        return Err((CpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CpStatus, String)> {
    p.as_ref().ok_or_else(|| (CpStatus::NullPointer, format!("{what} is null")))
}

fn check_out<T>(p: *mut T) -> Result<(), (CpStatus, String)> {
    if p.is_null() {
        Err((CpStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// -------------------------------------------------------------------------
// configuration

/// Parse configuration text (`key = value` lines or a JSON report).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_config_parse(text: *const c_char, out: *mut *mut CpConfig) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let cfg = lib(RunConfig::parse_any(str_arg(text, "text")?))?;
        *out = Box::into_raw(Box::new(CpConfig { inner: cfg }));
        Ok(())
    })
}

/// Set one key, overriding any earlier value.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cp_config_set(cfg: *mut CpConfig, key: *const c_char, value: *const c_char) -> CpStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| (CpStatus::NullPointer, "config is null".to_string()))?;
        let (k, v) = (str_arg(key, "key")?, str_arg(value, "value")?);
        cfg.inner.lines.remove(k);
        lib(cfg.inner.set(0, k, v))
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_config_free(cfg: *mut CpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// -------------------------------------------------------------------------
// runs and reports

/// Resolve and run a configuration.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_run(cfg: *const CpConfig, command: CpCommand, out: *mut *mut CpReport) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let cfg = ref_arg(cfg, "config")?;
        let command = match command {
            CpCommand::Check => Command::Check,
            CpCommand::Estimate => Command::Estimate,
            CpCommand::Sweep => Command::Sweep,
        };
        let report = lib(cli::run_config(cfg.inner.clone(), command))?;
        *out = Box::into_raw(Box::new(CpReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_report_free(report: *mut CpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Process exit code of the report: 0 holds, 2 violated, 3 inconclusive.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_report_exit_code(report: *const CpReport) -> c_int {
    report.as_ref().map(|r| r.inner.exit_code).unwrap_or(1)
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_report_row_count(report: *const CpReport, out: *mut size_t) -> CpStatus {
    guard(|| {
        check_out(out)?;
        *out = ref_arg(report, "report")?.inner.rows.len();
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_report_row(report: *const CpReport, index: size_t, out: *mut CpRow) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let rows = &ref_arg(report, "report")?.inner.rows;
        let r = rows.get(index).ok_or_else(|| (CpStatus::OutOfRange, format!("row {index} of {}", rows.len())))?;
        let nan = |x: Option<f64>| x.unwrap_or(f64::NAN);
        *out = CpRow {
            horizon: r.horizon,
            lhs: nan(r.lhs),
            lhs_stderr: nan(r.lhs_stderr),
            rhs: nan(r.rhs),
            rhs_stderr: nan(r.rhs_stderr),
            margin: nan(r.margin),
            verdict: match r.verdict.as_str() {
                "holds" => CpVerdict::Holds,
                "violated" => CpVerdict::Violated,
                "inconclusive" => CpVerdict::Inconclusive,
                _ => CpVerdict::None,
            },
        };
        Ok(())
    })
}

/// Render the report; free the result with [`cp_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_report_render(report: *const CpReport, format: CpFormat, out: *mut *mut c_char) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let format = match format {
            CpFormat::Csv => OutputFormat::Csv,
            CpFormat::Json => OutputFormat::Json,
        };
        let text = lib(cli::render(&ref_arg(report, "report")?.inner, format))?;
        *out = CString::new(text).map_err(|_| (CpStatus::Io, "report contains NUL".to_string()))?.into_raw();
        Ok(())
    })
}

// -------------------------------------------------------------------------
// models

/// Build a preset. `param` is the radius for `sphere` / `hyperbolic`, the
/// drift rate for `ou`, and ignored for `euclidean`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_model_new(name: *const c_char, dim: size_t, param: f64, out: *mut *mut CpModel) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let preset = match str_arg(name, "name")? {
            "euclidean" => Preset::Euclidean,
            "ou" => Preset::OrnsteinUhlenbeck { lambda: param },
            "sphere" => Preset::Sphere { radius: param },
            "hyperbolic" => Preset::Hyperbolic { radius: param },
            other => return Err((CpStatus::InvalidArgument, format!("unknown preset `{other}`"))),
        };
        let model = lib(ManifoldModel::build(preset, dim))?;
        *out = Box::into_raw(Box::new(CpModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_model_free(model: *mut CpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Constant `c` with `Ric_Z = c g`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_model_einstein_constant(model: *const CpModel, out: *mut f64) -> CpStatus {
    guard(|| {
        check_out(out)?;
        *out = ref_arg(model, "model")?.inner.einstein_constant();
        Ok(())
    })
}

/// Sampled infimum of `Ric_Z` over the ball of `radius` around the chart-0
/// point `x` (`dim` coordinates).
///
/// # Safety
/// `model` must be a live handle, `x` point to `dim` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_model_curvature_inf(model: *const CpModel, x: *const f64, dim: size_t, radius: f64, samples: size_t, seed: u64, out: *mut f64) -> CpStatus {
    guard(|| {
        check_out(out)?;
        let model = &ref_arg(model, "model")?.inner;
        if x.is_null() {
            return Err((CpStatus::NullPointer, "x is null".into()));
        }
        if dim != model.dim {
            return Err((CpStatus::InvalidArgument, format!("x has {dim} coordinates, model dimension is {}", model.dim)));
        }
        let p = Point::new(0, Vector::from_slice(std::slice::from_raw_parts(x, dim)));
        lib(model.check_in_chart(&p))?;
        *out = lib(model.local_curvature_inf(&p, radius, samples, seed))?.0;
        Ok(())
    })
}
