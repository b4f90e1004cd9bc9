//! C ABI over `stoch-les`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_run`
//! style functions and released with the matching `*_free`. Every fallible
//! call returns a [`StochLesStatus`]; on failure the message is available
//! from [`stoch_les_last_error_message`] on the same thread. Panics never
//! unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stoch_les::error::Error;
use stoch_les::fbm::{generate, uniform_times, FbmPath, GeneratorKind, HurstParam};
use stoch_les::filter::{filter_field, FilterSpec};
use stoch_les::grid::{l2_spacetime_error, FieldSeries, Grid1D};
use stoch_les::harness::{run_pipeline, ComparisonReport, ExperimentConfig};
use stoch_les::io;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochLesStatus {
    Ok = 0,
    InvalidArgument = 1,
    Configuration = 2,
    Numerical = 3,
    MissingArtifact = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochLesGenerator {
    Exact = 0,
    Wm = 1,
}

/// Opaque fBM sample path.
pub struct StochLesFbmPath(FbmPath);

/// Opaque space-time field on a uniform grid over [-1, 1].
pub struct StochLesField(FieldSeries);

/// Opaque experiment configuration.
pub struct StochLesConfig(ExperimentConfig);

/// Opaque comparison report of a finished pipeline run.
pub struct StochLesReport(ComparisonReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> StochLesStatus {
    match err.root() {
        Error::InvalidInput(_) | Error::UnderResolvedFilter { .. } | Error::Parse { .. } => {
            StochLesStatus::InvalidArgument
        }
        Error::Configuration(_) => StochLesStatus::Configuration,
        Error::MissingArtifact(_) => StochLesStatus::MissingArtifact,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StochLesStatus::MissingArtifact,
        Error::Io { .. } => StochLesStatus::Io,
        _ => StochLesStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> StochLesStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StochLesStatus::Ok,
        Ok(Err(e)) => {
            let status = status_of(&e);
            set_last_error(e.to_string());
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            StochLesStatus::Panic
        }
    }
}

fn null_error(what: &str) -> Error {
    Error::InvalidInput(format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null_error(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidInput(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Error> {
    p.as_ref().ok_or_else(|| null_error(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Error> {
    p.as_mut().ok_or_else(|| null_error(what))
}

/// Copy `src` into a caller buffer of `len` elements; `len` must match.
unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Error> {
    if buf.is_null() {
        return Err(null_error("output buffer"));
    }
    if len != src.len() {
        return Err(Error::InvalidInput(format!(
            "buffer holds {len} values, need {}",
            src.len()
        )));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stoch_les_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stoch_les_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Sample `n_samples` points of an fBM path on `[0, horizon]`, `t = 0` included.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_fbm_generate(
    hurst: f64,
    generator: StochLesGenerator,
    n_samples: usize,
    horizon: f64,
    seed: u64,
    out: *mut *mut StochLesFbmPath,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if n_samples < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        let kind = match generator {
            StochLesGenerator::Exact => GeneratorKind::Exact,
            StochLesGenerator::Wm => GeneratorKind::Wm,
        };
        let path = generate(
            &uniform_times(n_samples - 1, horizon),
            HurstParam::new(hurst)?,
            kind,
            seed,
        )?;
        *out = Box::into_raw(Box::new(StochLesFbmPath(path)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_fbm_len(path: *const StochLesFbmPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `path` must be a live handle; `times` and `values` must hold `len` doubles
/// each (either may be null to skip it).
#[no_mangle]
pub unsafe extern "C" fn stoch_les_fbm_copy(
    path: *const StochLesFbmPath,
    times: *mut f64,
    values: *mut f64,
    len: usize,
) -> StochLesStatus {
    guard(|| {
        let p = handle(path, "path")?;
        if !times.is_null() {
            copy_out(&p.0.times, times, len)?;
        }
        if !values.is_null() {
            copy_out(&p.0.values, values, len)?;
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_fbm_free(path: *mut StochLesFbmPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Field from row-major data (`n_times` rows of `n_points` values).
///
/// # Safety
/// `data` must hold `n_points * n_times` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_new(
    n_points: usize,
    dt: f64,
    n_times: usize,
    data: *const f64,
    out: *mut *mut StochLesField,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if data.is_null() {
            return Err(null_error("data"));
        }
        let len = n_points
            .checked_mul(n_times)
            .ok_or_else(|| Error::InvalidInput("field size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let field = FieldSeries::new(Grid1D::new(n_points)?, dt, n_times, values)?;
        *out = Box::into_raw(Box::new(StochLesField(field)));
        Ok(())
    })
}

/// Read a field CSV (and its JSON sidecar when present).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_read_csv(path: *const c_char, out: *mut *mut StochLesField) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let field = io::read_field(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(StochLesField(field)));
        Ok(())
    })
}

/// # Safety
/// `field` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_write_csv(field: *const StochLesField, path: *const c_char) -> StochLesStatus {
    guard(|| io::write_field(Path::new(str_arg(path, "path")?), &handle(field, "field")?.0))
}

/// # Safety
/// `field` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_n_points(field: *const StochLesField) -> usize {
    field.as_ref().map_or(0, |f| f.0.n_points())
}

/// # Safety
/// `field` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_n_times(field: *const StochLesField) -> usize {
    field.as_ref().map_or(0, |f| f.0.n_times())
}

/// # Safety
/// `field` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_dt(field: *const StochLesField) -> f64 {
    field.as_ref().map_or(f64::NAN, |f| f.0.dt())
}

/// Copy the row-major values into `buf` (`len == n_points * n_times`).
///
/// # Safety
/// `field` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_copy(
    field: *const StochLesField,
    buf: *mut f64,
    len: usize,
) -> StochLesStatus {
    guard(|| copy_out(handle(field, "field")?.0.data(), buf, len))
}

/// Gaussian filter of width `delta`.
///
/// # Safety
/// `field` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_filter(
    field: *const StochLesField,
    delta: f64,
    out: *mut *mut StochLesField,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let filtered = filter_field(&handle(field, "field")?.0, &FilterSpec::new(delta)?)?;
        *out = Box::into_raw(Box::new(StochLesField(filtered)));
        Ok(())
    })
}

/// Relative space-time L² error of `field` against `reference`.
///
/// # Safety
/// Both handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_relative_l2(
    field: *const StochLesField,
    reference: *const StochLesField,
    out: *mut f64,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = l2_spacetime_error(&handle(field, "field")?.0, &handle(reference, "reference")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `field` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_field_free(field: *mut StochLesField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Default configuration; `full_scale != 0` selects the Δx = 0.001 geometry.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_config_default(full_scale: i32, out: *mut *mut StochLesConfig) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = ExperimentConfig::preset();
        let cfg = if full_scale != 0 { cfg.full_scale() } else { cfg };
        *out = Box::into_raw(Box::new(StochLesConfig(cfg)));
        Ok(())
    })
}

/// Parse a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_config_from_toml(
    toml: *const c_char,
    out: *mut *mut StochLesConfig,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = ExperimentConfig::from_toml(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(StochLesConfig(cfg)));
        Ok(())
    })
}

/// Configuration as TOML; release with [`stoch_les_string_free`].
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_config_to_toml(config: *const StochLesConfig) -> *mut c_char {
    match config.as_ref() {
        Some(c) => CString::new(c.0.to_toml()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `config` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_config_free(config: *mut StochLesConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the full experiment, writing artifacts below `out_dir`.
///
/// # Safety
/// `config` must be a live handle, `out_dir` a NUL-terminated string and
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_pipeline_run(
    config: *const StochLesConfig,
    out_dir: *const c_char,
    out: *mut *mut StochLesReport,
) -> StochLesStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = &handle(config, "config")?.0;
        let run = run_pipeline(cfg, Path::new(str_arg(out_dir, "out_dir")?), "<ffi>")?;
        *out = Box::into_raw(Box::new(StochLesReport(run.report)));
        Ok(())
    })
}

/// The two headline errors of a report.
///
/// # Safety
/// `report` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_report_errors(
    report: *const StochLesReport,
    err_no_model: *mut f64,
    err_stochastic_les: *mut f64,
) -> StochLesStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out_ptr(err_no_model, "err_no_model")? = r.err_no_model;
        *out_ptr(err_stochastic_les, "err_stochastic_les")? = r.err_stochastic_les;
        Ok(())
    })
}

/// Full report as JSON; release with [`stoch_les_string_free`].
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_report_to_json(report: *const StochLesReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        return ptr::null_mut();
    };
    serde_json::to_string(&r.0)
        .ok()
        .and_then(|s| CString::new(s).ok())
        .map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `report` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn stoch_les_report_free(report: *mut StochLesReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
