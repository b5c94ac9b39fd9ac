//! C ABI for `tfchain`.
//!
//! Objects cross the boundary as opaque handles created by `tfc_*` functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`TfcStatus`]; on failure `tfc_last_error` describes the cause. Strings are
//! NUL-terminated UTF-8. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tfchain::chainmap::ChainCoefficients;
use tfchain::config::RunConfig;
use tfchain::pipeline::{execute, run_chain_coeffs, write_outputs, Artifact, Subcommand};
use tfchain::series::TimeSeries;
use tfchain::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Numerical = 5,
    Size = 6,
    Io = 7,
    BufferTooSmall = 8,
    NotFound = 9,
    Panic = 10,
}

/// Parsed run configuration.
pub struct TfcConfig {
    inner: RunConfig,
}

/// Time series produced by a run.
pub struct TfcSeries {
    times: Vec<f64>,
    columns: Vec<(CString, Vec<f64>)>,
}

/// Chain coefficients of one or two reservoirs.
pub struct TfcChains {
    chains: Vec<ChainCoefficients>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: TfcStatus,
    message: String,
}

impl Failure {
    fn new(status: TfcStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

fn status_of(e: &Error) -> TfcStatus {
    match e {
        Error::Config { .. } => TfcStatus::Config,
        Error::Domain(_)
        | Error::Validation(_)
        | Error::StatisticsMismatch(_)
        | Error::DimensionMismatch { .. }
        | Error::EmptyMeasure => TfcStatus::InvalidArgument,
        Error::Singularity(_)
        | Error::Evaluation { .. }
        | Error::Breakdown { .. }
        | Error::Accuracy { .. }
        | Error::Numerical { .. }
        | Error::TraceDrift { .. } => TfcStatus::Numerical,
        Error::Size { .. } => TfcStatus::Size,
        Error::Io(_) => TfcStatus::Io,
        Error::Context { source, .. } => status_of(source),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(status_of(&e), e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records its failure and converts panics into `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TfcStatus::Ok
        }
        Ok(Err(fail)) => {
            set_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            TfcStatus::Panic
        }
    }
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            TfcStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(TfcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(TfcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(TfcStatus::NullPointer, format!("{what} is null")))
}

fn subcommand(name: &str) -> Result<Subcommand, Failure> {
    Subcommand::from_name(name).ok_or_else(|| {
        Failure::new(
            TfcStatus::InvalidArgument,
            format!("unknown subcommand `{name}`"),
        )
    })
}

/// Copies `src` into a caller buffer of `capacity` values.
unsafe fn fill(src: &[f64], out: *mut f64, capacity: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            TfcStatus::NullPointer,
            "output buffer is null",
        ));
    }
    if capacity < src.len() {
        return Err(Failure::new(
            TfcStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tfc_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next `tfc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tfc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses `key = value` config text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_config_parse(
    text: *const c_char,
    out: *mut *mut TfcConfig,
) -> TfcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let inner = RunConfig::parse(string(text, "text")?)?;
        *out = Box::into_raw(Box::new(TfcConfig { inner }));
        Ok(())
    })
}

/// Reads a config file; relative table paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_config_from_file(
    path: *const c_char,
    out: *mut *mut TfcConfig,
) -> TfcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let inner = RunConfig::from_file(Path::new(string(path, "path")?))?;
        *out = Box::into_raw(Box::new(TfcConfig { inner }));
        Ok(())
    })
}

/// Sets or replaces one key.
///
/// # Safety
/// `config` must come from `tfc_config_*`; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tfc_config_set(
    config: *mut TfcConfig,
    key: *const c_char,
    value: *const c_char,
) -> TfcStatus {
    guard(|| {
        let cfg = out_ptr(config, "config")?;
        cfg.inner
            .set(string(key, "key")?, string(value, "value")?)?;
        Ok(())
    })
}

/// Releases a config. NULL is ignored.
///
/// # Safety
/// `config` must come from `tfc_config_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tfc_config_free(config: *mut TfcConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs a time-series subcommand (`evolve-mps`, `evolve-me`,
/// `exact-dephasing`, `exact-ed`) and returns its observables.
///
/// # Safety
/// `config` must be a live handle; `subcommand` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_run(
    config: *const TfcConfig,
    subcommand_name: *const c_char,
    out: *mut *mut TfcSeries,
) -> TfcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = handle(config, "config")?;
        let sub = subcommand(string(subcommand_name, "subcommand")?)?;
        let result = execute(sub, &cfg.inner)?;
        let Artifact::Series(s) = result.artifact else {
            return Err(Failure::new(
                TfcStatus::InvalidArgument,
                "subcommand does not produce a time series; use tfc_chain_coefficients",
            ));
        };
        *out = Box::into_raw(Box::new(series_handle(&s)));
        Ok(())
    })
}

fn series_handle(s: &TimeSeries) -> TfcSeries {
    TfcSeries {
        times: s.times().to_vec(),
        columns: s
            .flat_columns()
            .into_iter()
            .map(|(n, v)| (CString::new(n).unwrap_or_default(), v))
            .collect(),
    }
}

/// Runs any subcommand and writes its files as the command-line tool does.
/// NULL `output_dir` or `label` fall back to `run.output_dir` and `run.label`.
///
/// # Safety
/// `config` must be a live handle; non-NULL strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tfc_run_to_dir(
    config: *const TfcConfig,
    subcommand_name: *const c_char,
    output_dir: *const c_char,
    label: *const c_char,
) -> TfcStatus {
    guard(|| {
        let mut cfg = handle(config, "config")?.inner.clone();
        let sub = subcommand(string(subcommand_name, "subcommand")?)?;
        if !output_dir.is_null() {
            cfg.set("run.output_dir", string(output_dir, "output_dir")?)?;
        }
        if !label.is_null() {
            cfg.set("run.label", string(label, "label")?)?;
        }
        let result = execute(sub, &cfg)?;
        write_outputs(sub, &cfg, &result, &cfg.output_dir(), cfg.label())?;
        Ok(())
    })
}

/// Number of recorded times.
///
/// # Safety
/// `series` must be a live handle; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_len(series: *const TfcSeries, len: *mut usize) -> TfcStatus {
    guard(|| {
        *out_ptr(len, "len")? = handle(series, "series")?.times.len();
        Ok(())
    })
}

/// Number of real columns (complex observables count twice).
///
/// # Safety
/// `series` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_column_count(
    series: *const TfcSeries,
    count: *mut usize,
) -> TfcStatus {
    guard(|| {
        *out_ptr(count, "count")? = handle(series, "series")?.columns.len();
        Ok(())
    })
}

/// Name of column `index`. Writes at most `capacity` bytes including the
/// terminating NUL; `needed` (optional) receives the full size.
///
/// # Safety
/// `series` must be a live handle; `buffer` must hold `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_column_name(
    series: *const TfcSeries,
    index: usize,
    buffer: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> TfcStatus {
    guard(|| {
        let s = handle(series, "series")?;
        let (name, _) = s.columns.get(index).ok_or_else(|| {
            Failure::new(
                TfcStatus::NotFound,
                format!(
                    "column index {index} out of range ({} columns)",
                    s.columns.len()
                ),
            )
        })?;
        let bytes = name.as_bytes_with_nul();
        if let Some(n) = needed.as_mut() {
            *n = bytes.len();
        }
        if buffer.is_null() {
            return Err(Failure::new(TfcStatus::NullPointer, "buffer is null"));
        }
        if capacity < bytes.len() {
            return Err(Failure::new(
                TfcStatus::BufferTooSmall,
                format!("name needs {} bytes", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buffer, bytes.len());
        Ok(())
    })
}

/// Copies the time grid into `out` (at least `tfc_series_len` values).
///
/// # Safety
/// `series` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_times(
    series: *const TfcSeries,
    out: *mut f64,
    capacity: usize,
) -> TfcStatus {
    guard(|| fill(&handle(series, "series")?.times, out, capacity))
}

/// Copies column `name` into `out` (at least `tfc_series_len` values).
///
/// # Safety
/// `series` must be a live handle; `name` NUL-terminated; `out` must hold
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_column(
    series: *const TfcSeries,
    name: *const c_char,
    out: *mut f64,
    capacity: usize,
) -> TfcStatus {
    guard(|| {
        let s = handle(series, "series")?;
        let name = string(name, "name")?;
        let (_, values) = s
            .columns
            .iter()
            .find(|(n, _)| n.to_bytes() == name.as_bytes())
            .ok_or_else(|| Failure::new(TfcStatus::NotFound, format!("no column `{name}`")))?;
        fill(values, out, capacity)
    })
}

/// Releases a series. NULL is ignored.
///
/// # Safety
/// `series` must come from `tfc_run` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tfc_series_free(series: *mut TfcSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Chain coefficients for the configured bath.
///
/// # Safety
/// `config` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_chain_coefficients(
    config: *const TfcConfig,
    out: *mut *mut TfcChains,
) -> TfcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = handle(config, "config")?;
        let Artifact::Chains(chains) = run_chain_coeffs(&cfg.inner)?.artifact else {
            unreachable!("chain-coeffs yields chains")
        };
        *out = Box::into_raw(Box::new(TfcChains { chains }));
        Ok(())
    })
}

/// Number of chains: 1 at zero temperature, otherwise 2.
///
/// # Safety
/// `chains` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_chains_count(
    chains: *const TfcChains,
    count: *mut usize,
) -> TfcStatus {
    guard(|| {
        *out_ptr(count, "count")? = handle(chains, "chains")?.chains.len();
        Ok(())
    })
}

/// Chain `index`: its reservoir number (1 or 2), length, on-site energies
/// `alphas` and `betas` (`betas[0]` is the total weight). Either array may be
/// NULL to query the length first.
///
/// # Safety
/// `chains` must be a live handle; non-NULL arrays must hold `capacity`
/// doubles; `reservoir` and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn tfc_chains_get(
    chains: *const TfcChains,
    index: usize,
    reservoir: *mut u32,
    len: *mut usize,
    alphas: *mut f64,
    betas: *mut f64,
    capacity: usize,
) -> TfcStatus {
    guard(|| {
        let c = handle(chains, "chains")?;
        let chain = c.chains.get(index).ok_or_else(|| {
            Failure::new(
                TfcStatus::NotFound,
                format!("chain index {index} out of range"),
            )
        })?;
        *out_ptr(reservoir, "reservoir")? = chain.reservoir as u32;
        *out_ptr(len, "len")? = chain.len();
        if !alphas.is_null() {
            fill(&chain.alphas, alphas, capacity)?;
        }
        if !betas.is_null() {
            fill(&chain.betas, betas, capacity)?;
        }
        Ok(())
    })
}

/// Releases chains. NULL is ignored.
///
/// # Safety
/// `chains` must come from `tfc_chain_coefficients` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tfc_chains_free(chains: *mut TfcChains) {
    if !chains.is_null() {
        drop(Box::from_raw(chains));
    }
}
