//! C ABI over the egolog pipeline.
//!
//! Every fallible call returns an [`EgologStatus`]; on failure the message is
//! kept per thread and read back with [`egolog_last_error`]. Handles are
//! opaque, created by `*_new`/producer calls and released with the matching
//! `*_free`. Panics never cross the boundary; they surface as
//! `EGOLOG_STATUS_PANIC`.
//!
//! Sessions are not synchronised. Use one per thread or lock around it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use egolog::harness::config::EgologConfig;
use egolog::harness::pipeline::{self, Metrics, Suite, TrainTarget, Workspace};
use egolog::signals::{estimate_tdoa, AudioClip, FeatureConfig};
use egolog::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgologStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Bad value (non-UTF-8 string, wrong length, unknown metric) or a
    /// missing prerequisite such as the corpus or a checkpoint.
    InvalidArgument = 2,
    /// Filesystem failure.
    Io = 3,
    /// Malformed TOML, JSON, CSV or WAV.
    Format = 4,
    Checkpoint = 5,
    /// Degenerate or non-finite numerics, or a tensor backend failure.
    Numeric = 6,
    Llm = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgologTrainTarget {
    Temporal = 0,
    Scenario = 1,
    Spatial = 2,
    Har = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgologSuite {
    Activity = 0,
    Scenario = 1,
}

/// A workspace root plus the config every pipeline call uses.
pub struct EgologSession {
    workspace: Workspace,
    config: EgologConfig,
}

/// Named scalar results from eval, ablate or collab-run.
pub struct EgologMetrics {
    names: Vec<CString>,
    values: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EgologStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_)
            | Error::IndexOutOfRange { .. }
            | Error::OutsideTrajectory { .. }
            | Error::Shape(_)
            | Error::Empty(_) => EgologStatus::InvalidArgument,
            Error::Degenerate(_) | Error::NonFinite(_) | Error::Tensor(_) => EgologStatus::Numeric,
            Error::Checkpoint(_) => EgologStatus::Checkpoint,
            Error::Llm(_) => EgologStatus::Llm,
            Error::Io { .. } => EgologStatus::Io,
            Error::Wav(_) | Error::Csv(_) | Error::Json(_) | Error::Toml(_) => EgologStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EgologStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the C string; replace them.
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EgologStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EgologStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            EgologStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(EgologStatus::NullArgument, format!("{what} is null")))
}

unsafe fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(EgologStatus::NullArgument, format!("{what} is null")))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(EgologStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

fn metrics_handle(rows: impl IntoIterator<Item = (String, f64)>) -> Result<*mut EgologMetrics, Failure> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (n, v) in rows {
        names.push(CString::new(n).map_err(|_| invalid("metric name contains NUL"))?);
        values.push(v);
    }
    Ok(Box::into_raw(Box::new(EgologMetrics { names, values })))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn egolog_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none has
/// failed. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn egolog_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |m| m.as_ptr()))
}

/// Opens a session on `workspace`. `config_path` may be null, in which case
/// `<workspace>/egolog.toml` is used when present and the defaults otherwise;
/// relative paths resolve against the workspace.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn egolog_session_new(
    workspace: *const c_char,
    config_path: *const c_char,
    out: *mut *mut EgologSession,
) -> EgologStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let root = PathBuf::from(utf8(workspace, "workspace")?);
        let default_path = root.join("egolog.toml");
        let config = if config_path.is_null() {
            if default_path.exists() {
                EgologConfig::load(&default_path)?
            } else {
                EgologConfig::default()
            }
        } else {
            EgologConfig::load(&root.join(utf8(config_path, "config_path")?))?
        };
        *out = Box::into_raw(Box::new(EgologSession {
            workspace: Workspace::new(root),
            config,
        }));
        Ok(())
    })
}

/// Replaces the session config with one parsed from TOML text.
///
/// # Safety
/// `session` must come from [`egolog_session_new`]; `toml` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn egolog_session_set_config(session: *mut EgologSession, toml: *const c_char) -> EgologStatus {
    guard(|| {
        let s = non_null_mut(session, "session")?;
        s.config = EgologConfig::from_toml(utf8(toml, "toml")?)?;
        Ok(())
    })
}

/// Overrides the config seed, like `--seed` on the command line.
///
/// # Safety
/// `session` must come from [`egolog_session_new`].
#[no_mangle]
pub unsafe extern "C" fn egolog_session_set_seed(session: *mut EgologSession, seed: u64) -> EgologStatus {
    guard(|| {
        non_null_mut(session, "session")?.config.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `session` must come from [`egolog_session_new`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn egolog_session_free(session: *mut EgologSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Renders the corpus. `out_windows` (nullable) receives the manifest size.
///
/// # Safety
/// `session` must come from [`egolog_session_new`].
#[no_mangle]
pub unsafe extern "C" fn egolog_generate(session: *const EgologSession, out_windows: *mut usize) -> EgologStatus {
    guard(|| {
        let s = non_null(session, "session")?;
        let m = pipeline::generate(&s.workspace, &s.config)?;
        if let Some(out) = out_windows.as_mut() {
            *out = m.len();
        }
        Ok(())
    })
}

/// # Safety
/// `session` must come from [`egolog_session_new`].
#[no_mangle]
pub unsafe extern "C" fn egolog_train(session: *const EgologSession, target: EgologTrainTarget) -> EgologStatus {
    guard(|| {
        let s = non_null(session, "session")?;
        let target = match target {
            EgologTrainTarget::Temporal => TrainTarget::Temporal,
            EgologTrainTarget::Scenario => TrainTarget::Scenario,
            EgologTrainTarget::Spatial => TrainTarget::Spatial,
            EgologTrainTarget::Har => TrainTarget::Har,
        };
        pipeline::train(&s.workspace, &s.config, target)?;
        Ok(())
    })
}

/// Evaluates the trained models and writes `reports/metrics.csv`.
///
/// # Safety
/// `session` must come from [`egolog_session_new`]; `out` must be writable.
/// Release the result with [`egolog_metrics_free`].
#[no_mangle]
pub unsafe extern "C" fn egolog_eval(session: *const EgologSession, out: *mut *mut EgologMetrics) -> EgologStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let s = non_null(session, "session")?;
        let Metrics { rows } = pipeline::eval(&s.workspace, &s.config)?;
        *out = metrics_handle(rows)?;
        Ok(())
    })
}

/// Runs an ablation suite; one metric per table row.
///
/// # Safety
/// As [`egolog_eval`].
#[no_mangle]
pub unsafe extern "C" fn egolog_ablate(
    session: *const EgologSession,
    suite: EgologSuite,
    out: *mut *mut EgologMetrics,
) -> EgologStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let s = non_null(session, "session")?;
        let suite = match suite {
            EgologSuite::Activity => Suite::Activity,
            EgologSuite::Scenario => Suite::Scenario,
        };
        let table = pipeline::ablate(&s.workspace, &s.config, suite)?;
        *out = metrics_handle(table.rows.into_iter().map(|r| (r.name, r.value)))?;
        Ok(())
    })
}

/// One confidence-gated LLM round. Metrics: sequences, low_confidence,
/// queries, accepted, rejected, records_used, applied (0 or 1).
///
/// # Safety
/// As [`egolog_eval`].
#[no_mangle]
pub unsafe extern "C" fn egolog_collab_run(session: *const EgologSession, out: *mut *mut EgologMetrics) -> EgologStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = std::ptr::null_mut();
        let s = non_null(session, "session")?;
        let r = pipeline::collab(&s.workspace, &s.config)?;
        let rows = [
            ("sequences", r.sequences as f64),
            ("low_confidence", r.low_confidence as f64),
            ("queries", r.queries as f64),
            ("accepted", r.accepted as f64),
            ("rejected", r.rejected as f64),
            ("records_used", r.fine_tune.records_used as f64),
            ("applied", f64::from(u8::from(r.fine_tune.applied))),
        ];
        *out = metrics_handle(rows.into_iter().map(|(n, v)| (n.to_string(), v)))?;
        Ok(())
    })
}

/// Writes the daily-log report. `out_windows` (nullable) receives the number
/// of activity windows in the stream.
///
/// # Safety
/// `session` must come from [`egolog_session_new`].
#[no_mangle]
pub unsafe extern "C" fn egolog_daily_log(session: *const EgologSession, out_windows: *mut usize) -> EgologStatus {
    guard(|| {
        let s = non_null(session, "session")?;
        let r = pipeline::daily_log(&s.workspace, &s.config)?;
        if let Some(out) = out_windows.as_mut() {
            *out = r.windows;
        }
        Ok(())
    })
}

/// Number of entries; 0 for null.
///
/// # Safety
/// `metrics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egolog_metrics_len(metrics: *const EgologMetrics) -> usize {
    metrics.as_ref().map_or(0, |m| m.values.len())
}

/// Name of entry `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `metrics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egolog_metrics_name(metrics: *const EgologMetrics, index: usize) -> *const c_char {
    metrics
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(std::ptr::null(), |n| n.as_ptr())
}

/// # Safety
/// `metrics` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn egolog_metrics_value(metrics: *const EgologMetrics, index: usize, out: *mut f64) -> EgologStatus {
    guard(|| {
        let m = non_null(metrics, "metrics")?;
        let out = non_null_mut(out, "out")?;
        *out = *m.values.get(index).ok_or_else(|| {
            invalid(format!("metric index {index} out of range (len {})", m.values.len()))
        })?;
        Ok(())
    })
}

/// Looks a metric up by name; `EGOLOG_STATUS_INVALID_ARGUMENT` if absent.
///
/// # Safety
/// `metrics` must be a live handle; `name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn egolog_metrics_get(metrics: *const EgologMetrics, name: *const c_char, out: *mut f64) -> EgologStatus {
    guard(|| {
        let m = non_null(metrics, "metrics")?;
        let name = utf8(name, "name")?;
        let out = non_null_mut(out, "out")?;
        let i = m
            .names
            .iter()
            .position(|n| n.as_bytes() == name.as_bytes())
            .ok_or_else(|| invalid(format!("no metric named {name:?}")))?;
        *out = m.values[i];
        Ok(())
    })
}

/// # Safety
/// `metrics` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn egolog_metrics_free(metrics: *mut EgologMetrics) {
    if !metrics.is_null() {
        drop(Box::from_raw(metrics));
    }
}

/// GCC-PHAT time difference of arrival `t_left - t_right` in seconds, from
/// two equally long channels of at least one 25 ms frame. Lags are searched
/// in 1/48000 s steps over +-32 steps and refined to sub-step precision.
///
/// # Safety
/// `left` and `right` must each point to `len` floats; `out_seconds` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn egolog_estimate_tdoa(
    left: *const f32,
    right: *const f32,
    len: usize,
    sample_rate: u32,
    out_seconds: *mut f64,
) -> EgologStatus {
    guard(|| {
        if left.is_null() || right.is_null() {
            return Err(Failure(EgologStatus::NullArgument, "channel pointer is null".into()));
        }
        let out = non_null_mut(out_seconds, "out_seconds")?;
        if len == 0 {
            return Err(invalid("channels are empty"));
        }
        let channels = [
            std::slice::from_raw_parts(left, len).to_vec(),
            std::slice::from_raw_parts(right, len).to_vec(),
        ];
        let clip = AudioClip::from_channels(&channels, sample_rate)?;
        *out = estimate_tdoa(&clip, &FeatureConfig::default())?;
        Ok(())
    })
}
