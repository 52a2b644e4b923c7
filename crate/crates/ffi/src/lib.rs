//! C ABI over qdlab.
//!
//! Every fallible call returns a [`QdlStatus`]. On failure a message is kept
//! per thread and can be read with [`qdl_last_error`]. Experiments are opaque
//! handles created by [`qdl_experiment_new`] and released by
//! [`qdl_experiment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use qdlab::algorithms::run_experiment;
use qdlab::archive_io::{load_archive, save_archive, Archive};
use qdlab::config::{parse_config_str, ExperimentConfig};
use qdlab::exec::Executor;
use qdlab::metrics::{compute_metrics, compute_mome_metrics, compute_population_metrics, hypervolume};
use qdlab::types::MetricsRecord;
use qdlab::QdError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QdlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Validation = 4,
    Io = 5,
    Parse = 6,
    Version = 7,
    Runtime = 8,
    /// The record callback asked to stop.
    Aborted = 9,
    /// No archive yet: the experiment has not been run.
    NotRun = 10,
    Panic = 11,
}

/// One metrics row. `has_max_fitness` is 0 while the archive is empty.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QdlMetrics {
    pub iteration: u64,
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: f64,
    pub has_max_fitness: c_int,
}

impl From<&MetricsRecord> for QdlMetrics {
    fn from(r: &MetricsRecord) -> Self {
        Self {
            iteration: r.iteration,
            evaluations: r.evaluations,
            qd_score: r.qd_score,
            coverage: r.coverage,
            max_fitness: r.max_fitness.unwrap_or(f64::NAN),
            has_max_fitness: c_int::from(r.max_fitness.is_some()),
        }
    }
}

/// Called once per metrics record. Return non-zero to stop the run.
pub type QdlRecordCallback = Option<unsafe extern "C" fn(record: *const QdlMetrics, user_data: *mut c_void) -> c_int>;

/// Opaque experiment handle.
pub struct QdlExperiment {
    config: ExperimentConfig,
    base_dir: PathBuf,
    records: Vec<MetricsRecord>,
    archive: Option<Archive>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &QdError) -> QdlStatus {
    match err {
        QdError::InvalidArgument(_) => QdlStatus::InvalidArgument,
        QdError::Config(_) => QdlStatus::Config,
        QdError::Validation(_) => QdlStatus::Validation,
        QdError::Io(_) => QdlStatus::Io,
        QdError::Parse { .. } => QdlStatus::Parse,
        QdError::Version(_) => QdlStatus::Version,
        _ => QdlStatus::Runtime,
    }
}

fn fail(err: QdError) -> QdlStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guard(f: impl FnOnce() -> QdlStatus) -> QdlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            QdlStatus::Panic
        }
    }
}

unsafe fn utf8<'a>(s: *const c_char, what: &str) -> Result<&'a str, QdlStatus> {
    if s.is_null() {
        set_error(format!("{what} is null"));
        return Err(QdlStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        QdlStatus::InvalidArgument
    })
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Last error message on this thread, or NULL. Valid until the next call
/// into this library on the same thread.
#[no_mangle]
pub extern "C" fn qdl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qdl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON experiment config.
///
/// `base_dir` resolves relative centroid paths and may be NULL for the
/// current directory. `workers` of 0 keeps the config value.
///
/// # Safety
/// `config_json` and a non-NULL `base_dir` must be NUL-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_new(
    config_json: *const c_char,
    base_dir: *const c_char,
    seed: u64,
    workers: usize,
    out: *mut *mut QdlExperiment,
) -> QdlStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return QdlStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let text = try_status!(utf8(config_json, "config_json"));
        let base_dir = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            PathBuf::from(try_status!(utf8(base_dir, "base_dir")))
        };
        let mut config = match parse_config_str(text) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        config.seed = seed;
        if workers > 0 {
            config.workers = workers;
        }
        *out = Box::into_raw(Box::new(QdlExperiment {
            config,
            base_dir,
            records: Vec::new(),
            archive: None,
        }));
        QdlStatus::Ok
    })
}

/// Runs the experiment to its evaluation budget. Any earlier results are
/// discarded. `callback` may be NULL.
///
/// # Safety
/// `exp` must come from [`qdl_experiment_new`]; `user_data` is passed through
/// untouched.
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_run(
    exp: *mut QdlExperiment,
    callback: QdlRecordCallback,
    user_data: *mut c_void,
) -> QdlStatus {
    guard(|| {
        let Some(exp) = exp.as_mut() else {
            set_error("experiment is null");
            return QdlStatus::NullPointer;
        };
        exp.records.clear();
        exp.archive = None;
        let executor = match Executor::new(exp.config.workers) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        let mut aborted = false;
        let records = &mut exp.records;
        let result = run_experiment(&exp.config, &exp.base_dir, &executor, &mut |r| {
            records.push(r.clone());
            if let Some(cb) = callback {
                if cb(&QdlMetrics::from(r), user_data) != 0 {
                    aborted = true;
                    return Err(QdError::InvalidArgument("run stopped by callback".into()));
                }
            }
            Ok(())
        });
        match result {
            Ok(a) => {
                exp.archive = Some(a);
                QdlStatus::Ok
            }
            Err(_) if aborted => {
                set_error("run stopped by callback");
                QdlStatus::Aborted
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of metrics records from the last run.
///
/// # Safety
/// `exp` must be NULL or come from [`qdl_experiment_new`].
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_record_count(exp: *const QdlExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.records.len())
}

/// Copies record `index` of the last run into `out`.
///
/// # Safety
/// `exp` must come from [`qdl_experiment_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_record(
    exp: *const QdlExperiment,
    index: usize,
    out: *mut QdlMetrics,
) -> QdlStatus {
    guard(|| {
        let (Some(exp), false) = (exp.as_ref(), out.is_null()) else {
            set_error("experiment or out is null");
            return QdlStatus::NullPointer;
        };
        match exp.records.get(index) {
            Some(r) => {
                *out = QdlMetrics::from(r);
                QdlStatus::Ok
            }
            None => {
                set_error(format!("record {index} out of range ({} records)", exp.records.len()));
                QdlStatus::InvalidArgument
            }
        }
    })
}

/// Writes the final archive of the last run as JSON, atomically.
///
/// # Safety
/// `exp` must come from [`qdl_experiment_new`]; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_save_archive(exp: *const QdlExperiment, path: *const c_char) -> QdlStatus {
    guard(|| {
        let Some(exp) = exp.as_ref() else {
            set_error("experiment is null");
            return QdlStatus::NullPointer;
        };
        let path = try_status!(utf8(path, "path"));
        let Some(archive) = &exp.archive else {
            set_error("experiment has not been run");
            return QdlStatus::NotRun;
        };
        match save_archive(archive, Path::new(path)) {
            Ok(()) => QdlStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `exp` must be NULL or come from [`qdl_experiment_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn qdl_experiment_free(exp: *mut QdlExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// QD metrics of an archive file. `qd_offset` only applies to
/// single-objective archives. `iteration` and `evaluations` are set to 0.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qdl_archive_metrics(path: *const c_char, qd_offset: f64, out: *mut QdlMetrics) -> QdlStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return QdlStatus::NullPointer;
        }
        let path = try_status!(utf8(path, "path"));
        let metrics = load_archive(Path::new(path)).and_then(|a| match a {
            Archive::Elites(r) => Ok(compute_metrics(&r, qd_offset)),
            Archive::Fronts(r) => compute_mome_metrics(&r),
            Archive::Population(p) => {
                let objs: Vec<&[f64]> = p.members.iter().map(|m| m.objectives.as_slice()).collect();
                compute_population_metrics(&objs, &p.reference)
            }
        });
        match metrics {
            Ok(m) => {
                *out = QdlMetrics {
                    iteration: 0,
                    evaluations: 0,
                    qd_score: m.qd_score,
                    coverage: m.coverage,
                    max_fitness: m.max_fitness.unwrap_or(f64::NAN),
                    has_max_fitness: c_int::from(m.max_fitness.is_some()),
                };
                QdlStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Hypervolume (maximization) of `n` points stored as `[f1, f2]` pairs in
/// `points`, against `reference`.
///
/// # Safety
/// `points` must hold `2 * n` readable doubles (it may be NULL when `n` is
/// 0); `reference` must hold 2; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qdl_hypervolume_2d(
    points: *const f64,
    n: usize,
    reference: *const f64,
    out: *mut f64,
) -> QdlStatus {
    guard(|| {
        if (points.is_null() && n > 0) || reference.is_null() || out.is_null() {
            set_error("null pointer argument");
            return QdlStatus::NullPointer;
        }
        let flat: &[f64] = if n == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(points, 2 * n)
        };
        let front: Vec<&[f64]> = flat.chunks_exact(2).collect();
        let reference = std::slice::from_raw_parts(reference, 2);
        match hypervolume(&front, reference) {
            Ok(hv) => {
                *out = hv;
                QdlStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
