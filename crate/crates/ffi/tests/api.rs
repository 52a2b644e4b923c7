use std::ffi::{c_int, c_void, CStr, CString};
use std::ptr;

use qdlab_ffi::*;

const CONFIG: &str = r#"{"task":{"name":"sphere","n_params":4},"algorithm":{"name":"map_elites"},
    "container":{"type":"grid","dims":[8,8]},
    "budget":{"init_batch":20,"batch_size":20,"total_evaluations":400},"seed":0}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = qdl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_experiment(config: &str, seed: u64) -> *mut QdlExperiment {
    let mut exp = ptr::null_mut();
    let status = unsafe { qdl_experiment_new(c(config).as_ptr(), ptr::null(), seed, 1, &mut exp) };
    assert_eq!(status, QdlStatus::Ok);
    exp
}

fn records(exp: *const QdlExperiment) -> Vec<QdlMetrics> {
    let n = unsafe { qdl_experiment_record_count(exp) };
    (0..n)
        .map(|i| {
            let mut m = QdlMetrics::default();
            assert_eq!(unsafe { qdl_experiment_record(exp, i, &mut m) }, QdlStatus::Ok);
            m
        })
        .collect()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(qdl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_save_and_reload() {
    let exp = new_experiment(CONFIG, 5);
    assert_eq!(unsafe { qdl_experiment_run(exp, None, ptr::null_mut()) }, QdlStatus::Ok);
    let rows = records(exp);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows.last().unwrap().evaluations, 400);
    assert!(rows.windows(2).all(|w| w[1].qd_score >= w[0].qd_score));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("archive.json");
    let cpath = c(path.to_str().unwrap());
    assert_eq!(
        unsafe { qdl_experiment_save_archive(exp, cpath.as_ptr()) },
        QdlStatus::Ok
    );
    let mut m = QdlMetrics::default();
    let offset = -4.0 * 5.12 * 5.12;
    assert_eq!(
        unsafe { qdl_archive_metrics(cpath.as_ptr(), offset, &mut m) },
        QdlStatus::Ok
    );
    let last = rows.last().unwrap();
    assert_eq!(m.coverage, last.coverage);
    assert_eq!(m.max_fitness, last.max_fitness);
    assert_eq!(m.has_max_fitness, 1);
    unsafe { qdl_experiment_free(exp) };
}

#[test]
fn same_seed_same_records_across_workers() {
    let a = new_experiment(CONFIG, 9);
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { qdl_experiment_new(c(CONFIG).as_ptr(), ptr::null(), 9, 3, &mut b) },
        QdlStatus::Ok
    );
    unsafe {
        qdl_experiment_run(a, None, ptr::null_mut());
        qdl_experiment_run(b, None, ptr::null_mut());
    }
    assert_eq!(records(a), records(b));
    unsafe {
        qdl_experiment_free(a);
        qdl_experiment_free(b);
    }
}

unsafe extern "C" fn stop_after_three(record: *const QdlMetrics, user_data: *mut c_void) -> c_int {
    let seen = &mut *(user_data as *mut Vec<u64>);
    seen.push((*record).iteration);
    c_int::from(seen.len() >= 3)
}

#[test]
fn callback_sees_records_and_can_abort() {
    let exp = new_experiment(CONFIG, 1);
    let mut seen: Vec<u64> = Vec::new();
    let status = unsafe { qdl_experiment_run(exp, Some(stop_after_three), &mut seen as *mut _ as *mut c_void) };
    assert_eq!(status, QdlStatus::Aborted);
    assert_eq!(seen, vec![0, 1, 2]);
    let path = c("/nonexistent/never-written.json");
    assert_eq!(
        unsafe { qdl_experiment_save_archive(exp, path.as_ptr()) },
        QdlStatus::NotRun
    );
    unsafe { qdl_experiment_free(exp) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut exp = ptr::null_mut();
    let bad = CONFIG.replace("\"seed\"", "\"sede\"");
    let status = unsafe { qdl_experiment_new(c(&bad).as_ptr(), ptr::null(), 0, 1, &mut exp) };
    assert_eq!(status, QdlStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().contains("sede"));

    let invalid = CONFIG.replace("\"batch_size\":20", "\"batch_size\":0");
    let status = unsafe { qdl_experiment_new(c(&invalid).as_ptr(), ptr::null(), 0, 1, &mut exp) };
    assert_eq!(status, QdlStatus::Validation);

    let status = unsafe { qdl_experiment_new(ptr::null(), ptr::null(), 0, 1, &mut exp) };
    assert_eq!(status, QdlStatus::NullPointer);

    let mut m = QdlMetrics::default();
    let missing = c("/nonexistent/archive.json");
    assert_eq!(
        unsafe { qdl_archive_metrics(missing.as_ptr(), 0.0, &mut m) },
        QdlStatus::Io
    );

    let exp = new_experiment(CONFIG, 0);
    assert_eq!(
        unsafe { qdl_experiment_record(exp, 0, &mut m) },
        QdlStatus::InvalidArgument
    );
    unsafe { qdl_experiment_free(exp) };
    unsafe { qdl_experiment_free(ptr::null_mut()) };
    assert_eq!(unsafe { qdl_experiment_record_count(ptr::null()) }, 0);
}

#[test]
fn hypervolume_of_staircase() {
    let pts = [1.0, 3.0, 2.0, 2.0, 3.0, 1.0];
    let reference = [0.0, 0.0];
    let mut hv = 0.0;
    assert_eq!(
        unsafe { qdl_hypervolume_2d(pts.as_ptr(), 3, reference.as_ptr(), &mut hv) },
        QdlStatus::Ok
    );
    assert_eq!(hv, 6.0);
    assert_eq!(
        unsafe { qdl_hypervolume_2d(ptr::null(), 0, reference.as_ptr(), &mut hv) },
        QdlStatus::Ok
    );
    assert_eq!(hv, 0.0);
    assert_eq!(
        unsafe { qdl_hypervolume_2d(ptr::null(), 1, reference.as_ptr(), &mut hv) },
        QdlStatus::NullPointer
    );
}
