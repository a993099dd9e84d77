use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use metaod_core::metalearner::{save, train_from_parts};
use metaod_core::rankmf::PerformanceMatrix;
use metaod_core::{enumerate_model_set, seed, TrainConfig};
use metaod_ffi::*;
use nalgebra::DMatrix;
use rand::Rng;

fn learner_file(dir: &Path) -> std::path::PathBuf {
    let models = enumerate_model_set();
    let (n, m) = (8, models.len());
    let mut r = seed::rng(&[21]);
    let meta = DMatrix::from_fn(n, metaod_core::metafeatures::META_FEATURE_LEN, |_, _| r.random_range(0.0..1.0));
    let p = PerformanceMatrix::new(
        DMatrix::from_fn(n, m, |_, _| r.random_range(0.0..1.0)),
        (0..n).map(|i| format!("d{i}")).collect(),
        models.iter().map(|s| s.id()).collect(),
    )
    .unwrap();
    let mut cfg = TrainConfig { k: 3, ..TrainConfig::default() };
    cfg.optimizer.max_epochs = 5;
    let (learner, _) = train_from_parts(&meta, &p, &models, &cfg).unwrap();
    let path = dir.join("learner.json");
    save(&learner, &path).unwrap();
    path
}

fn rows(n: usize, d: usize) -> Vec<f64> {
    let mut r = seed::rng(&[5]);
    (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let status = unsafe { metaod_last_error_message(buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(status, MetaodStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn load_select_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(learner_file(dir.path()).to_str().unwrap()).unwrap();
    let mut learner = ptr::null_mut();
    assert_eq!(unsafe { metaod_learner_load(path.as_ptr(), &mut learner) }, MetaodStatus::Ok);
    let m = unsafe { metaod_learner_n_models(learner) };
    assert_eq!(m, enumerate_model_set().len());

    let x = rows(200, 4);
    let mut data = ptr::null_mut();
    let status = unsafe { metaod_dataset_from_rows(x.as_ptr(), 200, 4, ptr::null(), &mut data) };
    assert_eq!(status, MetaodStatus::Ok);

    let mut index = usize::MAX;
    let mut predicted = vec![0.0; m];
    let status = unsafe { metaod_select(learner, data, 0, &mut index, predicted.as_mut_ptr(), m) };
    assert_eq!(status, MetaodStatus::Ok);
    assert!(index < m);
    let best = predicted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(predicted[index], best);

    let core_learner = metaod_core::metalearner::load(path.to_str().unwrap()).unwrap();
    let core_data = metaod_core::Dataset::from_rows("x", &x.chunks(4).map(<[f64]>::to_vec).collect::<Vec<_>>(), None).unwrap();
    let sel = metaod_core::metalearner::select_model(&core_learner, &core_data, 0).unwrap();
    assert_eq!(sel.predicted, predicted);

    let mut need = 0usize;
    let status = unsafe { metaod_learner_model_id(learner, index, ptr::null_mut(), 0, &mut need) };
    assert_eq!(status, MetaodStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; need];
    let status = unsafe { metaod_learner_model_id(learner, index, buf.as_mut_ptr(), need, ptr::null_mut()) };
    assert_eq!(status, MetaodStatus::Ok);
    let id = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert_eq!(id, sel.chosen.id());

    unsafe {
        metaod_dataset_free(data);
        metaod_learner_free(learner);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut learner = ptr::null_mut();
    let missing = CString::new("/nonexistent/learner.json").unwrap();
    assert_eq!(unsafe { metaod_learner_load(missing.as_ptr(), &mut learner) }, MetaodStatus::FileNotFound);
    assert!(learner.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { metaod_learner_load(ptr::null(), &mut learner) }, MetaodStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { metaod_learner_load(bad.as_ptr(), &mut learner) }, MetaodStatus::CorruptFile);

    let x = [1.0, 2.0, 3.0, 4.0];
    let labels = [1u8, 1];
    let mut data = ptr::null_mut();
    let status = unsafe { metaod_dataset_from_rows(x.as_ptr(), 2, 2, labels.as_ptr(), &mut data) };
    assert_ne!(status, MetaodStatus::Ok);
    assert!(data.is_null());

    let mut index = 0usize;
    assert_eq!(
        unsafe { metaod_select(ptr::null(), ptr::null(), 0, &mut index, ptr::null_mut(), 0) },
        MetaodStatus::NullPointer
    );
    unsafe {
        metaod_learner_free(ptr::null_mut());
        metaod_dataset_free(ptr::null_mut());
    }
}

#[test]
fn csv_dataset_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("a,b,is_outlier\n");
    for i in 0..30 {
        text.push_str(&format!("{},{},{}\n", i, 30 - i, u8::from(i % 10 == 0)));
    }
    std::fs::write(&path, text).unwrap();
    let path = CString::new(path.to_str().unwrap()).unwrap();
    let label = CString::new("is_outlier").unwrap();
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { metaod_dataset_load_csv(path.as_ptr(), label.as_ptr(), &mut data) }, MetaodStatus::Ok);
    unsafe { metaod_dataset_free(data) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/metaod.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["metaod_learner_load", "metaod_select", "metaod_last_error_message", "METAOD_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(metaod_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
