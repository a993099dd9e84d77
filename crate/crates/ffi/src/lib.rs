//! C interface to `metaod-core`.
//!
//! Learners and datasets cross the boundary as opaque handles created and
//! destroyed by this library. Every fallible call returns a [`MetaodStatus`];
//! on failure the message is kept per thread and can be copied out with
//! [`metaod_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use metaod_core::{Dataset, Error, MetaLearner};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    FileNotFound = 3,
    Parse = 4,
    VersionMismatch = 5,
    CorruptFile = 6,
    InvalidArgument = 7,
    DegenerateDataset = 8,
    BufferTooSmall = 9,
    Io = 10,
    Panic = 11,
    Internal = 12,
}

/// Opaque trained selector.
pub struct MetaodLearner(MetaLearner);

/// Opaque dataset.
pub struct MetaodDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> MetaodStatus {
    match err {
        Error::FileNotFound(_) => MetaodStatus::FileNotFound,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => MetaodStatus::Parse,
        Error::VersionMismatch { .. } => MetaodStatus::VersionMismatch,
        Error::CorruptFile(_) => MetaodStatus::CorruptFile,
        Error::DegenerateDataset(_) | Error::InsufficientSamples { .. } => MetaodStatus::DegenerateDataset,
        Error::LengthMismatch { .. } | Error::InvalidConfig(_) | Error::InvalidHyperparameter(_) => {
            MetaodStatus::InvalidArgument
        }
        Error::Io(_) => MetaodStatus::Io,
        _ => MetaodStatus::Internal,
    }
}

/// Runs `f`, recording errors and turning panics into [`MetaodStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), MetaodStatus>) -> MetaodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MetaodStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_error(msg);
            MetaodStatus::Panic
        }
    }
}

fn core<T>(r: metaod_core::Result<T>) -> Result<T, MetaodStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn fail<T>(status: MetaodStatus, msg: &str) -> Result<T, MetaodStatus> {
    set_error(msg);
    Err(status)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MetaodStatus> {
    if p.is_null() {
        return fail(MetaodStatus::NullPointer, &format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => fail(MetaodStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")),
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, MetaodStatus> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(MetaodStatus::NullPointer, &format!("{what} is null")),
    }
}

/// Copies `s` plus a terminating NUL into `buf`. `required` receives the
/// needed size including the NUL whenever it is non-null.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, required: *mut usize) -> Result<(), MetaodStatus> {
    let need = s.len() + 1;
    if !required.is_null() {
        *required = need;
    }
    if buf.is_null() || len < need {
        return fail(MetaodStatus::BufferTooSmall, &format!("buffer needs {need} bytes"));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Version string of the library, static and NUL-terminated.
#[no_mangle]
pub extern "C" fn metaod_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of the calling thread into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null; `required` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn metaod_last_error_message(buf: *mut c_char, len: usize, required: *mut usize) -> MetaodStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_str(&msg, buf, len, required) {
        Ok(()) => MetaodStatus::Ok,
        Err(s) => s,
    }
}

/// Loads a learner file written by `metaod train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn metaod_learner_load(path: *const c_char, out: *mut *mut MetaodLearner) -> MetaodStatus {
    guard(|| {
        if out.is_null() {
            return fail(MetaodStatus::NullPointer, "out is null");
        }
        let path = str_arg(path, "path")?;
        let learner = core(metaod_core::metalearner::load(path))?;
        *out = Box::into_raw(Box::new(MetaodLearner(learner)));
        Ok(())
    })
}

/// Releases a learner. Null is ignored.
///
/// # Safety
/// `learner` must come from [`metaod_learner_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn metaod_learner_free(learner: *mut MetaodLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Number of candidate models, or 0 for a null handle.
///
/// # Safety
/// `learner` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn metaod_learner_n_models(learner: *const MetaodLearner) -> usize {
    learner.as_ref().map_or(0, |l| l.0.model_list.len())
}

/// Copies the identifier of model `index` into `buf`.
///
/// # Safety
/// `learner` must be a live handle; `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn metaod_learner_model_id(
    learner: *const MetaodLearner,
    index: usize,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> MetaodStatus {
    guard(|| {
        let l = ref_arg(learner, "learner")?;
        let Some(spec) = l.0.model_list.get(index) else {
            return fail(MetaodStatus::InvalidArgument, &format!("model index {index} out of range"));
        };
        write_str(&spec.id(), buf, len, required)
    })
}

/// Builds a dataset from a row-major `n_rows × n_cols` array. `labels` may be
/// null; otherwise it holds `n_rows` entries of 0 or 1.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` doubles; `labels` to `n_rows` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn metaod_dataset_from_rows(
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const u8,
    out: *mut *mut MetaodDataset,
) -> MetaodStatus {
    guard(|| {
        if out.is_null() || values.is_null() {
            return fail(MetaodStatus::NullPointer, "values or out is null");
        }
        let Some(total) = n_rows.checked_mul(n_cols) else {
            return fail(MetaodStatus::InvalidArgument, "dimensions overflow");
        };
        let flat = std::slice::from_raw_parts(values, total);
        let rows: Vec<Vec<f64>> = (0..n_rows).map(|i| flat[i * n_cols..(i + 1) * n_cols].to_vec()).collect();
        let labels = (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, n_rows).to_vec());
        let data = core(Dataset::from_rows("ffi", &rows, labels))?;
        *out = Box::into_raw(Box::new(MetaodDataset(data)));
        Ok(())
    })
}

/// Loads a CSV file. `label_column` may be null for unlabeled data.
///
/// # Safety
/// `path` and, if non-null, `label_column` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn metaod_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    out: *mut *mut MetaodDataset,
) -> MetaodStatus {
    guard(|| {
        if out.is_null() {
            return fail(MetaodStatus::NullPointer, "out is null");
        }
        let path = str_arg(path, "path")?;
        let label = if label_column.is_null() {
            None
        } else {
            Some(str_arg(label_column, "label_column")?)
        };
        let data = core(metaod_core::data::load_csv(path, label))?;
        *out = Box::into_raw(Box::new(MetaodDataset(data)));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn metaod_dataset_free(data: *mut MetaodDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Selects a model for `data`. The chosen grid index goes to `out_index`;
/// when `predicted` is non-null it receives one predicted score per model and
/// must hold [`metaod_learner_n_models`] entries.
///
/// # Safety
/// Handles must be live; `out_index` writable; `predicted` valid for `predicted_len` doubles or null.
#[no_mangle]
pub unsafe extern "C" fn metaod_select(
    learner: *const MetaodLearner,
    data: *const MetaodDataset,
    seed: u64,
    out_index: *mut usize,
    predicted: *mut f64,
    predicted_len: usize,
) -> MetaodStatus {
    guard(|| {
        let l = ref_arg(learner, "learner")?;
        let d = ref_arg(data, "data")?;
        if out_index.is_null() {
            return fail(MetaodStatus::NullPointer, "out_index is null");
        }
        let m = l.0.model_list.len();
        if !predicted.is_null() && predicted_len < m {
            return fail(MetaodStatus::BufferTooSmall, &format!("predicted needs {m} entries"));
        }
        let sel = core(metaod_core::metalearner::select_model(&l.0, &d.0, seed))?;
        *out_index = metaod_core::stats::argmax(&sel.predicted);
        if !predicted.is_null() {
            ptr::copy_nonoverlapping(sel.predicted.as_ptr(), predicted, m);
        }
        Ok(())
    })
}
