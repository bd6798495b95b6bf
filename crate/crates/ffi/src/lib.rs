//! C ABI over the readmission pipeline.
//!
//! Datasets and models are opaque handles created and destroyed by this
//! library. Every fallible call returns an [`RdmStatus`]; on failure the
//! message is available from [`rdm_last_error`] on the same thread. Panics
//! never cross the boundary: they are caught and reported as
//! [`RdmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use readmission::cost::{optimize_threshold, saved_cost, Cents, CostParams};
use readmission::eval::{auprc, ConfusionMatrix};
use readmission::ingest::load_dataset;
use readmission::models::{LearnerConfig, ModelKind, Scorer};
use readmission::preprocess::{prepare, Task, TaskData};
use readmission::{Error, ErrorKind};

/// Outcome of a call. The first four values match the command-line exit
/// codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdmStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

/// `readmitted == "<30"` against everything else.
pub const RDM_TASK_SHORT_TERM: u32 = 0;
/// `"<30"` or `">30"` against `"NO"`.
pub const RDM_TASK_ANY_READMISSION: u32 = 1;
/// `"<30"` against `">30"`; non-readmitted encounters are excluded.
pub const RDM_TASK_DIFFERENTIATE: u32 = 2;

/// A preprocessed encounter table split for one task.
pub struct RdmDataset {
    data: TaskData,
}

/// A fitted model bound to the schema it was trained with.
pub struct RdmModel {
    scorer: Scorer,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

struct Failure(RdmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Usage => RdmStatus::Usage,
            ErrorKind::Data => RdmStatus::Data,
            ErrorKind::Numerical => RdmStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RdmStatus::NullPointer, format!("{what} is null"))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(RdmStatus::Usage, msg.into())
}

/// Run `f`, translating errors and panics into a status and the thread's
/// last error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RdmStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(RdmStatus::Panic, format!("internal panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error("");
            RdmStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_last_error(&msg);
            status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| usage(format!("{what} is not valid UTF-8")))
}

unsafe fn scored_arg(scores: *const f64, labels: *const u8, n: usize) -> Result<Vec<(f64, bool)>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if scores.is_null() {
        return Err(null("scores"));
    }
    if labels.is_null() {
        return Err(null("labels"));
    }
    let s = std::slice::from_raw_parts(scores, n);
    let l = std::slice::from_raw_parts(labels, n);
    Ok(s.iter().zip(l).map(|(&s, &l)| (s, l != 0)).collect())
}

fn task_arg(task: u32) -> Result<Task, Failure> {
    match task {
        RDM_TASK_SHORT_TERM => Ok(Task::ShortTerm),
        RDM_TASK_ANY_READMISSION => Ok(Task::AnyReadmission),
        RDM_TASK_DIFFERENTIATE => Ok(Task::Differentiate),
        other => Err(usage(format!("unknown task {other}"))),
    }
}

fn cost_params(alpha_cents: i64, beta_cents: i64) -> Result<CostParams, Failure> {
    Ok(CostParams::new(Cents(alpha_cents), Cents(beta_cents))?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and return the full message length
/// excluding the terminator. Passing a null `buf` queries the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rdm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Load an encounter table, filter and encode it, and split it for `task`
/// (one of the `RDM_TASK_*` constants) with `seed`.
///
/// # Safety
/// `csv_path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rdm_dataset_load(
    csv_path: *const c_char,
    task: u32,
    seed: u64,
    out: *mut *mut RdmDataset,
) -> RdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(csv_path, "csv_path")?);
        let task = task_arg(task)?;
        let prepared = prepare(load_dataset(&path)?.encounters)?;
        let data = TaskData::build(&prepared.rows, task, seed)?;
        *out = Box::into_raw(Box::new(RdmDataset { data }));
        Ok(())
    })
}

/// Number of training and test encounters in a dataset handle.
///
/// # Safety
/// `ds` must be a live handle; `n_train` and `n_test` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_dataset_counts(
    ds: *const RdmDataset,
    n_train: *mut usize,
    n_test: *mut usize,
) -> RdmStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if n_train.is_null() || n_test.is_null() {
            return Err(null("count output"));
        }
        *n_train = ds.data.split.train_ids.len();
        *n_test = ds.data.split.test_ids.len();
        Ok(())
    })
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle from [`rdm_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdm_dataset_free(ds: *mut RdmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fit a model on the dataset's training split.
///
/// `model` names the learner (`naive_bayes`, `bayes_net`, `random_forest`,
/// `adaboost`, `mlp`, or a short alias) and uses its default
/// hyperparameters. Alternatively it may be a JSON learner configuration
/// such as `{"model":"random_forest","n_trees":50}`.
///
/// # Safety
/// `ds` must be a live handle, `model` a valid NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_model_train(
    ds: *const RdmDataset,
    model: *const c_char,
    seed: u64,
    out: *mut *mut RdmModel,
) -> RdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let spec = str_arg(model, "model")?.trim();
        let config = if spec.starts_with('{') {
            serde_json::from_str::<LearnerConfig>(spec)
                .map_err(|e| usage(format!("invalid learner configuration: {e}")))?
        } else {
            LearnerConfig::default_for(spec.parse::<ModelKind>()?)
        };
        let scorer = config.train(&ds.data.schema, &ds.data.train(), seed)?;
        *out = Box::into_raw(Box::new(RdmModel { scorer }));
        Ok(())
    })
}

/// Write a model to a JSON file.
///
/// # Safety
/// `m` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rdm_model_save(m: *const RdmModel, path: *const c_char) -> RdmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(m.scorer.save(&path)?)
    })
}

/// Read a model written by [`rdm_model_save`]. Files of another format
/// version are rejected with [`RdmStatus::Data`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_model_load(path: *const c_char, out: *mut *mut RdmModel) -> RdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let scorer = Scorer::load(&path)?;
        *out = Box::into_raw(Box::new(RdmModel { scorer }));
        Ok(())
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdm_model_free(m: *mut RdmModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Score the dataset's test split. Scores and 0/1 labels are written in
/// split order; `written` receives the number of test encounters. When
/// `capacity` is too small nothing is written to the arrays and the call
/// fails with [`RdmStatus::Usage`], so callers can size buffers from
/// `written` (or [`rdm_dataset_counts`]). A model fitted against another
/// schema fails with [`RdmStatus::Data`].
///
/// # Safety
/// `m` and `ds` must be live handles; `scores` and `labels` must point to
/// `capacity` writable elements; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_model_score_test(
    m: *const RdmModel,
    ds: *const RdmDataset,
    scores: *mut f64,
    labels: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> RdmStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let scored = m.scorer.scored(&ds.data.test())?;
        *written = scored.len();
        if capacity < scored.len() {
            return Err(usage(format!("buffers hold {capacity} values, {} needed", scored.len())));
        }
        if scores.is_null() || labels.is_null() {
            return Err(null("output buffer"));
        }
        for (i, (s, y)) in scored.into_iter().enumerate() {
            *scores.add(i) = s;
            *labels.add(i) = y as u8;
        }
        Ok(())
    })
}

/// Area under the precision-recall curve (average precision) of `n`
/// scored instances; labels are nonzero for positives.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_auprc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> RdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = auprc(&scored_arg(scores, labels, n)?)?;
        Ok(())
    })
}

/// Saved cost `tp (alpha - beta) - fp beta`, all amounts in cents.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_saved_cost_cents(
    tp: u64,
    fp: u64,
    alpha_cents: i64,
    beta_cents: i64,
    out: *mut i64,
) -> RdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cm = ConfusionMatrix { tp, fp, fn_: 0, tn: 0 };
        *out = saved_cost(&cm, &cost_params(alpha_cents, beta_cents)?).0;
        Ok(())
    })
}

/// Threshold maximising saved cost over the scored instances (ties go to
/// the lower threshold), and the saving it achieves in cents.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements; `threshold`
/// and `saved_cents` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdm_optimize_threshold(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    alpha_cents: i64,
    beta_cents: i64,
    threshold: *mut f64,
    saved_cents: *mut i64,
) -> RdmStatus {
    guard(|| {
        if threshold.is_null() || saved_cents.is_null() {
            return Err(null("output"));
        }
        let r = optimize_threshold(&scored_arg(scores, labels, n)?, &cost_params(alpha_cents, beta_cents)?)?;
        *threshold = r.threshold;
        *saved_cents = r.saved.0;
        Ok(())
    })
}
