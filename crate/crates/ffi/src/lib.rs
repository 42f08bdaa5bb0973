//! C interface to the `bpslda` library.
//!
//! Models are passed as opaque `BpsldaModel` handles. Every fallible call
//! returns a `BpsldaStatus`; on failure `bpslda_last_error` describes the
//! most recent error raised on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bpslda::config::Settings;
use bpslda::corpus::SparseBow;
use bpslda::inference::{infer_theta, predict, MdaOptions};
use bpslda::model::{load_model, save_model, Model, TopicColumns};
use bpslda::training::NoopObserver;
use bpslda::Error;

/// Opaque model handle.
pub struct BpsldaModel {
    inner: Model,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpsldaStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, or an argument outside its domain.
    InvalidArgument = 1,
    Io = 2,
    /// Malformed model, corpus, or config file.
    Format = 3,
    DimensionMismatch = 4,
    /// Non-finite values during inference or training.
    Numerical = 5,
    /// Internal error; the library caught a panic.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> BpsldaStatus {
    if err.is_numerical() {
        return BpsldaStatus::Numerical;
    }
    match err {
        Error::Io(_) => BpsldaStatus::Io,
        Error::Format(_) | Error::Parse { .. } => BpsldaStatus::Format,
        Error::DimensionMismatch(_) | Error::TrajectoryMismatch(_) => BpsldaStatus::DimensionMismatch,
        _ => BpsldaStatus::InvalidArgument,
    }
}

struct Fail(BpsldaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(BpsldaStatus::InvalidArgument, msg.to_owned())
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BpsldaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BpsldaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            BpsldaStatus::Internal
        }
    }
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(model: *const BpsldaModel) -> Result<&'a Model, Fail> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| invalid("model handle is null"))
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bpslda_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file. On success `*out` owns a handle to release with
/// `bpslda_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bpslda_model_load(path: *const c_char, out: *mut *mut BpsldaModel) -> BpsldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let model = load_model(c_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(BpsldaModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bpslda_model_save(model: *const BpsldaModel, path: *const c_char) -> BpsldaStatus {
    guard(|| {
        let model = model_ref(model)?;
        save_model(model, c_str(path, "path")?)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bpslda_model_free(model: *mut BpsldaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, number of topics, and number of outputs (0 for an
/// unsupervised model). Any out pointer may be null.
///
/// # Safety
/// Non-null pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bpslda_model_dims(
    model: *const BpsldaModel,
    vocab_size: *mut usize,
    num_topics: *mut usize,
    num_outputs: *mut usize,
) -> BpsldaStatus {
    guard(|| {
        let m = model_ref(model)?;
        for (p, v) in [(vocab_size, m.phi.vocab_size()), (num_topics, m.phi.num_topics()), (num_outputs, m.hyper.task.num_outputs())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Infers topic proportions for one document given as `nnz` (term id,
/// count) pairs with strictly increasing ids. Writes `num_topics` values to
/// `theta` and, when `prediction` is non-null, `num_outputs` values to it:
/// the predicted mean for regression or the class posterior.
///
/// # Safety
/// `ids` and `counts` must hold `nnz` elements; `theta` and `prediction`
/// must have room for the sizes reported by `bpslda_model_dims`.
#[no_mangle]
pub unsafe extern "C" fn bpslda_infer(
    model: *const BpsldaModel,
    ids: *const u32,
    counts: *const u32,
    nnz: usize,
    theta: *mut f64,
    prediction: *mut f64,
) -> BpsldaStatus {
    guard(|| {
        let m = model_ref(model)?;
        if theta.is_null() || (nnz > 0 && (ids.is_null() || counts.is_null())) {
            return Err(invalid("null buffer"));
        }
        let entries: Vec<(usize, u32)> = if nnz == 0 {
            Vec::new()
        } else {
            let ids = std::slice::from_raw_parts(ids, nnz);
            let counts = std::slice::from_raw_parts(counts, nnz);
            ids.iter().zip(counts).map(|(&i, &c)| (i as usize, c)).collect()
        };
        let bow = SparseBow::new(m.vocab_size(), entries)?;
        let opts = MdaOptions { unroll_depth: m.hyper.unroll_depth, ..MdaOptions::default() };
        let traj = infer_theta(&bow, &m.phi, m.hyper.dirichlet_alpha, &opts)?;
        let k = m.phi.num_topics();
        ptr::copy_nonoverlapping(traj.theta().as_ptr(), theta, k);
        if let (Some(u), false) = (&m.u, prediction.is_null()) {
            let p = predict(traj.theta(), u, m.hyper.gamma, m.hyper.task)?;
            ptr::copy_nonoverlapping(p.values().as_ptr(), prediction, p.values().len());
        }
        Ok(())
    })
}

/// Trains a model on a vectorized corpus file. `config` holds flat
/// `key = value` lines (the same keys as the command-line config file) and
/// may be null for defaults.
///
/// # Safety
/// `corpus_path` and non-null `config` must be NUL-terminated; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bpslda_train(corpus_path: *const c_char, config: *const c_char, out: *mut *mut BpsldaModel) -> BpsldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let mut settings = Settings::default();
        if !config.is_null() {
            settings.apply_text(c_str(config, "config")?)?;
        }
        let (docs, task) = settings.load_corpus(c_str(corpus_path, "corpus_path")?, None, None)?;
        let model = settings.train(&docs, task, &mut NoopObserver)?;
        *out = Box::into_raw(Box::new(BpsldaModel { inner: model }));
        Ok(())
    })
}
