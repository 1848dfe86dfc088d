//! C ABI over the trained models: load the network, vocabulary and SVM
//! files written by the `isarec` CLI, extract stacked features, assign
//! words and predict classes.
//!
//! Every fallible function returns an [`IsarecStatus`]. On failure the
//! message is available from [`isarec_last_error_message`] on the same
//! thread until the next failing call. Handles are opaque; free each one
//! exactly once with its `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use isarec::classifier::SvmModel;
use isarec::isa::IsaNetwork;
use isarec::model_io::{load_network, load_svm, load_vocabulary};
use isarec::vocabulary::Vocabulary;
use isarec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsarecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    BufferTooSmall = 6,
    InvalidArgument = 7,
    Internal = 8,
    Panic = 9,
}

pub struct IsarecNetwork {
    inner: IsaNetwork,
}

pub struct IsarecVocabulary {
    inner: Vocabulary,
}

pub struct IsarecSvm {
    inner: SvmModel,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> IsarecStatus {
    match err {
        Error::Io { .. } => IsarecStatus::Io,
        Error::Parse { .. } | Error::Format(_) => IsarecStatus::Parse,
        Error::DimensionMismatch { .. } => IsarecStatus::DimensionMismatch,
        Error::InvalidConfig(_) => IsarecStatus::InvalidArgument,
        _ => IsarecStatus::Internal,
    }
}

fn fail(status: IsarecStatus, msg: impl Into<String>) -> IsarecStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (IsarecStatus, String)>) -> IsarecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsarecStatus::Ok,
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(IsarecStatus::Panic, "panic inside isarec"),
    }
}

fn lib_err(e: Error) -> (IsarecStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IsarecStatus, String) {
    (IsarecStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (IsarecStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (IsarecStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize) -> Result<&'a [f64], (IsarecStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("input buffer"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn isarec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads an `ISAREC-NET v1` file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn isarec_network_load(path: *const c_char, out: *mut *mut IsarecNetwork) -> IsarecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_network(&path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(IsarecNetwork { inner }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from `isarec_network_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isarec_network_free(net: *mut IsarecNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Length of a stacked feature vector, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_network_feature_dim(net: *const IsarecNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.feature_dim())
}

/// Values in one layer-2 block (frame-major, then rows, then columns), or 0
/// for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_network_block_len(net: *const IsarecNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.geometry.layer2.len())
}

/// Stacked features of one raw layer-2 block.
///
/// # Safety
/// `block` must hold `block_len` doubles and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn isarec_network_extract_stacked(
    net: *const IsarecNetwork,
    block: *const f64,
    block_len: usize,
    out: *mut f64,
    out_len: usize,
) -> IsarecStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("network"))?;
        let values = slice_arg(block, block_len)?;
        let dim = net.inner.feature_dim();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if out_len < dim {
            return Err((
                IsarecStatus::BufferTooSmall,
                format!("output holds {out_len} values, need {dim}"),
            ));
        }
        let features = net.inner.stacked_features(values).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&features);
        Ok(())
    })
}

/// Loads an `ISAREC-VOCAB v1` file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn isarec_vocabulary_load(path: *const c_char, out: *mut *mut IsarecVocabulary) -> IsarecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_vocabulary(&path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(IsarecVocabulary { inner }));
        Ok(())
    })
}

/// # Safety
/// `vocab` must come from `isarec_vocabulary_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isarec_vocabulary_free(vocab: *mut IsarecVocabulary) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_vocabulary_len(vocab: *const IsarecVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.len())
}

/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_vocabulary_dim(vocab: *const IsarecVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.dim())
}

/// Index of the nearest centroid; ties go to the lower index.
///
/// # Safety
/// `feature` must hold `len` doubles and `word` be writable.
#[no_mangle]
pub unsafe extern "C" fn isarec_vocabulary_assign(
    vocab: *const IsarecVocabulary,
    feature: *const f64,
    len: usize,
    word: *mut usize,
) -> IsarecStatus {
    guard(|| {
        let vocab = vocab.as_ref().ok_or_else(|| null("vocabulary"))?;
        let values = slice_arg(feature, len)?;
        if word.is_null() {
            return Err(null("word"));
        }
        *word = vocab.inner.assign(values).map_err(lib_err)?;
        Ok(())
    })
}

/// Loads an `ISAREC-SVM v1` file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn isarec_svm_load(path: *const c_char, out: *mut *mut IsarecSvm) -> IsarecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_svm(&path_arg(path)?).map_err(lib_err)?;
        let names = inner
            .classes
            .iter()
            .map(|c| CString::new(c.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| (IsarecStatus::Parse, "class name contains NUL".to_string()))?;
        *out = Box::into_raw(Box::new(IsarecSvm { inner, names }));
        Ok(())
    })
}

/// # Safety
/// `svm` must come from `isarec_svm_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isarec_svm_free(svm: *mut IsarecSvm) {
    if !svm.is_null() {
        drop(Box::from_raw(svm));
    }
}

/// # Safety
/// `svm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_svm_num_classes(svm: *const IsarecSvm) -> usize {
    svm.as_ref().map_or(0, |s| s.inner.classes.len())
}

/// Name of class `index`, owned by the handle; null when out of range.
///
/// # Safety
/// `svm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isarec_svm_class_name(svm: *const IsarecSvm, index: usize) -> *const c_char {
    svm.as_ref()
        .and_then(|s| s.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// One-vs-one vote over a histogram; writes the winning class index.
///
/// # Safety
/// `x` must hold `len` doubles and `class_index` be writable.
#[no_mangle]
pub unsafe extern "C" fn isarec_svm_predict(
    svm: *const IsarecSvm,
    x: *const f64,
    len: usize,
    class_index: *mut usize,
) -> IsarecStatus {
    guard(|| {
        let svm = svm.as_ref().ok_or_else(|| null("svm"))?;
        let values = slice_arg(x, len)?;
        if class_index.is_null() {
            return Err(null("class_index"));
        }
        *class_index = svm.inner.predict_index(values).map_err(lib_err)?;
        Ok(())
    })
}
