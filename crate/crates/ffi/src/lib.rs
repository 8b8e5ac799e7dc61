//! C ABI over the `eigengreedy` library.
//!
//! Objects cross the boundary as opaque handles created by `eg_*_read` /
//! `eg_model_fit` and released with the matching `eg_*_free`. Every fallible
//! call returns an [`EgStatus`]; on failure a message describing the error is
//! available from [`eg_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use eigengreedy::feature_store::{read_feature_set, FeatureSet};
use eigengreedy::gaussian::{GaussianModel, WhiteSet};
use eigengreedy::selection::{greedy_bottom_up, greedy_top_down};
use eigengreedy::{auroc, Error, Label};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed file contents (magic, version, payload, manifest).
    Format = 4,
    /// Arguments violate a precondition (dimensions, labels, k).
    InvalidArgument = 5,
    /// Degenerate data or a covariance that is not positive definite.
    Numerical = 6,
    /// Output buffer too small; the required length is reported.
    BufferTooSmall = 7,
    Panic = 8,
}

/// Search direction for [`eg_greedy_select`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgSelectionMode {
    BottomUp = 0,
    TopDown = 1,
}

/// Opaque feature store handle.
pub struct EgFeatureSet(FeatureSet);

/// Opaque fitted Gaussian model handle.
pub struct EgModel(GaussianModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EgStatus {
    match err {
        Error::Io { .. } => EgStatus::Io,
        Error::Manifest { .. }
        | Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::PayloadLength { .. }
        | Error::InvalidTrace(_)
        | Error::InvalidCurve(_) => EgStatus::Format,
        Error::Degenerate(_) | Error::NotSymmetric(_) | Error::NonPositiveEigenvalue { .. } => {
            EgStatus::Numerical
        }
        _ => EgStatus::InvalidArgument,
    }
}

struct Failure(EgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EgStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EgStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(EgStatus::InvalidUtf8, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn labels_arg(labels: *const u8, n: usize) -> Result<Vec<Label>, Failure> {
    slice_arg(labels, n, "labels")?
        .iter()
        .map(|&l| match l {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Anomalous),
            other => Err(Failure(
                EgStatus::InvalidArgument,
                format!("label {other} is neither 0 nor 1"),
            )),
        })
        .collect()
}

/// Caller guarantees `out` is NULL or valid for one write.
unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads the feature store at `path` (base path without `.fvs`/`.json`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_feature_set_read(
    path: *const c_char,
    out: *mut *mut EgFeatureSet,
) -> EgStatus {
    guard(|| {
        let set = read_feature_set(path_arg(path)?)?;
        put(out, Box::into_raw(Box::new(EgFeatureSet(set))), "out")
    })
}

/// # Safety
/// `set` must come from [`eg_feature_set_read`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eg_feature_set_free(set: *mut EgFeatureSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Row count and feature dimension of `set`.
///
/// # Safety
/// `set` must be a live handle; `n` and `d` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn eg_feature_set_dims(
    set: *const EgFeatureSet,
    n: *mut usize,
    d: *mut usize,
) -> EgStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        put(n, set.0.n(), "n")?;
        put(d, set.0.d(), "d")
    })
}

/// Fits a Gaussian model on the (all-normal) rows of `train`.
///
/// # Safety
/// `train` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_model_fit(
    train: *const EgFeatureSet,
    out: *mut *mut EgModel,
) -> EgStatus {
    guard(|| {
        let train = train.as_ref().ok_or_else(|| null("train"))?;
        let model = GaussianModel::fit(&train.0)?;
        put(out, Box::into_raw(Box::new(EgModel(model))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_model_read(path: *const c_char, out: *mut *mut EgModel) -> EgStatus {
    guard(|| {
        let model = GaussianModel::read(path_arg(path)?)?;
        put(out, Box::into_raw(Box::new(EgModel(model))), "out")
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eg_model_write(model: *const EgModel, path: *const c_char) -> EgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.0.write(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eg_model_free(model: *mut EgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension of `model`, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_model_dim(model: *const EgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.d())
}

/// Ledoit-Wolf shrinkage intensity used by `model`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_model_shrinkage(model: *const EgModel, out: *mut f64) -> EgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        put(out, model.0.shrinkage(), "out")
    })
}

/// Mahalanobis distance of the `len`-vector `x` (must equal the model dim).
///
/// # Safety
/// `model` must be a live handle, `x` readable for `len` doubles and `out`
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_model_mahalanobis(
    model: *const EgModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let dist = model.0.mahalanobis(slice_arg(x, len, "x")?)?;
        put(out, dist, "out")
    })
}

/// Writes the white vector of `x` into `out` (both of length `len`).
///
/// # Safety
/// `model` must be a live handle, `x` readable and `out` writable for
/// `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eg_model_whiten(
    model: *const EgModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let w = model.0.whiten_vector(slice_arg(x, len, "x")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(&w);
        Ok(())
    })
}

/// AUROC of `scores` against 0/1 `labels` (1 = anomalous), ties counted half.
///
/// # Safety
/// `scores` and `labels` must be readable for `n` elements and `out` valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn eg_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> EgStatus {
    guard(|| {
        let labels = labels_arg(labels, n)?;
        let value = auroc(slice_arg(scores, n, "scores")?, &labels)?;
        put(out, value, "out")
    })
}

/// Greedy eigencomponent search over row-major `n×d` white vectors.
///
/// Bottom-up adds components until `k` are selected; top-down removes them
/// until `k` remain. Each step's component and greedy AUROC are written to
/// `components` / `aurocs` (capacity `capacity` each) and the step count to
/// `steps`. With too small a buffer, `steps` receives the required length and
/// [`EgStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `white` must be readable for `n*d` doubles and `labels` for `n` bytes;
/// `components` and `aurocs` writable for `capacity` elements; `steps` valid
/// for one write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn eg_greedy_select(
    white: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
    k: usize,
    mode: EgSelectionMode,
    components: *mut usize,
    aurocs: *mut f64,
    capacity: usize,
    steps: *mut usize,
) -> EgStatus {
    guard(|| {
        let total = n
            .checked_mul(d)
            .ok_or_else(|| Failure(EgStatus::InvalidArgument, "n*d overflows".into()))?;
        let flat = slice_arg(white, total, "white")?;
        let labels = labels_arg(labels, n)?;
        let rows: Vec<Vec<f64>> = flat.chunks(d.max(1)).map(<[f64]>::to_vec).collect();
        let set = WhiteSet::from_labeled_rows(&rows, labels)?;
        let trace = match mode {
            EgSelectionMode::BottomUp => greedy_bottom_up(&set, k)?,
            EgSelectionMode::TopDown => greedy_top_down(&set, k)?,
        };
        let count = trace.steps.len();
        put(steps, count, "steps")?;
        if capacity < count {
            return Err(Failure(
                EgStatus::BufferTooSmall,
                format!("{count} steps need a buffer of {count}, got {capacity}"),
            ));
        }
        if count > 0 && (components.is_null() || aurocs.is_null()) {
            return Err(null("output buffer"));
        }
        for (i, step) in trace.steps.iter().enumerate() {
            components.add(i).write(step.component);
            aurocs.add(i).write(step.greedy_auroc);
        }
        Ok(())
    })
}
