//! C ABI over `nilm-fusion`: load a fitted feature transform and a trained
//! classifier from their artifact files, map raw current/voltage windows to
//! features, predict appliance labels, and compute F1 / Fryze helpers.
//!
//! Every fallible function returns a [`NilmStatus`]; on failure a message is
//! available from [`nilm_last_error`] on the same thread. Handles are opaque
//! and must be released with the matching `*_free` function. Matrices are
//! row-major and caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use ndarray::ArrayView2;
use nilm_fusion::baseline::fryze_decompose;
use nilm_fusion::eval;
use nilm_fusion::features::FeaturePipeline;
use nilm_fusion::model::checkpoint::Checkpoint;
use nilm_fusion::model::{self, ClassifierParams};
use nilm_fusion::NilmError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NilmStatus {
    Ok = 0,
    InvalidArgument = 1,
    Unsupported = 2,
    InvalidState = 3,
    Numeric = 4,
    Config = 5,
    Data = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

impl From<&NilmError> for NilmStatus {
    fn from(e: &NilmError) -> Self {
        match e {
            NilmError::InvalidArgument(_) => NilmStatus::InvalidArgument,
            NilmError::Unsupported(_) => NilmStatus::Unsupported,
            NilmError::InvalidState(_) => NilmStatus::InvalidState,
            NilmError::Numeric(_) => NilmStatus::Numeric,
            NilmError::Config(_) => NilmStatus::Config,
            NilmError::Parse { .. } | NilmError::Data(_) | NilmError::Json(_) => NilmStatus::Data,
            NilmError::Io { .. } => NilmStatus::Io,
        }
    }
}

/// Fitted feature transform (opaque).
pub struct NilmTransform {
    inner: FeaturePipeline,
}

/// Trained classifier with its best-validation weights (opaque).
pub struct NilmClassifier {
    params: ClassifierParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(NilmStatus, String);

impl From<NilmError> for Failure {
    fn from(e: NilmError) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NilmStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: String) -> Failure {
    Failure(NilmStatus::InvalidArgument, msg)
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NilmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NilmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NilmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn matrix<'a, T>(data: &'a [T], rows: usize, cols: usize) -> Result<ArrayView2<'a, T>, Failure> {
    ArrayView2::from_shape((rows, cols), data).map_err(|e| invalid(e.to_string()))
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| invalid(format!("{rows} x {cols} overflows")))
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn nilm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nilm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `transform.json` written by `nilm-fusion train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nilm_transform_load(path: *const c_char, out: *mut *mut NilmTransform) -> NilmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = FeaturePipeline::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NilmTransform { inner }));
        Ok(())
    })
}

/// Samples per input window, or 0 for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live handle from [`nilm_transform_load`].
#[no_mangle]
pub unsafe extern "C" fn nilm_transform_input_len(t: *const NilmTransform) -> usize {
    t.as_ref().map_or(0, |t| t.inner.input_len)
}

/// Features per output row, or 0 for a NULL handle.
///
/// # Safety
/// `t` must be NULL or a live handle from [`nilm_transform_load`].
#[no_mangle]
pub unsafe extern "C" fn nilm_transform_output_dim(t: *const NilmTransform) -> usize {
    t.as_ref().map_or(0, |t| t.inner.output_dim())
}

/// Maps `n_rows` windows of `row_len` samples (current and voltage, both
/// row-major) to features written into `out` (`n_rows * output_dim` values).
///
/// # Safety
/// Pointers must reference buffers of the stated sizes; `t` must be live.
#[no_mangle]
pub unsafe extern "C" fn nilm_transform_apply(
    t: *const NilmTransform,
    currents: *const f64,
    voltages: *const f64,
    n_rows: usize,
    row_len: usize,
    out: *mut f64,
    out_len: usize,
) -> NilmStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transform"))?;
        let n = checked_len(n_rows, row_len)?;
        let c = matrix(input(currents, n, "currents")?, n_rows, row_len)?;
        let v = matrix(input(voltages, n, "voltages")?, n_rows, row_len)?;
        let expect = checked_len(n_rows, t.inner.output_dim())?;
        if out_len != expect {
            return Err(invalid(format!("out_len is {out_len}, need {expect}")));
        }
        let x = t.inner.apply(c, v)?;
        output(out, out_len, "out")?
            .iter_mut()
            .zip(x.iter())
            .for_each(|(o, &v)| *o = v);
        Ok(())
    })
}

/// # Safety
/// `t` must be NULL or a handle from [`nilm_transform_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nilm_transform_free(t: *mut NilmTransform) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Loads a `checkpoint.bin` and keeps its best-validation weights.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_load(path: *const c_char, out: *mut *mut NilmClassifier) -> NilmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = Checkpoint::load(&path_arg(path)?)?;
        let params = ckpt.state.best_params();
        *out = Box::into_raw(Box::new(NilmClassifier { params }));
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a live handle from [`nilm_classifier_load`].
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_input_dim(c: *const NilmClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.params.config.input_dim)
}

/// # Safety
/// `c` must be NULL or a live handle from [`nilm_classifier_load`].
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_n_classes(c: *const NilmClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.params.config.n_classes)
}

/// # Safety
/// `c` must be NULL or a live handle from [`nilm_classifier_load`].
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_param_count(c: *const NilmClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.params.values.len())
}

/// Eval-mode prediction. Writes `n_rows * n_classes` sigmoid probabilities
/// to `probs` and 0/1 labels to `labels`; either output may be NULL to skip it.
///
/// # Safety
/// `features` must hold `n_rows * n_features` values and non-NULL outputs
/// `n_rows * n_classes` elements; `c` must be live.
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_predict(
    c: *const NilmClassifier,
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    probs: *mut f64,
    labels: *mut u8,
) -> NilmStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("classifier"))?;
        let x = matrix(input(features, checked_len(n_rows, n_features)?, "features")?, n_rows, n_features)?;
        let (p, l) = model::predict(&c.params, x, c.params.config.threshold)?;
        let n_out = checked_len(n_rows, c.params.config.n_classes)?;
        if !probs.is_null() {
            output(probs, n_out, "probs")?.copy_from_slice(p.as_slice().expect("standard layout"));
        }
        if !labels.is_null() {
            output(labels, n_out, "labels")?.copy_from_slice(l.as_slice().expect("standard layout"));
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a handle from [`nilm_classifier_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nilm_classifier_free(c: *mut NilmClassifier) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Sample-averaged F1 of two row-major 0/1 matrices.
///
/// # Safety
/// `pred` and `truth` must hold `n_rows * n_cols` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nilm_f1_mean(
    pred: *const u8,
    truth: *const u8,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> NilmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let n = checked_len(n_rows, n_cols)?;
        let p = matrix(input(pred, n, "pred")?, n_rows, n_cols)?;
        let t = matrix(input(truth, n, "truth")?, n_rows, n_cols)?;
        *out = eval::f1_mean(p, t)?;
        Ok(())
    })
}

/// Splits `current` into active and non-active parts relative to `voltage`.
/// `active` and `non_active` receive `len` values; the scalar outputs may be NULL.
///
/// # Safety
/// All non-NULL pointers must reference buffers of `len` elements (one
/// element for the scalar outputs).
#[no_mangle]
pub unsafe extern "C" fn nilm_fryze_decompose(
    voltage: *const f64,
    current: *const f64,
    len: usize,
    active: *mut f64,
    non_active: *mut f64,
    active_power: *mut f64,
    v_rms: *mut f64,
) -> NilmStatus {
    guard(|| {
        let v = input(voltage, len, "voltage")?;
        let i = input(current, len, "current")?;
        let parts = fryze_decompose(v, i)?;
        output(active, len, "active")?.copy_from_slice(&parts.active);
        output(non_active, len, "non_active")?.copy_from_slice(&parts.non_active);
        if !active_power.is_null() {
            *active_power = parts.active_power;
        }
        if !v_rms.is_null() {
            *v_rms = parts.v_rms;
        }
        Ok(())
    })
}
