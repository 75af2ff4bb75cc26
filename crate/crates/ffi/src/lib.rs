//! C ABI over `tpnet`.
//!
//! Every fallible function returns a [`TpnetStatus`]; on failure the message
//! is available from [`tpnet_last_error`] on the same thread. Models are
//! opaque `TpnetModel *` handles owned by the caller and released with
//! [`tpnet_model_free`]. Models are single precision.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tpnet::accounting::{count_macs, Convention};
use tpnet::checkpoint::Checkpoint;
use tpnet::models::{Model, VariantSpec};
use tpnet::transforms::{transform2d, TransformKind};
use tpnet::{Error, Tensor};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    InvalidSpec = 4,
    Checkpoint = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpnetTransform {
    Dct = 0,
    Ht = 1,
    Bwt = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpnetConvention {
    MatrixProduct = 0,
    FastTransform = 1,
    HtFree = 2,
}

/// Opaque model handle.
pub struct TpnetModel {
    model: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(TpnetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Config(_) => TpnetStatus::InvalidArgument,
            Error::ShapeMismatch(_) => TpnetStatus::ShapeMismatch,
            Error::InvalidSpec(_) => TpnetStatus::InvalidSpec,
            Error::Checkpoint(_) => TpnetStatus::Checkpoint,
            Error::Io(_) | Error::Dataset { .. } => TpnetStatus::Io,
            _ => TpnetStatus::Other,
        };
        Failure(code, e.to_string())
    }
}

fn fail<T>(code: TpnetStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(code, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TpnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TpnetStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            TpnetStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(TpnetStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(TpnetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(m: *const TpnetModel) -> Result<&'a TpnetModel, Failure> {
    m.as_ref().map_or_else(|| fail(TpnetStatus::NullPointer, "model handle is null"), Ok)
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return fail(TpnetStatus::NullPointer, format!("{what} is null"));
    }
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tpnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// 2-D transform of one `h x w` row-major plane. `output` holds `h * w`
/// values and may alias `input`.
///
/// # Safety
/// `input` and `output` must point to `h * w` doubles.
#[no_mangle]
pub unsafe extern "C" fn tpnet_transform2d(
    kind: TpnetTransform,
    inverse: bool,
    input: *const f64,
    h: usize,
    w: usize,
    output: *mut f64,
) -> TpnetStatus {
    guard(|| {
        non_null(input, "input")?;
        non_null(output, "output")?;
        let n = h.checked_mul(w).filter(|&n| n > 0);
        let Some(n) = n else { return fail(TpnetStatus::InvalidArgument, "empty plane") };
        let kind = match kind {
            TpnetTransform::Dct => TransformKind::Dct,
            TpnetTransform::Ht => TransformKind::Ht,
            TpnetTransform::Bwt => TransformKind::Bwt,
        };
        let x = Tensor::from_vec(&[h, w], std::slice::from_raw_parts(input, n).to_vec())?;
        let y = transform2d(&x, kind, inverse)?;
        ptr::copy_nonoverlapping(y.data().as_ptr(), output, n);
        Ok(())
    })
}

/// Parameter and MAC totals for a variant string such as `"3c-dct"`.
///
/// # Safety
/// `variant` must be a NUL-terminated string; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn tpnet_count(
    variant: *const c_char,
    convention: TpnetConvention,
    params: *mut u64,
    macs: *mut u64,
) -> TpnetStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(macs, "macs")?;
        let spec: VariantSpec = text(variant, "variant")?.parse()?;
        let convention = match convention {
            TpnetConvention::MatrixProduct => Convention::MatrixProduct,
            TpnetConvention::FastTransform => Convention::FastTransform,
            TpnetConvention::HtFree => Convention::HtFree,
        };
        let report = count_macs(&spec, spec.input_size, convention)?;
        *params = report.total_params();
        *macs = report.total_macs();
        Ok(())
    })
}

/// Builds a freshly initialized model.
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_new(variant: *const c_char, seed: u64, out: *mut *mut TpnetModel) -> TpnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let spec: VariantSpec = text(variant, "variant")?.parse()?;
        let model = Model::new(spec, seed)?;
        *out = Box::into_raw(Box::new(TpnetModel { model }));
        Ok(())
    })
}

/// Loads a single-precision checkpoint written by `tpnet train` or
/// [`tpnet_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_load(path: *const c_char, out: *mut *mut TpnetModel) -> TpnetStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let ckpt = Checkpoint::load(Path::new(text(path, "path")?))?;
        let model = ckpt.restore_model::<f32>()?;
        *out = Box::into_raw(Box::new(TpnetModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_save(model: *const TpnetModel, path: *const c_char) -> TpnetStatus {
    guard(|| {
        let m = handle(model)?;
        Checkpoint::capture(&m.model, None, 0, 0.0).save(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_free(model: *mut TpnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable scalars.
///
/// # Safety
/// `model` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_num_params(model: *const TpnetModel, out: *mut u64) -> TpnetStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(out, "out")?;
        *out = m.model.store().num_trainable() as u64;
        Ok(())
    })
}

/// Side length of the square input images the model expects.
///
/// # Safety
/// `model` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_input_size(model: *const TpnetModel, out: *mut usize) -> TpnetStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(out, "out")?;
        *out = m.model.spec().input_size;
        Ok(())
    })
}

/// Eval-mode logits. `input` is `batch x 3 x S x S` normalized floats;
/// `logits` receives `batch x 10` values and must hold `logits_len` of them.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tpnet_model_forward(
    model: *const TpnetModel,
    input: *const f32,
    batch: usize,
    logits: *mut f32,
    logits_len: usize,
) -> TpnetStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(input, "input")?;
        non_null(logits, "logits")?;
        if batch == 0 {
            return fail(TpnetStatus::InvalidArgument, "batch must be positive");
        }
        let s = m.model.spec().input_size;
        let classes = tpnet::data::NUM_CLASSES;
        if logits_len < batch * classes {
            return fail(
                TpnetStatus::BufferTooSmall,
                format!("logits buffer holds {logits_len}, need {}", batch * classes),
            );
        }
        let n = batch * 3 * s * s;
        let x = Tensor::from_vec(&[batch, 3, s, s], std::slice::from_raw_parts(input, n).to_vec())?;
        let y = m.model.predict(&x)?;
        ptr::copy_nonoverlapping(y.data().as_ptr(), logits, batch * classes);
        Ok(())
    })
}
