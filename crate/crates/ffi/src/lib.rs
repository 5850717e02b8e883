//! C ABI for the depth estimator.
//!
//! Models live behind an opaque `MeterModel` handle. Every fallible call
//! returns a [`MeterStatus`]; the text of the most recent failure on the
//! calling thread is available from [`meter_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use meter::model::{Activation, InputSize, ModelConfig, Variant};
use meter::{Error, Shape, Tensor};

/// Opaque model handle.
pub struct MeterModel {
    inner: meter::MeterModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Io = 5,
    Checksum = 6,
    MissingTensor = 7,
    UnexpectedTensor = 8,
    VariantMismatch = 9,
    ActivationMismatch = 10,
    UnsupportedVersion = 11,
    Malformed = 12,
    Decode = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterVariant {
    S = 0,
    Xs = 1,
    Xxs = 2,
}

fn variant_arg(v: u32) -> Result<Variant, MeterStatus> {
    match v {
        0 => Ok(Variant::S),
        1 => Ok(Variant::XS),
        2 => Ok(Variant::XXS),
        _ => Err(fail(MeterStatus::InvalidArgument, format!("unknown variant code {v}"))),
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterActivation {
    Relu = 0,
    Silu = 1,
}

fn activation_arg(a: u32) -> Result<Activation, MeterStatus> {
    match a {
        0 => Ok(Activation::ReLU),
        1 => Ok(Activation::SiLU),
        _ => Err(fail(MeterStatus::InvalidArgument, format!("unknown activation code {a}"))),
    }
}

fn config(variant: u32, activation: u32) -> Result<ModelConfig, MeterStatus> {
    Ok(ModelConfig::preset(variant_arg(variant)?).with_activation(activation_arg(activation)?))
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MeterStatus {
    match e {
        Error::Dimension { .. } => MeterStatus::Dimension,
        Error::Config(_) => MeterStatus::Config,
        Error::Validation(_) | Error::EmptyDataset(_) => MeterStatus::InvalidArgument,
        Error::Checksum(_) => MeterStatus::Checksum,
        Error::MissingTensor(_) => MeterStatus::MissingTensor,
        Error::UnexpectedTensor(_) => MeterStatus::UnexpectedTensor,
        Error::VariantMismatch { .. } => MeterStatus::VariantMismatch,
        Error::ActivationMismatch { .. } => MeterStatus::ActivationMismatch,
        Error::UnsupportedVersion(_) => MeterStatus::UnsupportedVersion,
        Error::Malformed { .. } => MeterStatus::Malformed,
        Error::Decode { .. } => MeterStatus::Decode,
        Error::Io { .. } => MeterStatus::Io,
    }
}

fn fail(status: MeterStatus, msg: impl Into<String>) -> MeterStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MeterStatus>) -> MeterStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MeterStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(MeterStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: meter::Result<T>) -> Result<T, MeterStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), MeterStatus> {
    if p.is_null() {
        Err(fail(MeterStatus::NullPointer, format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, MeterStatus> {
    non_null(p, "path")?;
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| fail(MeterStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn handle<'a>(m: *const MeterModel) -> Result<&'a MeterModel, MeterStatus> {
    non_null(m, "model")?;
    Ok(&*m)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn meter_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes, without the terminator, of the last error on this thread;
/// 0 if the last call succeeded.
#[no_mangle]
pub extern "C" fn meter_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the number of bytes written, excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn meter_last_error(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Builds a model with seeded random weights for a 256x192 indoor setup.
/// `variant` and `activation` take [`MeterVariant`] and [`MeterActivation`]
/// codes.
///
/// # Safety
/// `out` must point to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn meter_model_build(
    variant: u32,
    activation: u32,
    seed: u64,
    out: *mut *mut MeterModel,
) -> MeterStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = config(variant, activation)?;
        let inner = lift(meter::MeterModel::build(cfg, seed))?;
        *out = Box::into_raw(Box::new(MeterModel { inner }));
        Ok(())
    })
}

/// Loads a weight archive, requiring the given variant and activation.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn meter_model_load(
    path: *const c_char,
    variant: u32,
    activation: u32,
    out: *mut *mut MeterModel,
) -> MeterStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        let cfg = config(variant, activation)?;
        let inner = lift(meter::io::load_weights(&path, &cfg))?;
        *out = Box::into_raw(Box::new(MeterModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn meter_model_save(model: *const MeterModel, path: *const c_char) -> MeterStatus {
    guard(|| {
        let m = handle(model)?;
        let path = path_arg(path)?;
        lift(meter::io::save_weights(&m.inner, &path))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn meter_model_free(model: *mut MeterModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meter_model_param_count(model: *const MeterModel, out: *mut u64) -> MeterStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(out, "out")?;
        *out = m.inner.param_count();
        Ok(())
    })
}

/// Multiply-accumulates of one forward pass at `width` x `height`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meter_model_mac_count(
    model: *const MeterModel,
    width: usize,
    height: usize,
    out: *mut u64,
) -> MeterStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(out, "out")?;
        *out = lift(m.inner.mac_count(InputSize::new(width, height)))?;
        Ok(())
    })
}

/// Depth map extent for an input of `width` x `height`.
///
/// # Safety
/// `out_width` and `out_height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn meter_output_size(
    width: usize,
    height: usize,
    out_width: *mut usize,
    out_height: *mut usize,
) -> MeterStatus {
    guard(|| {
        non_null(out_width, "out_width")?;
        non_null(out_height, "out_height")?;
        let cfg = ModelConfig::preset(Variant::S);
        let o = lift(cfg.output_size(InputSize::new(width, height)))?;
        *out_width = o.width;
        *out_height = o.height;
        Ok(())
    })
}

/// Predicts depth in meters for one planar RGB image.
///
/// `rgb` holds `3 * width * height` values in [0, 1], channel-major
/// (all red, then green, then blue). `depth` receives
/// `(width / 2) * (height / 2)` values, row-major.
///
/// # Safety
/// `model` must be a live handle, `rgb` must point to `3 * width * height`
/// readable floats and `depth` to `depth_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn meter_model_infer(
    model: *const MeterModel,
    rgb: *const f32,
    width: usize,
    height: usize,
    depth: *mut f32,
    depth_len: usize,
) -> MeterStatus {
    guard(|| {
        let m = handle(model)?;
        non_null(rgb, "rgb")?;
        non_null(depth, "depth")?;
        let size = InputSize::new(width, height);
        let o = lift(m.inner.config().output_size(size))?;
        let need = o.width * o.height;
        if depth_len < need {
            return Err(fail(
                MeterStatus::BufferTooSmall,
                format!("depth buffer holds {depth_len} values, {need} needed"),
            ));
        }
        let input = std::slice::from_raw_parts(rgb, 3 * width * height).to_vec();
        let image = lift(Tensor::new(Shape::new(1, 3, height, width), input))?;
        let map = lift(m.inner.forward(&image))?;
        std::ptr::copy_nonoverlapping(map.values.data().as_ptr(), depth, need);
        Ok(())
    })
}
