//! C ABI over the core crate: images, metrics, blind kernel estimation and
//! super-resolution with a saved model.
//!
//! Every function returns a [`DadaStatus`]. On failure the message is kept
//! per thread and can be read with [`dada_last_error_message`]. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dada::data::{ColorSpace, Image};
use dada::degradation::{estimate_kernel, kernel_distance, Kernel};
use dada::eval::{psnr_y_with_border, ssim_with_border};
use dada::networks::SourceModel;
use dada::trainer::load_model;
use dada::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DadaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Config = 5,
    NonFinite = 6,
    Checkpoint = 7,
    Dataset = 8,
    Panic = 9,
    Other = 10,
}

/// An RGB or single-channel image with values in `[0, 1]`.
pub struct DadaImage(Image);

/// A square blur kernel with unit sum.
pub struct DadaKernel(Kernel);

/// A trained upsampler.
pub struct DadaModel(SourceModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DadaStatus {
    match e {
        Error::Shape(_) => DadaStatus::Shape,
        Error::InvalidArgument(_) => DadaStatus::InvalidArgument,
        Error::Dataset(_) => DadaStatus::Dataset,
        Error::Config { .. } => DadaStatus::Config,
        Error::NonFinite { .. } => DadaStatus::NonFinite,
        Error::Checkpoint(_) => DadaStatus::Checkpoint,
        Error::Io { .. } | Error::Image { .. } => DadaStatus::Io,
        _ => DadaStatus::Other,
    }
}

struct Fail(DadaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DadaStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure and turns panics into [`DadaStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DadaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DadaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DadaStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(DadaStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn put_f64(out: *mut f64, v: f64, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { *out = v };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length. With a
/// null `buf` only the length is returned.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dada_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dada_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an image from `width * height * channels` interleaved values
/// (row-major, channels last). `channels` is 1 or 3.
///
/// # Safety
/// `data` must point to that many readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_image_new(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut DadaImage,
) -> DadaStatus {
    guard(|| {
        let cs = match channels {
            1 => ColorSpace::Y,
            3 => ColorSpace::Rgb,
            c => return Err(Fail(DadaStatus::InvalidArgument, format!("channels must be 1 or 3, got {c}"))),
        };
        if data.is_null() {
            return Err(null("data"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Fail(DadaStatus::InvalidArgument, "image size overflows".into()))?;
        let values = unsafe { std::slice::from_raw_parts(data, n) }.to_vec();
        let img = Image::new(width, height, cs, values)?;
        unsafe { put(out, DadaImage(img), "out") }
    })
}

/// Loads an 8-bit PNG as an RGB image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_image_load_png(path: *const c_char, out: *mut *mut DadaImage) -> DadaStatus {
    guard(|| {
        let p = unsafe { path_arg(path, "path") }?;
        let img = Image::load_png(&p)?;
        unsafe { put(out, DadaImage(img), "out") }
    })
}

/// Writes the image as an 8-bit PNG.
///
/// # Safety
/// `img` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dada_image_save_png(img: *const DadaImage, path: *const c_char) -> DadaStatus {
    guard(|| {
        let img = unsafe { deref(img, "img") }?;
        let p = unsafe { path_arg(path, "path") }?;
        img.0.save_png(&p)?;
        Ok(())
    })
}

/// Writes width, height and channel count. Any output pointer may be null.
///
/// # Safety
/// `img` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_image_dims(
    img: *const DadaImage,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> DadaStatus {
    guard(|| {
        let img = unsafe { deref(img, "img") }?;
        let (w, h, c) = img.0.dims();
        for (p, v) in [(width, w), (height, h), (channels, c)] {
            if !p.is_null() {
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// Copies the interleaved values into `out`, which must hold exactly
/// `width * height * channels` doubles.
///
/// # Safety
/// `img` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dada_image_copy_data(img: *const DadaImage, out: *mut f64, len: usize) -> DadaStatus {
    guard(|| {
        let img = unsafe { deref(img, "img") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let data = img.0.data();
        if len != data.len() {
            return Err(Fail(DadaStatus::Shape, format!("buffer holds {len} values, image has {}", data.len())));
        }
        unsafe { std::ptr::copy_nonoverlapping(data.as_ptr(), out, len) };
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dada_image_free(img: *mut DadaImage) {
    if !img.is_null() {
        drop(unsafe { Box::from_raw(img) });
    }
}

/// PSNR on luma after cropping `border` pixels per side, capped at 99 dB.
///
/// # Safety
/// `sr` and `hr` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_psnr_y(sr: *const DadaImage, hr: *const DadaImage, border: usize, out: *mut f64) -> DadaStatus {
    guard(|| {
        let (sr, hr) = unsafe { (deref(sr, "sr")?, deref(hr, "hr")?) };
        let v = psnr_y_with_border(&sr.0, &hr.0, border)?;
        unsafe { put_f64(out, v, "out") }
    })
}

/// Mean SSIM over channels after cropping `border` pixels per side.
///
/// # Safety
/// `sr` and `hr` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_ssim(sr: *const DadaImage, hr: *const DadaImage, border: usize, out: *mut f64) -> DadaStatus {
    guard(|| {
        let (sr, hr) = unsafe { (deref(sr, "sr")?, deref(hr, "hr")?) };
        let v = ssim_with_border(&sr.0, &hr.0, border)?;
        unsafe { put_f64(out, v, "out") }
    })
}

/// Least-squares blur kernel linking `hr` to `lr` at `scale`, by at most
/// `iters` conjugate-gradient steps. `relative_residual` may be null.
///
/// # Safety
/// `hr` and `lr` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_estimate_kernel(
    hr: *const DadaImage,
    lr: *const DadaImage,
    kernel_size: usize,
    scale: usize,
    iters: usize,
    tol: f64,
    out: *mut *mut DadaKernel,
    relative_residual: *mut f64,
) -> DadaStatus {
    guard(|| {
        let (hr, lr) = unsafe { (deref(hr, "hr")?, deref(lr, "lr")?) };
        let est = estimate_kernel(&hr.0, &lr.0, kernel_size, scale, iters, tol)?;
        if !relative_residual.is_null() {
            unsafe { *relative_residual = est.relative_residual };
        }
        unsafe { put(out, DadaKernel(est.kernel), "out") }
    })
}

/// Side length of the kernel.
///
/// # Safety
/// `k` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_kernel_size(k: *const DadaKernel, out: *mut usize) -> DadaStatus {
    guard(|| {
        let k = unsafe { deref(k, "k") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = k.0.size() };
        Ok(())
    })
}

/// Copies the row-major weights into `out`, which must hold `size * size`
/// doubles.
///
/// # Safety
/// `k` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dada_kernel_copy_weights(k: *const DadaKernel, out: *mut f64, len: usize) -> DadaStatus {
    guard(|| {
        let k = unsafe { deref(k, "k") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let w = k.0.weights();
        if len != w.len() {
            return Err(Fail(DadaStatus::Shape, format!("buffer holds {len} values, kernel has {}", w.len())));
        }
        unsafe { std::ptr::copy_nonoverlapping(w.as_ptr(), out, len) };
        Ok(())
    })
}

/// L2 distance between two kernels of equal size.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_kernel_distance(a: *const DadaKernel, b: *const DadaKernel, out: *mut f64) -> DadaStatus {
    guard(|| {
        let (a, b) = unsafe { (deref(a, "a")?, deref(b, "b")?) };
        let d = kernel_distance(&a.0, &b.0)?;
        unsafe { put_f64(out, d, "out") }
    })
}

/// # Safety
/// `k` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dada_kernel_free(k: *mut DadaKernel) {
    if !k.is_null() {
        drop(unsafe { Box::from_raw(k) });
    }
}

/// Loads a model checkpoint written by training (`model.ckpt`,
/// `pretrained.ckpt` or a baseline).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_model_load(path: *const c_char, out: *mut *mut DadaModel) -> DadaStatus {
    guard(|| {
        let p = unsafe { path_arg(path, "path") }?;
        let (model, _) = load_model(&p)?;
        unsafe { put(out, DadaModel(model), "out") }
    })
}

/// Upscales an RGB image by the model's scale.
///
/// # Safety
/// `model` and `lr` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_model_super_resolve(
    model: *const DadaModel,
    lr: *const DadaImage,
    out: *mut *mut DadaImage,
) -> DadaStatus {
    guard(|| {
        let (m, lr) = unsafe { (deref(model, "model")?, deref(lr, "lr")?) };
        let sr = m.0.super_resolve(&lr.0)?;
        unsafe { put(out, DadaImage(sr), "out") }
    })
}

/// Upscaling factor of the model.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dada_model_scale(model: *const DadaModel, out: *mut usize) -> DadaStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = m.0.arch.scale };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dada_model_free(model: *mut DadaModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
