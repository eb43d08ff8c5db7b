//! C ABI for lumiprobe.
//!
//! Every fallible function returns an [`LpStatus`] and writes results
//! through out-pointers. On failure the out-pointer is left untouched and
//! [`lp_last_error`] describes what went wrong on the calling thread.
//! Handles are opaque and must be released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lumiprobe::detector::DetectorModel;
use lumiprobe::envmap::{compose_hdr, compose_ldr, render_diffuse_sphere, ComposeParams, HdrComposeParams};
use lumiprobe::geometry::extract_crop;
use lumiprobe::loss::{cosine_filter, kernel};
use lumiprobe::model::{checkpoint, Network};
use lumiprobe::warp::{recenter_map, WarpParams};
use lumiprobe::{CropSpec, DynamicRange, Error, Image, Panorama};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Dimension = 3,
    State = 4,
    Numeric = 5,
    Unsupported = 6,
    Parse = 7,
    Codec = 8,
    Io = 9,
    Json = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

/// How pixel values of a panorama are interpreted.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpRange {
    /// Display values in `[0, 1]`.
    Ldr = 0,
    /// Nonnegative linear radiance.
    Hdr = 1,
}

/// Interleaved `f64` image, row-major.
pub struct LpImage(Image);

/// Trained network restored from a checkpoint.
pub struct LpNetwork(Network);

/// Trained light detector.
pub struct LpDetector(DetectorModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LpStatus {
    match e {
        Error::Domain(_) => LpStatus::Domain,
        Error::Dimension(_) => LpStatus::Dimension,
        Error::State(_) => LpStatus::State,
        Error::Numeric(_) => LpStatus::Numeric,
        Error::Unsupported(_) => LpStatus::Unsupported,
        Error::Parse { .. } => LpStatus::Parse,
        Error::Codec(_) => LpStatus::Codec,
        Error::Io(_) => LpStatus::Io,
        Error::Json(_) => LpStatus::Json,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            LpStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            LpStatus::InvalidUtf8
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LpStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

fn check_out<T>(out: *mut *mut T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(())
    }
}

fn range_of(r: LpRange) -> DynamicRange {
    match r {
        LpRange::Ldr => DynamicRange::Ldr,
        LpRange::Hdr => DynamicRange::Hdr,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lp_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Zero-filled image.
#[no_mangle]
pub unsafe extern "C" fn lp_image_new(width: usize, height: usize, channels: usize, out: *mut *mut LpImage) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Domain("image dimensions must be positive".into()).into());
        }
        put(out, LpImage(Image::new(width, height, channels)));
        Ok(())
    })
}

/// Copies `len` interleaved values, which must equal
/// `width * height * channels`.
#[no_mangle]
pub unsafe extern "C" fn lp_image_from_data(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        if data.is_null() {
            return Err(Fail::Null("data"));
        }
        let values = std::slice::from_raw_parts(data, len).to_vec();
        put(out, LpImage(Image::from_vec(width, height, channels, values)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_image_free(img: *mut LpImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lp_image_width(img: *const LpImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

#[no_mangle]
pub unsafe extern "C" fn lp_image_height(img: *const LpImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

#[no_mangle]
pub unsafe extern "C" fn lp_image_channels(img: *const LpImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.channels())
}

/// Borrowed pixel buffer, valid while the handle lives. Writes the value
/// count to `len` when it is not NULL.
#[no_mangle]
pub unsafe extern "C" fn lp_image_data(img: *const LpImage, len: *mut usize) -> *const f64 {
    let Some(i) = img.as_ref() else {
        return ptr::null();
    };
    if let Some(l) = len.as_mut() {
        *l = i.0.data().len();
    }
    i.0.data().as_ptr()
}

/// Reads `.hdr`, `.pfm` or `.png` by extension.
#[no_mangle]
pub unsafe extern "C" fn lp_image_read(path: *const c_char, out: *mut *mut LpImage) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let p = path_arg(path, "path")?;
        let (img, _) = lumiprobe::cli::read_image(&p)?;
        put(out, LpImage(img));
        Ok(())
    })
}

/// Writes `.hdr`, `.pfm` or `.png` by extension.
#[no_mangle]
pub unsafe extern "C" fn lp_image_write(img: *const LpImage, path: *const c_char) -> LpStatus {
    guard(|| {
        let i = href(img, "img")?;
        let p = path_arg(path, "path")?;
        lumiprobe::cli::write_image(&p, &i.0)?;
        Ok(())
    })
}

/// Recentering warp of an equirectangular map. `beta` and `axis_azimuth`
/// are in radians.
#[no_mangle]
pub unsafe extern "C" fn lp_warp(
    map: *const LpImage,
    beta: f64,
    axis_azimuth: f64,
    out: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = href(map, "map")?;
        let params = WarpParams::new(beta, axis_azimuth)?;
        put(out, LpImage(recenter_map(&m.0, &params)?));
        Ok(())
    })
}

/// Pinhole crop from a 2:1 panorama. Angles are in radians.
#[no_mangle]
pub unsafe extern "C" fn lp_extract_crop(
    pano: *const LpImage,
    range: LpRange,
    azimuth: f64,
    elevation: f64,
    hfov: f64,
    width: usize,
    height: usize,
    out: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let p = Panorama::new(href(pano, "pano")?.0.clone(), range_of(range))?;
        let spec = CropSpec { azimuth, elevation, hfov, width, height };
        put(out, LpImage(extract_crop(&p, &spec)?));
        Ok(())
    })
}

/// Cosine-power filter of a panorama map with the given exponent, applied
/// to each channel.
#[no_mangle]
pub unsafe extern "C" fn lp_cosine_filter(map: *const LpImage, exponent: f64, out: *mut *mut LpImage) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = &href(map, "map")?.0;
        let k = kernel(m.width(), m.height(), exponent)?;
        let planes = (0..m.channels())
            .map(|c| cosine_filter(&m.channel(c), &k))
            .collect::<lumiprobe::Result<Vec<_>>>()?;
        let img = Image::from_fn(m.width(), m.height(), m.channels(), |x, y, c| planes[c].get(x, y, 0));
        put(out, LpImage(img));
        Ok(())
    })
}

/// LDR environment map from a light probability map and an rgb panorama.
#[no_mangle]
pub unsafe extern "C" fn lp_compose_ldr(
    mask: *const LpImage,
    rgb: *const LpImage,
    lambda_mask: f64,
    lambda_rgb: f64,
    mask_threshold: f64,
    out: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let params = ComposeParams { lambda_mask, lambda_rgb, mask_threshold };
        put(out, LpImage(compose_ldr(&href(mask, "mask")?.0, &href(rgb, "rgb")?.0, &params)?));
        Ok(())
    })
}

/// HDR environment map from log10 intensity, rgb and the input crop.
#[no_mangle]
pub unsafe extern "C" fn lp_compose_hdr(
    log_intensity: *const LpImage,
    rgb: *const LpImage,
    crop: *const LpImage,
    light_threshold: f64,
    zero_ambient: bool,
    out: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let params = HdrComposeParams { light_threshold, zero_ambient };
        let c = compose_hdr(
            &href(log_intensity, "log_intensity")?.0,
            &href(rgb, "rgb")?.0,
            &href(crop, "crop")?.0,
            &params,
        )?;
        put(out, LpImage(c.env));
        Ok(())
    })
}

/// Display-ready diffuse sphere lit by an environment map.
#[no_mangle]
pub unsafe extern "C" fn lp_render_sphere(env: *const LpImage, size: usize, out: *mut *mut LpImage) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        put(out, LpImage(render_diffuse_sphere(&href(env, "env")?.0, size)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_network_load(path: *const c_char, out: *mut *mut LpNetwork) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let ck = checkpoint::load(&path_arg(path, "path")?)?;
        put(out, LpNetwork(ck.network));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_network_free(net: *mut LpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Expected input photo size.
#[no_mangle]
pub unsafe extern "C" fn lp_network_input_size(net: *const LpNetwork, width: *mut usize, height: *mut usize) -> LpStatus {
    guard(|| {
        let n = href(net, "net")?;
        if width.is_null() || height.is_null() {
            return Err(Fail::Null("width/height"));
        }
        (*width, *height) = n.0.config().input;
        Ok(())
    })
}

/// Runs the network on one photo. `aux` receives the one-channel mask or
/// log intensity and `rgb` the three-channel panorama.
#[no_mangle]
pub unsafe extern "C" fn lp_network_predict(
    net: *const LpNetwork,
    photo: *const LpImage,
    aux: *mut *mut LpImage,
    rgb: *mut *mut LpImage,
) -> LpStatus {
    guard(|| {
        check_out(aux, "aux")?;
        check_out(rgb, "rgb")?;
        let p = href(net, "net")?.0.predict(&href(photo, "photo")?.0)?;
        put(aux, LpImage(p.aux));
        put(rgb, LpImage(p.rgb));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_detector_load(path: *const c_char, out: *mut *mut LpDetector) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        put(out, LpDetector(DetectorModel::load(&path_arg(path, "path")?)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_detector_free(det: *mut LpDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Light mask of an LDR panorama as a one-channel 0/1 image at the
/// panorama's resolution.
#[no_mangle]
pub unsafe extern "C" fn lp_detector_detect(det: *const LpDetector, pano: *const LpImage, out: *mut *mut LpImage) -> LpStatus {
    guard(|| {
        check_out(out, "out")?;
        let d = href(det, "det")?;
        let p = Panorama::new(href(pano, "pano")?.0.clone(), DynamicRange::Ldr)?;
        put(out, LpImage(d.0.detect(&p)?.mask.to_image()));
        Ok(())
    })
}
