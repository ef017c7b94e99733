//! C ABI for the qgcn library.
//!
//! Conventions: every fallible call returns a [`QgcnStatus`]; `QGCN_OK`
//! means all output parameters were written. Pixel buffers are
//! interleaved row-major 8-bit, 1 or 3 channels. Quantization tables
//! cross the boundary as 64 `uint16_t` in natural row-major order. A
//! per-thread message for the last failure is available via
//! [`qgcn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use qgcn::image::{ColorSpace, ImageBuffer};
use qgcn::jpeg::{
    compress_simulate, parse_jpeg_metadata, scale_qtable, scaled_ijg_tables, Precision,
    QuantTable, Subsampling,
};
use qgcn::metrics::QualityReport;
use qgcn::model::{load_checkpoint, restore_image, Model};
use qgcn::Error;

/// Status code of every fallible FFI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QgcnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    IoError = 3,
    ParseError = 4,
    ShapeMismatch = 5,
    Internal = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> QgcnStatus {
    match err {
        Error::ShapeMismatch { .. } => QgcnStatus::ShapeMismatch,
        Error::InvalidArgument { .. } | Error::QfOutOfRange { .. } | Error::Config(_) => {
            QgcnStatus::InvalidArgument
        }
        Error::JpegParse(_) | Error::Checkpoint(_) => QgcnStatus::ParseError,
        Error::Io { .. } => QgcnStatus::IoError,
        _ => QgcnStatus::Internal,
    }
}

fn fail(err: Error) -> QgcnStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

fn guarded(f: impl FnOnce() -> QgcnStatus) -> QgcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic across FFI boundary".into());
            QgcnStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread, or NULL if the
/// last call succeeded. The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn qgcn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn qgcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque handle to a loaded model.
pub struct QgcnModel {
    inner: Model<f32>,
}

/// Loads a checkpoint (with its JSON config sidecar) from `path`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid
/// pointer. On success `*out` owns the model; release it with
/// [`qgcn_model_free`].
#[no_mangle]
pub unsafe extern "C" fn qgcn_model_load(
    path: *const c_char,
    out: *mut *mut QgcnModel,
) -> QgcnStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => PathBuf::from(s),
            Err(_) => {
                set_error("path is not valid UTF-8".into());
                return QgcnStatus::InvalidArgument;
            }
        };
        match load_checkpoint(&path) {
            Ok(model) => {
                unsafe { *out = Box::into_raw(Box::new(QgcnModel { inner: model })) };
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a model obtained from [`qgcn_model_load`]. NULL is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by [`qgcn_model_load`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn qgcn_model_free(model: *mut QgcnModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Reports the channel mode (1 or 3) and parameter count of a model.
///
/// # Safety
/// All pointers must be valid; `model` must come from
/// [`qgcn_model_load`].
#[no_mangle]
pub unsafe extern "C" fn qgcn_model_info(
    model: *const QgcnModel,
    image_channels: *mut u32,
    param_count: *mut u64,
) -> QgcnStatus {
    guarded(|| {
        if model.is_null() || image_channels.is_null() || param_count.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        let m = unsafe { &(*model).inner };
        unsafe {
            *image_channels = m.config.image_channels() as u32;
            *param_count = m.param_count() as u64;
        }
        QgcnStatus::Ok
    })
}

/// Writes the standard tables scaled to `qf` into `luma[64]` and
/// `chroma[64]`, natural row-major order.
///
/// # Safety
/// `luma` and `chroma` must each point to 64 writable `uint16_t`.
#[no_mangle]
pub unsafe extern "C" fn qgcn_quant_tables(
    qf: c_int,
    luma: *mut u16,
    chroma: *mut u16,
) -> QgcnStatus {
    guarded(|| {
        if luma.is_null() || chroma.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        if !(1..=100).contains(&qf) {
            return fail(Error::QfOutOfRange { qf: qf as i64 });
        }
        match scaled_ijg_tables(qf as u8) {
            Ok((l, c)) => {
                let lf = l.flat();
                let cf = c.flat();
                unsafe {
                    std::ptr::copy_nonoverlapping(lf.as_ptr(), luma, 64);
                    std::ptr::copy_nonoverlapping(cf.as_ptr(), chroma, 64);
                }
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn image_from_raw(
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
) -> Result<ImageBuffer, QgcnStatus> {
    if pixels.is_null() {
        set_error("null pixel buffer".into());
        return Err(QgcnStatus::NullArgument);
    }
    if channels != 1 && channels != 3 {
        set_error(format!("channels must be 1 or 3, got {}", channels));
        return Err(QgcnStatus::InvalidArgument);
    }
    let len = width as usize * height as usize * channels as usize;
    if len == 0 {
        set_error("zero image extent".into());
        return Err(QgcnStatus::InvalidArgument);
    }
    let data = unsafe { std::slice::from_raw_parts(pixels, len) }.to_vec();
    let color = if channels == 1 { ColorSpace::Gray } else { ColorSpace::Rgb };
    ImageBuffer::new(width as usize, height as usize, color, data).map_err(|e| fail(e))
}

fn table_from_raw(entries: *const u16, table_id: u8) -> Result<QuantTable, QgcnStatus> {
    let flat: [u16; 64] = unsafe { std::slice::from_raw_parts(entries, 64) }
        .try_into()
        .expect("slice of length 64");
    let precision = if flat.iter().all(|&v| v <= 255) {
        Precision::EightBit
    } else {
        Precision::SixteenBit
    };
    QuantTable::from_flat(&flat, precision, table_id).map_err(|e| fail(e))
}

/// Runs the JPEG degradation simulator. `out_pixels` receives
/// width*height*channels bytes; `subsample_420` nonzero selects 4:2:0
/// chroma.
///
/// # Safety
/// `pixels` and `out_pixels` must point to width*height*channels
/// readable/writable bytes respectively.
#[no_mangle]
pub unsafe extern "C" fn qgcn_simulate(
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    qf: c_int,
    subsample_420: c_int,
    out_pixels: *mut u8,
) -> QgcnStatus {
    guarded(|| {
        if out_pixels.is_null() {
            set_error("null output buffer".into());
            return QgcnStatus::NullArgument;
        }
        if !(1..=100).contains(&qf) {
            return fail(Error::QfOutOfRange { qf: qf as i64 });
        }
        let img = match unsafe { image_from_raw(pixels, width, height, channels) } {
            Ok(i) => i,
            Err(code) => return code,
        };
        let mode = if subsample_420 != 0 { Subsampling::S420 } else { Subsampling::S444 };
        match compress_simulate(&img, qf as u8, mode) {
            Ok((degraded, _, _)) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(
                        degraded.data().as_ptr(),
                        out_pixels,
                        degraded.data().len(),
                    )
                };
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Restores a degraded image with explicit quantization tables (64
/// entries each, natural order; `chroma` may be NULL for grayscale).
///
/// # Safety
/// Buffer contracts follow [`qgcn_simulate`]; `luma`/`chroma` must
/// point to 64 `uint16_t` when non-NULL.
#[no_mangle]
pub unsafe extern "C" fn qgcn_restore(
    model: *const QgcnModel,
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    luma: *const u16,
    chroma: *const u16,
    out_pixels: *mut u8,
) -> QgcnStatus {
    guarded(|| {
        if model.is_null() || luma.is_null() || out_pixels.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        let img = match unsafe { image_from_raw(pixels, width, height, channels) } {
            Ok(i) => i,
            Err(code) => return code,
        };
        let luma_table = match table_from_raw(luma, 0) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let chroma_table = if chroma.is_null() {
            None
        } else {
            match table_from_raw(chroma, 1) {
                Ok(t) => Some(t),
                Err(code) => return code,
            }
        };
        let m = unsafe { &(*model).inner };
        match restore_image(m, &img, &luma_table, chroma_table.as_ref()) {
            Ok(restored) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(
                        restored.data().as_ptr(),
                        out_pixels,
                        restored.data().len(),
                    )
                };
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Restores assuming the image came from the standard tables at `qf`.
///
/// # Safety
/// Buffer contracts follow [`qgcn_simulate`].
#[no_mangle]
pub unsafe extern "C" fn qgcn_restore_qf(
    model: *const QgcnModel,
    pixels: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    qf: c_int,
    out_pixels: *mut u8,
) -> QgcnStatus {
    guarded(|| {
        if !(1..=100).contains(&qf) {
            return fail(Error::QfOutOfRange { qf: qf as i64 });
        }
        let (luma, chroma) = match scaled_ijg_tables(qf as u8) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let lf = luma.flat();
        let cf = chroma.flat();
        unsafe {
            qgcn_restore(
                model,
                pixels,
                width,
                height,
                channels,
                lf.as_ptr(),
                if channels == 1 { std::ptr::null() } else { cf.as_ptr() },
                out_pixels,
            )
        }
    })
}

/// Quality metrics for one image pair.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct QgcnQuality {
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_b: f64,
}

/// Computes PSNR/SSIM/PSNR-B of `test` against `reference`. Exact
/// matches report the 99.99 dB sentinel.
///
/// # Safety
/// Both pixel buffers must hold width*height*channels bytes; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qgcn_metrics(
    reference: *const u8,
    test: *const u8,
    width: u32,
    height: u32,
    channels: u32,
    out: *mut QgcnQuality,
) -> QgcnStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output".into());
            return QgcnStatus::NullArgument;
        }
        let r = match unsafe { image_from_raw(reference, width, height, channels) } {
            Ok(i) => i,
            Err(code) => return code,
        };
        let t = match unsafe { image_from_raw(test, width, height, channels) } {
            Ok(i) => i,
            Err(code) => return code,
        };
        match QualityReport::compute(&r, &t) {
            Ok(report) => {
                unsafe {
                    *out = QgcnQuality {
                        psnr: qgcn::metrics::display_db(report.psnr),
                        ssim: report.ssim,
                        psnr_b: qgcn::metrics::display_db(report.psnr_b),
                    };
                }
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Marker-level metadata of a JPEG byte stream.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct QgcnJpegInfo {
    pub width: u32,
    pub height: u32,
    pub num_components: u32,
    pub progressive: c_int,
    /// Quantization table id per component; -1 beyond num_components.
    pub component_table_ids: [i32; 4],
    /// Bit k set when table id k was present in the stream.
    pub tables_present: u32,
    /// De-zigzagged tables in natural row-major order, by table id.
    pub tables: [[u16; 64]; 4],
}

/// Parses DQT/SOF metadata from a JPEG byte stream; never touches
/// entropy-coded data.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qgcn_parse_jpeg(
    data: *const u8,
    len: usize,
    out: *mut QgcnJpegInfo,
) -> QgcnStatus {
    guarded(|| {
        if data.is_null() || out.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        let bytes = unsafe { std::slice::from_raw_parts(data, len) };
        match parse_jpeg_metadata(bytes) {
            Ok(meta) => {
                let mut info = QgcnJpegInfo {
                    width: meta.width as u32,
                    height: meta.height as u32,
                    num_components: meta.components.len() as u32,
                    progressive: meta.progressive as c_int,
                    component_table_ids: [-1; 4],
                    tables_present: 0,
                    tables: [[0; 64]; 4],
                };
                for (i, comp) in meta.components.iter().take(4).enumerate() {
                    info.component_table_ids[i] = comp.table_id as i32;
                }
                for (&id, table) in &meta.tables {
                    if id < 4 {
                        info.tables_present |= 1 << id;
                        info.tables[id as usize] = table.flat();
                    }
                }
                unsafe { *out = info };
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Scales a caller-supplied base table (64 entries, natural order) by
/// quality factor, in place semantics via `out`.
///
/// # Safety
/// `base` and `out` must each point to 64 `uint16_t`.
#[no_mangle]
pub unsafe extern "C" fn qgcn_scale_qtable(
    base: *const u16,
    qf: c_int,
    out: *mut u16,
) -> QgcnStatus {
    guarded(|| {
        if base.is_null() || out.is_null() {
            set_error("null argument".into());
            return QgcnStatus::NullArgument;
        }
        if !(1..=100).contains(&qf) {
            return fail(Error::QfOutOfRange { qf: qf as i64 });
        }
        let table = match table_from_raw(base, 0) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match scale_qtable(&table, qf as u8) {
            Ok(scaled) => {
                let flat = scaled.flat();
                unsafe { std::ptr::copy_nonoverlapping(flat.as_ptr(), out, 64) };
                QgcnStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
