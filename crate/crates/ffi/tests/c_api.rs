//! Drives the C ABI exactly as a foreign caller would: raw pointers,
//! status codes, opaque handles.

use std::ffi::CString;

use qgcn::jpeg::{scaled_ijg_tables, serialize_test_jpeg, ComponentInfo};
use qgcn::model::{save_checkpoint, Model, ModelConfig};
use qgcn::synth::synth_image;
use qgcn_ffi::*;

#[test]
fn version_is_a_c_string() {
    let ptr = qgcn_version();
    assert!(!ptr.is_null());
    let s = unsafe { std::ffi::CStr::from_ptr(ptr) }.to_str().unwrap();
    assert!(!s.is_empty());
}

#[test]
fn quant_tables_match_library() {
    let mut luma = [0u16; 64];
    let mut chroma = [0u16; 64];
    let status = unsafe { qgcn_quant_tables(50, luma.as_mut_ptr(), chroma.as_mut_ptr()) };
    assert_eq!(status, QgcnStatus::Ok);
    let (l, c) = scaled_ijg_tables(50).unwrap();
    assert_eq!(luma, l.flat());
    assert_eq!(chroma, c.flat());

    let status = unsafe { qgcn_quant_tables(0, luma.as_mut_ptr(), chroma.as_mut_ptr()) };
    assert_eq!(status, QgcnStatus::InvalidArgument);
    let msg = unsafe { std::ffi::CStr::from_ptr(qgcn_last_error()) };
    assert!(msg.to_str().unwrap().contains("out of range"));
}

#[test]
fn null_arguments_are_rejected() {
    let status = unsafe { qgcn_quant_tables(50, std::ptr::null_mut(), std::ptr::null_mut()) };
    assert_eq!(status, QgcnStatus::NullArgument);
    let mut out: *mut QgcnModel = std::ptr::null_mut();
    let status = unsafe { qgcn_model_load(std::ptr::null(), &mut out) };
    assert_eq!(status, QgcnStatus::NullArgument);
}

#[test]
fn simulate_and_metrics_round_trip() {
    let img = synth_image(48, 40, true, 7);
    let mut degraded = vec![0u8; img.data().len()];
    let status = unsafe {
        qgcn_simulate(img.data().as_ptr(), 48, 40, 3, 10, 1, degraded.as_mut_ptr())
    };
    assert_eq!(status, QgcnStatus::Ok);

    // must agree with the library path bit-for-bit
    let (lib_degraded, _, _) =
        qgcn::jpeg::compress_simulate(&img, 10, qgcn::jpeg::Subsampling::S420).unwrap();
    assert_eq!(degraded, lib_degraded.data());

    let mut q = QgcnQuality { psnr: 0.0, ssim: 0.0, psnr_b: 0.0 };
    let status = unsafe {
        qgcn_metrics(img.data().as_ptr(), degraded.as_ptr(), 48, 40, 3, &mut q)
    };
    assert_eq!(status, QgcnStatus::Ok);
    assert!(q.psnr > 15.0 && q.psnr < 45.0, "psnr {}", q.psnr);
    assert!(q.ssim > 0.0 && q.ssim < 1.0);
    assert!(q.psnr_b <= q.psnr);

    // identical pair reports the sentinel
    let status = unsafe {
        qgcn_metrics(img.data().as_ptr(), img.data().as_ptr(), 48, 40, 3, &mut q)
    };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!(q.psnr, 99.99);
    assert!((q.ssim - 1.0).abs() < 1e-12);
}

#[test]
fn model_load_restore_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.qgcn");
    let model: Model<f32> = Model::zeros(ModelConfig::toy(true)).unwrap();
    save_checkpoint(&model, &path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut QgcnModel = std::ptr::null_mut();
    let status = unsafe { qgcn_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, QgcnStatus::Ok);
    assert!(!handle.is_null());

    let mut channels = 0u32;
    let mut params = 0u64;
    let status = unsafe { qgcn_model_info(handle, &mut channels, &mut params) };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!(channels, 3);
    assert_eq!(params as usize, ModelConfig::toy(true).param_count());

    // zero model with the residual skip restores the identity
    let img = synth_image(32, 24, true, 3);
    let mut restored = vec![0u8; img.data().len()];
    let status = unsafe {
        qgcn_restore_qf(handle, img.data().as_ptr(), 32, 24, 3, 30, restored.as_mut_ptr())
    };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!(restored, img.data());

    // explicit tables path
    let (luma, chroma) = scaled_ijg_tables(30).unwrap();
    let lf = luma.flat();
    let cf = chroma.flat();
    let status = unsafe {
        qgcn_restore(
            handle,
            img.data().as_ptr(),
            32,
            24,
            3,
            lf.as_ptr(),
            cf.as_ptr(),
            restored.as_mut_ptr(),
        )
    };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!(restored, img.data());

    unsafe { qgcn_model_free(handle) };
    unsafe { qgcn_model_free(std::ptr::null_mut()) }; // must be a no-op
}

#[test]
fn model_load_failures_set_errors() {
    let c_path = CString::new("/nonexistent/model.qgcn").unwrap();
    let mut handle: *mut QgcnModel = std::ptr::null_mut();
    let status = unsafe { qgcn_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, QgcnStatus::IoError);
    assert!(handle.is_null());
    assert!(!qgcn_last_error().is_null());
}

#[test]
fn parse_jpeg_info_struct() {
    let (luma, chroma) = scaled_ijg_tables(25).unwrap();
    let comps = vec![
        ComponentInfo { id: 1, h_sampling: 2, v_sampling: 2, table_id: 0 },
        ComponentInfo { id: 2, h_sampling: 1, v_sampling: 1, table_id: 1 },
        ComponentInfo { id: 3, h_sampling: 1, v_sampling: 1, table_id: 1 },
    ];
    let stream = serialize_test_jpeg(320, 200, &[luma.clone(), chroma.clone()], &comps);

    let mut info = QgcnJpegInfo {
        width: 0,
        height: 0,
        num_components: 0,
        progressive: 0,
        component_table_ids: [-1; 4],
        tables_present: 0,
        tables: [[0; 64]; 4],
    };
    let status = unsafe { qgcn_parse_jpeg(stream.as_ptr(), stream.len(), &mut info) };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!((info.width, info.height), (320, 200));
    assert_eq!(info.num_components, 3);
    assert_eq!(info.component_table_ids[0], 0);
    assert_eq!(info.component_table_ids[1], 1);
    assert_eq!(info.tables_present, 0b11);
    assert_eq!(info.tables[0], luma.flat());
    assert_eq!(info.tables[1], chroma.flat());

    // truncated stream surfaces as a parse error
    let status = unsafe { qgcn_parse_jpeg(stream.as_ptr(), 6, &mut info) };
    assert_eq!(status, QgcnStatus::ParseError);
}

#[test]
fn scale_qtable_entry_points() {
    let base = scaled_ijg_tables(50).unwrap().0.flat();
    let mut out = [0u16; 64];
    let status = unsafe { qgcn_scale_qtable(base.as_ptr(), 10, out.as_mut_ptr()) };
    assert_eq!(status, QgcnStatus::Ok);
    assert_eq!(out[0], 80);
}

#[test]
fn gray_model_rejects_color_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.qgcn");
    let model: Model<f32> = Model::zeros(ModelConfig::toy(false)).unwrap();
    save_checkpoint(&model, &path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut QgcnModel = std::ptr::null_mut();
    assert_eq!(unsafe { qgcn_model_load(c_path.as_ptr(), &mut handle) }, QgcnStatus::Ok);

    let img = synth_image(24, 24, true, 1);
    let mut out = vec![0u8; img.data().len()];
    let status = unsafe {
        qgcn_restore_qf(handle, img.data().as_ptr(), 24, 24, 3, 20, out.as_mut_ptr())
    };
    assert_eq!(status, QgcnStatus::InvalidArgument);
    unsafe { qgcn_model_free(handle) };
}

#[test]
fn generated_header_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qgcn.h");
    assert!(header.exists(), "cbindgen header missing");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "qgcn_model_load",
        "qgcn_model_free",
        "qgcn_restore",
        "qgcn_simulate",
        "qgcn_metrics",
        "qgcn_parse_jpeg",
        "qgcn_quant_tables",
        "qgcn_last_error",
    ] {
        assert!(text.contains(symbol), "header lacks {}", symbol);
    }
    // syntax-check with a C compiler when one is around
    if std::process::Command::new("cc").arg("--version").output().is_ok() {
        let status = std::process::Command::new("cc")
            .args(["-std=c99", "-fsyntax-only", "-x", "c"])
            .arg(&header)
            .status()
            .unwrap();
        assert!(status.success(), "header fails C99 syntax check");
    }
}
