use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use meter_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        meter_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn build(variant: MeterVariant, seed: u64) -> *mut MeterModel {
    let mut m = ptr::null_mut();
    let s = unsafe { meter_model_build(variant as u32, MeterActivation::Relu as u32, seed, &mut m) };
    assert_eq!(s, MeterStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn counts_match_core() {
    let m = build(MeterVariant::Xxs, 1);
    let (mut params, mut macs) = (0u64, 0u64);
    unsafe {
        assert_eq!(meter_model_param_count(m, &mut params), MeterStatus::Ok);
        assert_eq!(meter_model_mac_count(m, 256, 192, &mut macs), MeterStatus::Ok);
        meter_model_free(m);
    }
    assert_eq!(params, 705_977);
    assert_eq!(macs, 182_642_688);
}

#[test]
fn infer_and_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.bin").to_str().unwrap()).unwrap();
    let m = build(MeterVariant::Xxs, 5);
    let (w, h) = (64usize, 32usize);
    let rgb: Vec<f32> = (0..3 * w * h).map(|i| (i % 17) as f32 / 17.0).collect();
    let (mut ow, mut oh) = (0usize, 0usize);
    unsafe {
        assert_eq!(meter_output_size(w, h, &mut ow, &mut oh), MeterStatus::Ok);
        assert_eq!((ow, oh), (32, 16));
        let mut a = vec![0f32; ow * oh];
        assert_eq!(meter_model_infer(m, rgb.as_ptr(), w, h, a.as_mut_ptr(), a.len()), MeterStatus::Ok);
        assert!(a.iter().all(|v| v.is_finite() && (1e-3..=10.0).contains(v)));

        assert_eq!(meter_model_save(m, path.as_ptr()), MeterStatus::Ok);
        let mut loaded = ptr::null_mut();
        let s = meter_model_load(path.as_ptr(), MeterVariant::Xxs as u32, MeterActivation::Relu as u32, &mut loaded);
        assert_eq!(s, MeterStatus::Ok);
        let mut b = vec![0f32; ow * oh];
        assert_eq!(meter_model_infer(loaded, rgb.as_ptr(), w, h, b.as_mut_ptr(), b.len()), MeterStatus::Ok);
        assert_eq!(a, b);

        let mut wrong = ptr::null_mut();
        let s = meter_model_load(path.as_ptr(), MeterVariant::S as u32, MeterActivation::Relu as u32, &mut wrong);
        assert_eq!(s, MeterStatus::VariantMismatch);
        assert!(wrong.is_null());
        assert!(last_error().contains("variant mismatch"), "{}", last_error());

        meter_model_free(loaded);
        meter_model_free(m);
    }
}

#[test]
fn argument_errors() {
    let m = build(MeterVariant::Xxs, 2);
    let rgb = vec![0.5f32; 3 * 64 * 32];
    let mut small = vec![0f32; 10];
    unsafe {
        let s = meter_model_infer(m, rgb.as_ptr(), 64, 32, small.as_mut_ptr(), small.len());
        assert_eq!(s, MeterStatus::BufferTooSmall);
        assert!(meter_last_error_length() > 0);
        let s = meter_model_infer(m, rgb.as_ptr(), 31, 30, small.as_mut_ptr(), small.len());
        assert_eq!(s, MeterStatus::Config);
        assert_eq!(meter_model_param_count(ptr::null(), &mut 0), MeterStatus::NullPointer);
        let mut out = ptr::null_mut();
        assert_eq!(meter_model_build(7, 0, 0, &mut out), MeterStatus::InvalidArgument);
        let missing = CString::new("/nonexistent/w.bin").unwrap();
        assert_eq!(meter_model_load(missing.as_ptr(), 0, 0, &mut out), MeterStatus::Io);
        meter_model_free(ptr::null_mut());
        meter_model_free(m);
    }
    let mut tiny = [0 as c_char; 4];
    let n = unsafe { meter_last_error(tiny.as_mut_ptr(), tiny.len()) };
    assert_eq!(n, 3);
    assert_eq!(tiny[3], 0);
}

#[test]
fn success_clears_error() {
    let mut out = ptr::null_mut();
    unsafe {
        meter_model_build(9, 0, 0, &mut out);
        assert!(meter_last_error_length() > 0);
        let m = build(MeterVariant::Xxs, 0);
        assert_eq!(meter_last_error_length(), 0);
        meter_model_free(m);
        let v = CStr::from_ptr(meter_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"meter.h\"\nint main(void) { MeterModel *m = 0; size_t w, h;\n\
         MeterStatus s = meter_output_size(256, 192, &w, &h); (void)m;\n\
         return s == METER_STATUS_OK && w == 128 && h == 96 ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .status()
        {
            Ok(s) => s,
            Err(_) => {
                eprintln!("{compiler} not available, skipping");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected meter.h");
    }
}
