use std::ffi::CStr;
use std::ptr;

use anisotilt_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { anisotilt_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn reference() -> *mut AnisotiltOptics {
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { anisotilt_optics_reference(&mut o) }, AnisotiltStatus::Ok);
    o
}

fn texture(rows: usize, cols: usize, shift: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64 - shift);
            100.0 + 40.0 * (0.31 * r).sin() * (0.23 * c).cos() + 20.0 * (0.11 * (r + 2.0 * c)).sin()
        })
        .collect()
}

#[test]
fn version_strings() {
    let v = unsafe { CStr::from_ptr(anisotilt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    assert_eq!(anisotilt_abi_version(), 1);
}

#[test]
fn stats_match_library() {
    let o = reference();
    let mut s = AnisotiltStats::default();
    assert_eq!(unsafe { anisotilt_stats(o, 1e-15, &mut s) }, AnisotiltStatus::Ok);
    assert!((s.r0_m - 0.0478).abs() < 3e-4);
    assert!((s.rms_tilt_px * s.rms_tilt_px - s.tilt_variance_px2).abs() < 1e-12);
    let mut b = AnisotiltBudget::default();
    assert_eq!(unsafe { anisotilt_patch_budget(o, 1e-15, 100, 0.0, &mut b) }, AnisotiltStatus::Ok);
    assert!((b.patch_variance_px2 - 5.3333).abs() / 5.3333 < 0.01);
    assert!(b.alpha > 0.0 && b.alpha < 1.0);
    unsafe { anisotilt_optics_free(o) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut o = ptr::null_mut();
    let st = unsafe { anisotilt_optics_new(-1.0, 1.2, 0.525e-6, 7000.0, 1.5e-6, &mut o) };
    assert_eq!(st, AnisotiltStatus::Usage);
    assert!(o.is_null());
    assert!(last_error().contains("invalid parameter"));

    let mut s = AnisotiltStats::default();
    assert_eq!(unsafe { anisotilt_stats(ptr::null(), 1e-15, &mut s) }, AnisotiltStatus::NullPointer);
    assert_eq!(last_error(), "optics is NULL");

    let o = reference();
    assert_eq!(unsafe { anisotilt_stats(o, 0.0, &mut s) }, AnisotiltStatus::Numerical);

    let mut seq = ptr::null_mut();
    assert_eq!(unsafe { anisotilt_sequence_new(16, 16, &mut seq) }, AnisotiltStatus::Ok);
    let mut est = AnisotiltEstimate::default();
    let st = unsafe { anisotilt_estimate_r0(seq, o, AnisotiltRegistration::None, 0, &mut est) };
    assert_eq!(st, AnisotiltStatus::Data);
    let short = vec![0.0; 10];
    assert_eq!(unsafe { anisotilt_sequence_push(seq, short.as_ptr(), short.len()) }, AnisotiltStatus::Usage);
    assert_eq!(unsafe { anisotilt_sequence_len(seq) }, 0);
    unsafe {
        anisotilt_sequence_free(seq);
        anisotilt_optics_free(o);
        anisotilt_optics_free(ptr::null_mut());
        anisotilt_sequence_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let mut s = AnisotiltStats::default();
    unsafe { anisotilt_stats(ptr::null(), 1e-15, &mut s) };
    let mut buf = [0x7f as std::ffi::c_char; 4];
    let n = unsafe { anisotilt_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, "optics is NULL".len());
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "opt");
    assert_eq!(unsafe { anisotilt_last_error(ptr::null_mut(), 0) }, n);
}

#[test]
fn mitigate_through_handles() {
    let (rows, cols) = (48, 48);
    let o = reference();
    let mut seq = ptr::null_mut();
    assert_eq!(unsafe { anisotilt_sequence_new(rows, cols, &mut seq) }, AnisotiltStatus::Ok);
    for k in 0..6 {
        let f = texture(rows, cols, (k % 3) as f64 - 1.0);
        assert_eq!(unsafe { anisotilt_sequence_push(seq, f.as_ptr(), f.len()) }, AnisotiltStatus::Ok);
    }
    assert_eq!(unsafe { anisotilt_sequence_len(seq) }, 6);

    let mut small = vec![0.0; 10];
    let st = unsafe {
        anisotilt_mitigate(seq, o, AnisotiltRegistration::Global, 4, 3, 1e-3, 0.07, small.as_mut_ptr(), small.len(), ptr::null_mut())
    };
    assert_eq!(st, AnisotiltStatus::BufferTooSmall);

    let mut out = vec![f64::NAN; rows * cols];
    let mut alpha = -1.0;
    for reg in [AnisotiltRegistration::None, AnisotiltRegistration::Global, AnisotiltRegistration::Bma] {
        let st = unsafe { anisotilt_mitigate(seq, o, reg, 4, 3, 1e-3, 0.07, out.as_mut_ptr(), out.len(), &mut alpha) };
        assert_eq!(st, AnisotiltStatus::Ok, "{reg:?}");
        assert!(out.iter().all(|v| v.is_finite()));
        assert!((0.0..1.0).contains(&alpha));
        if reg == AnisotiltRegistration::None {
            assert_eq!(alpha, 0.0);
        }
    }
    unsafe {
        anisotilt_sequence_free(seq);
        anisotilt_optics_free(o);
    }
}

#[test]
fn config_validation() {
    let good = c"[optics]\naperture_diameter = 0.2034\nfocal_length = 1.2\nwavelength = 0.525e-6\npath_length = 7000.0\npixel_pitch = 1.5488e-6\n";
    assert_eq!(unsafe { anisotilt_config_validate(good.as_ptr()) }, AnisotiltStatus::Ok);
    let bad = c"[optics]\naperture_diameter = 0.2034\n";
    assert_eq!(unsafe { anisotilt_config_validate(bad.as_ptr()) }, AnisotiltStatus::Usage);
    assert_eq!(unsafe { anisotilt_config_validate(ptr::null()) }, AnisotiltStatus::NullPointer);
}
