//! C ABI over the anisotilt library.
//!
//! Conventions:
//! - every fallible function returns an [`AnisotiltStatus`] and writes results through
//!   out-pointers, which are left untouched on failure;
//! - objects are opaque handles created by `*_new` and released by `*_free`
//!   (freeing NULL is a no-op);
//! - the message of the most recent failure on the calling thread is available from
//!   [`anisotilt_last_error`];
//! - images are row-major `double` buffers of `rows * cols` elements;
//! - enum arguments must hold one of their declared values;
//! - panics never cross the boundary and are reported as `ANISOTILT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use anisotilt::friedest::{estimate_r0, EstimatorOptions};
use anisotilt::image::Image;
use anisotilt::mitigation::{mitigate, MitigationConfig, RegistrationKind};
use anisotilt::profile::Cn2Profile;
use anisotilt::regmodel::{registration_budget, RegistrationSpec, QUANTIZATION_EPSILON};
use anisotilt::stats::{fried_parameter, isoplanatic_angle, tilt_variance};
use anisotilt::error::ErrorClass;
use anisotilt::{Error, ImageSequence, OpticalConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnisotiltStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Invalid parameter or configuration.
    Usage = 2,
    /// Unreadable, malformed or insufficient input data.
    Data = 3,
    /// A numerical procedure failed.
    Numerical = 4,
    /// A caller-supplied buffer is too small.
    BufferTooSmall = 5,
    /// Internal panic; the library state is unchanged.
    Panic = 6,
}

/// Registration applied before fusion or estimation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnisotiltRegistration {
    None = 0,
    Global = 1,
    Bma = 2,
}

/// Opaque optical configuration.
pub struct AnisotiltOptics(OpticalConfig);

/// Opaque frame sequence under construction or ready for processing.
pub struct AnisotiltSequence {
    rows: usize,
    cols: usize,
    frames: Vec<Image>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AnisotiltStats {
    pub r0_m: f64,
    pub d_over_r0: f64,
    pub isoplanatic_angle_px: f64,
    pub tilt_variance_px2: f64,
    pub rms_tilt_px: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AnisotiltBudget {
    pub tilt_variance_px2: f64,
    pub patch_variance_px2: f64,
    pub residual_variance_px2: f64,
    pub alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AnisotiltEstimate {
    pub r0_m: f64,
    /// Gaussian tilt-OTF width, cycles/m.
    pub sigma_g: f64,
    pub alpha: f64,
    pub fit_rms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AnisotiltStatus {
    match e.class() {
        ErrorClass::Usage => AnisotiltStatus::Usage,
        ErrorClass::Data => AnisotiltStatus::Data,
        ErrorClass::Numerical => AnisotiltStatus::Numerical,
    }
}

enum Failure {
    Status(AnisotiltStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(AnisotiltStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AnisotiltStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AnisotiltStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            AnisotiltStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn spec_for(kind: AnisotiltRegistration, half_width: usize) -> RegistrationSpec {
    match kind {
        AnisotiltRegistration::None => RegistrationSpec::None,
        AnisotiltRegistration::Global => RegistrationSpec::Global { epsilon: 0.0 },
        AnisotiltRegistration::Bma => RegistrationSpec::Bma { half_width, epsilon: QUANTIZATION_EPSILON },
    }
}

fn build_sequence(seq: &AnisotiltSequence) -> Result<ImageSequence, Failure> {
    Ok(ImageSequence::new(seq.frames.clone())?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn anisotilt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated, always
/// NUL-terminated when `len > 0`) and returns the full message length excluding the NUL.
/// Returns 0 if no error has occurred.
///
/// # Safety
/// `buf` must be NULL or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates an optical configuration (all lengths in metres).
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_optics_new(
    aperture_diameter: f64,
    focal_length: f64,
    wavelength: f64,
    path_length: f64,
    pixel_pitch: f64,
    out: *mut *mut AnisotiltOptics,
) -> AnisotiltStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = OpticalConfig::new(aperture_diameter, focal_length, wavelength, path_length, pixel_pitch)?;
        write_out(out, Box::into_raw(Box::new(AnisotiltOptics(cfg))), "out")
    })
}

/// The built-in reference camera.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_optics_reference(out: *mut *mut AnisotiltOptics) -> AnisotiltStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, Box::into_raw(Box::new(AnisotiltOptics(OpticalConfig::reference_camera()))), "out")
    })
}

/// # Safety
/// `optics` must be NULL or a handle from `anisotilt_optics_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_optics_free(optics: *mut AnisotiltOptics) {
    if !optics.is_null() {
        drop(Box::from_raw(optics));
    }
}

/// Turbulence statistics for a constant Cn² (m^(-2/3)) path.
///
/// # Safety
/// `optics` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_stats(
    optics: *const AnisotiltOptics,
    cn2: f64,
    out: *mut AnisotiltStats,
) -> AnisotiltStatus {
    guard(|| {
        let cfg = &deref(optics, "optics")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let profile = Cn2Profile::constant(cn2);
        profile.validate(cfg.path_length)?;
        let r0 = fried_parameter(cfg, &profile)?;
        let theta = isoplanatic_angle(cfg, &profile)?;
        let tv = tilt_variance(cfg, &profile)?;
        write_out(
            out,
            AnisotiltStats {
                r0_m: r0,
                d_over_r0: cfg.aperture_diameter / r0,
                isoplanatic_angle_px: theta.pixels,
                tilt_variance_px2: tv.px2,
                rms_tilt_px: tv.rms_px(),
            },
            "out",
        )
    })
}

/// Tilt budget for `(2M+1)²` patch registration with error-to-signal ratio `epsilon`.
///
/// # Safety
/// `optics` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_patch_budget(
    optics: *const AnisotiltOptics,
    cn2: f64,
    half_width: usize,
    epsilon: f64,
    out: *mut AnisotiltBudget,
) -> AnisotiltStatus {
    guard(|| {
        let cfg = &deref(optics, "optics")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let profile = Cn2Profile::constant(cn2);
        profile.validate(cfg.path_length)?;
        let b = registration_budget(cfg, &profile, half_width, epsilon)?;
        write_out(
            out,
            AnisotiltBudget {
                tilt_variance_px2: b.sigma_t2,
                patch_variance_px2: b.sigma_p2,
                residual_variance_px2: b.sigma_r2,
                alpha: b.alpha,
            },
            "out",
        )
    })
}

/// Creates an empty sequence whose frames are `rows × cols`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_sequence_new(
    rows: usize,
    cols: usize,
    out: *mut *mut AnisotiltSequence,
) -> AnisotiltStatus {
    guard(|| {
        if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
            return Err(Failure::Status(AnisotiltStatus::Usage, format!("invalid frame shape {rows}x{cols}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, Box::into_raw(Box::new(AnisotiltSequence { rows, cols, frames: Vec::new() })), "out")
    })
}

/// Appends a copy of one row-major frame of `len` doubles (which must equal `rows * cols`).
///
/// # Safety
/// `seq` must be a live handle; `data` must be valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_sequence_push(
    seq: *mut AnisotiltSequence,
    data: *const f64,
    len: usize,
) -> AnisotiltStatus {
    guard(|| {
        let seq = seq.as_mut().ok_or_else(|| null("seq"))?;
        if data.is_null() {
            return Err(null("data"));
        }
        if len != seq.rows * seq.cols {
            return Err(Failure::Status(
                AnisotiltStatus::Usage,
                format!("frame has {len} samples, expected {}", seq.rows * seq.cols),
            ));
        }
        let frame = std::slice::from_raw_parts(data, len).to_vec();
        seq.frames.push(Image::new(seq.rows, seq.cols, frame)?);
        Ok(())
    })
}

/// Number of frames pushed so far; 0 for NULL.
///
/// # Safety
/// `seq` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_sequence_len(seq: *const AnisotiltSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.frames.len())
}

/// # Safety
/// `seq` must be NULL or a handle from `anisotilt_sequence_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_sequence_free(seq: *mut AnisotiltSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Spectral-ratio Fried parameter estimate with default estimator options.
/// `half_width` is only used for BMA registration.
///
/// # Safety
/// `seq` and `optics` must be live handles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_estimate_r0(
    seq: *const AnisotiltSequence,
    optics: *const AnisotiltOptics,
    registration: AnisotiltRegistration,
    half_width: usize,
    out: *mut AnisotiltEstimate,
) -> AnisotiltStatus {
    guard(|| {
        let seq = build_sequence(deref(seq, "seq")?)?;
        let cfg = &deref(optics, "optics")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let res = estimate_r0(&seq, &spec_for(registration, half_width), cfg, &EstimatorOptions::default())?;
        write_out(
            out,
            AnisotiltEstimate { r0_m: res.r0, sigma_g: res.sigma_g, alpha: res.alpha, fit_rms: res.fit_rms },
            "out",
        )
    })
}

/// Registers, fuses and Wiener-restores the sequence into `out` (`rows * cols` doubles).
/// `half_width` and `search_radius` only apply to BMA; `gamma` is the Wiener noise term.
/// `alpha_out` may be NULL.
///
/// # Safety
/// `seq` and `optics` must be live handles; `out` must be valid for `out_len` writes;
/// `alpha_out` must be NULL or valid for a write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn anisotilt_mitigate(
    seq: *const AnisotiltSequence,
    optics: *const AnisotiltOptics,
    registration: AnisotiltRegistration,
    half_width: usize,
    search_radius: usize,
    gamma: f64,
    r0: f64,
    out: *mut f64,
    out_len: usize,
    alpha_out: *mut f64,
) -> AnisotiltStatus {
    guard(|| {
        let handle = deref(seq, "seq")?;
        let cfg = &deref(optics, "optics")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < handle.rows * handle.cols {
            return Err(Failure::Status(
                AnisotiltStatus::BufferTooSmall,
                format!("output holds {out_len} samples, need {}", handle.rows * handle.cols),
            ));
        }
        let seq = build_sequence(handle)?;
        let mcfg = MitigationConfig {
            half_width,
            search_radius,
            gamma,
            registration: match registration {
                AnisotiltRegistration::None => RegistrationKind::None,
                AnisotiltRegistration::Global => RegistrationKind::Global,
                AnisotiltRegistration::Bma => RegistrationKind::Bma,
            },
            ..MitigationConfig::default()
        };
        mcfg.validate()?;
        let res = mitigate(&seq, cfg, &mcfg, r0)?;
        let data = res.restored.data();
        std::ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        if !alpha_out.is_null() {
            alpha_out.write(res.alpha);
        }
        Ok(())
    })
}

/// ABI revision; bumped on any incompatible change to this header.
#[no_mangle]
pub extern "C" fn anisotilt_abi_version() -> u32 {
    1
}

/// Validates a NUL-terminated TOML configuration string.
///
/// # Safety
/// `text` must be NULL or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn anisotilt_config_validate(text: *const c_char) -> AnisotiltStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Failure::Status(AnisotiltStatus::Usage, format!("config is not UTF-8: {e}")))?;
        anisotilt::imageio::parse_config(s)?;
        Ok(())
    })
}
