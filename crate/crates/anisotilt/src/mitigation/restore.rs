//! Wiener deconvolution of the fused image with the registration-aware OTF.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::optics::OpticalConfig;
use crate::otf::OtfModel;

/// Mirror padding around the image before the FFT.
const RESTORE_PAD: usize = 32;

/// Applies `H / (H² + Γ)` for a real radial OTF given in cycles/px.
pub fn wiener_filter(img: &Image, otf: impl Fn(f64) -> f64, gamma: f64) -> Result<Image> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid(format!("noise-to-signal ratio must be >= 0, got {gamma}")));
    }
    let pad = RESTORE_PAD.min(img.rows().min(img.cols()));
    Ok(img.filter_frequency(pad, |fx, fy| {
        let h = otf(fx.hypot(fy));
        let den = h * h + gamma;
        Complex64::new(if den == 0.0 { 0.0 } else { h / den }, 0.0)
    }))
}

/// Wiener restoration with the diffraction × short-exposure × residual-tilt OTF for Fried
/// parameter `r0` and tilt correction factor `alpha`. `clip` bounds the output and is
/// applied last.
pub fn wiener_restore(
    fused: &Image,
    optics: &OpticalConfig,
    r0: f64,
    alpha: f64,
    gamma: f64,
    clip: Option<[f64; 2]>,
) -> Result<Image> {
    let model = OtfModel::new(*optics, r0, alpha)?;
    let pitch = optics.pixel_pitch;
    let out = wiener_filter(fused, |f| model.combined(f / pitch), gamma)?;
    Ok(match clip {
        Some([lo, hi]) => out.clamp(lo, hi),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Image {
        Image::from_fn(48, 40, |r, c| ((r as f64) * 0.3).sin() * 30.0 + ((c as f64) * 0.5).cos() * 20.0 + 100.0)
    }

    #[test]
    fn unit_otf_without_regularisation_is_identity() {
        let s = scene();
        let out = wiener_filter(&s, |_| 1.0, 0.0).unwrap();
        for (a, b) in s.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_otf_with_gamma_scales_uniformly() {
        let s = scene();
        let out = wiener_filter(&s, |_| 1.0, 0.001).unwrap();
        for (a, b) in s.data().iter().zip(out.data()) {
            assert!((b - a / 1.001).abs() < 1e-10);
        }
        assert!(wiener_filter(&s, |_| 1.0, -1.0).is_err());
    }

    #[test]
    fn clip_applies_last() {
        let cam = OpticalConfig::reference_camera();
        let s = scene();
        let out = wiener_restore(&s, &cam, 0.1, 0.5, 0.001, Some([90.0, 110.0])).unwrap();
        assert!(out.data().iter().all(|v| (90.0..=110.0).contains(v)));
        assert!(wiener_restore(&s, &cam, -1.0, 0.5, 0.001, None).is_err());
    }
}
