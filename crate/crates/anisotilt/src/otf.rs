//! Composite turbulence OTF parameterised by Fried parameter and tilt correction factor,
//! and the Wiener restoration gain.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::optics::OpticalConfig;

/// Circular-aperture diffraction OTF at focal-plane frequency `rho` (cycles/m).
pub fn otf_diffraction(rho: f64, cfg: &OpticalConfig) -> f64 {
    let x = rho.abs() / cfg.cutoff();
    if x >= 1.0 {
        return 0.0;
    }
    if x == 0.0 {
        return 1.0;
    }
    (2.0 / PI) * (x.acos() - x * (1.0 - x * x).sqrt())
}

fn turbulence_exponent(rho: f64, cfg: &OpticalConfig, r0: f64) -> f64 {
    3.44 * (cfg.wavelength * cfg.focal_length * rho.abs() / r0).powf(5.0 / 3.0)
}

/// Near-field short-exposure (tilt-removed) atmospheric OTF.
pub fn otf_short_exposure(rho: f64, cfg: &OpticalConfig, r0: f64) -> f64 {
    let bracket = 1.0
        - (cfg.wavelength * cfg.focal_length * rho.abs() / cfg.aperture_diameter).powf(1.0 / 3.0);
    (-turbulence_exponent(rho, cfg, r0) * bracket.max(0.0)).exp()
}

/// Long-exposure atmospheric OTF, tilt included.
pub fn otf_long_exposure(rho: f64, cfg: &OpticalConfig, r0: f64) -> f64 {
    (-turbulence_exponent(rho, cfg, r0)).exp()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha > 1.0 {
        return Err(Error::invalid(format!("tilt correction factor must be <= 1, got {alpha}")));
    }
    Ok(())
}

fn check_r0(r0: f64) -> Result<()> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::invalid(format!("Fried parameter must be positive, got {r0}")));
    }
    Ok(())
}

/// Variance (cycles²/m²) of the Gaussian residual-tilt OTF; infinite at α = 1.
pub fn tilt_otf_variance(cfg: &OpticalConfig, r0: f64, alpha: f64) -> Result<f64> {
    check_r0(r0)?;
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(f64::INFINITY);
    }
    let ll = cfg.wavelength * cfg.focal_length;
    Ok(r0.powf(5.0 / 3.0) * cfg.aperture_diameter.powf(1.0 / 3.0)
        / (6.88 * (1.0 - alpha) * ll * ll))
}

/// Gaussian OTF of the residual tilt left after registration with factor `alpha`.
pub fn gaussian_tilt_otf(rho: f64, cfg: &OpticalConfig, r0: f64, alpha: f64) -> Result<f64> {
    let var = tilt_otf_variance(cfg, r0, alpha)?;
    if var.is_infinite() {
        return Ok(1.0);
    }
    Ok((-rho * rho / (2.0 * var)).exp())
}

/// Diffraction × short exposure × residual tilt.
pub fn otf_combined(rho: f64, cfg: &OpticalConfig, r0: f64, alpha: f64) -> Result<f64> {
    Ok(otf_diffraction(rho, cfg)
        * otf_short_exposure(rho, cfg, r0)
        * gaussian_tilt_otf(rho, cfg, r0, alpha)?)
}

/// Radial OTF for fixed optics, Fried parameter and tilt correction factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OtfModel {
    pub optics: OpticalConfig,
    pub r0: f64,
    pub alpha: f64,
}

impl OtfModel {
    pub fn new(optics: OpticalConfig, r0: f64, alpha: f64) -> Result<Self> {
        optics.validate()?;
        check_r0(r0)?;
        check_alpha(alpha)?;
        Ok(Self { optics, r0, alpha })
    }

    /// Cutoff frequency (cycles/m).
    pub fn cutoff(&self) -> f64 {
        self.optics.cutoff()
    }

    /// σ_G² (cycles²/m²).
    pub fn tilt_variance_freq(&self) -> f64 {
        tilt_otf_variance(&self.optics, self.r0, self.alpha).expect("validated in new")
    }

    /// σ_g² (m²) of the spatial Gaussian with the same shape.
    pub fn tilt_variance_spatial(&self) -> f64 {
        1.0 / (4.0 * PI * PI * self.tilt_variance_freq())
    }

    pub fn diffraction(&self, rho: f64) -> f64 {
        otf_diffraction(rho, &self.optics)
    }

    pub fn short_exposure(&self, rho: f64) -> f64 {
        otf_short_exposure(rho, &self.optics, self.r0)
    }

    pub fn long_exposure(&self, rho: f64) -> f64 {
        otf_long_exposure(rho, &self.optics, self.r0)
    }

    pub fn tilt(&self, rho: f64) -> f64 {
        let var = self.tilt_variance_freq();
        if var.is_infinite() {
            1.0
        } else {
            (-rho * rho / (2.0 * var)).exp()
        }
    }

    pub fn combined(&self, rho: f64) -> f64 {
        self.diffraction(rho) * self.short_exposure(rho) * self.tilt(rho)
    }

    /// Samples the combined OTF on the unshifted FFT grid of a `rows × cols` image whose
    /// pixels have pitch `pitch` (m).
    pub fn sample_grid(&self, rows: usize, cols: usize, pitch: f64) -> Vec<f64> {
        sample_radial(rows, cols, pitch, |rho| self.combined(rho))
    }
}

/// FFT-order frequency of bin `k` out of `n` (cycles per sample).
pub fn fft_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < (n_f / 2.0).ceil() {
        k / n_f
    } else {
        (k - n_f) / n_f
    }
}

/// Evaluates a radial function of focal-plane frequency (cycles/m) on the FFT grid.
pub fn sample_radial(rows: usize, cols: usize, pitch: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let fy: Vec<f64> = (0..rows).map(|k| fft_frequency(k, rows)).collect();
    let fx: Vec<f64> = (0..cols).map(|k| fft_frequency(k, cols)).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for &v in &fy {
        for &u in &fx {
            out.push(f((u * u + v * v).sqrt() / pitch));
        }
    }
    out
}

/// Spatial PSF on an `n × n` grid of spacing `pitch` (m), centred at `(n/2, n/2)` and
/// normalised to unit sum.
pub fn psf_spatial(cfg: &OpticalConfig, r0: f64, alpha: f64, n: usize, pitch: f64) -> Result<Vec<f64>> {
    let model = OtfModel::new(*cfg, r0, alpha)?;
    let sampling = 1.0 / pitch;
    // Allow the sampling to sit a hair under Nyquist, as it does for the reference camera.
    if sampling < 2.0 * cfg.cutoff() * (1.0 - 1e-3) {
        return Err(Error::Aliasing { sampling, cutoff: cfg.cutoff() });
    }
    if n < 2 {
        return Err(Error::invalid("PSF grid needs at least 2 samples per side"));
    }
    let otf = model.sample_grid(n, n, pitch);
    let mut spec: Vec<Complex64> = otf.iter().map(|&h| Complex64::new(h, 0.0)).collect();
    let fft = Fft2::new(n, n);
    fft.inverse(&mut spec);
    let mut psf = vec![0.0; n * n];
    let c = n / 2;
    for y in 0..n {
        for x in 0..n {
            psf[((y + c) % n) * n + (x + c) % n] = spec[y * n + x].re;
        }
    }
    let sum: f64 = psf.iter().sum();
    psf.iter_mut().for_each(|v| *v /= sum);
    Ok(psf)
}

/// Wiener gain H* / (|H|² + Γ); with Γ = 0 bins where H vanishes get zero gain.
pub fn wiener_transfer(h: &[Complex64], gamma: f64) -> Result<Vec<Complex64>> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid(format!("noise-to-signal ratio must be >= 0, got {gamma}")));
    }
    Ok(h.iter()
        .map(|&v| {
            let den = v.norm_sqr() + gamma;
            if den == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                v.conj() / den
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> OpticalConfig {
        OpticalConfig::reference_camera()
    }

    #[test]
    fn diffraction_values() {
        let c = cam();
        assert_eq!(otf_diffraction(0.0, &c), 1.0);
        assert_eq!(otf_diffraction(c.cutoff(), &c), 0.0);
        let half = otf_diffraction(0.5 * c.cutoff(), &c);
        let want = (2.0 / PI) * (0.5f64.acos() - 0.5 * 0.75f64.sqrt());
        assert!((half - want).abs() < 1e-15);
        assert!((half - 0.3910).abs() < 1e-4);
    }

    #[test]
    fn short_exposure_is_one_at_both_ends() {
        let c = cam();
        assert_eq!(otf_short_exposure(0.0, &c, 0.05), 1.0);
        let rho_d = c.aperture_diameter / (c.wavelength * c.focal_length);
        assert!((otf_short_exposure(rho_d, &c, 0.05) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilt_otf_limits() {
        let c = cam();
        assert_eq!(gaussian_tilt_otf(1e5, &c, 0.05, 1.0).unwrap(), 1.0);
        assert_eq!(gaussian_tilt_otf(0.0, &c, 0.05, 0.3).unwrap(), 1.0);
        assert!(gaussian_tilt_otf(1e5, &c, 0.05, 1.2).is_err());
        let sg = tilt_otf_variance(&c, 0.1901, 0.0).unwrap().sqrt();
        assert!((sg / 1.164e5 - 1.0).abs() < 2e-3, "{sg}");
    }

    #[test]
    fn wiener_examples() {
        let g = wiener_transfer(&[Complex64::new(1.0, 0.0)], 0.0).unwrap();
        assert_eq!(g[0], Complex64::new(1.0, 0.0));
        let g = wiener_transfer(&[Complex64::new(0.5, 0.0)], 0.001).unwrap();
        assert!((g[0].re - 0.5 / 0.251).abs() < 1e-12);
        assert!((g[0].re - 1.9920).abs() < 1e-4);
        let g = wiener_transfer(&[Complex64::new(0.0, 0.0)], 0.0).unwrap();
        assert_eq!(g[0], Complex64::new(0.0, 0.0));
        assert!(wiener_transfer(&[], -1.0).is_err());
    }

    #[test]
    fn psf_requires_nyquist_sampling() {
        let c = cam();
        assert!(matches!(
            psf_spatial(&c, 0.05, 0.0, 64, 2.0 * c.pixel_pitch),
            Err(Error::Aliasing { .. })
        ));
        let psf = psf_spatial(&c, 0.05, 0.0, 64, c.pixel_pitch).unwrap();
        assert!((psf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = psf.iter().copied().fold(0.0, f64::max);
        assert_eq!(psf[32 * 64 + 32], peak);
    }

    #[test]
    fn fft_frequencies() {
        let f: Vec<f64> = (0..5).map(|k| fft_frequency(k, 5)).collect();
        assert_eq!(f, vec![0.0, 0.2, 0.4, -0.4, -0.2]);
        let f: Vec<f64> = (0..4).map(|k| fft_frequency(k, 4)).collect();
        assert_eq!(f, vec![0.0, 0.25, -0.5, -0.25]);
    }
}
