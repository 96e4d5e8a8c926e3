use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-6;

/// Imaging geometry: aperture, focal length, wavelength, path length and pixel sampling.
///
/// All lengths are in metres. The f-number and the angle subtended by one pixel are
/// optional; when absent they are derived as `l / D` and `δ / l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    pub aperture_diameter: f64,
    pub focal_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_number: Option<f64>,
    pub wavelength: f64,
    pub path_length: f64,
    pub pixel_pitch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_angle: Option<f64>,
}

impl OpticalConfig {
    /// Validated constructor with derived f-number and pixel angle.
    pub fn new(
        aperture_diameter: f64,
        focal_length: f64,
        wavelength: f64,
        path_length: f64,
        pixel_pitch: f64,
    ) -> Result<Self> {
        let cfg = Self {
            aperture_diameter,
            focal_length,
            f_number: None,
            wavelength,
            path_length,
            pixel_pitch,
            pixel_angle: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 0.2034 m aperture, 1.2 m focal length, 7 km path camera used throughout the
    /// examples and tests. The quoted f/5.9 is `l / D` rounded to two digits, so the
    /// f-number is left to be derived.
    pub fn reference_camera() -> Self {
        Self {
            aperture_diameter: 0.2034,
            focal_length: 1.2,
            f_number: None,
            wavelength: 0.525e-6,
            path_length: 7000.0,
            pixel_pitch: 1.5488e-6,
            pixel_angle: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let required = [
            ("aperture_diameter", self.aperture_diameter),
            ("focal_length", self.focal_length),
            ("wavelength", self.wavelength),
            ("path_length", self.path_length),
            ("pixel_pitch", self.pixel_pitch),
        ];
        for (name, v) in required {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(f) = self.f_number {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::invalid(format!("f_number must be positive, got {f}")));
            }
            let derived = self.focal_length / self.aperture_diameter;
            if ((f - derived) / derived).abs() > CONSISTENCY_TOL {
                return Err(Error::invalid(format!(
                    "f_number {f} disagrees with focal_length / aperture_diameter = {derived}"
                )));
            }
        }
        if let Some(xi) = self.pixel_angle {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::invalid(format!("pixel_angle must be positive, got {xi}")));
            }
            let pitch = xi * self.focal_length;
            if ((pitch - self.pixel_pitch) / self.pixel_pitch).abs() > CONSISTENCY_TOL {
                return Err(Error::invalid(format!(
                    "pixel_angle * focal_length = {pitch} disagrees with pixel_pitch {}",
                    self.pixel_pitch
                )));
            }
        }
        if self.aperture_diameter < (self.path_length * self.wavelength).sqrt() {
            log::warn!(
                "aperture {} m is below sqrt(L*lambda) = {:.4} m; the near-field OTF model is questionable",
                self.aperture_diameter,
                (self.path_length * self.wavelength).sqrt()
            );
        }
        Ok(())
    }

    pub fn f_number(&self) -> f64 {
        self.f_number
            .unwrap_or(self.focal_length / self.aperture_diameter)
    }

    /// Angle subtended by one pixel (rad).
    pub fn angle_per_pixel(&self) -> f64 {
        self.pixel_angle
            .unwrap_or(self.pixel_pitch / self.focal_length)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Diffraction cutoff in the focal plane (cycles/m).
    pub fn cutoff(&self) -> f64 {
        1.0 / (self.wavelength * self.f_number())
    }

    /// Diffraction cutoff in cycles per pixel.
    pub fn cutoff_per_pixel(&self) -> f64 {
        self.cutoff() * self.pixel_pitch
    }

    /// Converts a rad² quantity to px².
    pub fn rad2_to_px2(&self, v: f64) -> f64 {
        let xi = self.angle_per_pixel();
        v / (xi * xi)
    }

    pub fn px2_to_rad2(&self, v: f64) -> f64 {
        let xi = self.angle_per_pixel();
        v * xi * xi
    }

    pub fn rad_to_px(&self, theta: f64) -> f64 {
        theta / self.angle_per_pixel()
    }

    pub fn px_to_rad(&self, x: f64) -> f64 {
        x * self.angle_per_pixel()
    }

    /// Stable fingerprint for memoisation.
    pub(crate) fn key(&self) -> [u64; 7] {
        [
            self.aperture_diameter.to_bits(),
            self.focal_length.to_bits(),
            self.f_number().to_bits(),
            self.wavelength.to_bits(),
            self.path_length.to_bits(),
            self.pixel_pitch.to_bits(),
            self.angle_per_pixel().to_bits(),
        ]
    }
}
