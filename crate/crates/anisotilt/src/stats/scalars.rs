//! Fried parameter, isoplanatic angle and one-axis tilt variance.

use serde::Serialize;

use super::tilt::{tilt_correlations_with, TiltQuadrature};
use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;

const FIVE_THIRDS: f64 = 5.0 / 3.0;

/// Segments `(z0, z1, c0, c1)` on which the profile is linear.
fn linear_segments(profile: &Cn2Profile, l: f64) -> Vec<(f64, f64, f64, f64)> {
    match profile {
        Cn2Profile::Constant { value } => vec![(0.0, l, *value, *value)],
        Cn2Profile::Linear { at_source, at_aperture } => vec![(0.0, l, *at_source, *at_aperture)],
        Cn2Profile::Sampled { z, values } => z
            .windows(2)
            .zip(values.windows(2))
            .map(|(zw, vw)| (zw[0], zw[1], vw[0], vw[1]))
            .collect(),
    }
}

/// ∫ (α + β x) x^p dx over [x0, x1], exact.
fn linear_power_moment(alpha: f64, beta: f64, p: f64, x0: f64, x1: f64) -> f64 {
    let prim = |x: f64| alpha * x.powf(p + 1.0) / (p + 1.0) + beta * x.powf(p + 2.0) / (p + 2.0);
    prim(x1) - prim(x0)
}

/// ∫₀ᴸ Cn²(z) (z/L)^(5/3) dz, exact for piecewise-linear profiles.
pub fn source_weighted_moment(profile: &Cn2Profile, l: f64) -> f64 {
    linear_segments(profile, l)
        .into_iter()
        .map(|(z0, z1, c0, c1)| {
            let beta = (c1 - c0) / (z1 - z0);
            let alpha = c0 - beta * z0;
            linear_power_moment(alpha, beta, FIVE_THIRDS, z0, z1)
        })
        .sum::<f64>()
        / l.powf(FIVE_THIRDS)
}

/// ∫₀ᴸ Cn²(z) (L − z)^(5/3) dz, exact for piecewise-linear profiles.
pub fn aperture_weighted_moment(profile: &Cn2Profile, l: f64) -> f64 {
    linear_segments(profile, l)
        .into_iter()
        .map(|(z0, z1, c0, c1)| {
            // In y = L − z the value is linear too.
            let (y0, y1) = (l - z1, l - z0);
            let beta = (c0 - c1) / (y1 - y0);
            let alpha = c1 - beta * y0;
            linear_power_moment(alpha, beta, FIVE_THIRDS, y0, y1)
        })
        .sum()
}

/// Spherical-wave Fried parameter (m).
pub fn fried_parameter(cfg: &OpticalConfig, profile: &Cn2Profile) -> Result<f64> {
    cfg.validate()?;
    profile.validate(cfg.path_length)?;
    let k = cfg.wavenumber();
    let m = source_weighted_moment(profile, cfg.path_length);
    if !(m > 0.0) {
        return Err(Error::ZeroTurbulence("the Fried parameter"));
    }
    Ok((0.423 * k * k * m).powf(-0.6))
}

/// Isoplanatic angle in radians and pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsoplanaticAngle {
    pub radians: f64,
    pub pixels: f64,
}

pub fn isoplanatic_angle(cfg: &OpticalConfig, profile: &Cn2Profile) -> Result<IsoplanaticAngle> {
    cfg.validate()?;
    profile.validate(cfg.path_length)?;
    let k = cfg.wavenumber();
    let m = aperture_weighted_moment(profile, cfg.path_length);
    if !(m > 0.0) {
        return Err(Error::ZeroTurbulence("the isoplanatic angle"));
    }
    let radians = (2.91 * k * k * m).powf(-0.6);
    Ok(IsoplanaticAngle {
        radians,
        pixels: cfg.rad_to_px(radians),
    })
}

/// One-axis tilt variance in both unit systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltVariance {
    pub rad2: f64,
    pub px2: f64,
}

impl TiltVariance {
    pub fn rms_px(&self) -> f64 {
        self.px2.sqrt()
    }
}

/// Single-axis tilt variance, half the total correlation at zero separation.
pub fn tilt_variance(cfg: &OpticalConfig, profile: &Cn2Profile) -> Result<TiltVariance> {
    let (d, _) = tilt_correlations_with(cfg, profile, 0.0, &TiltQuadrature::default())?;
    let rad2 = d.parallel;
    Ok(TiltVariance {
        rad2,
        px2: cfg.rad2_to_px2(rad2),
    })
}
