//! Isotropic power spectrum of the Z-tilt field.
//!
//! Tilt is the aperture-averaged gradient of the phase, so its cross-spectral density is
//! rank one: `S(q) = A(|q|) q̂ q̂ᵀ`. Each layer at range `z` contributes a Kolmogorov
//! spectrum seen through the Z-tilt filter of the spherical-wave footprint `D z / L`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;
use crate::quadrature::composite;
use crate::special::bessel_j;

const GAMMA_ONE_SIXTH: f64 = 5.566_316_001_780_236;
const GAMMA_ELEVEN_SIXTHS: f64 = 0.940_655_858_256_771_7;

/// Spectral amplitude that reproduces the phase structure function `2.91 k² Cn² r^(5/3)`
/// used by the correlation integrals. The exact Kolmogorov value would give 2.9144.
fn kolmogorov_constant() -> f64 {
    // ∫₀^∞ (1 − J₀(u)) u^(−8/3) du
    let hankel = GAMMA_ONE_SIXTH / ((5.0 / 3.0) * 2f64.powf(5.0 / 3.0) * GAMMA_ELEVEN_SIXTHS);
    2.91 / (8.0 * PI * PI * hankel)
}

const Q_MIN: f64 = 1e-6;
const Q_MAX: f64 = 2.0;
const TABLE_POINTS: usize = 1200;
const PANEL_NODES: usize = 24;

/// Radial tilt spectrum `A(q)` (px⁴, with `q` in cycles/px) tabulated on a log grid.
///
/// Per-axis covariance is `∫ A(|q|) q̂ₓ² cos(2π q·d) d²q`, so the one-axis variance is
/// `π ∫ A(q) q dq`.
#[derive(Debug, Clone)]
pub struct TiltSpectrum {
    log_q: Vec<f64>,
    log_a: Vec<f64>,
    /// `A ≈ low_coef · q^(−5/3)` below the table.
    low_coef: f64,
    /// Log-log slope beyond the table.
    high_slope: f64,
    zero: bool,
}

/// Quadrature over the path in `t`, where `z = L(1 − t³)`, with panels refined towards
/// both ends.
fn path_rule(levels: usize, per_panel: usize) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    breaks.extend((1..=levels / 3).rev().map(|k| 0.5f64.powi(k as i32)));
    breaks.extend((2..=levels).map(|k| 1.0 - 0.5f64.powi(k as i32)));
    breaks.push(1.0);
    composite(&breaks, per_panel)
}

fn layer_integral(cfg: &OpticalConfig, profile: &Cn2Profile, q: f64, rule: &[(f64, f64)]) -> f64 {
    let l = cfg.path_length;
    let xi = cfg.angle_per_pixel();
    let d = cfg.aperture_diameter;
    rule.iter()
        .map(|&(t, w)| {
            let t3 = t * t * t;
            let z = l * (1.0 - t3);
            let range = l * t3;
            let jac = 3.0 * l * t * t;
            let cn2 = profile.at(z, l);
            if cn2 == 0.0 || range == 0.0 {
                return 0.0;
            }
            let x = PI * d * q * z / (xi * l * range);
            let filt = if x < 1e-4 { x / 8.0 } else { bessel_j(2, x) / x };
            w * jac * cn2 * range.powf(5.0 / 3.0) * filt * filt
        })
        .sum()
}

/// Direct evaluation of `A(q)` without the table; the oracle for the tabulated form.
#[cfg(test)]
pub(crate) fn spectrum_direct(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    q: f64,
    levels: usize,
    per_panel: usize,
) -> f64 {
    let rule = path_rule(levels, per_panel);
    spectrum_prefactor(cfg) * q.powf(-11.0 / 3.0) * layer_integral(cfg, profile, q, &rule)
}

fn spectrum_prefactor(cfg: &OpticalConfig) -> f64 {
    let r = 0.5 * cfg.aperture_diameter;
    (2.0 * PI).powf(-2.0 / 3.0) * kolmogorov_constant() * 64.0 / (r * r)
        * cfg.angle_per_pixel().powf(-1.0 / 3.0)
}

impl TiltSpectrum {
    pub fn new(cfg: &OpticalConfig, profile: &Cn2Profile) -> Result<Self> {
        Self::with_resolution(cfg, profile, 24, PANEL_NODES)
    }

    pub(crate) fn with_resolution(
        cfg: &OpticalConfig,
        profile: &Cn2Profile,
        levels: usize,
        per_panel: usize,
    ) -> Result<Self> {
        use rayon::prelude::*;
        cfg.validate()?;
        profile.validate(cfg.path_length)?;
        let n = TABLE_POINTS;
        let (lo, hi) = (Q_MIN.ln(), Q_MAX.ln());
        let log_q: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        if profile.is_zero() {
            return Ok(Self { log_q, log_a: vec![0.0; n], low_coef: 0.0, high_slope: 0.0, zero: true });
        }
        let rule = path_rule(levels, per_panel);
        let pre = spectrum_prefactor(cfg);
        let a: Vec<f64> = log_q
            .par_iter()
            .map(|&lq| {
                let q = lq.exp();
                pre * q.powf(-11.0 / 3.0) * layer_integral(cfg, profile, q, &rule)
            })
            .collect();
        if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::SpectralValidity { fraction: 1.0 });
        }
        let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
        let low_coef = a[0] * Q_MIN.powf(5.0 / 3.0);
        let high_slope = (log_a[n - 1] - log_a[n - 2]) / (log_q[n - 1] - log_q[n - 2]);
        Ok(Self { log_q, log_a, low_coef, high_slope, zero: false })
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Coefficient `c` of the low-frequency asymptote `A ≈ c q^(−5/3)`.
    pub fn low_frequency_coefficient(&self) -> f64 {
        self.low_coef
    }

    pub fn at(&self, q: f64) -> f64 {
        if self.zero || q <= 0.0 {
            return if self.zero { 0.0 } else { f64::INFINITY };
        }
        if q <= Q_MIN {
            return self.low_coef * q.powf(-5.0 / 3.0);
        }
        let lq = q.ln();
        let n = self.log_q.len();
        if lq >= self.log_q[n - 1] {
            return (self.log_a[n - 1] + self.high_slope * (lq - self.log_q[n - 1])).exp();
        }
        let step = self.log_q[1] - self.log_q[0];
        let pos = (lq - self.log_q[0]) / step;
        let i = (pos.floor() as usize).min(n - 2);
        let f = pos - i as f64;
        (self.log_a[i] * (1.0 - f) + self.log_a[i + 1] * f).exp()
    }

    /// One-axis variance `π ∫ A q dq` (px²).
    pub fn axis_variance(&self) -> f64 {
        if self.zero {
            return 0.0;
        }
        let n = self.log_q.len();
        let step = self.log_q[1] - self.log_q[0];
        // Trapezoid in ln q on A q².
        let body: f64 = (0..n)
            .map(|i| {
                let q = self.log_q[i].exp();
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * self.log_a[i].exp() * q * q
            })
            .sum::<f64>()
            * step;
        let below = self.low_coef * 3.0 * Q_MIN.powf(1.0 / 3.0);
        let q_end = self.log_q[n - 1].exp();
        let a_end = self.log_a[n - 1].exp();
        // ∫_{q_end}^∞ a_end (q/q_end)^s q dq, finite for s < −2.
        let above = if self.high_slope < -2.0 {
            -a_end * q_end * q_end / (self.high_slope + 2.0)
        } else {
            f64::INFINITY
        };
        PI * (body + below + above)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_constant_value() {
        assert!((kolmogorov_constant() - 0.0329558).abs() < 1e-7);
    }

    #[test]
    fn low_frequency_slope_is_minus_five_thirds() {
        let cfg = OpticalConfig::reference_camera();
        let p = Cn2Profile::constant(1e-15);
        // The approach to the limit carries a relative correction of order q^(2/3).
        let slope = |q: f64| {
            let a1 = spectrum_direct(&cfg, &p, q, 24, PANEL_NODES);
            let a2 = spectrum_direct(&cfg, &p, 2.0 * q, 24, PANEL_NODES);
            (a2 / a1).ln() / 2f64.ln() + 5.0 / 3.0
        };
        let (far, near) = (slope(1e-5), slope(1e-8));
        assert!(near.abs() < 1e-3 && near.abs() < 0.1 * far.abs(), "{far} {near}");
    }

    #[test]
    fn path_rule_converges() {
        let cfg = OpticalConfig::reference_camera();
        let p = Cn2Profile::linear_with_mean(1e-15, 0.5e-15);
        // Far above the cutoff the under-resolved oscillatory tail matters at the 1e-4 level,
        // where A is ten orders below its low-frequency values.
        for (q, tol) in [(1e-4, 2e-5), (1e-2, 2e-5), (0.3, 2e-5), (1.9, 1e-4)] {
            let a = spectrum_direct(&cfg, &p, q, 24, PANEL_NODES);
            let b = spectrum_direct(&cfg, &p, q, 30, 32);
            assert!((a / b - 1.0).abs() < tol, "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn linear_in_cn2() {
        let cfg = OpticalConfig::reference_camera();
        let a = TiltSpectrum::new(&cfg, &Cn2Profile::constant(1e-15)).unwrap();
        let b = TiltSpectrum::new(&cfg, &Cn2Profile::constant(2.5e-16)).unwrap();
        for q in [1e-7, 1e-3, 0.1, 3.0] {
            assert!((a.at(q) / b.at(q) - 4.0).abs() < 1e-9);
        }
        let z = TiltSpectrum::new(&cfg, &Cn2Profile::constant(0.0)).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.axis_variance(), 0.0);
    }
}
