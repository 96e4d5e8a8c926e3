//! Gaussian tilt-field realisations on a periodic grid larger than the frame.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::corr2d::{Component, LagVector, TiltAutocorr2D};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::Image;
use crate::otf::fft_frequency;
use crate::quadrature::GaussLegendre;
use crate::rng::{complex_normal, normal, stream_rng};

use super::spectrum::TiltSpectrum;

/// Largest clamped share of spectral power tolerated by [`synth_tilt_fields`].
pub const MAX_CLAMPED_FRACTION: f64 = 0.05;

/// Grid bins within this Chebyshev radius of DC get cell-integrated moments.
const REFINED_RADIUS: i64 = 4;
const SUBHARMONIC_LEVELS: i32 = 3;
const CELL_NODES: usize = 8;

/// One realisation of the x and y tilt fields (px).
#[derive(Debug, Clone, PartialEq)]
pub struct TiltField {
    pub x: Image,
    pub y: Image,
}

impl TiltField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { x: Image::zeros(rows, cols), y: Image::zeros(rows, cols) }
    }

    pub fn constant(rows: usize, cols: usize, dx: f64, dy: f64) -> Self {
        Self {
            x: Image::from_fn(rows, cols, |_, _| dx),
            y: Image::from_fn(rows, cols, |_, _| dy),
        }
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }
}

/// Square root of a 2×2 covariance: columns `(ax, ay)` and `(bx, by)` such that
/// `X = ax W₁ + bx W₂`, `Y = ay W₁ + by W₂`. Negative eigenvalues are dropped and their
/// magnitude returned.
fn factor(xx: f64, yy: f64, xy: f64) -> ([f64; 4], f64) {
    let mean = 0.5 * (xx + yy);
    let rad = (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt();
    let (l1, l2) = (mean + rad, mean - rad);
    let angle = 0.5 * (2.0 * xy).atan2(xx - yy);
    let (c, s) = (angle.cos(), angle.sin());
    let clamped = (-l1).max(0.0) + (-l2).max(0.0);
    let (s1, s2) = (l1.max(0.0).sqrt(), l2.max(0.0).sqrt());
    ([s1 * c, s1 * s, -s2 * s, s2 * c], clamped)
}

/// Second moments `∫ A(|q|) (q̂ₓ², q̂ᵧ², q̂ₓq̂ᵧ) d²q` over a square cell.
fn cell_moments(spec: &TiltSpectrum, qx: f64, qy: f64, h: f64, rule: &GaussLegendre) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (u, wu) in rule.mapped(qx - 0.5 * h, qx + 0.5 * h) {
        for (v, wv) in rule.mapped(qy - 0.5 * h, qy + 0.5 * h) {
            let q2 = u * u + v * v;
            let a = spec.at(q2.sqrt()) * wu * wv / q2;
            m[0] += a * u * u;
            m[1] += a * v * v;
            m[2] += a * u * v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy)]
struct Mode {
    qx: f64,
    qy: f64,
    f: [f64; 4],
}

/// Draws tilt fields whose cross-spectral density is the rank-one tilt spectrum.
///
/// The field lives on a `period × period` torus (at least twice the frame) sampled at
/// `1/period` cycles/px. Bins near DC use cell-integrated moments, three levels of
/// subharmonics fill the central cell, and the power left at the very centre becomes a
/// random rigid offset.
pub struct TiltSynthesizer {
    rows: usize,
    cols: usize,
    period: usize,
    /// Rank-one amplitude per torus bin; zero where `grid_modes` takes over.
    amp: Vec<f64>,
    grid_modes: Vec<(usize, [f64; 4])>,
    sub_modes: Vec<Mode>,
    offset_sd: f64,
    fft: Fft2,
}

impl TiltSynthesizer {
    pub fn new(spec: &TiltSpectrum, rows: usize, cols: usize, min_period: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("tilt field needs a positive size"));
        }
        let period = (2 * rows.max(cols)).max(min_period).next_power_of_two();
        let p = period as f64;
        let dq = 1.0 / p;
        let rule = GaussLegendre::new(CELL_NODES);
        let amp: Vec<f64> = (0..period * period)
            .into_par_iter()
            .map(|i| {
                let (ky, kx) = (i / period, i % period);
                let (fx, fy) = (fft_frequency(kx, period), fft_frequency(ky, period));
                let (ix, iy) = ((fx * p).round() as i64, (fy * p).round() as i64);
                // Unpaired Nyquist bins would break the ±q symmetry.
                let nyquist = 2 * kx == period || 2 * ky == period;
                if nyquist || ix.abs().max(iy.abs()) <= REFINED_RADIUS {
                    return 0.0;
                }
                (spec.at(fx.hypot(fy)) * dq * dq).sqrt()
            })
            .collect();
        let mut grid_modes = Vec::new();
        for iy in -REFINED_RADIUS..=REFINED_RADIUS {
            for ix in -REFINED_RADIUS..=REFINED_RADIUS {
                if (ix, iy) == (0, 0) || spec.is_zero() {
                    continue;
                }
                let m = cell_moments(spec, ix as f64 * dq, iy as f64 * dq, dq, &rule);
                let idx = iy.rem_euclid(period as i64) as usize * period
                    + ix.rem_euclid(period as i64) as usize;
                grid_modes.push((idx, factor(m[0], m[1], m[2]).0));
            }
        }
        let mut sub_modes = Vec::new();
        let mut h = dq;
        for _ in 0..SUBHARMONIC_LEVELS {
            h /= 3.0;
            for j in -1..=1 {
                for i in -1..=1 {
                    if (i, j) == (0, 0) || spec.is_zero() {
                        continue;
                    }
                    let (qx, qy) = (i as f64 * h, j as f64 * h);
                    let m = cell_moments(spec, qx, qy, h, &rule);
                    sub_modes.push(Mode { qx, qy, f: factor(m[0], m[1], m[2]).0 });
                }
            }
        }
        // Central cell of half-width a: per-axis variance ½ ∫ c q^(−5/3) d²q
        // = 12 c a^(1/3) ∫₀^{π/4} cos^(−1/3)ψ dψ.
        let a = 0.5 * h;
        let ring = GaussLegendre::new(16).integrate(0.0, PI / 4.0, |psi| psi.cos().powf(-1.0 / 3.0));
        let offset_var = 12.0 * spec.low_frequency_coefficient() * a.powf(1.0 / 3.0) * ring;
        Ok(Self {
            rows,
            cols,
            period,
            amp,
            grid_modes,
            sub_modes,
            offset_sd: offset_var.sqrt(),
            fft: Fft2::new(period, period),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn period(&self) -> usize {
        self.period
    }

    fn direction(&self, i: usize) -> (f64, f64) {
        let fx = fft_frequency(i % self.period, self.period);
        let fy = fft_frequency(i / self.period, self.period);
        let q = fx.hypot(fy);
        (fx / q, fy / q)
    }

    /// Two independent realisations from one complex draw (real and imaginary parts).
    pub fn realize_pair(&self, rng: &mut ChaCha8Rng) -> [TiltField; 2] {
        let n = self.period * self.period;
        let mut bx = vec![Complex64::default(); n];
        let mut by = vec![Complex64::default(); n];
        for i in 0..n {
            if self.amp[i] == 0.0 {
                continue;
            }
            let w = complex_normal(rng) * self.amp[i];
            let (ux, uy) = self.direction(i);
            bx[i] = w * ux;
            by[i] = w * uy;
        }
        for &(idx, f) in &self.grid_modes {
            let (w1, w2) = (complex_normal(rng), complex_normal(rng));
            bx[idx] = w1 * f[0] + w2 * f[2];
            by[idx] = w1 * f[1] + w2 * f[3];
        }
        let sub: Vec<(Mode, Complex64, Complex64)> = self
            .sub_modes
            .iter()
            .map(|m| {
                let (w1, w2) = (complex_normal(rng), complex_normal(rng));
                (*m, w1 * m.f[0] + w2 * m.f[2], w1 * m.f[1] + w2 * m.f[3])
            })
            .collect();
        let offsets: Vec<f64> = (0..4).map(|_| normal(rng) * self.offset_sd).collect();
        rayon::join(|| self.fft.forward(&mut bx), || self.fft.forward(&mut by));

        let (rows, cols, p) = (self.rows, self.cols, self.period);
        let mut out = [TiltField::zeros(rows, cols), TiltField::zeros(rows, cols)];
        for r in 0..rows {
            for c in 0..cols {
                let (mut x, mut y) = (bx[r * p + c], by[r * p + c]);
                for (m, ax, ay) in &sub {
                    let e = Complex64::from_polar(1.0, 2.0 * PI * (m.qx * c as f64 + m.qy * r as f64));
                    x += ax * e;
                    y += ay * e;
                }
                out[0].x.set(r, c, x.re + offsets[0]);
                out[0].y.set(r, c, y.re + offsets[1]);
                out[1].x.set(r, c, x.im + offsets[2]);
                out[1].y.set(r, c, y.im + offsets[3]);
            }
        }
        out
    }

    /// Exact covariance `(xx, yy, xy)` of every realisation at lag `(dx, dy)` px.
    pub fn covariance(&self, dx: i64, dy: i64) -> [f64; 3] {
        let p = self.period;
        let phase = |qx: f64, qy: f64| (2.0 * PI * (qx * dx as f64 + qy * dy as f64)).cos();
        let mut acc = (0..p)
            .into_par_iter()
            .map(|ky| {
                let mut s = [0.0; 3];
                for kx in 0..p {
                    let i = ky * p + kx;
                    if self.amp[i] == 0.0 {
                        continue;
                    }
                    let (ux, uy) = self.direction(i);
                    let a2 = self.amp[i] * self.amp[i];
                    let cs = phase(fft_frequency(kx, p), fft_frequency(ky, p));
                    s[0] += a2 * ux * ux * cs;
                    s[1] += a2 * uy * uy * cs;
                    s[2] += a2 * ux * uy * cs;
                }
                s
            })
            .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
        let grid = self.grid_modes.iter().map(|&(idx, f)| {
            let qx = fft_frequency(idx % p, p);
            let qy = fft_frequency(idx / p, p);
            Mode { qx, qy, f }
        });
        for m in grid.chain(self.sub_modes.iter().copied()) {
            let cs = phase(m.qx, m.qy);
            acc[0] += (m.f[0] * m.f[0] + m.f[2] * m.f[2]) * cs;
            acc[1] += (m.f[1] * m.f[1] + m.f[3] * m.f[3]) * cs;
            acc[2] += (m.f[0] * m.f[1] + m.f[2] * m.f[3]) * cs;
        }
        let v = self.offset_sd * self.offset_sd;
        [acc[0] + v, acc[1] + v, acc[2]]
    }
}

/// Outcome of the grid-based factorisation in [`synth_tilt_fields`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampReport {
    /// Magnitude of negative eigenvalues over the total absolute spectral power.
    pub clamped_fraction: f64,
}

/// Draws one tilt-field pair directly from sampled lag fields: the 2×2 cross-spectral
/// density of the periodically wrapped correlation is factorised per frequency and
/// negative eigenvalues are clamped to zero.
///
/// `corr` must cover lags up to half the torus, which is twice the frame size. Truncating a
/// slowly decaying correlation makes its wrapped spectrum indefinite; more than
/// [`MAX_CLAMPED_FRACTION`] of clamped power is reported as an error.
pub fn synth_tilt_fields(
    corr: &TiltAutocorr2D,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<(TiltField, ClampReport)> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("tilt field needs a positive size"));
    }
    let period = 2 * rows.max(cols);
    let half = period / 2;
    if corr.half_x < half || corr.half_y < half {
        return Err(Error::invalid(format!(
            "correlation grid of half-extent {}x{} does not cover lags up to {half}",
            corr.half_x, corr.half_y
        )));
    }
    let fft = Fft2::new(period, period);
    let wrapped = |component: Component| -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..period * period)
            .map(|i| {
                let wrap = |k: usize| if k < half { k as i64 } else { k as i64 - period as i64 };
                let lag = LagVector::new(wrap(i % period), wrap(i / period));
                Complex64::new(corr.get(component, lag).expect("covered"), 0.0)
            })
            .collect();
        fft.forward(&mut buf);
        buf
    };
    let (sxx, syy, sxy) = (wrapped(Component::Xx), wrapped(Component::Yy), wrapped(Component::Xy));
    let mut rng = stream_rng(seed, 0);
    let norm = 1.0 / period as f64;
    let mut total = 0.0;
    let mut clamped = 0.0;
    let mut bx = vec![Complex64::default(); period * period];
    let mut by = vec![Complex64::default(); period * period];
    for i in 0..period * period {
        let (a, b, c) = (sxx[i].re, syy[i].re, sxy[i].re);
        let (f, neg) = factor(a, b, c);
        total += a.abs() + b.abs();
        clamped += neg;
        let (w1, w2) = (complex_normal(&mut rng), complex_normal(&mut rng));
        bx[i] = (w1 * f[0] + w2 * f[2]) * norm;
        by[i] = (w1 * f[1] + w2 * f[3]) * norm;
    }
    let fraction = if total > 0.0 { clamped / total } else { 0.0 };
    if fraction > MAX_CLAMPED_FRACTION {
        return Err(Error::SpectralValidity { fraction });
    }
    fft.forward(&mut bx);
    fft.forward(&mut by);
    let field = TiltField {
        x: Image::from_fn(rows, cols, |r, c| bx[r * period + c].re),
        y: Image::from_fn(rows, cols, |r, c| by[r * period + c].re),
    };
    Ok((field, ClampReport { clamped_fraction: fraction }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::OpticalConfig;
    use crate::profile::Cn2Profile;
    use crate::stats::{TiltCorrelation1D, Units};

    #[test]
    fn factor_reproduces_covariance() {
        for (xx, yy, xy) in [(2.0, 1.0, 0.5), (1.0, 1.0, 0.0), (0.3, 2.0, -0.7), (1.0, 0.0, 0.0)] {
            let (f, neg) = factor(xx, yy, xy);
            assert_eq!(neg, 0.0);
            assert!((f[0] * f[0] + f[2] * f[2] - xx).abs() < 1e-12);
            assert!((f[1] * f[1] + f[3] * f[3] - yy).abs() < 1e-12);
            assert!((f[0] * f[1] + f[2] * f[3] - xy).abs() < 1e-12);
        }
        let (_, neg) = factor(1.0, 1.0, 2.0);
        assert!((neg - 1.0).abs() < 1e-12);
    }

    fn small_synth() -> TiltSynthesizer {
        let cfg = OpticalConfig::reference_camera();
        let spec = TiltSpectrum::new(&cfg, &Cn2Profile::constant(1e-15)).unwrap();
        TiltSynthesizer::new(&spec, 24, 20, 0).unwrap()
    }

    #[test]
    fn same_stream_same_fields() {
        let s = small_synth();
        assert_eq!(s.period(), 64);
        let a = s.realize_pair(&mut stream_rng(11, 2));
        let b = s.realize_pair(&mut stream_rng(11, 2));
        assert_eq!(a, b);
        let c = s.realize_pair(&mut stream_rng(11, 3));
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn covariance_is_symmetric_and_axis_cross_vanishes() {
        let s = small_synth();
        let c0 = s.covariance(0, 0);
        assert!((c0[0] - c0[1]).abs() < 1e-9 * c0[0]);
        assert!(c0[2].abs() < 1e-9 * c0[0]);
        let a = s.covariance(5, 0);
        let b = s.covariance(-5, 0);
        assert!((a[0] - b[0]).abs() < 1e-9 * a[0]);
        assert!(a[2].abs() < 1e-9 * c0[0]);
        let t = s.covariance(0, 5);
        assert!((t[1] - a[0]).abs() < 1e-9 * a[0]);
    }

    #[test]
    fn grid_factorisation_of_short_range_correlation() {
        // Isotropic exponential with equal parallel and perpendicular parts is a valid
        // covariance for independent components.
        let par: Vec<f64> = (0..200).map(|i| (-(i as f64) * 0.25 / 3.0).exp()).collect();
        let table = TiltCorrelation1D::from_samples(0.25, 1e-6, Units::Px2, par.clone(), par).unwrap();
        let corr = TiltAutocorr2D::from_table(&table, 16, 16).unwrap();
        let (field, report) = synth_tilt_fields(&corr, 16, 16, 5).unwrap();
        assert!(report.clamped_fraction < MAX_CLAMPED_FRACTION);
        assert!(field.x.is_finite() && field.y.is_finite());
        let (again, _) = synth_tilt_fields(&corr, 16, 16, 5).unwrap();
        assert_eq!(field, again);
        assert!(synth_tilt_fields(&corr, 17, 16, 5).is_err());
    }
}
