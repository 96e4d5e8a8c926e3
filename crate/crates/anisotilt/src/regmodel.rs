//! Registration modelled as linear filtering of the tilt field: patch tilt variance,
//! residual tilt variance and the tilt correction factor α.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr2d::{Component, LagVector, TiltAutocorr2D};
use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;
use crate::stats::tabulate_for_lags;

/// Registration error-to-signal ratio for integer-pixel quantisation.
pub const QUANTIZATION_EPSILON: f64 = 1.0 / 12.0;

/// How frames are registered before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegistrationSpec {
    None,
    /// Block matching with `(2M+1)²` blocks.
    Bma { half_width: usize, epsilon: f64 },
    /// One shift per frame over the whole image.
    Global { epsilon: f64 },
}

impl RegistrationSpec {
    pub fn validate(&self) -> Result<()> {
        let eps = match self {
            RegistrationSpec::None => return Ok(()),
            RegistrationSpec::Bma { epsilon, .. } | RegistrationSpec::Global { epsilon } => *epsilon,
        };
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::invalid(format!("error-to-signal ratio must be >= 0, got {eps}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FilterKind {
    Patch { half_width: usize },
    Residual { half_width: usize },
    GlobalResidual { half_width: usize, offset: LagVector },
}

/// Square FIR filter applied to a tilt field, taps indexed `[-R, R]²` row-major with `n2`
/// as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltFilter {
    kind: FilterKind,
    radius: usize,
    taps: Vec<f64>,
}

impl TiltFilter {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, n: LagVector) -> f64 {
        let r = self.radius as i64;
        if n.n1.abs() > r || n.n2.abs() > r {
            return 0.0;
        }
        let w = 2 * r + 1;
        self.taps[((n.n2 + r) * w + n.n1 + r) as usize]
    }

    pub fn tap_sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Correlates the filter with `field` (row-major `width × height`) at every pixel,
    /// replicating the border.
    pub fn apply(&self, field: &[f64], width: usize, height: usize) -> Vec<f64> {
        let r = self.radius as i64;
        let (wi, hi) = (width as i64, height as i64);
        let mut out = vec![0.0; field.len()];
        for y in 0..hi {
            for x in 0..wi {
                let mut acc = 0.0;
                for n2 in -r..=r {
                    let yy = (y + n2).clamp(0, hi - 1);
                    for n1 in -r..=r {
                        let t = self.tap(LagVector::new(n1, n2));
                        if t != 0.0 {
                            let xx = (x + n1).clamp(0, wi - 1);
                            acc += t * field[(yy * wi + xx) as usize];
                        }
                    }
                }
                out[(y * wi + x) as usize] = acc;
            }
        }
        out
    }
}

fn box_taps(m: usize) -> Vec<f64> {
    let s = 2 * m + 1;
    vec![1.0 / (s * s) as f64; s * s]
}

/// Uniform `(2M+1)²` average: the patch tilt estimate.
pub fn patch_filter(half_width: usize) -> TiltFilter {
    TiltFilter {
        kind: FilterKind::Patch { half_width },
        radius: half_width,
        taps: box_taps(half_width),
    }
}

/// Identity minus the patch average: what remains after patch registration.
pub fn residual_filter(half_width: usize) -> TiltFilter {
    let mut taps: Vec<f64> = box_taps(half_width).into_iter().map(|t| -t).collect();
    let centre = taps.len() / 2;
    taps[centre] += 1.0;
    TiltFilter {
        kind: FilterKind::Residual { half_width },
        radius: half_width,
        taps,
    }
}

/// Residual filter for whole-image registration seen from the pixel at offset `k` from the
/// image centre: δ(n + k) − h_P(n) with the average spanning the image.
pub fn global_residual_filter(offset: LagVector, half_extent: usize) -> Result<TiltFilter> {
    let m = half_extent as i64;
    if offset.n1.abs() > m || offset.n2.abs() > m {
        return Err(Error::invalid(format!(
            "pixel offset ({}, {}) outside image half-extent {half_extent}",
            offset.n1, offset.n2
        )));
    }
    let mut taps: Vec<f64> = box_taps(half_extent).into_iter().map(|t| -t).collect();
    let w = 2 * m + 1;
    taps[((m - offset.n2) * w + m - offset.n1) as usize] += 1.0;
    Ok(TiltFilter {
        kind: FilterKind::GlobalResidual { half_width: half_extent, offset },
        radius: half_extent,
        taps,
    })
}

fn lag(field: &TiltAutocorr2D, component: Component, n: LagVector) -> Result<f64> {
    field.get(component, n).ok_or(Error::OutOfRange {
        lag: n.distance(),
        max: field.half_x.min(field.half_y) as f64,
    })
}

/// Σ over the box `|n1|,|n2| <= m` of r(n + offset).
fn box_sum(field: &TiltAutocorr2D, c: Component, m: i64, offset: LagVector) -> Result<f64> {
    let mut acc = 0.0;
    for n2 in -m..=m {
        for n1 in -m..=m {
            acc += lag(field, c, LagVector::new(n1 + offset.n1, n2 + offset.n2))?;
        }
    }
    Ok(acc)
}

/// Σ_n w(n) r(n) with w the autocorrelation of the `(2M+1)²` box, closed form.
fn box_autocorr_sum(field: &TiltAutocorr2D, c: Component, m: i64) -> Result<f64> {
    let s = (2 * m + 1) as f64;
    let norm = s.powi(4);
    let mut acc = 0.0;
    for n2 in -2 * m..=2 * m {
        let wy = s - n2.abs() as f64;
        let mut row = 0.0;
        for n1 in -2 * m..=2 * m {
            row += (s - n1.abs() as f64) * lag(field, c, LagVector::new(n1, n2))?;
        }
        acc += wy * row;
    }
    Ok(acc / norm)
}

/// Variance of the filtered tilt field plus white measurement error `sigma_e2`, using the
/// filter's lag structure.
pub fn filtered_variance(
    field: &TiltAutocorr2D,
    component: Component,
    h: &TiltFilter,
    sigma_e2: f64,
) -> Result<f64> {
    let zero = LagVector::new(0, 0);
    let v = match h.kind {
        FilterKind::Patch { half_width } => box_autocorr_sum(field, component, half_width as i64)?,
        FilterKind::Residual { half_width } => {
            let m = half_width as i64;
            let s2 = ((2 * m + 1) * (2 * m + 1)) as f64;
            lag(field, component, zero)? - 2.0 * box_sum(field, component, m, zero)? / s2
                + box_autocorr_sum(field, component, m)?
        }
        FilterKind::GlobalResidual { half_width, offset } => {
            let m = half_width as i64;
            let s2 = ((2 * m + 1) * (2 * m + 1)) as f64;
            lag(field, component, zero)? - 2.0 * box_sum(field, component, m, offset)? / s2
                + box_autocorr_sum(field, component, m)?
        }
    };
    Ok(sigma_e2 + v)
}

/// Direct double sum Σ_m Σ_k h(m) h(k) r(m − k) + σ_e².
pub fn filtered_variance_naive(
    field: &TiltAutocorr2D,
    component: Component,
    h: &TiltFilter,
    sigma_e2: f64,
) -> Result<f64> {
    let r = h.radius as i64;
    let mut acc = 0.0;
    for m2 in -r..=r {
        for m1 in -r..=r {
            let hm = h.tap(LagVector::new(m1, m2));
            if hm == 0.0 {
                continue;
            }
            for k2 in -r..=r {
                for k1 in -r..=r {
                    let hk = h.tap(LagVector::new(k1, k2));
                    if hk != 0.0 {
                        acc += hm * hk * lag(field, component, LagVector::new(m1 - k1, m2 - k2))?;
                    }
                }
            }
        }
    }
    Ok(sigma_e2 + acc)
}

/// Tilt variance budget for patch registration, all in px².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegistrationBudget {
    pub sigma_t2: f64,
    pub sigma_e2: f64,
    pub sigma_p2: f64,
    pub sigma_r2: f64,
    pub alpha: f64,
}

fn lag_field(cfg: &OpticalConfig, profile: &Cn2Profile, reach: usize) -> Result<TiltAutocorr2D> {
    let table = tabulate_for_lags(cfg, profile, reach, reach)?;
    TiltAutocorr2D::from_table(&table, reach, reach)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!("error-to-signal ratio must be >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Patch, residual and total tilt variance for `(2M+1)²` patch registration with
/// error-to-signal ratio `epsilon`.
pub fn registration_budget(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_width: usize,
    epsilon: f64,
) -> Result<RegistrationBudget> {
    check_epsilon(epsilon)?;
    if profile.is_zero() {
        return Err(Error::ZeroTurbulence("the tilt correction factor"));
    }
    let field = lag_field(cfg, profile, 2 * half_width)?;
    budget_from_field(&field, half_width, epsilon)
}

fn budget_from_field(field: &TiltAutocorr2D, half_width: usize, epsilon: f64) -> Result<RegistrationBudget> {
    let sigma_t2 = field.variance_px2;
    let sigma_e2 = epsilon * sigma_t2;
    let sigma_p2 = filtered_variance(field, Component::Xx, &patch_filter(half_width), sigma_e2)?;
    let sigma_r2 = filtered_variance(field, Component::Xx, &residual_filter(half_width), sigma_e2)?;
    let alpha = 1.0 - sigma_r2 / sigma_t2;
    if alpha < 0.0 {
        log::warn!("tilt correction factor is negative ({alpha:.4}): registration adds tilt error");
    }
    Ok(RegistrationBudget {
        sigma_t2,
        sigma_e2,
        sigma_p2,
        sigma_r2,
        alpha,
    })
}

pub fn patch_tilt_variance(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_width: usize,
    sigma_e2: f64,
) -> Result<f64> {
    let field = lag_field(cfg, profile, 2 * half_width)?;
    filtered_variance(&field, Component::Xx, &patch_filter(half_width), sigma_e2)
}

pub fn residual_tilt_variance(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_width: usize,
    sigma_e2: f64,
) -> Result<f64> {
    let field = lag_field(cfg, profile, 2 * half_width)?;
    filtered_variance(&field, Component::Xx, &residual_filter(half_width), sigma_e2)
}

/// α = 1 − σ_R²/σ_T² for `(2M+1)²` patch registration.
pub fn tilt_correction_factor(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_width: usize,
    epsilon: f64,
) -> Result<f64> {
    Ok(registration_budget(cfg, profile, half_width, epsilon)?.alpha)
}

/// α for each half-width in `half_widths`, sharing one lag field.
pub fn tilt_correction_curve(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_widths: &[usize],
    epsilon: f64,
) -> Result<Vec<RegistrationBudget>> {
    check_epsilon(epsilon)?;
    if profile.is_zero() {
        return Err(Error::ZeroTurbulence("the tilt correction factor"));
    }
    let reach = 2 * half_widths.iter().copied().max().unwrap_or(0);
    let field = lag_field(cfg, profile, reach)?;
    half_widths
        .par_iter()
        .map(|&m| budget_from_field(&field, m, epsilon))
        .collect()
}

/// Frame size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub rows: usize,
    pub cols: usize,
}

impl FrameShape {
    /// Square frame of side `2M + 1`.
    pub fn square(half_extent: usize) -> Self {
        Self { rows: 2 * half_extent + 1, cols: 2 * half_extent + 1 }
    }
}

/// Per-pixel tilt correction factor under whole-image registration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaMap {
    pub shape: FrameShape,
    pub alpha_x: Vec<f64>,
    pub alpha_y: Vec<f64>,
    pub average: f64,
    pub peak: f64,
}

impl AlphaMap {
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = row * self.shape.cols + col;
        (self.alpha_x[i], self.alpha_y[i])
    }
}

/// Summed-area table over the lag field, `(2H−1) × (2W−1)` lags.
struct LagIntegral {
    cols: usize,
    sat: Vec<f64>,
}

impl LagIntegral {
    fn new(field: &TiltAutocorr2D, c: Component) -> Self {
        let (w, h) = (field.width(), field.height());
        let data = field.field(c);
        let cols = w + 1;
        let mut sat = vec![0.0; (h + 1) * cols];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += data[y * w + x];
                sat[(y + 1) * cols + x + 1] = sat[y * cols + x + 1] + row;
            }
        }
        Self { cols, sat }
    }

    /// Sum over grid indices [x0, x1) × [y0, y1).
    fn rect(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
        let c = self.cols;
        self.sat[y1 * c + x1] - self.sat[y0 * c + x1] - self.sat[y1 * c + x0] + self.sat[y0 * c + x0]
    }
}

fn residual_map(field: &TiltAutocorr2D, c: Component, shape: FrameShape, sigma_e2: f64) -> Result<Vec<f64>> {
    let (h, w) = (shape.rows, shape.cols);
    let n = (h * w) as f64;
    let r0 = lag(field, c, LagVector::new(0, 0))?;
    // Mean-of-image variance: Σ_n (W − |n1|)(H − |n2|) r(n) / N².
    let mut mean_var = 0.0;
    for n2 in -(h as i64 - 1)..=(h as i64 - 1) {
        let wy = (h as i64 - n2.abs()) as f64;
        let mut row = 0.0;
        for n1 in -(w as i64 - 1)..=(w as i64 - 1) {
            row += (w as i64 - n1.abs()) as f64 * lag(field, c, LagVector::new(n1, n2))?;
        }
        mean_var += wy * row;
    }
    mean_var /= n * n;
    let sat = LagIntegral::new(field, c);
    let (hx, hy) = (field.half_x, field.half_y);
    let map = (0..h)
        .into_par_iter()
        .flat_map_iter(|py| {
            let sat = &sat;
            (0..w).map(move |px| {
                // Lags q − p for every pixel q, as grid indices.
                let x0 = hx - px;
                let y0 = hy - py;
                let cross = sat.rect(x0, x0 + w, y0, y0 + h);
                sigma_e2 + r0 - 2.0 * cross / n + mean_var
            })
        })
        .collect();
    Ok(map)
}

/// Spatially varying α for whole-image registration of a `rows × cols` frame.
pub fn global_alpha_map(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    shape: FrameShape,
    epsilon: f64,
) -> Result<AlphaMap> {
    check_epsilon(epsilon)?;
    if shape.rows == 0 || shape.cols == 0 {
        return Err(Error::invalid("frame must be non-empty"));
    }
    if profile.is_zero() {
        return Err(Error::ZeroTurbulence("the tilt correction factor"));
    }
    let (hx, hy) = (shape.cols - 1, shape.rows - 1);
    let table = tabulate_for_lags(cfg, profile, hx, hy)?;
    let field = TiltAutocorr2D::from_table(&table, hx, hy)?;
    let sigma_t2 = field.variance_px2;
    let sigma_e2 = epsilon * sigma_t2;
    let to_alpha = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|r| 1.0 - r / sigma_t2).collect() };
    let alpha_x = to_alpha(residual_map(&field, Component::Xx, shape, sigma_e2)?);
    let alpha_y = to_alpha(residual_map(&field, Component::Yy, shape, sigma_e2)?);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let average = 0.5 * (mean(&alpha_x) + mean(&alpha_y));
    let peak = alpha_x.iter().chain(&alpha_y).copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlphaMap { shape, alpha_x, alpha_y, average, peak })
}

/// α against the aperture-minus-source Cn² difference for linear profiles of fixed mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub half_width: usize,
    pub deltas: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn alpha_sensitivity(
    cfg: &OpticalConfig,
    mean_cn2: f64,
    deltas: &[f64],
    half_widths: &[usize],
    epsilon: f64,
) -> Result<Vec<SensitivityCurve>> {
    let mut by_delta = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let profile = Cn2Profile::linear_with_mean(mean_cn2, d);
        profile.validate(cfg.path_length)?;
        by_delta.push(tilt_correction_curve(cfg, &profile, half_widths, epsilon)?);
    }
    Ok(half_widths
        .iter()
        .enumerate()
        .map(|(j, &m)| SensitivityCurve {
            half_width: m,
            deltas: deltas.to_vec(),
            alpha: by_delta.iter().map(|b| b[j].alpha).collect(),
        })
        .collect())
}

/// Mean α over the frame for whole-image registration, or the patch α for block matching.
pub fn alpha_for(
    cfg: &OpticalConfig,
    spec: &RegistrationSpec,
    shape: FrameShape,
) -> Result<f64> {
    // For a constant profile α depends only on the camera, so any level will do.
    let profile = Cn2Profile::constant(1e-15);
    match *spec {
        RegistrationSpec::None => Ok(0.0),
        RegistrationSpec::Bma { half_width, epsilon } => {
            tilt_correction_factor(cfg, &profile, half_width, epsilon)
        }
        RegistrationSpec::Global { epsilon } => {
            Ok(global_alpha_map(cfg, &profile, shape, epsilon)?.average)
        }
    }
}
