//! Registration-compensated spectral-ratio Fried parameter estimator.
//!
//! The long-exposure spectrum of the registered average, divided by the mean short-exposure
//! spectrum, is modelled as the residual-tilt Gaussian `exp(−ρ²/2σ_G²)`. Its width and the
//! tilt correction factor of the registration give r₀.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fftshift, Fft2};
use crate::image::{mean_image, Image};
use crate::mitigation::{bma_fuse, build_prototype, MitigationConfig};
use crate::optics::OpticalConfig;
use crate::regmodel::{alpha_for, FrameShape, RegistrationSpec};
use crate::sequence::ImageSequence;

/// Frames transformed concurrently before their spectra are folded into the running sum.
const SPECTRUM_CHUNK: usize = 16;
/// Short-spectrum bins below this fraction of the DC magnitude carry no usable ratio.
const SHORT_FLOOR: f64 = 1e-9;
const RATIO_CEILING: f64 = 1.5;
const MIN_RING_SAMPLES: usize = 8;
const MIN_FIT_BINS: usize = 5;
const FIT_TRUST_STEP: f64 = 1e-6;
const FIT_MAX_ITERATIONS: usize = 100;

/// Separable symmetric Tukey window; `taper` is the tapered fraction of each axis.
pub fn tukey_window_2d(rows: usize, cols: usize, taper: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&taper) {
        return Err(Error::invalid(format!("Tukey taper must lie in [0, 1], got {taper}")));
    }
    let wy = tukey(rows, taper);
    let wx = tukey(cols, taper);
    Ok(Image::from_fn(rows, cols, |r, c| wy[r] * wx[c]))
}

fn tukey(n: usize, taper: f64) -> Vec<f64> {
    if n <= 1 || taper == 0.0 {
        return vec![1.0; n];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            // Evaluate from the nearer end so the window is exactly symmetric.
            let x = i.min(n - 1 - i) as f64 / last;
            if x < taper / 2.0 {
                0.5 * (1.0 + (PI * (2.0 * x / taper - 1.0)).cos())
            } else {
                1.0
            }
        })
        .collect()
}

fn check_window(seq: &ImageSequence, window: &Image) -> Result<()> {
    if window.rows() != seq.rows() || window.cols() != seq.cols() {
        return Err(Error::invalid("window and frames differ in size"));
    }
    Ok(())
}

/// Centred `|FFT(window · img)|²`.
fn power_spectrum(fft: &Fft2, img: &Image, window: &Image) -> Vec<f64> {
    let windowed: Vec<f64> = img.data().iter().zip(window.data()).map(|(a, w)| a * w).collect();
    let spec = fft.forward_real(&windowed);
    let power: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
    fftshift(&power, img.rows(), img.cols())
}

fn dc_index(rows: usize, cols: usize) -> usize {
    (rows / 2) * cols + cols / 2
}

/// Mean over frames of the centred windowed magnitude spectrum. With `power` set, the
/// result is the square root of the mean power spectrum instead.
pub fn mean_short_exposure_spectrum(seq: &ImageSequence, window: &Image, power: bool) -> Result<Image> {
    check_window(seq, window)?;
    let (rows, cols) = (seq.rows(), seq.cols());
    let fft = Fft2::new(rows, cols);
    let mut sum = vec![0.0; rows * cols];
    for chunk in seq.frames().chunks(SPECTRUM_CHUNK) {
        let spectra: Vec<Vec<f64>> = chunk.par_iter().map(|f| power_spectrum(&fft, f, window)).collect();
        for s in &spectra {
            for (acc, p) in sum.iter_mut().zip(s) {
                *acc += if power { *p } else { p.sqrt() };
            }
        }
    }
    let k = seq.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| if power { (s / k).sqrt() } else { s / k }).collect();
    if !(mean[dc_index(rows, cols)] > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    Image::new(rows, cols, mean)
}

/// Average of the frames after the given registration. BMA uses a plain-average prototype
/// and search radius `search_radius`.
pub fn long_exposure_image(seq: &ImageSequence, registration: &RegistrationSpec, search_radius: usize) -> Result<Image> {
    registration.validate()?;
    match *registration {
        RegistrationSpec::None => mean_image(seq.frames()),
        RegistrationSpec::Global { .. } => Ok(build_prototype(seq, true)?.image),
        RegistrationSpec::Bma { half_width, .. } => {
            let proto = build_prototype(seq, false)?;
            let mcfg = MitigationConfig { half_width, search_radius, ..Default::default() };
            bma_fuse(seq, &proto.image, &mcfg)
        }
    }
}

/// Centred `|FFT(window · registered average)|`.
pub fn long_exposure_spectrum(
    seq: &ImageSequence,
    registration: &RegistrationSpec,
    search_radius: usize,
    window: &Image,
) -> Result<Image> {
    check_window(seq, window)?;
    let avg = long_exposure_image(seq, registration, search_radius)?;
    let fft = Fft2::new(seq.rows(), seq.cols());
    let mag = power_spectrum(&fft, &avg, window).into_iter().map(f64::sqrt).collect();
    Image::new(seq.rows(), seq.cols(), mag)
}

/// Elementwise long/short ratio on the centred grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioArray {
    pub rows: usize,
    pub cols: usize,
    /// Ratios clamped to at most 1.5; zero where invalid.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RatioArray {
    pub fn at(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        self.valid[i].then_some(self.values[i])
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Ratio of centred spectra; bins where the short spectrum falls below 1e-9 of its DC
/// value, or where the ratio is not positive, are marked invalid.
pub fn spectral_ratio(long: &Image, short: &Image) -> Result<RatioArray> {
    if !long.same_shape(short) {
        return Err(Error::invalid("spectra differ in size"));
    }
    let (rows, cols) = (short.rows(), short.cols());
    let dc = short.data()[dc_index(rows, cols)];
    if !(dc > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let floor = SHORT_FLOOR * dc;
    let (values, valid) = long
        .data()
        .iter()
        .zip(short.data())
        .map(|(&l, &s)| {
            if s < floor || !(l > 0.0) {
                (0.0, false)
            } else {
                ((l / s).min(RATIO_CEILING), true)
            }
        })
        .unzip();
    Ok(RatioArray { rows, cols, values, valid })
}

/// Median ratio per one-pixel-wide annulus of the FFT grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    /// Ring radius (cycles/px).
    pub radius: Vec<f64>,
    /// Ring radius in focal-plane frequency (cycles/m).
    pub radius_m: Vec<f64>,
    pub median: Vec<f64>,
    pub samples: Vec<usize>,
}

impl RadialProfile {
    pub fn from_points(radius: Vec<f64>, median: Vec<f64>, pitch: f64) -> Result<Self> {
        if radius.len() != median.len() {
            return Err(Error::invalid("profile radii and values differ in length"));
        }
        let radius_m = radius.iter().map(|r| r / pitch).collect();
        let samples = vec![0; radius.len()];
        Ok(Self { radius, radius_m, median, samples })
    }

    pub fn len(&self) -> usize {
        self.radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radius.is_empty()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rings are indexed by `round(ρ · min(rows, cols))` with ρ in cycles/px and placed at the
/// median radius of their valid samples; rings with fewer than 8 valid samples are dropped.
pub fn radial_median_profile(ratio: &RatioArray, pitch: f64) -> Result<RadialProfile> {
    if !(pitch > 0.0) {
        return Err(Error::invalid("pixel pitch must be positive"));
    }
    let (rows, cols) = (ratio.rows, ratio.cols);
    let n = rows.min(cols) as f64;
    let mut rings: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for r in 0..rows {
        let fy = (r as f64 - (rows / 2) as f64) / rows as f64;
        for c in 0..cols {
            let Some(v) = ratio.at(r, c) else { continue };
            let fx = (c as f64 - (cols / 2) as f64) / cols as f64;
            let rho = fx.hypot(fy);
            let k = (rho * n).round() as usize;
            if rings.len() <= k {
                rings.resize_with(k + 1, Default::default);
            }
            rings[k].0.push(rho);
            rings[k].1.push(v);
        }
    }
    let mut out = RadialProfile { radius: vec![], radius_m: vec![], median: vec![], samples: vec![] };
    for (radii, values) in rings.iter_mut() {
        if values.len() < MIN_RING_SAMPLES {
            continue;
        }
        // The ratio falls monotonically across a ring, so its median sits at the median
        // sample radius rather than the nominal one.
        let rho = median(radii);
        out.radius.push(rho);
        out.radius_m.push(rho / pitch);
        out.samples.push(values.len());
        out.median.push(median(values));
    }
    Ok(out)
}

/// Gaussian width fitted to a radial profile, in the profile's radius units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub sigma: f64,
    pub residual_rms: f64,
    pub bins: usize,
}

/// Least-squares fit of `exp(−ρ²/2σ²)` to the profile over `band` (cycles/px), uniform
/// weights on the linear ratio, started from a log-domain regression.
pub fn fit_gaussian_sigma(profile: &RadialProfile, band: [f64; 2]) -> Result<GaussianFit> {
    if !(band[0] >= 0.0 && band[0] < band[1]) {
        return Err(Error::invalid(format!("fit band {band:?} must be increasing and non-negative")));
    }
    let pts: Vec<(f64, f64)> = profile
        .radius
        .iter()
        .zip(&profile.median)
        .filter(|(r, g)| (band[0]..=band[1]).contains(*r) && **g > 0.0)
        .map(|(&r, &g)| (r * r, g))
        .collect();
    if pts.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientData(format!(
            "{} profile bins in band {band:?}, need {MIN_FIT_BINS}",
            pts.len()
        )));
    }
    // −ln g = b ρ² with b = 1/(2σ²), through the origin.
    let num: f64 = pts.iter().map(|(x, g)| -x * g.ln()).sum();
    let den: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let mut b = num / den;
    if !(b > 0.0) {
        return Err(Error::FitFailure("profile does not decay over the fit band".into()));
    }
    let sse = |b: f64| pts.iter().map(|(x, g)| (g - (-b * x).exp()).powi(2)).sum::<f64>();
    let mut cost = sse(b);
    for _ in 0..FIT_MAX_ITERATIONS {
        // Gauss–Newton on the single parameter b.
        let (mut jtj, mut jtr) = (0.0, 0.0);
        for (x, g) in &pts {
            let m = (-b * x).exp();
            let j = -x * m;
            jtj += j * j;
            jtr += j * (g - m);
        }
        if jtj == 0.0 {
            break;
        }
        let mut step = jtr / jtj;
        // Near the minimum the cost is flat to rounding and cannot rank tiny steps, so
        // small steps are taken on the quadratic model alone.
        if step.abs() <= FIT_TRUST_STEP * b {
            b += step;
            cost = sse(b);
            if step.abs() <= 1e-13 * b {
                break;
            }
            continue;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial = b + step;
            if trial > 0.0 {
                let c = sse(trial);
                if c <= cost {
                    b = trial;
                    cost = c;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || step.abs() <= 1e-13 * b {
            break;
        }
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::FitFailure(format!("fitted decay rate {b} is not positive")));
    }
    Ok(GaussianFit {
        sigma: (0.5 / b).sqrt(),
        residual_rms: (cost / pts.len() as f64).sqrt(),
        bins: pts.len(),
    })
}

/// Inverts the residual-tilt OTF width for r₀ (m); `sigma_g` in cycles/m.
pub fn r0_from_sigma(sigma_g: f64, alpha: f64, cfg: &OpticalConfig) -> Result<f64> {
    if !(sigma_g > 0.0 && sigma_g.is_finite()) {
        return Err(Error::invalid(format!("σ_G must be positive, got {sigma_g}")));
    }
    if !(alpha < 1.0) {
        return Err(Error::invalid(format!("r0 is undetermined for α = {alpha} >= 1")));
    }
    let ll = cfg.wavelength * cfg.focal_length;
    Ok((6.88 * (ll * sigma_g).powi(2) * (1.0 - alpha) / cfg.aperture_diameter.cbrt()).powf(0.6))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorOptions {
    /// Tukey taper fraction.
    pub taper: f64,
    /// Fit band (cycles/px).
    pub band: [f64; 2],
    /// Average power rather than magnitude spectra of the short exposures.
    pub power: bool,
    /// White-noise standard deviation to remove from both spectra (intensity units).
    pub noise_sd: Option<f64>,
    /// BMA search radius (px).
    pub search_radius: usize,
    /// Use this α instead of the one implied by the registration.
    pub alpha_override: Option<f64>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            taper: 0.25,
            band: [0.02, 0.35],
            power: false,
            noise_sd: None,
            search_radius: MitigationConfig::default().search_radius,
            alpha_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRatioResult {
    pub ratio: RatioArray,
    pub profile: RadialProfile,
    /// Fitted Gaussian width (cycles/m).
    pub sigma_g: f64,
    /// Same width in cycles/px.
    pub sigma_px: f64,
    pub alpha: f64,
    pub r0: f64,
    pub band: [f64; 2],
    pub fit_rms: f64,
}

/// Subtracts the expected white-noise power `p` from a magnitude spectrum.
fn remove_noise(spec: &Image, p: f64) -> Image {
    spec.map(|m| (m * m - p).max(0.0).sqrt())
}

fn estimate_with_alpha(
    seq: &ImageSequence,
    registration: &RegistrationSpec,
    optics: &OpticalConfig,
    opts: &EstimatorOptions,
    alpha: f64,
) -> Result<SpectralRatioResult> {
    seq.require(2, "r0 estimation")?;
    let window = tukey_window_2d(seq.rows(), seq.cols(), opts.taper)?;
    let mut short = mean_short_exposure_spectrum(seq, &window, opts.power)?;
    let mut long = long_exposure_spectrum(seq, registration, opts.search_radius, &window)?;
    if let Some(sd) = opts.noise_sd {
        if !(sd >= 0.0) {
            return Err(Error::invalid("noise standard deviation must be >= 0"));
        }
        let p = sd * sd * window.data().iter().map(|w| w * w).sum::<f64>();
        short = remove_noise(&short, p);
        long = remove_noise(&long, p / seq.len() as f64);
    }
    let ratio = spectral_ratio(&long, &short)?;
    let profile = radial_median_profile(&ratio, optics.pixel_pitch)?;
    let fit = fit_gaussian_sigma(&profile, opts.band)?;
    let sigma_g = fit.sigma / optics.pixel_pitch;
    let r0 = r0_from_sigma(sigma_g, alpha, optics)?;
    Ok(SpectralRatioResult {
        ratio,
        profile,
        sigma_g,
        sigma_px: fit.sigma,
        alpha,
        r0,
        band: opts.band,
        fit_rms: fit.residual_rms,
    })
}

fn alpha_of(
    seq: &ImageSequence,
    registration: &RegistrationSpec,
    optics: &OpticalConfig,
    opts: &EstimatorOptions,
) -> Result<f64> {
    match opts.alpha_override {
        Some(a) => Ok(a),
        None => alpha_for(optics, registration, FrameShape { rows: seq.rows(), cols: seq.cols() }),
    }
}

/// Full estimator over the whole sequence.
pub fn estimate_r0(
    seq: &ImageSequence,
    registration: &RegistrationSpec,
    optics: &OpticalConfig,
    opts: &EstimatorOptions,
) -> Result<SpectralRatioResult> {
    optics.validate()?;
    let alpha = alpha_of(seq, registration, optics, opts)?;
    estimate_with_alpha(seq, registration, optics, opts, alpha)
}

/// r₀ estimate for one run of consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowEstimate {
    pub start: usize,
    pub frames: usize,
    pub r0: f64,
    pub sigma_g: f64,
    pub fit_rms: f64,
}

/// Estimates over windows of `window` frames starting every `stride` frames.
pub fn estimate_r0_windows(
    seq: &ImageSequence,
    registration: &RegistrationSpec,
    optics: &OpticalConfig,
    opts: &EstimatorOptions,
    window: usize,
    stride: usize,
) -> Result<Vec<WindowEstimate>> {
    if window < 2 || stride == 0 {
        return Err(Error::invalid("moving window needs at least 2 frames and a positive stride"));
    }
    if window > seq.len() {
        return Err(Error::InsufficientData(format!(
            "window of {window} frames exceeds the {} available",
            seq.len()
        )));
    }
    optics.validate()?;
    let alpha = alpha_of(seq, registration, optics, opts)?;
    (0..=seq.len() - window)
        .step_by(stride)
        .map(|start| {
            let sub = ImageSequence::new(seq.frames()[start..start + window].to_vec())?;
            let res = estimate_with_alpha(&sub, registration, optics, opts, alpha)?;
            Ok(WindowEstimate { start, frames: window, r0: res.r0, sigma_g: res.sigma_g, fit_rms: res.fit_rms })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otf::tilt_otf_variance;
    use rand::Rng;

    fn cam() -> OpticalConfig {
        OpticalConfig::reference_camera()
    }

    #[test]
    fn tukey_limits_match_rectangular_and_hann() {
        let w = tukey_window_2d(7, 9, 0.0).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
        let hann = tukey(9, 1.0);
        for (i, v) in hann.iter().enumerate() {
            let h = 0.5 - 0.5 * (2.0 * PI * i as f64 / 8.0).cos();
            assert!((v - h).abs() < 1e-15, "{i}: {v} vs {h}");
        }
        assert!(tukey_window_2d(4, 4, 1.5).is_err());
    }

    #[test]
    fn tukey_matches_scipy() {
        // scipy.signal.windows.tukey(10, 0.5)
        let expect = [0.0, 0.41317591, 0.96984631, 1.0, 1.0, 1.0, 1.0, 0.96984631, 0.41317591, 0.0];
        for (a, b) in tukey(10, 0.5).iter().zip(expect) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn tukey_is_symmetric() {
        let w = tukey_window_2d(11, 14, 0.3).unwrap();
        for r in 0..11 {
            for c in 0..14 {
                assert_eq!(w.get(r, c), w.get(10 - r, c));
                assert_eq!(w.get(r, c), w.get(r, 13 - c));
            }
        }
        assert_eq!(w.data().iter().copied().fold(0.0, f64::max), 1.0);
    }

    fn texture(rows: usize, cols: usize, phase: f64) -> Image {
        Image::from_fn(rows, cols, |r, c| {
            let (x, y) = (c as f64, r as f64);
            100.0 + 30.0 * (0.3 * x + phase).sin() + 20.0 * (0.45 * y - phase).cos() + 5.0 * (0.1 * x * y).sin()
        })
    }

    #[test]
    fn short_spectrum_of_identical_frames_is_one_spectrum() {
        let f = texture(16, 20, 0.0);
        let w = tukey_window_2d(16, 20, 0.25).unwrap();
        let one = mean_short_exposure_spectrum(&ImageSequence::new(vec![f.clone()]).unwrap(), &w, false).unwrap();
        let three = mean_short_exposure_spectrum(&ImageSequence::new(vec![f; 3]).unwrap(), &w, false).unwrap();
        for (a, b) in one.data().iter().zip(three.data()) {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn short_spectrum_scales_linearly() {
        let seq = ImageSequence::new(vec![texture(16, 16, 0.0), texture(16, 16, 1.0)]).unwrap();
        let w = tukey_window_2d(16, 16, 0.25).unwrap();
        let a = mean_short_exposure_spectrum(&seq, &w, false).unwrap();
        let b = mean_short_exposure_spectrum(&seq.scaled(3.0), &w, false).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((3.0 * x - y).abs() <= 1e-10 * y.max(1.0));
        }
    }

    #[test]
    fn zero_frames_are_degenerate() {
        let seq = ImageSequence::new(vec![Image::zeros(8, 8); 2]).unwrap();
        let w = tukey_window_2d(8, 8, 0.25).unwrap();
        assert!(matches!(mean_short_exposure_spectrum(&seq, &w, false), Err(Error::DegenerateSpectrum)));
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let frames: Vec<Image> = (0..64)
            .map(|_| {
                let d = (0..32 * 32).map(|_| crate::rng::normal(&mut rng)).collect();
                Image::new(32, 32, d).unwrap()
            })
            .collect();
        let seq = ImageSequence::new(frames).unwrap();
        let w = tukey_window_2d(32, 32, 0.0).unwrap();
        let s = mean_short_exposure_spectrum(&seq, &w, true).unwrap();
        // E|F|² = N for unit white noise.
        let away: Vec<f64> = s.data().iter().enumerate().filter(|(i, _)| *i != dc_index(32, 32)).map(|(_, v)| *v).collect();
        let mean = away.iter().sum::<f64>() / away.len() as f64;
        assert!((mean - 32.0).abs() < 0.5, "{mean}");
        let spread = away.iter().map(|v| (v / mean - 1.0).powi(2)).sum::<f64>() / away.len() as f64;
        assert!(spread.sqrt() < 0.1);
    }

    #[test]
    fn unregistered_static_sequence_long_equals_short() {
        let f = texture(24, 24, 0.2);
        let seq = ImageSequence::new(vec![f; 4]).unwrap();
        let w = tukey_window_2d(24, 24, 0.25).unwrap();
        let long = long_exposure_spectrum(&seq, &RegistrationSpec::None, 8, &w).unwrap();
        let short = mean_short_exposure_spectrum(&seq, &w, false).unwrap();
        for (a, b) in long.data().iter().zip(short.data()) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn registration_restores_shifted_copies() {
        let f = crate::synth::procedural_scene(48, 48, 5);
        let shifts = [(0.0, 0.0), (2.0, -1.0), (-1.3, 0.6), (0.7, 1.8)];
        let seq = ImageSequence::new(shifts.iter().map(|&(dx, dy)| f.shift_fourier(dx, dy)).collect()).unwrap();
        let w = tukey_window_2d(48, 48, 0.25).unwrap();
        let reg = long_exposure_spectrum(&seq, &RegistrationSpec::Global { epsilon: 0.0 }, 8, &w).unwrap();
        let plain = long_exposure_spectrum(&seq, &RegistrationSpec::None, 8, &w).unwrap();
        // Registered average sits at the mean shift, which does not change magnitudes.
        let single = long_exposure_spectrum(
            &ImageSequence::new(vec![f.shift_fourier(0.35, 0.35)]).unwrap(),
            &RegistrationSpec::None,
            8,
            &w,
        )
        .unwrap();
        let rms = |a: &Image, b: &Image| {
            let e: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
            let s: f64 = b.data().iter().map(|y| y * y).sum();
            (e / s).sqrt()
        };
        assert!(rms(&reg, &single) < 0.01, "{}", rms(&reg, &single));
        // Unregistered averaging attenuates the spectrum away from DC.
        let hf = |s: &Image| {
            let mut e = 0.0;
            for r in 0..48 {
                for c in 0..48 {
                    if (r as f64 - 24.0).hypot(c as f64 - 24.0) > 8.0 {
                        e += s.get(r, c);
                    }
                }
            }
            e
        };
        assert!(hf(&plain) < 0.8 * hf(&reg), "{} vs {}", hf(&plain), hf(&reg));
    }

    #[test]
    fn ratio_of_identical_spectra_is_one() {
        let s = texture(8, 8, 0.0).map(f64::abs);
        let r = spectral_ratio(&s, &s).unwrap();
        assert!(r.values.iter().all(|&v| v == 1.0));
        assert_eq!(r.invalid_count(), 0);
    }

    #[test]
    fn analytic_ratio_cancels_scene() {
        let (n, pitch) = (64, cam().pixel_pitch);
        let (r0, alpha) = (0.0478, 0.3);
        let model = crate::otf::OtfModel::new(cam(), r0, alpha).unwrap();
        let full = crate::otf::OtfModel::new(cam(), r0, 1.0).unwrap();
        let z = |r: usize, c: usize| 1.0 + ((r * 31 + c * 17) % 13) as f64;
        let rho = |r: usize, c: usize| {
            let fy = (r as f64 - 32.0) / 64.0;
            let fx = (c as f64 - 32.0) / 64.0;
            fx.hypot(fy) / pitch
        };
        let long = Image::from_fn(n, n, |r, c| model.short_exposure(rho(r, c)) * model.tilt(rho(r, c)) * z(r, c));
        let short = Image::from_fn(n, n, |r, c| full.short_exposure(rho(r, c)) * z(r, c));
        let ratio = spectral_ratio(&long, &short).unwrap();
        for r in 0..n {
            for c in 0..n {
                let expect = model.tilt(rho(r, c));
                if let Some(v) = ratio.at(r, c) {
                    assert!((v - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn true_zeros_are_invalid() {
        let mut short = Image::from_fn(8, 8, |_, _| 1.0);
        short.set(1, 1, 0.0);
        let r = spectral_ratio(&short.clone(), &short).unwrap();
        assert_eq!(r.invalid_count(), 1);
        assert_eq!(r.at(1, 1), None);
    }

    fn isotropic(n: usize, g: impl Fn(f64) -> f64) -> RatioArray {
        let mut values = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let fy = (r as f64 - (n / 2) as f64) / n as f64;
                let fx = (c as f64 - (n / 2) as f64) / n as f64;
                values.push(g(fx.hypot(fy)));
            }
        }
        RatioArray { rows: n, cols: n, valid: vec![true; values.len()], values }
    }

    #[test]
    fn isotropic_profile_matches_function() {
        let n = 128;
        let g = |rho: f64| (-rho * rho / (2.0 * 0.08f64.powi(2))).exp();
        let p = radial_median_profile(&isotropic(n, g), 1.0).unwrap();
        for (rho, m) in p.radius.iter().zip(&p.median) {
            // Half a bin of radius either side.
            let slope = (g(rho - 0.5 / n as f64) - g(rho + 0.5 / n as f64)).abs();
            assert!((m - g(*rho)).abs() <= slope + 1e-12, "{rho}");
        }
        assert!(p.samples.iter().all(|&s| s >= MIN_RING_SAMPLES));
    }

    #[test]
    fn ring_median_ignores_single_outlier() {
        let n = 64;
        let mut arr = isotropic(n, |_| 0.5);
        // One outlier on the radius-10 ring.
        arr.values[(n / 2) * n + n / 2 + 10] = 1.5;
        let p = radial_median_profile(&arr, 1.0).unwrap();
        assert!(p.median.iter().all(|&m| m == 0.5));
    }

    #[test]
    fn anisotropic_median_lies_between_extremes() {
        let n = 64;
        let mut arr = isotropic(n, |_| 0.0);
        for r in 0..n {
            for c in 0..n {
                let fy = r as f64 - 32.0;
                let fx = c as f64 - 32.0;
                arr.values[r * n + c] = 0.5 + 0.3 * (2.0 * fy.atan2(fx)).cos();
            }
        }
        let p = radial_median_profile(&arr, 1.0).unwrap();
        assert!(p.median.iter().all(|&m| (0.2..=0.8).contains(&m)));
    }

    fn gaussian_profile(sigma: f64, noise: impl FnMut() -> f64) -> RadialProfile {
        let mut noise = noise;
        let radius: Vec<f64> = (0..=250).map(|k| k as f64 / 501.0).collect();
        let median = radius.iter().map(|r| (-r * r / (2.0 * sigma * sigma)).exp() * (1.0 + noise())).collect();
        RadialProfile::from_points(radius, median, 1.0).unwrap()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        for sigma in [0.03, 0.057, 0.11, 0.2] {
            for band in [[0.02, 0.35], [0.0, 0.1], [0.05, 0.45]] {
                let fit = fit_gaussian_sigma(&gaussian_profile(sigma, || 0.0), band).unwrap();
                assert!((fit.sigma / sigma - 1.0).abs() < 1e-3, "{sigma} {band:?}");
                assert!(fit.residual_rms < 1e-9);
            }
        }
    }

    #[test]
    fn noisy_fit_within_two_percent() {
        let mut rng = crate::rng::stream_rng(4, 0);
        for _ in 0..100 {
            let sigma = rng.gen_range(0.04..0.2);
            let prof = gaussian_profile(sigma, || 0.01 * crate::rng::normal(&mut rng));
            let fit = fit_gaussian_sigma(&prof, [0.02, 0.35]).unwrap();
            assert!((fit.sigma / sigma - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn fit_errors() {
        let flat = RadialProfile::from_points(vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3], vec![1.0; 6], 1.0).unwrap();
        assert!(matches!(fit_gaussian_sigma(&flat, [0.02, 0.35]), Err(Error::FitFailure(_))));
        let short = RadialProfile::from_points(vec![0.05, 0.1, 0.15], vec![0.9, 0.8, 0.6], 1.0).unwrap();
        assert!(matches!(fit_gaussian_sigma(&short, [0.02, 0.35]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn r0_round_trip() {
        let sigma = tilt_otf_variance(&cam(), 0.0478, 0.0).unwrap().sqrt();
        let r0 = r0_from_sigma(sigma, 0.0, &cam()).unwrap();
        assert!((r0 / 0.0478 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_lowers_r0_by_power_law() {
        let a = r0_from_sigma(5e4, 0.0, &cam()).unwrap();
        let b = r0_from_sigma(5e4, 0.5252, &cam()).unwrap();
        // 0.6397 is the four-digit rounding of the exact factor.
        assert!((b / a - 0.6397).abs() < 1.5e-4);
        assert!((b / a - (1.0f64 - 0.5252).powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn reference_sigma_gives_reference_r0() {
        let r0 = r0_from_sigma(1.164e5, 0.0, &cam()).unwrap();
        assert!((r0 - 0.1901).abs() < 5e-4, "{r0}");
        assert!(r0_from_sigma(1.164e5, 1.0, &cam()).is_err());
        assert!(r0_from_sigma(0.0, 0.0, &cam()).is_err());
    }

    #[test]
    fn estimate_needs_two_frames() {
        let seq = ImageSequence::new(vec![texture(16, 16, 0.0)]).unwrap();
        assert!(estimate_r0(&seq, &RegistrationSpec::None, &cam(), &EstimatorOptions::default()).is_err());
    }
}
