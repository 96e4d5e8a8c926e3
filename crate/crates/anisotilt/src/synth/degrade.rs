//! Turns a truth image into a sequence of warped, blurred and noisy frames.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::optics::OpticalConfig;
use crate::otf::{otf_diffraction, otf_short_exposure};
use crate::profile::Cn2Profile;
use crate::rng::{normal, stream_rng};
use crate::sequence::ImageSequence;
use crate::stats::{fried_parameter, tilt_variance};

use super::fields::{TiltField, TiltSynthesizer};
use super::spectrum::TiltSpectrum;

/// Mirror padding used for the blur convolution.
const BLUR_PAD: usize = 32;
/// Stream index offset for rigid camera jitter, disjoint from the per-pair tilt streams.
const JITTER_STREAM: u64 = 1 << 40;
const NOISE_STREAM: u64 = 1 << 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub optics: OpticalConfig,
    pub profile: Cn2Profile,
    pub frames: usize,
    /// White Gaussian noise standard deviation (intensity units).
    pub noise_sd: f64,
    pub seed: u64,
    /// Minimum side of the periodic tilt grid; it is always at least twice the frame.
    #[serde(default)]
    pub grid_extent: usize,
    /// Standard deviation (px, per axis) of an extra rigid shift per frame.
    #[serde(default)]
    pub camera_jitter_px: f64,
}

impl SynthConfig {
    pub fn new(optics: OpticalConfig, profile: Cn2Profile, frames: usize, noise_sd: f64, seed: u64) -> Self {
        Self { optics, profile, frames, noise_sd, seed, grid_extent: 0, camera_jitter_px: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.profile.validate(self.optics.path_length)?;
        if self.frames == 0 {
            return Err(Error::invalid("synthesis needs at least one frame"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid(format!("noise sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(self.camera_jitter_px.is_finite() && self.camera_jitter_px >= 0.0) {
            return Err(Error::invalid("camera jitter must be >= 0"));
        }
        Ok(())
    }
}

/// Ground truth attached to a synthesized sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthTruth {
    /// Fried parameter (m); infinite without turbulence.
    pub r0: f64,
    /// One-axis tilt variance (px²).
    pub tilt_variance_px2: f64,
    /// Rigid camera shift applied to each frame (px, x then y).
    pub camera_shifts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub sequence: ImageSequence,
    pub truth: SynthTruth,
}

/// Backward-mapping warp: the output at `p` is the input at `p − t(p)`, bilinear with
/// replicated borders.
pub fn warp_image(img: &Image, tilt: &TiltField) -> Result<Image> {
    if !(img.same_shape(&tilt.x) && img.same_shape(&tilt.y)) {
        return Err(Error::invalid("tilt field and image differ in size"));
    }
    if !(tilt.x.is_finite() && tilt.y.is_finite()) {
        return Err(Error::invalid("tilt field has non-finite values"));
    }
    let cols = img.cols();
    let data: Vec<f64> = (0..img.len())
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            img.sample_bilinear(r as f64 - tilt.y.get(r, c), c as f64 - tilt.x.get(r, c))
        })
        .collect();
    Image::new(img.rows(), cols, data)
}

/// Blur by the diffraction and short-exposure OTF (tilt excluded) at Fried parameter `r0`.
pub fn short_exposure_blur(img: &Image, optics: &OpticalConfig, r0: f64) -> Image {
    let pitch = optics.pixel_pitch;
    img.filter_frequency(BLUR_PAD, |fx, fy| {
        let rho = fx.hypot(fy) / pitch;
        let h = otf_diffraction(rho, optics)
            * if r0.is_finite() { otf_short_exposure(rho, optics, r0) } else { 1.0 };
        Complex64::new(h, 0.0)
    })
}

/// Per frame: independent tilt field (plus optional rigid jitter), warp, short-exposure
/// blur, additive white noise. Frames `2j` and `2j+1` share one complex field draw whose
/// real and imaginary parts are independent.
pub fn degrade_sequence(truth: &Image, scfg: &SynthConfig) -> Result<SynthSequence> {
    scfg.validate()?;
    if !truth.is_finite() {
        return Err(Error::invalid("truth image has non-finite pixels"));
    }
    let optics = &scfg.optics;
    let turbulent = !scfg.profile.is_zero();
    let r0 = if turbulent { fried_parameter(optics, &scfg.profile)? } else { f64::INFINITY };
    let tilt_var = if turbulent { tilt_variance(optics, &scfg.profile)?.px2 } else { 0.0 };
    let (rows, cols) = (truth.rows(), truth.cols());
    let synth = if turbulent {
        let spec = TiltSpectrum::new(optics, &scfg.profile)?;
        Some(TiltSynthesizer::new(&spec, rows, cols, scfg.grid_extent)?)
    } else {
        None
    };
    let camera_shifts: Vec<[f64; 2]> = (0..scfg.frames)
        .map(|k| {
            if scfg.camera_jitter_px == 0.0 {
                return [0.0, 0.0];
            }
            let mut rng = stream_rng(scfg.seed, JITTER_STREAM + k as u64);
            [normal(&mut rng) * scfg.camera_jitter_px, normal(&mut rng) * scfg.camera_jitter_px]
        })
        .collect();
    let pairs = scfg.frames.div_ceil(2);
    let frames: Vec<Image> = (0..pairs)
        .into_par_iter()
        .map(|j| -> Result<Vec<Image>> {
            let mut rng = stream_rng(scfg.seed, j as u64);
            let fields = match &synth {
                Some(s) => s.realize_pair(&mut rng).to_vec(),
                None => vec![TiltField::zeros(rows, cols); 2],
            };
            let mut out = Vec::with_capacity(2);
            for (half, mut field) in fields.into_iter().enumerate() {
                let k = 2 * j + half;
                if k >= scfg.frames {
                    break;
                }
                let [sx, sy] = camera_shifts[k];
                if sx != 0.0 || sy != 0.0 {
                    field.x = field.x.map(|v| v + sx);
                    field.y = field.y.map(|v| v + sy);
                }
                let warped = if synth.is_some() || sx != 0.0 || sy != 0.0 {
                    warp_image(truth, &field)?
                } else {
                    truth.clone()
                };
                let mut frame = short_exposure_blur(&warped, optics, r0);
                if scfg.noise_sd > 0.0 {
                    let mut noise = stream_rng(scfg.seed, NOISE_STREAM + k as u64);
                    frame.data_mut().iter_mut().for_each(|v| *v += scfg.noise_sd * normal(&mut noise));
                }
                out.push(frame);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(SynthSequence {
        sequence: ImageSequence::new(frames)?,
        truth: SynthTruth { r0, tilt_variance_px2: tilt_var, camera_shifts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        Image::from_fn(24, 24, |r, c| ((r as f64) * 0.4).sin() * 20.0 + c as f64)
    }

    #[test]
    fn zero_field_is_identity() {
        let img = ramp();
        assert_eq!(warp_image(&img, &TiltField::zeros(24, 24)).unwrap(), img);
    }

    #[test]
    fn constant_field_is_rigid_shift() {
        let img = ramp();
        let out = warp_image(&img, &TiltField::constant(24, 24, 2.0, -1.0)).unwrap();
        for r in 2..20 {
            for c in 3..20 {
                assert!((out.get(r, c) - img.get(r + 1, c - 2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_turbulence_no_noise_gives_diffraction_blur() {
        let cam = OpticalConfig::reference_camera();
        let truth = ramp();
        let scfg = SynthConfig::new(cam, Cn2Profile::constant(0.0), 3, 0.0, 1);
        let seq = degrade_sequence(&truth, &scfg).unwrap();
        let blurred = short_exposure_blur(&truth, &cam, f64::INFINITY);
        for f in seq.sequence.iter() {
            assert_eq!(f, &blurred);
        }
        assert!(seq.truth.r0.is_infinite());
    }

    #[test]
    fn seeded_sequences_are_reproducible() {
        let cam = OpticalConfig::reference_camera();
        let mut scfg = SynthConfig::new(cam, Cn2Profile::constant(5e-16), 3, 1.0, 9);
        scfg.camera_jitter_px = 0.5;
        let a = degrade_sequence(&ramp(), &scfg).unwrap();
        let b = degrade_sequence(&ramp(), &scfg).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.sequence.len(), 3);
        assert_ne!(a.sequence.frames()[0], a.sequence.frames()[1]);
        scfg.seed = 10;
        assert_ne!(degrade_sequence(&ramp(), &scfg).unwrap().sequence, a.sequence);
    }
}
