//! Block-matching and Wiener filtering turbulence mitigation: prototype, registration,
//! fusion and restoration.

mod bma;
mod global;
mod metrics;
mod restore;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bma::{bma_register, dewarp, MatchCost, ShiftField};
pub use global::{global_register, GlobalShift};
pub use metrics::{psnr, ssim};
pub use restore::{wiener_filter, wiener_restore};

use crate::error::{Error, Result};
use crate::image::{mean_image, Image};
use crate::optics::OpticalConfig;
use crate::regmodel::{alpha_for, FrameShape, RegistrationSpec, QUANTIZATION_EPSILON};
use crate::sequence::ImageSequence;

/// Registration applied before frames are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistrationKind {
    None,
    Global,
    Bma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigationConfig {
    /// BMA block half-width M; blocks are `(2M+1)²`.
    pub half_width: usize,
    /// BMA search radius S (px).
    pub search_radius: usize,
    /// Wiener noise-to-signal ratio Γ.
    pub gamma: f64,
    pub registration: RegistrationKind,
    /// Register frames globally before averaging them into the BMA prototype.
    pub prototype_global: bool,
    /// Registration error-to-signal ratio ε used for the BMA α.
    pub epsilon: f64,
    pub cost: MatchCost,
    /// Output intensity bounds, applied after restoration.
    pub clip: Option<[f64; 2]>,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            half_width: 10,
            search_radius: 8,
            gamma: 0.001,
            registration: RegistrationKind::Bma,
            prototype_global: false,
            epsilon: QUANTIZATION_EPSILON,
            cost: MatchCost::Sad,
            clip: None,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.half_width == 0 || self.search_radius == 0 {
            return Err(Error::invalid("need M >= 1 and S >= 1"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("Γ must be >= 0, got {}", self.gamma)));
        }
        if let Some([lo, hi]) = self.clip {
            if !(lo < hi) {
                return Err(Error::invalid("clip range must be increasing"));
            }
        }
        self.registration_spec().validate()
    }

    /// The registration model used to select α. Global registration is subpixel, so it
    /// carries no quantization error.
    pub fn registration_spec(&self) -> RegistrationSpec {
        match self.registration {
            RegistrationKind::None => RegistrationSpec::None,
            RegistrationKind::Global => RegistrationSpec::Global { epsilon: 0.0 },
            RegistrationKind::Bma => {
                RegistrationSpec::Bma { half_width: self.half_width, epsilon: self.epsilon }
            }
        }
    }
}

/// Prototype image and the per-frame global shifts that went into it.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub image: Image,
    /// Shift of each frame relative to the mean position; zero without registration.
    pub shifts: Vec<GlobalShift>,
}

/// Average of the frames, optionally after whole-frame registration.
///
/// Registered frames are aligned to frame 0 and the mean shift is then removed, so the
/// prototype sits at the average geometry of the sequence.
pub fn build_prototype(seq: &ImageSequence, global_reg: bool) -> Result<Prototype> {
    let frames = seq.frames();
    if !global_reg {
        let zero = GlobalShift { dx: 0.0, dy: 0.0, peak_ncc: 1.0, refined: true, low_confidence: false };
        return Ok(Prototype { image: mean_image(frames)?, shifts: vec![zero; frames.len()] });
    }
    let reference = &frames[0];
    let raw: Vec<GlobalShift> = frames
        .par_iter()
        .map(|f| global_register(f, reference))
        .collect::<Result<_>>()?;
    let k = raw.len() as f64;
    let mx = raw.iter().map(|s| s.dx).sum::<f64>() / k;
    let my = raw.iter().map(|s| s.dy).sum::<f64>() / k;
    let shifts: Vec<GlobalShift> =
        raw.iter().map(|s| GlobalShift { dx: s.dx - mx, dy: s.dy - my, ..*s }).collect();
    let aligned: Vec<Image> = frames
        .par_iter()
        .zip(&shifts)
        .map(|(f, s)| f.shift_fourier(-s.dx, -s.dy))
        .collect();
    Ok(Prototype { image: mean_image(&aligned)?, shifts })
}

/// Pixelwise mean of registered frames.
pub fn fuse(frames: &[Image]) -> Result<Image> {
    mean_image(frames)
}

/// BMA-registers every frame to `proto`, dewarps and fuses.
pub fn bma_fuse(seq: &ImageSequence, proto: &Image, mcfg: &MitigationConfig) -> Result<Image> {
    let registered: Vec<Image> = seq
        .frames()
        .par_iter()
        .map(|f| {
            let field = bma_register(f, proto, mcfg.half_width, mcfg.search_radius, mcfg.cost)?;
            dewarp(f, &field.dense())
        })
        .collect::<Result<_>>()?;
    fuse(&registered)
}

/// Fused and restored images together with the model parameters used.
#[derive(Debug, Clone)]
pub struct MitigationOutput {
    pub fused: Image,
    pub restored: Image,
    pub alpha: f64,
    pub r0: f64,
}

/// Registration and averaging per `mcfg.registration`, then Wiener restoration with the α
/// that registration implies.
pub fn mitigate(
    seq: &ImageSequence,
    optics: &OpticalConfig,
    mcfg: &MitigationConfig,
    r0: f64,
) -> Result<MitigationOutput> {
    mcfg.validate()?;
    let fused = match mcfg.registration {
        RegistrationKind::None => fuse(seq.frames())?,
        RegistrationKind::Global => build_prototype(seq, true)?.image,
        RegistrationKind::Bma => {
            let proto = build_prototype(seq, mcfg.prototype_global)?;
            bma_fuse(seq, &proto.image, mcfg)?
        }
    };
    let shape = FrameShape { rows: seq.rows(), cols: seq.cols() };
    let alpha = alpha_for(optics, &mcfg.registration_spec(), shape)?;
    let restored = wiener_restore(&fused, optics, r0, alpha, mcfg.gamma, mcfg.clip)?;
    Ok(MitigationOutput { fused, restored, alpha, r0 })
}

/// Full block-matching and Wiener filtering pipeline.
pub fn bmwf(
    seq: &ImageSequence,
    optics: &OpticalConfig,
    mcfg: &MitigationConfig,
    r0: f64,
) -> Result<MitigationOutput> {
    let cfg = MitigationConfig { registration: RegistrationKind::Bma, ..mcfg.clone() };
    mitigate(seq, optics, &cfg, r0)
}
