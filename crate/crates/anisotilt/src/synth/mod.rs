//! Statistical degradation synthesizer: random tilt fields with the anisoplanatic
//! correlation structure, warping, blur and sensor noise.

mod degrade;
mod fields;
mod scene;
mod spectrum;

pub use degrade::{
    degrade_sequence, short_exposure_blur, warp_image, SynthConfig, SynthSequence, SynthTruth,
};
pub use fields::{synth_tilt_fields, ClampReport, TiltField, TiltSynthesizer, MAX_CLAMPED_FRACTION};
pub use scene::procedural_scene;
pub use spectrum::TiltSpectrum;
