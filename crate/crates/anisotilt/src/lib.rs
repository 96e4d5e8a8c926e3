//! Anisoplanatic tilt statistics, registration-aware OTF modelling, spectral-ratio Fried
//! parameter estimation and block-matching Wiener turbulence mitigation.

pub mod cli;
pub mod corr2d;
pub mod error;
pub mod fft;
pub mod friedest;
pub mod image;
pub mod imageio;
pub mod levels;
pub mod mitigation;
pub mod optics;
pub mod otf;
pub mod profile;
pub mod quadrature;
pub mod regmodel;
pub mod rng;
pub mod special;
pub mod sequence;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use optics::OpticalConfig;
pub use profile::Cn2Profile;
pub use sequence::ImageSequence;
