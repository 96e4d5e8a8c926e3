//! TOML run configuration.
//!
//! ```toml
//! [optics]
//! aperture_diameter = 0.2034   # D, m
//! focal_length = 1.2           # l, m
//! wavelength = 0.525e-6        # λ, m
//! path_length = 7000.0         # L, m
//! pixel_pitch = 1.5488e-6      # δ, m
//! # f_number = 5.8997          # optional; must match l/D to 1e-6
//!
//! [cn2]                        # m^(-2/3)
//! kind = "constant"
//! value = 1e-15
//!
//! [options]
//! seed = 7
//! [options.mitigation]
//! half_width = 10
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friedest::EstimatorOptions;
use crate::mitigation::MitigationConfig;
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;

/// Sequence synthesis settings not covered by optics and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    pub frames: usize,
    /// White noise standard deviation (intensity units).
    pub noise_sd: f64,
    /// Minimum tilt grid side (px).
    pub grid_extent: usize,
    /// Rigid per-frame camera shift standard deviation (px).
    pub camera_jitter_px: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { frames: 100, noise_sd: 1.0, grid_extent: 0, camera_jitter_px: 0.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub mitigation: MitigationConfig,
    pub estimator: EstimatorOptions,
    pub synth: SynthOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub optics: OpticalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cn2: Option<Cn2Profile>,
    #[serde(default)]
    pub options: CommandOptions,
}

impl RunConfig {
    pub fn new(optics: OpticalConfig, cn2: Option<Cn2Profile>) -> Self {
        Self { optics, cn2, options: CommandOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        if let Some(p) = &self.cn2 {
            p.validate(self.optics.path_length)?;
        }
        self.options.mitigation.validate()
    }

    pub fn profile(&self) -> Result<&Cn2Profile> {
        self.cn2.as_ref().ok_or_else(|| Error::Config("no [cn2] section".into()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
