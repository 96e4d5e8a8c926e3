//! Six reference turbulence levels (constant Cn²) and their derived tilt statistics for the
//! reference camera, with the published values they are checked against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;
use crate::regmodel::registration_budget;
use crate::stats::{fried_parameter, isoplanatic_angle, tilt_variance};

/// Constant Cn² (m^(−2/3)) of levels 1–6.
pub const LEVEL_CN2: [f64; 6] = [0.1e-15, 0.25e-15, 0.5e-15, 1.0e-15, 1.5e-15, 2.0e-15];

/// Patch half-width used for the patch and residual variances (a 201 × 201 patch).
pub const LEVEL_HALF_WIDTH: usize = 100;

/// Relative tolerance on r₀, a power-law scalar.
pub const R0_TOLERANCE: f64 = 0.005;
/// Relative tolerance on the integrated statistics.
pub const STAT_TOLERANCE: f64 = 0.01;

pub const QUANTITIES: [&str; 7] = [
    "r0_m",
    "d_over_r0",
    "isoplanatic_angle_px",
    "rms_tilt_px",
    "tilt_variance_px2",
    "patch_tilt_variance_px2",
    "residual_tilt_variance_px2",
];

/// Published values per level, in the order of [`QUANTITIES`].
pub const REFERENCE_VALUES: [[f64; 7]; 6] = [
    [0.1901, 1.0697, 6.6174, 0.9026, 0.8147, 0.5333, 0.2154],
    [0.1097, 1.8536, 3.8188, 1.4272, 2.0368, 1.3333, 0.5385],
    [0.0724, 2.8096, 2.5194, 2.0183, 4.0736, 2.6666, 1.0770],
    [0.0478, 4.2585, 1.6622, 2.8543, 8.1473, 5.3333, 2.1541],
    [0.0374, 5.4314, 1.3033, 3.4958, 12.2209, 7.9999, 3.2311],
    [0.0315, 6.4547, 1.0966, 4.0367, 16.2946, 10.6666, 4.3082],
];

/// Constant profile of level `level` (1-based).
pub fn level_profile(level: usize) -> Result<Cn2Profile> {
    if !(1..=LEVEL_CN2.len()).contains(&level) {
        return Err(Error::invalid(format!("turbulence level must be 1..=6, got {level}")));
    }
    Ok(Cn2Profile::constant(LEVEL_CN2[level - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRow {
    pub cn2: f64,
    pub r0_m: f64,
    pub d_over_r0: f64,
    pub isoplanatic_angle_px: f64,
    pub rms_tilt_px: f64,
    pub tilt_variance_px2: f64,
    pub patch_tilt_variance_px2: f64,
    pub residual_tilt_variance_px2: f64,
}

impl LevelRow {
    pub fn values(&self) -> [f64; 7] {
        [
            self.r0_m,
            self.d_over_r0,
            self.isoplanatic_angle_px,
            self.rms_tilt_px,
            self.tilt_variance_px2,
            self.patch_tilt_variance_px2,
            self.residual_tilt_variance_px2,
        ]
    }
}

/// All statistics for one constant-Cn² path; patch quantities use `(2M+1)²` patches and
/// no registration error.
pub fn level_row(cfg: &OpticalConfig, cn2: f64, half_width: usize) -> Result<LevelRow> {
    let profile = Cn2Profile::constant(cn2);
    let r0 = fried_parameter(cfg, &profile)?;
    let theta = isoplanatic_angle(cfg, &profile)?;
    let tv = tilt_variance(cfg, &profile)?;
    let budget = registration_budget(cfg, &profile, half_width, 0.0)?;
    Ok(LevelRow {
        cn2,
        r0_m: r0,
        d_over_r0: cfg.aperture_diameter / r0,
        isoplanatic_angle_px: theta.pixels,
        rms_tilt_px: tv.rms_px(),
        tilt_variance_px2: tv.px2,
        patch_tilt_variance_px2: budget.sigma_p2,
        residual_tilt_variance_px2: budget.sigma_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCheck {
    pub level: usize,
    pub quantity: &'static str,
    pub computed: f64,
    pub reference: f64,
    pub rel_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Computes every level and compares each value with the published one.
pub fn check_levels(cfg: &OpticalConfig) -> Result<(Vec<LevelRow>, Vec<LevelCheck>)> {
    let rows = LEVEL_CN2
        .iter()
        .map(|&c| level_row(cfg, c, LEVEL_HALF_WIDTH))
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::with_capacity(42);
    for (i, row) in rows.iter().enumerate() {
        for (j, (&computed, &reference)) in row.values().iter().zip(&REFERENCE_VALUES[i]).enumerate() {
            let tolerance = if j == 0 { R0_TOLERANCE } else { STAT_TOLERANCE };
            let rel_diff = (computed - reference) / reference;
            checks.push(LevelCheck {
                level: i + 1,
                quantity: QUANTITIES[j],
                computed,
                reference,
                rel_diff,
                tolerance,
                pass: rel_diff.abs() <= tolerance,
            });
        }
    }
    Ok((rows, checks))
}
