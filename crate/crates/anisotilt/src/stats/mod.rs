//! Anisoplanatic tilt statistics.

mod scalars;
mod table;
mod tilt;

pub use scalars::{
    aperture_weighted_moment, fried_parameter, isoplanatic_angle, source_weighted_moment,
    tilt_variance, IsoplanaticAngle, TiltVariance,
};
pub use table::{
    tabulate_correlations, tabulate_correlations_with, tabulate_for_lags, TiltCorrelation1D,
    Units, DEFAULT_STEP_PX,
};
pub use tilt::{
    tilt_corr_parallel, tilt_corr_perp, tilt_corr_pixels, tilt_corr_total,
    tilt_correlations_with, DirectionalTilt, TiltIntegrator, TiltQuadrature,
};
