//! Two-source Z-tilt correlation integrals for a spherical wave.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;
use crate::quadrature::GaussLegendre;

/// Node counts and convergence policy for the triple integral over path, pupil radius
/// and pupil angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltQuadrature {
    pub path_nodes: usize,
    pub radial_nodes: usize,
    pub angle_nodes: usize,
    /// Relative change allowed between a rule and its doubling.
    pub tolerance: f64,
    pub max_refinements: u32,
}

impl Default for TiltQuadrature {
    fn default() -> Self {
        Self {
            path_nodes: 64,
            radial_nodes: 64,
            angle_nodes: 64,
            tolerance: 1e-4,
            max_refinements: 1,
        }
    }
}

impl TiltQuadrature {
    pub fn doubled(self) -> Self {
        Self {
            path_nodes: self.path_nodes * 2,
            radial_nodes: self.radial_nodes * 2,
            angle_nodes: self.angle_nodes * 2,
            ..self
        }
    }

    pub(crate) fn key(&self) -> [usize; 3] {
        [self.path_nodes, self.radial_nodes, self.angle_nodes]
    }
}

/// Correlation of the tilt component parallel and perpendicular to the source separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalTilt {
    pub parallel: f64,
    pub perpendicular: f64,
}

impl DirectionalTilt {
    pub fn total(&self) -> f64 {
        self.parallel + self.perpendicular
    }

    fn scale(self, k: f64) -> Self {
        Self {
            parallel: self.parallel * k,
            perpendicular: self.perpendicular * k,
        }
    }
}

struct PathNode {
    /// z / L
    frac: f64,
    /// (L - z) / D, multiplies the separation angle
    lever: f64,
    /// quadrature weight times Cn²(z)
    weight: f64,
}

struct RadialNode {
    u: f64,
    weight: f64,
    isotropic: f64,
    directional: f64,
    total: f64,
}

/// Precomputed nodes for repeated evaluation at many separations.
pub struct TiltIntegrator {
    path: Vec<PathNode>,
    radial: Vec<RadialNode>,
    cos_angle: Vec<f64>,
    angle_step: f64,
    coef_directional: f64,
    coef_total: f64,
}

impl TiltIntegrator {
    pub fn new(cfg: &OpticalConfig, profile: &Cn2Profile, q: &TiltQuadrature) -> Self {
        let l = cfg.path_length;
        let d = cfg.aperture_diameter;
        let path = profile
            .weighted_nodes(l, q.path_nodes)
            .into_iter()
            .map(|(z, w)| PathNode {
                frac: z / l,
                lever: (l - z) / d,
                weight: w,
            })
            .collect();
        let radial = GaussLegendre::new(q.radial_nodes)
            .mapped(0.0, 1.0)
            .map(|(u, w)| {
                let root = (1.0 - u * u).sqrt();
                let acos = u.acos();
                RadialNode {
                    u,
                    weight: w,
                    isotropic: u * acos / 8.0 + u * root * (u * u * u / 12.0 - 5.0 * u / 24.0),
                    directional: u * root * (u * u * u - u) / 3.0,
                    total: u * acos - u * u * (3.0 - 2.0 * u * u) * root,
                }
            })
            .collect();
        // The angular integrand is even about pi, so the midpoint rule on [0, 2pi] is
        // evaluated on its first half and doubled.
        let n = q.angle_nodes.max(2).next_multiple_of(2);
        let angle_step = 2.0 * PI / n as f64;
        let cos_angle = (0..n / 2)
            .map(|j| ((j as f64 + 0.5) * angle_step).cos())
            .collect();
        let d13 = d.powf(-1.0 / 3.0);
        Self {
            path,
            radial,
            cos_angle,
            angle_step,
            coef_directional: (-2.91 / 8.0) * (64.0 / PI).powi(2) * d13,
            coef_total: (-2.91 / 2.0) * (16.0 / PI).powi(2) * d13,
        }
    }

    /// Parallel and perpendicular correlation (rad²) at separation `theta` (rad), together
    /// with an independent evaluation of the total correlation kernel.
    pub fn evaluate(&self, theta: f64) -> (DirectionalTilt, f64) {
        let mut iso = 0.0;
        let mut dir_all = 0.0;
        let mut dir_cos2 = 0.0;
        let mut total = 0.0;
        for p in &self.path {
            let s = p.lever * theta;
            let s2 = s * s;
            let (mut z_iso, mut z_dir, mut z_cos2, mut z_tot) = (0.0, 0.0, 0.0, 0.0);
            for r in &self.radial {
                let a = r.u * p.frac;
                let base = a * a + s2;
                let cross = 2.0 * a * s;
                let mut sum = 0.0;
                let mut sum_cos2 = 0.0;
                for &c in &self.cos_angle {
                    let w = (base + cross * c).max(0.0);
                    let v = w.sqrt() * w.cbrt();
                    sum += v;
                    sum_cos2 += v * c * c;
                }
                z_iso += r.weight * r.isotropic * sum;
                z_dir += r.weight * r.directional * sum;
                z_cos2 += r.weight * r.directional * sum_cos2;
                z_tot += r.weight * r.total * sum;
            }
            iso += p.weight * z_iso;
            dir_all += p.weight * z_dir;
            dir_cos2 += p.weight * z_cos2;
            total += p.weight * z_tot;
        }
        let h = 2.0 * self.angle_step;
        let c = self.coef_directional * h;
        let directional = DirectionalTilt {
            parallel: c * (iso + dir_cos2),
            perpendicular: c * (iso + dir_all - dir_cos2),
        };
        (directional, self.coef_total * h * total)
    }
}

fn check_inputs(cfg: &OpticalConfig, profile: &Cn2Profile, theta: f64) -> Result<()> {
    cfg.validate()?;
    profile.validate(cfg.path_length)?;
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::invalid(format!("separation must be >= 0, got {theta}")));
    }
    Ok(())
}

fn converged(last: f64, previous: f64, tol: f64) -> bool {
    (last - previous).abs() <= tol * last.abs().max(previous.abs())
}

/// Evaluates both directional correlations, doubling the rule until successive estimates
/// agree to `q.tolerance`. Returns the finest estimate and the independent total.
pub fn tilt_correlations_with(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    theta: f64,
    q: &TiltQuadrature,
) -> Result<(DirectionalTilt, f64)> {
    check_inputs(cfg, profile, theta)?;
    if profile.is_zero() {
        return Ok((DirectionalTilt { parallel: 0.0, perpendicular: 0.0 }, 0.0));
    }
    // Linear in Cn²: integrate the unit-peak shape and rescale.
    let (shape, peak) = profile.normalized();
    let mut rule = *q;
    let mut prev = TiltIntegrator::new(cfg, &shape, &rule).evaluate(theta);
    if q.max_refinements == 0 {
        return Ok((prev.0.scale(peak), prev.1 * peak));
    }
    let mut worst = (0.0, 0.0);
    for _ in 0..q.max_refinements {
        rule = rule.doubled();
        let next = TiltIntegrator::new(cfg, &shape, &rule).evaluate(theta);
        let pairs = [
            (next.0.parallel, prev.0.parallel),
            (next.0.perpendicular, prev.0.perpendicular),
            (next.1, prev.1),
        ];
        match pairs.iter().find(|(a, b)| !converged(*a, *b, q.tolerance)) {
            None => return Ok((next.0.scale(peak), next.1 * peak)),
            Some(&pair) => worst = pair,
        }
        prev = next;
    }
    Err(Error::Quadrature {
        last: worst.0 * peak,
        previous: worst.1 * peak,
    })
}

/// Tilt correlation (rad²) along the source separation.
pub fn tilt_corr_parallel(cfg: &OpticalConfig, profile: &Cn2Profile, theta: f64) -> Result<f64> {
    Ok(tilt_correlations_with(cfg, profile, theta, &TiltQuadrature::default())?.0.parallel)
}

/// Tilt correlation (rad²) across the source separation.
pub fn tilt_corr_perp(cfg: &OpticalConfig, profile: &Cn2Profile, theta: f64) -> Result<f64> {
    Ok(tilt_correlations_with(cfg, profile, theta, &TiltQuadrature::default())?.0.perpendicular)
}

/// Total two-source tilt correlation (rad²), from its own kernel.
pub fn tilt_corr_total(cfg: &OpticalConfig, profile: &Cn2Profile, theta: f64) -> Result<f64> {
    Ok(tilt_correlations_with(cfg, profile, theta, &TiltQuadrature::default())?.1)
}

/// Converts a correlation in rad² to px².
pub fn tilt_corr_pixels(corr_rad2: f64, cfg: &OpticalConfig) -> f64 {
    cfg.rad2_to_px2(corr_rad2)
}
