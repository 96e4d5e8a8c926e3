//! Tabulated parallel/perpendicular tilt correlations on a uniform separation grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use super::tilt::{tilt_correlations_with, TiltIntegrator, TiltQuadrature};
use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;

/// Default table step in pixels.
pub const DEFAULT_STEP_PX: f64 = 0.25;

/// Every this many grid points the rule is also doubled to confirm convergence.
const CONVERGENCE_STRIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Rad2,
    Px2,
}

/// Parallel, perpendicular and total correlation on a uniform separation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltCorrelation1D {
    step_px: f64,
    pixel_angle: f64,
    units: Units,
    r_par: Vec<f64>,
    r_perp: Vec<f64>,
    r_total: Vec<f64>,
}

impl TiltCorrelation1D {
    /// Builds a table from samples at separations `0, step, 2·step, …` (px).
    pub fn from_samples(
        step_px: f64,
        pixel_angle: f64,
        units: Units,
        r_par: Vec<f64>,
        r_perp: Vec<f64>,
    ) -> Result<Self> {
        if !(step_px > 0.0) || r_par.is_empty() || r_par.len() != r_perp.len() {
            return Err(Error::invalid("correlation table needs a positive step and matching rows"));
        }
        if r_par.iter().chain(&r_perp).any(|v| !v.is_finite()) {
            return Err(Error::invalid("correlation table contains non-finite values"));
        }
        let r_total = r_par.iter().zip(&r_perp).map(|(a, b)| a + b).collect();
        Ok(Self { step_px, pixel_angle, units, r_par, r_perp, r_total })
    }

    pub fn len(&self) -> usize {
        self.r_par.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_par.is_empty()
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn step_px(&self) -> f64 {
        self.step_px
    }

    pub fn max_separation_px(&self) -> f64 {
        (self.len() - 1) as f64 * self.step_px
    }

    pub fn separations_px(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| i as f64 * self.step_px)
    }

    pub fn separations_rad(&self) -> impl Iterator<Item = f64> + '_ {
        self.separations_px().map(|x| x * self.pixel_angle)
    }

    pub fn parallel(&self) -> &[f64] {
        &self.r_par
    }

    pub fn perpendicular(&self) -> &[f64] {
        &self.r_perp
    }

    pub fn total(&self) -> &[f64] {
        &self.r_total
    }

    /// One-axis tilt variance in the table's units.
    pub fn variance(&self) -> f64 {
        self.r_par[0]
    }

    pub fn variance_px2(&self) -> f64 {
        self.convert_value(self.variance(), Units::Px2)
    }

    pub fn variance_rad2(&self) -> f64 {
        self.convert_value(self.variance(), Units::Rad2)
    }

    fn convert_value(&self, v: f64, to: Units) -> f64 {
        let xi2 = self.pixel_angle * self.pixel_angle;
        match (self.units, to) {
            (Units::Rad2, Units::Px2) => v / xi2,
            (Units::Px2, Units::Rad2) => v * xi2,
            _ => v,
        }
    }

    /// The same table expressed in other units.
    pub fn to_units(&self, units: Units) -> Self {
        let conv = |row: &[f64]| row.iter().map(|&v| self.convert_value(v, units)).collect();
        Self {
            units,
            r_par: conv(&self.r_par),
            r_perp: conv(&self.r_perp),
            r_total: conv(&self.r_total),
            ..*self
        }
    }

    fn scaled(&self, k: f64) -> Self {
        let sc = |row: &[f64]| row.iter().map(|v| v * k).collect::<Vec<_>>();
        Self {
            r_par: sc(&self.r_par),
            r_perp: sc(&self.r_perp),
            r_total: sc(&self.r_total),
            ..*self
        }
    }

    /// Parallel and perpendicular correlation at a separation of `d` pixels, by local
    /// cubic interpolation with even reflection about zero.
    pub fn at(&self, d: f64) -> Result<(f64, f64)> {
        let max = self.max_separation_px();
        if !(d >= 0.0) || d > max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { lag: d, max });
        }
        let x = d / self.step_px;
        let n = self.len();
        if n < 4 {
            let i = (x.round() as usize).min(n - 1);
            return Ok((self.r_par[i], self.r_perp[i]));
        }
        let mut i = x.floor() as usize;
        if i >= n - 1 {
            i = n - 2;
        }
        let t = x - i as f64;
        if t == 0.0 {
            return Ok((self.r_par[i], self.r_perp[i]));
        }
        // Stencil i-1..=i+2, reflected at zero and shifted inwards at the far end.
        let start = i as isize - 1;
        let start = start.min(n as isize - 4);
        let offset = x - start as f64;
        let idx = |k: isize| -> usize { (start + k).unsigned_abs() };
        let w = lagrange4(offset);
        let mut p = 0.0;
        let mut q = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let j = idx(k as isize);
            p += wk * self.r_par[j];
            q += wk * self.r_perp[j];
        }
        Ok((p, q))
    }
}

/// Lagrange weights on nodes 0, 1, 2, 3 at position `x`.
fn lagrange4(x: f64) -> [f64; 4] {
    let (a, b, c, d) = (x, x - 1.0, x - 2.0, x - 3.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

type CacheKey = ([u64; 7], Vec<u64>, [usize; 3], u64);

struct CachedRows {
    par: Vec<f64>,
    perp: Vec<f64>,
}

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<CachedRows>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<CachedRows>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Tabulates correlations (px²) at separations `0..=max_separation` in steps of `step`
/// pixels.
///
/// Results are memoised on the unit-peak profile shape, so profiles that differ only by a
/// constant factor share one computation.
pub fn tabulate_correlations(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    max_separation_px: f64,
    step_px: f64,
) -> Result<TiltCorrelation1D> {
    tabulate_correlations_with(cfg, profile, max_separation_px, step_px, &TiltQuadrature::default())
}

pub fn tabulate_correlations_with(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    max_separation_px: f64,
    step_px: f64,
    q: &TiltQuadrature,
) -> Result<TiltCorrelation1D> {
    cfg.validate()?;
    profile.validate(cfg.path_length)?;
    if !(max_separation_px >= 0.0 && max_separation_px.is_finite()) || !(step_px > 0.0) {
        return Err(Error::invalid(format!(
            "need max_separation >= 0 and step > 0, got {max_separation_px} and {step_px}"
        )));
    }
    let count = (max_separation_px / step_px - 1e-9).ceil().max(0.0) as usize + 1;
    let xi = cfg.angle_per_pixel();
    let (shape, peak) = profile.normalized();
    if peak == 0.0 {
        let zeros = vec![0.0; count];
        return TiltCorrelation1D::from_samples(step_px, xi, Units::Px2, zeros.clone(), zeros);
    }
    let key: CacheKey = (cfg.key(), shape.key(), q.key(), step_px.to_bits());
    let cached = cache().lock().expect("cache poisoned").get(&key).cloned();
    let rows = match cached {
        Some(rows) if rows.par.len() >= count => rows,
        found => {
            let have = found.as_ref().map_or(0, |r| r.par.len());
            let integrator = TiltIntegrator::new(cfg, &shape, q);
            let to_px = 1.0 / (xi * xi);
            let fresh: Vec<(f64, f64)> = (have..count)
                .into_par_iter()
                .map(|i| {
                    let theta = i as f64 * step_px * xi;
                    let (d, _) = integrator.evaluate(theta);
                    (d.parallel * to_px, d.perpendicular * to_px)
                })
                .collect();
            // Spot-check convergence along the new part of the grid.
            let checks: Vec<usize> = (have..count)
                .filter(|i| i % CONVERGENCE_STRIDE == 0 || *i == count - 1)
                .collect();
            checks.par_iter().try_for_each(|&i| {
                tilt_correlations_with(cfg, &shape, i as f64 * step_px * xi, q).map(|_| ())
            })?;
            let mut par = found.as_ref().map_or_else(Vec::new, |r| r.par.clone());
            let mut perp = found.as_ref().map_or_else(Vec::new, |r| r.perp.clone());
            par.extend(fresh.iter().map(|v| v.0));
            perp.extend(fresh.iter().map(|v| v.1));
            let rows = Arc::new(CachedRows { par, perp });
            cache()
                .lock()
                .expect("cache poisoned")
                .insert(key, Arc::clone(&rows));
            rows
        }
    };
    let table = TiltCorrelation1D::from_samples(
        step_px,
        xi,
        Units::Px2,
        rows.par[..count].to_vec(),
        rows.perp[..count].to_vec(),
    )?;
    Ok(table.scaled(peak))
}

/// Table covering every lag in a (2N+1)² grid.
pub fn tabulate_for_lags(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_rows: usize,
    half_cols: usize,
) -> Result<TiltCorrelation1D> {
    let reach = ((half_rows * half_rows + half_cols * half_cols) as f64).sqrt();
    tabulate_correlations(cfg, profile, reach + DEFAULT_STEP_PX, DEFAULT_STEP_PX)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_table() -> TiltCorrelation1D {
        let par: Vec<f64> = (0..40).map(|i| 5.0 - (i as f64 * 0.5).powi(2) * 0.01).collect();
        let perp: Vec<f64> = (0..40).map(|i| 5.0 - (i as f64 * 0.5).powi(2) * 0.002).collect();
        TiltCorrelation1D::from_samples(0.5, 1e-6, Units::Px2, par, perp).unwrap()
    }

    #[test]
    fn interpolation_is_exact_for_even_quadratics() {
        let t = quadratic_table();
        for d in [0.0, 0.1, 0.37, 3.3, 12.8, 19.5] {
            let (p, q) = t.at(d).unwrap();
            assert!((p - (5.0 - 0.01 * d * d)).abs() < 1e-12, "{d}");
            assert!((q - (5.0 - 0.002 * d * d)).abs() < 1e-12, "{d}");
        }
    }

    #[test]
    fn nodes_are_returned_exactly() {
        let t = quadratic_table();
        let (p, _) = t.at(5.0).unwrap();
        assert_eq!(p, t.parallel()[10]);
    }

    #[test]
    fn out_of_range_is_reported() {
        let t = quadratic_table();
        assert!(matches!(t.at(19.6), Err(Error::OutOfRange { .. })));
        assert!(t.at(-0.1).is_err());
    }

    #[test]
    fn unit_conversion_round_trips() {
        let t = quadratic_table();
        let back = t.to_units(Units::Rad2).to_units(Units::Px2);
        for (a, b) in t.total().iter().zip(back.total()) {
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
        assert_eq!(t.variance_px2(), 5.0);
    }
}
