//! Two-dimensional tilt autocorrelation and cross-correlation lag fields (px²).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::optics::OpticalConfig;
use crate::profile::Cn2Profile;
use crate::stats::{tabulate_for_lags, TiltCorrelation1D};

/// Integer pixel lag `(n1, n2)`; `n1` runs along x and `n2` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LagVector {
    pub n1: i64,
    pub n2: i64,
}

impl LagVector {
    pub fn new(n1: i64, n2: i64) -> Self {
        Self { n1, n2 }
    }

    pub fn distance(&self) -> f64 {
        ((self.n1 * self.n1 + self.n2 * self.n2) as f64).sqrt()
    }

    /// Orientation of the lag; `None` at the origin.
    pub fn angle(&self) -> Option<f64> {
        (self.n1 != 0 || self.n2 != 0).then(|| (self.n2 as f64).atan2(self.n1 as f64))
    }

    /// (cos²φ, sin²φ, cosφ·sinφ) computed from the integer components.
    fn direction_terms(&self) -> (f64, f64, f64) {
        let d2 = (self.n1 * self.n1 + self.n2 * self.n2) as f64;
        if d2 == 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let (a, b) = (self.n1 as f64, self.n2 as f64);
        (a * a / d2, b * b / d2, a * b / d2)
    }
}

/// x-tilt autocorrelation at lag `n`.
pub fn autocorr_xx(n: LagVector, corr: &TiltCorrelation1D) -> Result<f64> {
    let (par, perp) = corr.at(n.distance())?;
    let (c2, s2, _) = n.direction_terms();
    Ok(par * c2 + perp * s2)
}

/// y-tilt autocorrelation at lag `n`.
pub fn autocorr_yy(n: LagVector, corr: &TiltCorrelation1D) -> Result<f64> {
    let (par, perp) = corr.at(n.distance())?;
    let (c2, s2, _) = n.direction_terms();
    Ok(par * s2 + perp * c2)
}

/// x/y tilt cross-correlation at lag `n`.
pub fn crosscorr_xy(n: LagVector, corr: &TiltCorrelation1D) -> Result<f64> {
    let (par, perp) = corr.at(n.distance())?;
    let (_, _, cs) = n.direction_terms();
    Ok((par - perp) * cs)
}

/// Which lag field to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Xx,
    Yy,
    Xy,
    Total,
    /// Half the total, the isotropic per-axis average.
    HalfTotal,
}

/// Dense lag fields over `[-N1, N1] × [-N2, N2]`, row-major with `n2` as the row index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltAutocorr2D {
    pub half_x: usize,
    pub half_y: usize,
    pub r_xx: Vec<f64>,
    pub r_yy: Vec<f64>,
    pub r_xy: Vec<f64>,
    pub r_t: Vec<f64>,
    pub variance_px2: f64,
}

impl TiltAutocorr2D {
    /// Builds the fields from a 1D table that reaches the grid corners.
    pub fn from_table(corr: &TiltCorrelation1D, half_x: usize, half_y: usize) -> Result<Self> {
        let w = 2 * half_x + 1;
        let rows: Vec<Vec<[f64; 3]>> = (0..2 * half_y + 1)
            .into_par_iter()
            .map(|r| {
                let n2 = r as i64 - half_y as i64;
                (0..w)
                    .map(|c| {
                        let n = LagVector::new(c as i64 - half_x as i64, n2);
                        let (par, perp) = corr.at(n.distance())?;
                        let (c2, s2, cs) = n.direction_terms();
                        Ok([par * c2 + perp * s2, par * s2 + perp * c2, (par - perp) * cs])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let flat: Vec<[f64; 3]> = rows.into_iter().flatten().collect();
        let r_xx: Vec<f64> = flat.iter().map(|v| v[0]).collect();
        let r_yy: Vec<f64> = flat.iter().map(|v| v[1]).collect();
        let r_xy = flat.iter().map(|v| v[2]).collect();
        let r_t = r_xx.iter().zip(&r_yy).map(|(a, b)| a + b).collect();
        Ok(Self {
            half_x,
            half_y,
            r_xx,
            r_yy,
            r_xy,
            r_t,
            variance_px2: corr.variance_px2(),
        })
    }

    pub fn width(&self) -> usize {
        2 * self.half_x + 1
    }

    pub fn height(&self) -> usize {
        2 * self.half_y + 1
    }

    pub fn contains(&self, n: LagVector) -> bool {
        n.n1.unsigned_abs() as usize <= self.half_x && n.n2.unsigned_abs() as usize <= self.half_y
    }

    fn index(&self, n: LagVector) -> usize {
        (n.n2 + self.half_y as i64) as usize * self.width() + (n.n1 + self.half_x as i64) as usize
    }

    /// Value of `component` at lag `n`, or `None` outside the grid.
    pub fn get(&self, component: Component, n: LagVector) -> Option<f64> {
        if !self.contains(n) {
            return None;
        }
        let i = self.index(n);
        Some(match component {
            Component::Xx => self.r_xx[i],
            Component::Yy => self.r_yy[i],
            Component::Xy => self.r_xy[i],
            Component::Total => self.r_t[i],
            Component::HalfTotal => 0.5 * self.r_t[i],
        })
    }

    pub fn field(&self, component: Component) -> Vec<f64> {
        match component {
            Component::Xx => self.r_xx.clone(),
            Component::Yy => self.r_yy.clone(),
            Component::Xy => self.r_xy.clone(),
            Component::Total => self.r_t.clone(),
            Component::HalfTotal => self.r_t.iter().map(|v| 0.5 * v).collect(),
        }
    }
}

/// Computes all four lag fields over `[-N, N]²`.
pub fn build_autocorr_grid(
    cfg: &OpticalConfig,
    profile: &Cn2Profile,
    half_extent: usize,
) -> Result<TiltAutocorr2D> {
    let table = tabulate_for_lags(cfg, profile, half_extent, half_extent)?;
    TiltAutocorr2D::from_table(&table, half_extent, half_extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Units;

    fn synthetic() -> TiltCorrelation1D {
        let par: Vec<f64> = (0..200).map(|i| 2.0 / (1.0 + 0.01 * i as f64)).collect();
        let perp: Vec<f64> = (0..200).map(|i| 2.0 / (1.0 + 0.005 * i as f64)).collect();
        TiltCorrelation1D::from_samples(0.25, 1e-6, Units::Px2, par, perp).unwrap()
    }

    #[test]
    fn axis_lags_collapse() {
        let t = synthetic();
        let (p5, q5) = t.at(5.0).unwrap();
        assert_eq!(autocorr_xx(LagVector::new(5, 0), &t).unwrap(), p5);
        assert_eq!(autocorr_xx(LagVector::new(0, 5), &t).unwrap(), q5);
        assert_eq!(autocorr_yy(LagVector::new(5, 0), &t).unwrap(), q5);
        assert_eq!(autocorr_yy(LagVector::new(0, 5), &t).unwrap(), p5);
        assert_eq!(crosscorr_xy(LagVector::new(7, 0), &t).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five_lag() {
        let t = synthetic();
        let (p, q) = t.at(5.0).unwrap();
        let xx = autocorr_xx(LagVector::new(3, 4), &t).unwrap();
        let yy = autocorr_yy(LagVector::new(3, 4), &t).unwrap();
        assert!((xx - (0.36 * p + 0.64 * q)).abs() < 1e-15);
        assert!((yy - (0.64 * p + 0.36 * q)).abs() < 1e-15);
        let d = LagVector::new(6, 6);
        let (p, q) = t.at(d.distance()).unwrap();
        assert!((crosscorr_xy(d, &t).unwrap() - 0.5 * (p - q)).abs() < 1e-15);
    }

    #[test]
    fn grid_invariants() {
        let t = synthetic();
        let g = TiltAutocorr2D::from_table(&t, 20, 20).unwrap();
        for n2 in -20..=20 {
            for n1 in -20..=20 {
                let n = LagVector::new(n1, n2);
                let m = LagVector::new(-n1, -n2);
                let s = LagVector::new(n2, n1);
                for c in [Component::Xx, Component::Yy, Component::Xy, Component::Total] {
                    assert_eq!(g.get(c, n), g.get(c, m));
                }
                assert_eq!(g.get(Component::Xx, n), g.get(Component::Yy, s));
                let xx = g.get(Component::Xx, n).unwrap();
                let yy = g.get(Component::Yy, n).unwrap();
                assert_eq!(g.get(Component::Total, n).unwrap(), xx + yy);
                if n1 == 0 || n2 == 0 {
                    assert_eq!(g.get(Component::Xy, n).unwrap(), 0.0);
                }
            }
        }
        assert_eq!(g.get(Component::Xx, LagVector::new(0, 0)).unwrap(), 2.0);
        assert!(g.get(Component::Xx, LagVector::new(21, 0)).is_none());
    }

    #[test]
    fn lag_geometry() {
        assert_eq!(LagVector::new(0, 0).distance(), 0.0);
        assert!(LagVector::new(0, 0).angle().is_none());
        assert_eq!(LagVector::new(3, 4).distance(), 5.0);
    }
}
