use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Refractive-index structure parameter along the path (m^(-2/3)), with z = 0 at the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Cn2Profile {
    Constant {
        value: f64,
    },
    /// Linear ramp from the source end to the aperture end.
    Linear {
        at_source: f64,
        at_aperture: f64,
    },
    /// Piecewise-linear samples on a grid covering [0, L].
    Sampled {
        z: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Cn2Profile {
    pub fn constant(value: f64) -> Self {
        Cn2Profile::Constant { value }
    }

    /// Linear profile with the given path mean and aperture-minus-source difference.
    pub fn linear_with_mean(mean: f64, delta: f64) -> Self {
        Cn2Profile::Linear {
            at_source: mean - 0.5 * delta,
            at_aperture: mean + 0.5 * delta,
        }
    }

    pub fn validate(&self, path_length: f64) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            Cn2Profile::Constant { value } => {
                if !finite_nonneg(*value) {
                    return Err(Error::invalid(format!("Cn2 must be >= 0, got {value}")));
                }
            }
            Cn2Profile::Linear { at_source, at_aperture } => {
                if !finite_nonneg(*at_source) || !finite_nonneg(*at_aperture) {
                    return Err(Error::invalid(format!(
                        "linear Cn2 endpoints must be >= 0, got {at_source} and {at_aperture}"
                    )));
                }
            }
            Cn2Profile::Sampled { z, values } => {
                if z.len() < 2 || z.len() != values.len() {
                    return Err(Error::invalid(
                        "sampled Cn2 needs at least two (z, value) pairs of equal length",
                    ));
                }
                if z.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("sampled Cn2 grid must be strictly increasing"));
                }
                let tol = 1e-9 * path_length;
                if z[0].abs() > tol || (z[z.len() - 1] - path_length).abs() > tol {
                    return Err(Error::invalid(format!(
                        "sampled Cn2 grid must span [0, {path_length}], got [{}, {}]",
                        z[0],
                        z[z.len() - 1]
                    )));
                }
                if let Some(v) = values.iter().find(|v| !finite_nonneg(**v)) {
                    return Err(Error::invalid(format!("Cn2 samples must be >= 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Value at distance `z` from the source on a path of length `path_length`.
    pub fn at(&self, z: f64, path_length: f64) -> f64 {
        match self {
            Cn2Profile::Constant { value } => *value,
            Cn2Profile::Linear { at_source, at_aperture } => {
                at_source + (at_aperture - at_source) * (z / path_length)
            }
            Cn2Profile::Sampled { z: zs, values } => {
                if z <= zs[0] {
                    return values[0];
                }
                let last = zs.len() - 1;
                if z >= zs[last] {
                    return values[last];
                }
                let i = zs.partition_point(|&s| s <= z) - 1;
                let t = (z - zs[i]) / (zs[i + 1] - zs[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Cn2Profile::Constant { value } => *value == 0.0,
            Cn2Profile::Linear { at_source, at_aperture } => *at_source == 0.0 && *at_aperture == 0.0,
            Cn2Profile::Sampled { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// Profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Cn2Profile::Constant { value } => Cn2Profile::Constant { value: value * factor },
            Cn2Profile::Linear { at_source, at_aperture } => Cn2Profile::Linear {
                at_source: at_source * factor,
                at_aperture: at_aperture * factor,
            },
            Cn2Profile::Sampled { z, values } => Cn2Profile::Sampled {
                z: z.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }

    /// Splits the profile into a unit-peak shape and its peak value.
    pub fn normalized(&self) -> (Self, f64) {
        let peak = match self {
            Cn2Profile::Constant { value } => *value,
            Cn2Profile::Linear { at_source, at_aperture } => at_source.max(*at_aperture),
            Cn2Profile::Sampled { values, .. } => values.iter().copied().fold(0.0, f64::max),
        };
        if peak > 0.0 {
            (self.scaled(1.0 / peak), peak)
        } else {
            (self.clone(), 0.0)
        }
    }

    /// Bit-level fingerprint of the profile, used as a cache key.
    pub(crate) fn key(&self) -> Vec<u64> {
        match self {
            Cn2Profile::Constant { value } => vec![0, value.to_bits()],
            Cn2Profile::Linear { at_source, at_aperture } => {
                vec![1, at_source.to_bits(), at_aperture.to_bits()]
            }
            Cn2Profile::Sampled { z, values } => std::iter::once(2)
                .chain(z.iter().map(|v| v.to_bits()))
                .chain(values.iter().map(|v| v.to_bits()))
                .collect(),
        }
    }

    /// Quadrature nodes `(z, weight * Cn2(z))` over [0, L] using about `nodes` points.
    ///
    /// Sampled profiles get one Gauss–Legendre panel per segment so the kinks sit on
    /// panel boundaries.
    pub(crate) fn weighted_nodes(&self, path_length: f64, nodes: usize) -> Vec<(f64, f64)> {
        let breaks: Vec<f64> = match self {
            Cn2Profile::Sampled { z, .. } => z.clone(),
            _ => vec![0.0, path_length],
        };
        let panels = breaks.len() - 1;
        let per_panel = nodes.div_ceil(panels).max(4);
        quadrature::composite(&breaks, per_panel)
            .into_iter()
            .map(|(z, w)| (z, w * self.at(z, path_length)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }

    /// ∫₀ᴸ Cn²(z) g(z) dz.
    pub fn integrate(&self, path_length: f64, nodes: usize, g: impl Fn(f64) -> f64) -> f64 {
        self.weighted_nodes(path_length, nodes)
            .into_iter()
            .map(|(z, w)| w * g(z))
            .sum()
    }
}
