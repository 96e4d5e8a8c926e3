//! Block matching against a prototype and dewarping with the interpolated shift field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::synth::TiltField;

/// Block similarity measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchCost {
    /// Sum of absolute differences.
    #[default]
    Sad,
    /// Normalised cross-correlation.
    Ncc,
}

/// Integer shift per non-overlapping `(2M+1)²` block, `t` with `frame(P + t) ≈ proto(P)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftField {
    pub rows: usize,
    pub cols: usize,
    pub half_width: usize,
    pub search_radius: usize,
    /// Block centres along x and y (px).
    pub centers_x: Vec<f64>,
    pub centers_y: Vec<f64>,
    /// `(dx, dy)` per block, row-major over blocks.
    pub shifts: Vec<[i32; 2]>,
    /// Blocks with no texture in the prototype; their shift is zero.
    pub flat: Vec<bool>,
}

impl ShiftField {
    pub fn stride(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn block_rows(&self) -> usize {
        self.centers_y.len()
    }

    pub fn block_cols(&self) -> usize {
        self.centers_x.len()
    }

    pub fn shift(&self, block_row: usize, block_col: usize) -> [i32; 2] {
        self.shifts[block_row * self.block_cols() + block_col]
    }

    /// Per-pixel field, bilinear between block centres and constant beyond the outer ones.
    pub fn dense(&self) -> TiltField {
        let wx: Vec<(usize, usize, f64)> = (0..self.cols).map(|c| weights(&self.centers_x, c as f64)).collect();
        let wy: Vec<(usize, usize, f64)> = (0..self.rows).map(|r| weights(&self.centers_y, r as f64)).collect();
        let at = |axis: usize, r: usize, c: usize| {
            let (y0, y1, fy) = wy[r];
            let (x0, x1, fx) = wx[c];
            let s = |br: usize, bc: usize| f64::from(self.shift(br, bc)[axis]);
            (s(y0, x0) * (1.0 - fx) + s(y0, x1) * fx) * (1.0 - fy)
                + (s(y1, x0) * (1.0 - fx) + s(y1, x1) * fx) * fy
        };
        TiltField {
            x: Image::from_fn(self.rows, self.cols, |r, c| at(0, r, c)),
            y: Image::from_fn(self.rows, self.cols, |r, c| at(1, r, c)),
        }
    }
}

fn weights(centers: &[f64], p: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= p) - 1;
    (i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i]))
}

fn block_spans(n: usize, size: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(size).map(|s| (s, (s + size).min(n))).collect()
}

/// Candidate shifts ordered by length, so ties resolve towards the smallest motion.
fn candidates(radius: usize) -> Vec<(i64, i64)> {
    let s = radius as i64;
    let mut v: Vec<(i64, i64)> = (-s..=s).flat_map(|dy| (-s..=s).map(move |dx| (dx, dy))).collect();
    v.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    v
}

fn match_block(
    frame: &Image,
    proto: &Image,
    (r0, r1): (usize, usize),
    (c0, c1): (usize, usize),
    cands: &[(i64, i64)],
    cost: MatchCost,
) -> ([i32; 2], bool) {
    let n = ((r1 - r0) * (c1 - c0)) as f64;
    let mut mean = 0.0;
    for r in r0..r1 {
        for c in c0..c1 {
            mean += proto.get(r, c);
        }
    }
    mean /= n;
    let mut var = 0.0;
    for r in r0..r1 {
        for c in c0..c1 {
            var += (proto.get(r, c) - mean).powi(2);
        }
    }
    if var == 0.0 {
        return ([0, 0], true);
    }
    let mut best = (f64::INFINITY, (0i64, 0i64));
    for &(dx, dy) in cands {
        let score = match cost {
            MatchCost::Sad => {
                let mut s = 0.0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        let f = frame.get_clamped(r as isize + dy as isize, c as isize + dx as isize);
                        s += (f - proto.get(r, c)).abs();
                    }
                    if s >= best.0 {
                        break;
                    }
                }
                s
            }
            MatchCost::Ncc => {
                let (mut sf, mut sff, mut sfp) = (0.0, 0.0, 0.0);
                for r in r0..r1 {
                    for c in c0..c1 {
                        let f = frame.get_clamped(r as isize + dy as isize, c as isize + dx as isize);
                        let p = proto.get(r, c) - mean;
                        sf += f;
                        sff += f * f;
                        sfp += f * p;
                    }
                }
                let fvar = sff - sf * sf / n;
                if fvar <= 0.0 {
                    f64::INFINITY
                } else {
                    -sfp / (fvar * var).sqrt()
                }
            }
        };
        if score < best.0 {
            best = (score, (dx, dy));
        }
    }
    ([best.1 .0 as i32, best.1 .1 as i32], false)
}

/// Exhaustive integer search within `±search_radius` for every block.
pub fn bma_register(
    frame: &Image,
    proto: &Image,
    half_width: usize,
    search_radius: usize,
    cost: MatchCost,
) -> Result<ShiftField> {
    if !frame.same_shape(proto) {
        return Err(Error::invalid("frame and prototype differ in size"));
    }
    if half_width == 0 || search_radius == 0 {
        return Err(Error::invalid("BMA needs M >= 1 and S >= 1"));
    }
    let size = 2 * half_width + 1;
    let ys = block_spans(frame.rows(), size);
    let xs = block_spans(frame.cols(), size);
    let cands = candidates(search_radius);
    let results: Vec<([i32; 2], bool)> = ys
        .par_iter()
        .flat_map_iter(|&yr| {
            let cands = &cands;
            xs.iter().map(move |&xr| match_block(frame, proto, yr, xr, cands, cost))
        })
        .collect();
    let mid = |&(a, b): &(usize, usize)| 0.5 * (a + b - 1) as f64;
    Ok(ShiftField {
        rows: frame.rows(),
        cols: frame.cols(),
        half_width,
        search_radius,
        centers_x: xs.iter().map(mid).collect(),
        centers_y: ys.iter().map(mid).collect(),
        shifts: results.iter().map(|r| r.0).collect(),
        flat: results.iter().map(|r| r.1).collect(),
    })
}

/// Inverse warp: the output at `p` is the frame at `p + t(p)`, bilinear with replicated
/// borders.
pub fn dewarp(frame: &Image, field: &TiltField) -> Result<Image> {
    if !(frame.same_shape(&field.x) && frame.same_shape(&field.y)) {
        return Err(Error::invalid("shift field and frame differ in size"));
    }
    let cols = frame.cols();
    let data = (0..frame.len())
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            frame.sample_bilinear(r as f64 + field.y.get(r, c), c as f64 + field.x.get(r, c))
        })
        .collect();
    Image::new(frame.rows(), cols, data)
}
