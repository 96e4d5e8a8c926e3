//! Whole-frame translation estimate: integer NCC peak refined by Lucas–Kanade.

use log::warn;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::Image;

const MAX_ITERATIONS: usize = 50;
const STEP_TOLERANCE: f64 = 1e-4;
/// Second NCC peak within this fraction of the first flags the match as ambiguous.
const AMBIGUITY_RATIO: f64 = 0.99;

/// Shift `d` such that `frame(x + d) ≈ reference(x)` (px).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalShift {
    pub dx: f64,
    pub dy: f64,
    /// NCC peak at the integer stage.
    pub peak_ncc: f64,
    /// False when refinement did not converge and the integer shift was kept.
    pub refined: bool,
    pub low_confidence: bool,
}

fn centered(img: &Image) -> Vec<Complex64> {
    let m = img.mean();
    img.data().iter().map(|&v| Complex64::new(v - m, 0.0)).collect()
}

/// Circular cross-correlation `c(s) = Σ ref(x) frame(x + s)` normalised to [−1, 1].
fn ncc_surface(frame: &Image, reference: &Image) -> Vec<f64> {
    let fft = Fft2::new(frame.rows(), frame.cols());
    let mut f = centered(frame);
    let mut r = centered(reference);
    let norm = (f.iter().map(|v| v.norm_sqr()).sum::<f64>()
        * r.iter().map(|v| v.norm_sqr()).sum::<f64>())
    .sqrt();
    fft.forward(&mut f);
    fft.forward(&mut r);
    let mut prod: Vec<Complex64> = f.iter().zip(&r).map(|(a, b)| b.conj() * a).collect();
    fft.inverse(&mut prod);
    prod.iter().map(|v| if norm > 0.0 { v.re / norm } else { 0.0 }).collect()
}

fn signed(k: usize, n: usize) -> i64 {
    if 2 * k < n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn integer_peak(frame: &Image, reference: &Image) -> (i64, i64, f64, bool) {
    let (rows, cols) = (frame.rows(), frame.cols());
    let surface = ncc_surface(frame, reference);
    let area = (rows * cols) as f64;
    let admissible = |sx: i64, sy: i64| {
        ((cols as i64 - sx.abs()) * (rows as i64 - sy.abs())) as f64 >= 0.5 * area
    };
    let mut best = (0i64, 0i64, f64::NEG_INFINITY);
    for ky in 0..rows {
        for kx in 0..cols {
            let (sx, sy) = (signed(kx, cols), signed(ky, rows));
            let v = surface[ky * cols + kx];
            if admissible(sx, sy) && v > best.2 {
                best = (sx, sy, v);
            }
        }
    }
    let mut second = f64::NEG_INFINITY;
    for ky in 0..rows {
        for kx in 0..cols {
            let (sx, sy) = (signed(kx, cols), signed(ky, rows));
            if (sx - best.0).abs() <= 1 && (sy - best.1).abs() <= 1 || !admissible(sx, sy) {
                continue;
            }
            second = second.max(surface[ky * cols + kx]);
        }
    }
    let ambiguous = best.2 > 0.0 && second >= AMBIGUITY_RATIO * best.2;
    (best.0, best.1, best.2, ambiguous)
}

/// Gauss–Newton refinement with gradients of the reference held fixed.
fn refine(frame: &Image, reference: &Image, dx0: f64, dy0: f64) -> Option<(f64, f64)> {
    let (rows, cols) = (reference.rows(), reference.cols());
    let margin = dx0.abs().max(dy0.abs()).ceil() as usize + 2;
    if 2 * margin + 2 >= rows.min(cols) {
        return None;
    }
    let mut grads = Vec::new();
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    for r in margin..rows - margin {
        for c in margin..cols - margin {
            let gx = 0.5 * (reference.get(r, c + 1) - reference.get(r, c - 1));
            let gy = 0.5 * (reference.get(r + 1, c) - reference.get(r - 1, c));
            hxx += gx * gx;
            hxy += gx * gy;
            hyy += gy * gy;
            grads.push((r, c, gx, gy));
        }
    }
    let det = hxx * hyy - hxy * hxy;
    if !(det > 1e-12 * (hxx * hyy).max(f64::MIN_POSITIVE)) {
        return None;
    }
    let (mut dx, mut dy) = (dx0, dy0);
    for _ in 0..MAX_ITERATIONS {
        let (mut bx, mut by) = (0.0, 0.0);
        for &(r, c, gx, gy) in &grads {
            let e = frame.sample_bilinear(r as f64 + dy, c as f64 + dx) - reference.get(r, c);
            bx += gx * e;
            by += gy * e;
        }
        let sx = -(hyy * bx - hxy * by) / det;
        let sy = -(hxx * by - hxy * bx) / det;
        dx += sx;
        dy += sy;
        if (dx - dx0).abs() > 1.5 || (dy - dy0).abs() > 1.5 {
            return None;
        }
        if sx.hypot(sy) < STEP_TOLERANCE {
            return Some((dx, dy));
        }
    }
    None
}

/// Estimates the translation of `frame` relative to `reference`.
pub fn global_register(frame: &Image, reference: &Image) -> Result<GlobalShift> {
    if !frame.same_shape(reference) {
        return Err(Error::invalid("frame and reference differ in size"));
    }
    let (sx, sy, peak, ambiguous) = integer_peak(frame, reference);
    if ambiguous {
        warn!("NCC peak at ({sx}, {sy}) is ambiguous; registration has low confidence");
    }
    let (dx, dy, refined) = match refine(frame, reference, sx as f64, sy as f64) {
        Some((dx, dy)) => (dx, dy, true),
        None => {
            warn!("gradient refinement did not converge; keeping integer shift ({sx}, {sy})");
            (sx as f64, sy as f64, false)
        }
    };
    Ok(GlobalShift { dx, dy, peak_ncc: peak, refined, low_confidence: ambiguous })
}
