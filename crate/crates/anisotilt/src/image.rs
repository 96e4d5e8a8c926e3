//! Grayscale image buffer with linear 64-bit intensities.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::otf::fft_frequency;

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "image of {rows}x{cols} cannot hold {} samples",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    /// Pixel with replicated borders.
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.rows as isize - 1) as usize;
        let c = col.clamp(0, self.cols as isize - 1) as usize;
        self.data[r * self.cols + c]
    }

    /// Bilinear sample at fractional position, replicating borders.
    pub fn sample_bilinear(&self, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.rows - 1) as f64);
        let x = x.clamp(0.0, (self.cols - 1) as f64);
        let y0 = y.floor();
        let x0 = x.floor();
        let ty = y - y0;
        let tx = x - x0;
        let (r0, c0) = (y0 as usize, x0 as usize);
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let top = self.get(r0, c0) * (1.0 - tx) + self.get(r0, c1) * tx;
        let bottom = self.get(r1, c0) * (1.0 - tx) + self.get(r1, c1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Mirror-extends the image by `pad` pixels on every side (edge pixel repeated).
    pub fn symmetric_pad(&self, pad: usize) -> Self {
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let period = 2 * n;
            let m = i.rem_euclid(period);
            (if m < n { m } else { period - 1 - m }) as usize
        };
        let rows = self.rows + 2 * pad;
        let cols = self.cols + 2 * pad;
        Self::from_fn(rows, cols, |r, c| {
            let rr = reflect(r as isize - pad as isize, self.rows);
            let cc = reflect(c as isize - pad as isize, self.cols);
            self.get(rr, cc)
        })
    }

    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self.get(row0 + r, col0 + c))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Multiplies the spectrum of the mirror-padded image by `gain(fx, fy)` (cycles/px) and
    /// returns the real part of the cropped result.
    pub fn filter_frequency(&self, pad: usize, gain: impl Fn(f64, f64) -> Complex64) -> Self {
        let padded = self.symmetric_pad(pad);
        let (rows, cols) = (padded.rows, padded.cols);
        let fft = Fft2::new(rows, cols);
        let mut spec = fft.forward_real(&padded.data);
        for r in 0..rows {
            let fy = fft_frequency(r, rows);
            for c in 0..cols {
                spec[r * cols + c] *= gain(fft_frequency(c, cols), fy);
            }
        }
        fft.inverse(&mut spec);
        Self::from_fn(self.rows, self.cols, |r, c| spec[(r + pad) * cols + c + pad].re)
    }

    /// Translates the content by `(dx, dy)` pixels with band-limited interpolation, so the
    /// result at `(x, y)` is the input at `(x − dx, y − dy)`.
    pub fn shift_fourier(&self, dx: f64, dy: f64) -> Self {
        if dx == 0.0 && dy == 0.0 {
            return self.clone();
        }
        let pad = (dx.abs().max(dy.abs()).ceil() as usize + 8).min(self.rows.min(self.cols));
        self.filter_frequency(pad, |fx, fy| {
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (fx * dx + fy * dy))
        })
    }
}

/// Pixelwise arithmetic mean of equally sized images.
pub fn mean_image(frames: &[Image]) -> Result<Image> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InsufficientData("no frames to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for f in frames {
        if !f.same_shape(first) {
            return Err(Error::invalid("frames differ in size"));
        }
        for (a, v) in acc.iter_mut().zip(&f.data) {
            *a += v;
        }
    }
    let k = 1.0 / frames.len() as f64;
    acc.iter_mut().for_each(|v| *v *= k);
    Image::new(first.rows, first.cols, acc)
}
