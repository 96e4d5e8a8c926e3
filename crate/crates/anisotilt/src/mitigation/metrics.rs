//! Full-reference image quality: PSNR and SSIM.

use crate::error::{Error, Result};
use crate::image::Image;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid("images differ in size"));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    if !(peak > 0.0) {
        return Err(Error::invalid("PSNR peak must be positive"));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

fn gaussian_taps() -> Vec<f64> {
    let taps: Vec<f64> = (0..=2 * SSIM_RADIUS)
        .map(|i| {
            let d = i as f64 - SSIM_RADIUS as f64;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable Gaussian filter over the region where the whole window fits.
fn filter_valid(data: &[f64], rows: usize, cols: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (vr, vc) = (rows + 1 - n, cols + 1 - n);
    let mut horiz = vec![0.0; rows * vc];
    for r in 0..rows {
        for c in 0..vc {
            horiz[r * vc + c] = taps.iter().enumerate().map(|(k, t)| t * data[r * cols + c + k]).sum();
        }
    }
    let mut out = vec![0.0; vr * vc];
    for r in 0..vr {
        for c in 0..vc {
            out[r * vc + c] = taps.iter().enumerate().map(|(k, t)| t * horiz[(r + k) * vc + c]).sum();
        }
    }
    (out, vr, vc)
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5) and dynamic range
/// `peak`.
pub fn ssim(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    let n = 2 * SSIM_RADIUS + 1;
    if a.rows() < n || a.cols() < n {
        return Err(Error::invalid(format!("SSIM needs images of at least {n}x{n}")));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("SSIM dynamic range must be positive"));
    }
    let taps = gaussian_taps();
    let (rows, cols) = (a.rows(), a.cols());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    };
    let (mu_a, _, _) = filter_valid(a.data(), rows, cols, &taps);
    let (mu_b, _, _) = filter_valid(b.data(), rows, cols, &taps);
    let (aa, _, _) = filter_valid(&prod(&|x, _| x * x), rows, cols, &taps);
    let (bb, _, _) = filter_valid(&prod(&|_, y| y * y), rows, cols, &taps);
    let (ab, _, _) = filter_valid(&prod(&|x, y| x * y), rows, cols, &taps);
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 1.0);
        let p = psnr(&a, &b, 255.0).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((p - 48.13).abs() < 5e-3);
    }

    #[test]
    fn ssim_examples() {
        let a = Image::from_fn(24, 24, |r, c| ((r * 7 + c * 3) % 17) as f64 * 10.0);
        assert!((ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
        let check = Image::from_fn(24, 24, |r, c| if (r + c) % 2 == 0 { 255.0 } else { 0.0 });
        let inverse = check.map(|v| 255.0 - v);
        assert!(ssim(&check, &inverse, 255.0).unwrap() < -0.95);
        assert!(ssim(&Image::zeros(8, 8), &Image::zeros(8, 8), 255.0).is_err());
    }
}
