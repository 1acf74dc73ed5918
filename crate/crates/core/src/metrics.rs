//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            expected: b.shape(),
            actual: a.shape(),
        });
    }
    Ok(())
}

pub fn mse(x: &DenseMatrix, reference: &DenseMatrix) -> Result<f64> {
    same_shape("mse", x, reference)?;
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(peak^2 / MSE)` in dB; `+inf` for identical inputs.
pub fn psnr(x: &DenseMatrix, reference: &DenseMatrix, peak: f64) -> Result<f64> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be > 0, got {peak}")));
    }
    let mse = mse(x, reference)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Renders a PSNR value, using `inf` for the lossless case.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            w.push((-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5),
/// dynamic range 1.
pub fn ssim(x: &DenseMatrix, reference: &DenseMatrix) -> Result<f64> {
    same_shape("ssim", x, reference)?;
    let (h, w) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - SSIM_WINDOW {
        for left in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let g = win[i * SSIM_WINDOW + j];
                    let a = x[(top + i, left + j)];
                    let b = reference[(top + i, left + j)];
                    mx += g * a;
                    my += g * b;
                    sxx += g * a * a;
                    syy += g * b * b;
                    sxy += g * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
