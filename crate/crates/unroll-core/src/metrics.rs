//! Full-reference scoring: PSNR, SSIM, and the training-style losses
//! (mean absolute difference and its Fourier-domain counterpart) used here
//! as evaluation functions.
//!
//! The ℓ1 terms are normalized by element count so values are
//! resolution-independent.

use serde::{Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::fft::forward_fft;
use crate::image::Image;

/// Default weight of the Fourier term in [`combined_loss`].
pub const DEFAULT_FFT_WEIGHT: f64 = 0.1;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    /// Peak signal-to-noise ratio in dB; `+inf` for identical images,
    /// serialized as the string `"inf"`.
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
    pub fft_loss: f64,
    /// `mae + 0.1 · fft_loss`.
    pub combined: f64,
}

fn serialize_db<S: Serializer>(v: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        ser.serialize_f64(*v)
    } else {
        ser.serialize_str("inf")
    }
}

pub fn score(a: &Image, b: &Image) -> Result<ScoreReport> {
    let mae = mae_loss(a, b)?;
    let fft = fft_loss(a, b)?;
    Ok(ScoreReport {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        mae,
        fft_loss: fft,
        combined: mae + DEFAULT_FFT_WEIGHT * fft,
    })
}

/// Mean absolute difference.
pub fn mae_loss(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// ℓ1 distance between DFT coefficient tensors, taken over real and
/// imaginary parts and normalized by coefficient count.
pub fn fft_loss(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let fa = forward_fft(a);
    let fb = forward_fft(b);
    let sum: f64 = fa
        .data()
        .iter()
        .zip(fb.data())
        .map(|(x, y)| {
            let d = x - y;
            d.re.abs() + d.im.abs()
        })
        .sum();
    Ok(sum / fa.data().len() as f64)
}

pub fn combined_loss(a: &Image, b: &Image, sigma: f64) -> Result<f64> {
    Ok(mae_loss(a, b)? + sigma * fft_loss(a, b)?)
}

/// `10·log10(1/MSE)` for unit-range images; `+inf` when identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let mse = a.sub(b).norm_sq() / a.data().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Structural similarity with the standard constants: 11×11 Gaussian window
/// (σ = 1.5), k₁ = 0.01, k₂ = 0.03, population covariance, averaged over the
/// valid (fully-windowed) region and over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(CoreError::InvalidParameter(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let r = SSIM_WINDOW / 2;
    // separable normalized gaussian window
    let mut w1 = [0.0; SSIM_WINDOW];
    for (i, slot) in w1.iter_mut().enumerate() {
        let d = i as f64 - r as f64;
        *slot = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let norm: f64 = w1.iter().sum();
    for slot in &mut w1 {
        *slot /= norm;
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        let pa = a.plane(c);
        let pb = b.plane(c);
        for y in r..h - r {
            for x in r..w - r {
                let (mut ma, mut mb, mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    let wy = w1[dy];
                    let row = (y + dy - r) * w;
                    for dx in 0..SSIM_WINDOW {
                        let wgt = wy * w1[dx];
                        let va = pa[row + x + dx - r];
                        let vb = pb[row + x + dx - r];
                        ma += wgt * va;
                        mb += wgt * vb;
                        maa += wgt * va * va;
                        mbb += wgt * vb * vb;
                        mab += wgt * va * vb;
                    }
                }
                let va = maa - ma * ma;
                let vb = mbb - mb * mb;
                let cov = mab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
