//! Synthetic degradation: illumination attenuation, blur, noise.
//!
//! The ground truth is factored Retinex-style before anything else happens:
//! `refl = gt / max(luma, FLOOR)` and `illum = scale · max(luma, FLOOR)^γ`.
//! The dark sharp image is their product, which reduces to `scale · gt` when
//! `γ = 1`. Blur is applied after darkening (a dim scene gets motion-blurred
//! during the long exposure, not the other way around), then optional
//! additive Gaussian noise, then the export clamp.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conv::conv2d_circular;
use crate::error::{CoreError, Result};
use crate::image::{Illuminance, Image};
use crate::kernel::Kernel;

/// Lower bound used when dividing by luma; keeps reflectance finite on
/// black pixels. Any 8-bit pixel with a nonzero channel has luma above it.
pub const LUMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    Delta,
    Gaussian { sigma: f64 },
    Motion { length: f64, angle_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeSpec {
    pub kernel: KernelKind,
    pub kernel_size: usize,
    /// Global attenuation in (0, 1].
    pub illum_scale: f64,
    /// Shape exponent ≥ 1; 1 means spatially uniform attenuation.
    pub illum_gamma: f64,
    /// Std-dev of additive Gaussian noise in intensity units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Gaussian { sigma: 1.5 },
            kernel_size: 31,
            illum_scale: 0.2,
            illum_gamma: 1.0,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl DegradeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(CoreError::InvalidParameter(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.illum_scale > 0.0 && self.illum_scale <= 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "illum_scale must be in (0, 1], got {}",
                self.illum_scale
            )));
        }
        if self.illum_gamma < 1.0 {
            return Err(CoreError::InvalidParameter(format!(
                "illum_gamma must be >= 1, got {}",
                self.illum_gamma
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        match self.kernel {
            KernelKind::Delta => {}
            KernelKind::Gaussian { sigma } => {
                if sigma <= 0.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "gaussian sigma must be > 0, got {sigma}"
                    )));
                }
            }
            KernelKind::Motion { length, .. } => {
                if length < 1.0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "motion length must be >= 1, got {length}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sampled, normalized Gaussian taps of the given odd size.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if sigma <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "gaussian sigma must be > 0, got {sigma}"
        )));
    }
    let r = (size / 2) as isize;
    let mut taps = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push((-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    Kernel::from_raw(size, taps)
}

/// Line segment of the given length through the kernel center, rasterized by
/// dense bilinear splatting. Samples falling outside the grid are dropped.
fn motion_kernel(size: usize, length: f64, angle_deg: f64) -> Result<Kernel> {
    if length < 1.0 {
        return Err(CoreError::InvalidParameter(format!(
            "motion length must be >= 1, got {length}"
        )));
    }
    let c = (size / 2) as f64;
    let theta = angle_deg.to_radians();
    let (dy, dx) = (theta.sin(), theta.cos());
    let half = (length - 1.0) / 2.0;
    let samples = ((length * 16.0).ceil() as usize).max(1);
    let mut taps = vec![0.0; size * size];
    for i in 0..samples {
        let t = if samples == 1 {
            0.0
        } else {
            -half + (i as f64) * (2.0 * half) / (samples as f64 - 1.0)
        };
        let (y, x) = (c + t * dy, c + t * dx);
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        for (gy, gx, wgt) in [
            (y0, x0, (1.0 - fy) * (1.0 - fx)),
            (y0, x0 + 1.0, (1.0 - fy) * fx),
            (y0 + 1.0, x0, fy * (1.0 - fx)),
            (y0 + 1.0, x0 + 1.0, fy * fx),
        ] {
            if gy >= 0.0 && gx >= 0.0 && (gy as usize) < size && (gx as usize) < size {
                taps[gy as usize * size + gx as usize] += wgt;
            }
        }
    }
    Kernel::from_raw(size, taps)
}

pub fn make_kernel(spec: &DegradeSpec) -> Result<Kernel> {
    spec.validate()?;
    match spec.kernel {
        KernelKind::Delta => Kernel::delta(spec.kernel_size),
        KernelKind::Gaussian { sigma } => gaussian_kernel(spec.kernel_size, sigma),
        KernelKind::Motion { length, angle_deg } => {
            motion_kernel(spec.kernel_size, length, angle_deg)
        }
    }
}

/// A degraded observation together with the ground truth that produced it.
#[derive(Debug, Clone)]
pub struct Degraded {
    /// Observed image: blurred dark scene plus noise, clamped to [0, 1].
    pub image: Image,
    pub kernel: Kernel,
    /// True illuminance of the dark sharp scene, `scale · luma^γ`.
    pub illuminance: Illuminance,
    /// True reflectance, `gt / max(luma, FLOOR)`.
    pub reflectance: Image,
}

pub fn degrade(gt: &Image, spec: &DegradeSpec) -> Result<Degraded> {
    spec.validate()?;
    if gt.height() < 8 || gt.width() < 8 {
        return Err(CoreError::InvalidParameter(format!(
            "input must be at least 8x8, got {}x{}",
            gt.height(),
            gt.width()
        )));
    }
    let kernel = make_kernel(spec)?;
    let luma_safe = gt.luma().clamped(LUMA_FLOOR, f64::INFINITY);
    let reflectance = gt.div_illum(&luma_safe);
    // attenuation = scale * luma^(γ-1); γ = 1 degenerates to a flat scale,
    // which keeps the identity spec bit-exact
    let attenuation = if spec.illum_gamma == 1.0 {
        Illuminance::constant(gt.height(), gt.width(), spec.illum_scale)
    } else {
        luma_safe.map(|v| spec.illum_scale * v.powf(spec.illum_gamma - 1.0))
    };
    let illuminance = luma_safe.zip_map(&attenuation, |l, a| l * a);
    let dark = gt.mul_illum(&attenuation);
    let blurred = conv2d_circular(&dark, &kernel)?;
    let noisy = if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| CoreError::InvalidParameter(e.to_string()))?;
        let mut out = blurred;
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
        out
    } else {
        blurred
    };
    Ok(Degraded {
        image: noisy.clamp01(),
        kernel,
        illuminance,
        reflectance,
    })
}
