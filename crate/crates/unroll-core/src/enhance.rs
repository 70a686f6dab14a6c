//! Final stage: brighten the recovered illuminance, optionally denoise the
//! recovered reflectance, recompose.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::{Illuminance, Image};
use crate::kernel::Kernel;
use crate::priors::DataOperator;
use crate::solver::{self, HyperParams, OperatorSet, SolveRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnhanceMode {
    /// Fixed power curve `l^γ` with `γ ∈ (0, 1]`.
    Gamma { gamma: f64 },
    /// Solves for the `γ` that brings `mean(l^γ)` to the target, by
    /// bisection (≤ 60 iterations, interval tolerance 1e-6).
    TargetMean { mean: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnhanceSpec {
    pub mode: EnhanceMode,
    /// Operator used on the reflectance before recomposition.
    pub denoise: DataOperator,
    /// When set, the denoiser output is formed as `r − n̂` with
    /// `n̂ = r − denoise(r)`, so alternative residual estimators can plug in.
    pub residual: bool,
}

impl Default for EnhanceSpec {
    fn default() -> Self {
        Self {
            mode: EnhanceMode::TargetMean { mean: 0.5 },
            denoise: DataOperator::Identity,
            residual: true,
        }
    }
}

impl EnhanceSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            EnhanceMode::Gamma { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(CoreError::InvalidParameter(format!(
                    "enhancement gamma must be in (0, 1], got {gamma}"
                )))
            }
            EnhanceMode::TargetMean { mean } if !(mean > 0.0 && mean < 1.0) => {
                Err(CoreError::InvalidParameter(format!(
                    "target mean must be in (0, 1), got {mean}"
                )))
            }
            _ => self.denoise.validate(),
        }
    }
}

const GAMMA_LO: f64 = 1e-4;
const GAMMA_HI: f64 = 16.0;
const BISECT_ITERS: usize = 60;
const BISECT_TOL: f64 = 1e-6;

/// Applies the configured brightness curve. Input values are clamped into
/// `[0, 1]` before the power map; an all-zero map is rejected since no power
/// curve can brighten it.
pub fn enhance_illuminance(l: &Illuminance, spec: &EnhanceSpec) -> Result<Illuminance> {
    spec.validate()?;
    if !l.is_finite() {
        return Err(CoreError::NonFinite("illuminance"));
    }
    let clamped = l.clamped(0.0, 1.0);
    if clamped.data().iter().all(|&v| v == 0.0) {
        return Err(CoreError::InvalidParameter(
            "all-zero illuminance cannot be enhanced".into(),
        ));
    }
    match spec.mode {
        EnhanceMode::Gamma { gamma } => {
            if gamma == 1.0 {
                Ok(clamped)
            } else {
                Ok(clamped.map(|v| v.powf(gamma)))
            }
        }
        EnhanceMode::TargetMean { mean } => {
            let mean_at = |g: f64| clamped.map(|v| v.powf(g)).mean();
            // mean(l^γ) is decreasing in γ for l in [0, 1]
            let (mut lo, mut hi) = (GAMMA_LO, GAMMA_HI);
            for _ in 0..BISECT_ITERS {
                if hi - lo <= BISECT_TOL {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if mean_at(mid) > mean {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let gamma = 0.5 * (lo + hi);
            Ok(clamped.map(|v| v.powf(gamma)))
        }
    }
}

/// Residual form computes and subtracts the estimated noise map; direct form
/// returns the operator output. Both reduce to `denoise(r)` for estimators
/// of the `r − smooth(r)` family.
pub fn denoise_reflectance(r: &Image, spec: &EnhanceSpec) -> Result<Image> {
    spec.validate()?;
    if !r.is_finite() {
        return Err(CoreError::NonFinite("reflectance"));
    }
    let smoothed = spec.denoise.apply(r)?;
    if spec.residual {
        let noise_est = r.sub(&smoothed);
        Ok(r.sub(&noise_est))
    } else {
        Ok(smoothed)
    }
}

/// Elementwise product with the illuminance broadcast over channels. No
/// clamping; that happens at export.
pub fn recompose(r: &Image, l: &Illuminance) -> Result<Image> {
    if r.height() != l.height() || r.width() != l.width() {
        return Err(CoreError::DimensionMismatch(format!(
            "reflectance {}x{} vs illuminance {}x{}",
            r.height(),
            r.width(),
            l.height(),
            l.width()
        )));
    }
    Ok(r.mul_illum(l))
}

#[derive(Debug, Clone)]
pub struct Restored {
    /// Recomposed output, unclamped.
    pub output: Image,
    pub solve: SolveRun,
}

/// Full pipeline: unrolled solve, then enhancement and recomposition.
pub fn restore(
    x: &Image,
    k: &Kernel,
    hyper: &HyperParams,
    ops: &OperatorSet,
    spec: &EnhanceSpec,
) -> Result<Restored> {
    let solve = solver::run(x, k, hyper, ops)?;
    let l = enhance_illuminance(&solve.state.l, spec)?;
    let r = denoise_reflectance(&solve.state.r, spec)?;
    let output = recompose(&r, &l)?;
    Ok(Restored { output, solve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{degrade, DegradeSpec, KernelKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gamma_spec(g: f64) -> EnhanceSpec {
        EnhanceSpec {
            mode: EnhanceMode::Gamma { gamma: g },
            ..Default::default()
        }
    }

    #[test]
    fn gamma_one_is_identity() {
        let l = Illuminance::new(8, 8, (0..64).map(|i| (i + 1) as f64 / 64.0).collect()).unwrap();
        let out = enhance_illuminance(&l, &gamma_spec(1.0)).unwrap();
        assert_eq!(out, l);
    }

    #[test]
    fn analytic_power_on_constant() {
        let l = Illuminance::constant(8, 8, 0.25);
        let out = enhance_illuminance(&l, &gamma_spec(0.5)).unwrap();
        assert!((out.at(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_mean_reaches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let l = Illuminance::new(
            16,
            16,
            (0..256).map(|_| 0.1 + 0.2 * rng.random::<f64>()).collect(),
        )
        .unwrap();
        let spec = EnhanceSpec {
            mode: EnhanceMode::TargetMean { mean: 0.5 },
            ..Default::default()
        };
        let out = enhance_illuminance(&l, &spec).unwrap();
        assert!((out.mean() - 0.5).abs() <= 1e-4, "mean {}", out.mean());
    }

    #[test]
    fn all_zero_illuminance_is_an_error() {
        let l = Illuminance::zeros(8, 8);
        assert!(enhance_illuminance(&l, &EnhanceSpec::default()).is_err());
    }

    #[test]
    fn enhancement_preserves_pixel_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let l = Illuminance::new(8, 8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
        for spec in [gamma_spec(0.4), EnhanceSpec::default()] {
            let out = enhance_illuminance(&l, &spec).unwrap();
            for i in 0..64 {
                for j in 0..64 {
                    if l.data()[i] <= l.data()[j] {
                        assert!(out.data()[i] <= out.data()[j] + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn identity_denoiser_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let r = Image::new(8, 8, 3, (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
        let out = denoise_reflectance(&r, &EnhanceSpec::default()).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn denoisers_preserve_constants() {
        let r = Image::constant(16, 16, 3, 0.6);
        for denoise in [
            DataOperator::Identity,
            DataOperator::GaussianSmooth { sigma: 1.0 },
            DataOperator::Median { radius: 1 },
        ] {
            let spec = EnhanceSpec {
                denoise,
                ..Default::default()
            };
            let out = denoise_reflectance(&r, &spec).unwrap();
            assert!(out.max_abs_diff(&r) <= 1e-12);
        }
    }

    #[test]
    fn smoothing_reduces_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let r = Image::new(
            32,
            32,
            1,
            (0..1024)
                .map(|_| 0.5 + 0.05 * (rng.random::<f64>() * 2.0 - 1.0))
                .collect(),
        )
        .unwrap();
        let spec = EnhanceSpec {
            denoise: DataOperator::GaussianSmooth { sigma: 1.0 },
            residual: true,
            ..Default::default()
        };
        let out = denoise_reflectance(&r, &spec).unwrap();
        let var = |img: &Image| {
            let m = img.mean();
            img.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / img.data().len() as f64
        };
        assert!(var(&out) < var(&r));
    }

    #[test]
    fn recompose_unit_illuminance_and_zero_reflectance() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let r = Image::new(8, 8, 3, (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
        let ones = Illuminance::constant(8, 8, 1.0);
        assert_eq!(recompose(&r, &ones).unwrap(), r);
        let zero = Image::zeros(8, 8, 3);
        let l = Illuminance::constant(8, 8, 0.3);
        assert_eq!(recompose(&zero, &l).unwrap().frob_norm(), 0.0);
    }

    #[test]
    fn recompose_rejects_shape_mismatch() {
        let r = Image::zeros(8, 8, 3);
        let l = Illuminance::zeros(8, 9);
        assert!(recompose(&r, &l).is_err());
    }

    #[test]
    fn recompose_inverts_degradation_factors() {
        let gt = crate::scenes::mosaic(3, 32, 32);
        let spec = DegradeSpec {
            kernel: KernelKind::Delta,
            illum_scale: 0.4,
            illum_gamma: 1.0,
            noise_sigma: 0.0,
            ..Default::default()
        };
        let deg = degrade(&gt, &spec).unwrap();
        let product = recompose(&deg.reflectance, &deg.illuminance).unwrap();
        // product equals the pre-blur dark image, which with a delta kernel
        // and no noise is the observation itself
        assert!(product.max_abs_diff(&deg.image) <= 1e-9);
    }

    #[test]
    fn recompose_invariant_under_gamma_one_enhancement() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let r = Image::new(8, 8, 3, (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
        let l = Illuminance::new(8, 8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
        let enhanced = enhance_illuminance(&l, &gamma_spec(1.0)).unwrap();
        assert_eq!(
            recompose(&r, &enhanced).unwrap(),
            recompose(&r, &l).unwrap()
        );
    }
}
