//! Interactive browser demo of the unrolled restoration pipeline.
//!
//! Three operations are exposed to the page: generate a synthetic scene,
//! degrade it (blur kind/strength, darkness, noise), and restore it with a
//! chosen block count and prior strengths. Buffers come back as RGBA for
//! direct `ImageData` blits; metrics and the per-block residual trace come
//! back as JSON.
//!
//! Build with `wasm-pack build crates/unroll-demo --target web` and serve
//! the `static/` directory (see the README).

use wasm_bindgen::prelude::*;

use unroll_core::degrade::{degrade, DegradeSpec, KernelKind, LUMA_FLOOR};
use unroll_core::enhance::{
    denoise_reflectance, enhance_illuminance, recompose, EnhanceMode, EnhanceSpec,
};
use unroll_core::metrics::{psnr, ssim};
use unroll_core::priors::DataOperator;
use unroll_core::scenes::mosaic;
use unroll_core::solver::{run, BlockTrace, HyperParams, OperatorSet};
use unroll_core::{Image, Kernel};

fn to_rgba(img: &Image) -> Vec<u8> {
    let n = img.height() * img.width();
    let mut out = Vec::with_capacity(n * 4);
    for i in 0..n {
        for c in 0..3 {
            let plane = if img.channels() == 1 { 0 } else { c };
            let v = img.data()[plane * n + i].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

/// The observation re-lit through the same brightness curve the pipeline
/// uses, with no deblurring: the comparison point for the restored result.
fn brightened_baseline(x: &Image, espec: &EnhanceSpec) -> Result<Image, String> {
    let lx = x.luma().clamped(LUMA_FLOOR, 1.0);
    let rx = x.div_illum(&lx);
    let enhanced = enhance_illuminance(&lx, espec).map_err(|e| e.to_string())?;
    Ok(recompose(&rx, &enhanced).map_err(|e| e.to_string())?.clamp01())
}

#[wasm_bindgen]
pub struct Demo {
    size: usize,
    scene: Image,
    degraded: Option<Image>,
    kernel: Option<Kernel>,
    restored: Option<Image>,
    baseline: Option<Image>,
    trace: Vec<BlockTrace>,
    target_mean: f64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32) -> Demo {
        let size = (size as usize).clamp(32, 512);
        Demo {
            size,
            scene: mosaic(seed as u64, size, size),
            degraded: None,
            kernel: None,
            restored: None,
            baseline: None,
            trace: Vec::new(),
            target_mean: 0.5,
        }
    }

    pub fn new_scene(&mut self, seed: u32) {
        self.scene = mosaic(seed as u64, self.size, self.size);
        self.degraded = None;
        self.kernel = None;
        self.restored = None;
        self.baseline = None;
        self.trace.clear();
    }

    pub fn size(&self) -> u32 {
        self.size as u32
    }

    pub fn scene_rgba(&self) -> Vec<u8> {
        to_rgba(&self.scene)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn degrade(
        &mut self,
        kind: &str,
        sigma: f64,
        length: f64,
        angle_deg: f64,
        kernel_size: u32,
        illum_scale: f64,
        illum_gamma: f64,
        noise_sigma: f64,
        seed: u32,
    ) -> Result<Vec<u8>, String> {
        let kernel = match kind {
            "delta" => KernelKind::Delta,
            "gaussian" => KernelKind::Gaussian { sigma },
            "motion" => KernelKind::Motion { length, angle_deg },
            other => return Err(format!("unknown kernel kind {other:?}")),
        };
        let spec = DegradeSpec {
            kernel,
            kernel_size: (kernel_size as usize) | 1,
            illum_scale,
            illum_gamma,
            noise_sigma,
            seed: seed as u64,
        };
        let out = degrade(&self.scene, &spec).map_err(|e| e.to_string())?;
        let rgba = to_rgba(&out.image);
        self.degraded = Some(out.image);
        self.kernel = Some(out.kernel);
        self.restored = None;
        self.baseline = None;
        self.trace.clear();
        Ok(rgba)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        &mut self,
        blocks: u32,
        paper_literal: bool,
        tv_reflectance: f64,
        smooth_sigma: f64,
        tv_latent: f64,
        target_mean: f64,
    ) -> Result<Vec<u8>, String> {
        let x = self.degraded.as_ref().ok_or("degrade the scene first")?;
        let kernel = self.kernel.as_ref().ok_or("degrade the scene first")?;
        let hyper = HyperParams {
            blocks: (blocks as usize).clamp(1, 12),
            paper_literal,
            ..Default::default()
        };
        let ops = OperatorSet {
            reflectance: DataOperator::tv(tv_reflectance.max(0.0)),
            illuminance: DataOperator::GaussianSmooth {
                sigma: smooth_sigma.max(0.1),
            },
            latent: DataOperator::tv(tv_latent.max(0.0)),
        };
        let espec = EnhanceSpec {
            mode: EnhanceMode::TargetMean {
                mean: target_mean.clamp(0.05, 0.95),
            },
            ..Default::default()
        };
        let solve = run(x, kernel, &hyper, &ops).map_err(|e| e.to_string())?;
        let l = enhance_illuminance(&solve.state.l, &espec).map_err(|e| e.to_string())?;
        let r = denoise_reflectance(&solve.state.r, &espec).map_err(|e| e.to_string())?;
        let restored = recompose(&r, &l).map_err(|e| e.to_string())?.clamp01();
        let rgba = to_rgba(&restored);
        self.trace = solve.trace;
        self.baseline = Some(brightened_baseline(x, &espec)?);
        self.restored = Some(restored);
        self.target_mean = target_mean;
        Ok(rgba)
    }

    /// PSNR/SSIM of the brightness-matched input and of the restored output
    /// against the clean scene, plus the per-block residual trace.
    pub fn metrics_json(&self) -> Result<String, String> {
        let (Some(restored), Some(baseline)) = (&self.restored, &self.baseline) else {
            return Err("run restore first".into());
        };
        let gt = &self.scene;
        let m = |img: &Image| -> Result<(f64, f64), String> {
            Ok((
                psnr(img, gt).map_err(|e| e.to_string())?,
                ssim(img, gt).map_err(|e| e.to_string())?,
            ))
        };
        let (bp, bs) = m(baseline)?;
        let (rp, rs) = m(restored)?;
        let trace: Vec<serde_json::Value> = self
            .trace
            .iter()
            .map(|t| {
                serde_json::json!({
                    "block": t.block,
                    "resid_rp": t.resid_rp,
                    "resid_lq": t.resid_lq,
                    "resid_iz": t.resid_iz,
                })
            })
            .collect();
        let pack = |v: f64| -> serde_json::Value {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::json!("inf")
            }
        };
        serde_json::to_string(&serde_json::json!({
            "baseline_psnr": pack(bp),
            "baseline_ssim": bs,
            "restored_psnr": pack(rp),
            "restored_ssim": rs,
            "gain_db": pack(rp - bp),
            "trace": trace,
        }))
        .map_err(|e| e.to_string())
    }
}
