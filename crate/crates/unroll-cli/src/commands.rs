use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use unroll_core::degrade::{degrade, make_kernel};
use unroll_core::enhance::{denoise_reflectance, enhance_illuminance, recompose};
use unroll_core::metrics::{score, ScoreReport};
use unroll_core::solver::{run_observed, BlockTrace, SolverState, ENERGY_NOTE};
use unroll_core::{CoreError, Image, Kernel};

use crate::config::{fnv1a, KernelSource, RunConfig};

/// Error carrying the process exit code. Unreadable inputs and unwritable
/// outputs exit 2; a malformed kernel file exits 3; anything else exits 1.
pub struct CmdError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CmdError {
    fn io(source: anyhow::Error) -> Self {
        CmdError { code: 2, source }
    }

    fn kernel(source: anyhow::Error) -> Self {
        CmdError { code: 3, source }
    }

    fn internal(source: anyhow::Error) -> Self {
        CmdError { code: 1, source }
    }
}

pub type CmdResult = Result<(), CmdError>;

fn list_pngs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading directory {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    if files.is_empty() {
        return Err(anyhow!("no PNG files under {}", path.display()));
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

#[derive(Serialize)]
struct DegradeRecord {
    name: String,
    seed: u64,
    width: usize,
    height: usize,
}

#[derive(Serialize)]
struct DegradeManifest<'a> {
    command: &'static str,
    config_hash: String,
    config: &'a str,
    files: Vec<DegradeRecord>,
}

pub fn cmd_degrade(config_path: &Path) -> CmdResult {
    let config = RunConfig::load(config_path).map_err(CmdError::io)?;
    let inputs = list_pngs(&config.paths.input).map_err(CmdError::io)?;
    let out = &config.paths.output;
    for sub in ["degraded", "kernels", "illuminance"] {
        std::fs::create_dir_all(out.join(sub))
            .with_context(|| format!("creating {}", out.join(sub).display()))
            .map_err(CmdError::io)?;
    }
    let mut records = inputs
        .par_iter()
        .map(|input| -> Result<DegradeRecord> {
            let name = stem(input);
            let gt = Image::read_png(input)
                .with_context(|| format!("reading {}", input.display()))?;
            // distinct, order-independent noise per file
            let mut spec = config.degrade.clone();
            spec.seed ^= fnv1a(name.as_bytes());
            let degraded = degrade(&gt, &spec)?;
            degraded
                .image
                .write_png(out.join("degraded").join(format!("{name}.png")))?;
            degraded
                .kernel
                .write_file(out.join("kernels").join(format!("{name}.txt")))?;
            degraded
                .illuminance
                .write_png(out.join("illuminance").join(format!("{name}.png")))?;
            Ok(DegradeRecord {
                name,
                seed: spec.seed,
                width: gt.width(),
                height: gt.height(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(CmdError::io)?;
    records.sort_by(|a, b| a.name.cmp(&b.name));
    let config_text = config.to_toml();
    let manifest = DegradeManifest {
        command: "degrade",
        config_hash: format!("{:016x}", fnv1a(config_text.as_bytes())),
        config: &config_text,
        files: records,
    };
    write_manifest(out, &manifest).map_err(CmdError::io)?;
    Ok(())
}

#[derive(Serialize)]
struct SolveRecord {
    name: String,
    trace: Vec<BlockTrace>,
}

#[derive(Serialize)]
struct SolveManifest<'a> {
    command: &'static str,
    config_hash: String,
    energy_note: &'static str,
    config: &'a str,
    files: Vec<SolveRecord>,
}

pub struct SolveOverrides {
    pub paper_literal: bool,
    pub blocks: Option<usize>,
    pub dump: bool,
}

fn load_kernel_file(path: &Path) -> Result<Kernel, CmdError> {
    Kernel::read_file(path).map_err(|e| match e {
        CoreError::Io(_) => CmdError::io(
            anyhow::Error::new(e).context(format!("reading kernel {}", path.display())),
        ),
        other => CmdError::kernel(
            anyhow::Error::new(other).context(format!("malformed kernel {}", path.display())),
        ),
    })
}

pub fn cmd_solve(config_path: &Path, overrides: &SolveOverrides) -> CmdResult {
    let mut config = RunConfig::load(config_path).map_err(CmdError::io)?;
    if overrides.paper_literal {
        config.solver.paper_literal = true;
    }
    if let Some(blocks) = overrides.blocks {
        config.solver.blocks = blocks;
    }
    if overrides.dump {
        config.dump_diagnostics = true;
    }

    // accept either a degrade output root (with degraded/ inside) or a
    // plain directory/file of PNGs
    let root = &config.paths.input;
    let (images_path, kernel_dir) = if root.join("degraded").is_dir() {
        (root.join("degraded"), root.join("kernels"))
    } else {
        let parent = root
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        (root.clone(), parent.join("kernels"))
    };
    let inputs = list_pngs(&images_path).map_err(CmdError::io)?;
    let out = &config.paths.output;
    std::fs::create_dir_all(out.join("restored"))
        .with_context(|| format!("creating {}", out.join("restored").display()))
        .map_err(CmdError::io)?;

    let shared_kernel = match &config.kernel_source {
        KernelSource::File { path } => Some(load_kernel_file(path)?),
        KernelSource::Parametric => {
            Some(make_kernel(&config.degrade).map_err(|e| CmdError::internal(e.into()))?)
        }
        KernelSource::FromDegradation => None,
    };

    // kernels for from_degradation are loaded up front so a malformed file
    // fails the run before any output is written
    let mut kernels = Vec::with_capacity(inputs.len());
    for input in &inputs {
        match &shared_kernel {
            Some(k) => kernels.push(k.clone()),
            None => {
                let path = kernel_dir.join(format!("{}.txt", stem(input)));
                kernels.push(load_kernel_file(&path)?);
            }
        }
    }

    let config_ref = &config;
    let mut records = inputs
        .par_iter()
        .zip(kernels.par_iter())
        .map(|(input, kernel)| -> Result<SolveRecord> {
            let name = stem(input);
            let x = Image::read_png(input)
                .with_context(|| format!("reading {}", input.display()))?;
            let diag_dir = out.join("diagnostics").join(&name);
            if config_ref.dump_diagnostics {
                std::fs::create_dir_all(&diag_dir)?;
            }
            let solve = run_observed(
                &x,
                kernel,
                &config_ref.solver,
                &config_ref.operators,
                |block, state: &SolverState| {
                    if config_ref.dump_diagnostics {
                        let tag = block + 1;
                        let _ = state
                            .i
                            .clamp01()
                            .write_png(diag_dir.join(format!("block_{tag:02}_i.png")));
                        let _ = state
                            .r
                            .clamp01()
                            .write_png(diag_dir.join(format!("block_{tag:02}_r.png")));
                        let _ = state
                            .l
                            .clamped(0.0, 1.0)
                            .write_png(diag_dir.join(format!("block_{tag:02}_l.png")));
                        let _ = state
                            .z
                            .clamp01()
                            .write_png(diag_dir.join(format!("block_{tag:02}_z.png")));
                    }
                },
            )?;
            let l = enhance_illuminance(&solve.state.l, &config_ref.enhance)?;
            let r = denoise_reflectance(&solve.state.r, &config_ref.enhance)?;
            let restored = recompose(&r, &l)?;
            restored
                .clamp01()
                .write_png(out.join("restored").join(format!("{name}.png")))?;
            if config_ref.dump_diagnostics {
                let mut csv = format!("# {ENERGY_NOTE}\nblock,energy,resid_rp,resid_lq,resid_iz\n");
                for t in &solve.trace {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        t.block, t.energy, t.resid_rp, t.resid_lq, t.resid_iz
                    ));
                }
                std::fs::write(diag_dir.join("trace.csv"), csv)?;
            }
            Ok(SolveRecord {
                name,
                trace: solve.trace,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(CmdError::io)?;
    records.sort_by(|a, b| a.name.cmp(&b.name));
    let config_text = config.to_toml();
    let manifest = SolveManifest {
        command: "solve",
        config_hash: format!("{:016x}", fnv1a(config_text.as_bytes())),
        energy_note: ENERGY_NOTE,
        config: &config_text,
        files: records,
    };
    write_manifest(out, &manifest).map_err(CmdError::io)?;
    Ok(())
}

fn write_manifest<T: Serialize>(out: &Path, manifest: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(out.join("manifest.json"), json)
        .with_context(|| format!("writing manifest under {}", out.display()))?;
    Ok(())
}

pub fn cmd_eval(pred: &Path, gt: &Path, out: &Path) -> CmdResult {
    let preds = list_pngs(pred).map_err(CmdError::io)?;
    let gts = list_pngs(gt).map_err(CmdError::io)?;
    let gt_names: std::collections::BTreeMap<String, &PathBuf> =
        gts.iter().map(|p| (stem(p), p)).collect();
    let pred_names: std::collections::BTreeSet<String> = preds.iter().map(|p| stem(p)).collect();

    for g in &gts {
        if !pred_names.contains(&stem(g)) {
            eprintln!("warning: no prediction for {}, skipped", g.display());
        }
    }

    let mut lines = Vec::new();
    let mut reports: Vec<ScoreReport> = Vec::new();
    for p in &preds {
        let name = stem(p);
        let Some(gt_path) = gt_names.get(&name) else {
            eprintln!("warning: no ground truth for {}, skipped", p.display());
            continue;
        };
        let a = Image::read_png(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(CmdError::io)?;
        let b = Image::read_png(gt_path)
            .with_context(|| format!("reading {}", gt_path.display()))
            .map_err(CmdError::io)?;
        let report = match score(&a, &b) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: cannot score {name}: {e}, skipped");
                continue;
            }
        };
        let mut value = serde_json::to_value(&report).expect("report serializes");
        value
            .as_object_mut()
            .expect("object")
            .insert("name".into(), serde_json::Value::String(name));
        lines.push(serde_json::to_string(&value).expect("line serializes"));
        reports.push(report);
    }

    if reports.is_empty() {
        eprintln!("warning: no image pairs to evaluate");
    }
    let mean = |f: fn(&ScoreReport) -> f64| -> serde_json::Value {
        if reports.is_empty() {
            return serde_json::Value::Null;
        }
        let m = reports.iter().map(f).sum::<f64>() / reports.len() as f64;
        if m.is_finite() {
            serde_json::json!(m)
        } else {
            serde_json::json!("inf")
        }
    };
    let aggregate = serde_json::json!({
        "aggregate": true,
        "count": reports.len(),
        "mean_psnr": mean(|r| r.psnr),
        "mean_ssim": mean(|r| r.ssim),
        "mean_mae": mean(|r| r.mae),
        "mean_fft_loss": mean(|r| r.fft_loss),
        "mean_combined": mean(|r| r.combined),
    });
    lines.push(serde_json::to_string(&aggregate).expect("aggregate serializes"));
    std::fs::write(out, lines.join("\n") + "\n")
        .with_context(|| format!("writing report {}", out.display()))
        .map_err(CmdError::io)?;
    Ok(())
}
