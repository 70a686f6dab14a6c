//! Run configuration: one TOML file drives degradation, solving and
//! enhancement. Unknown keys are rejected so a typo in a lambda name fails
//! loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use unroll_core::degrade::DegradeSpec;
use unroll_core::enhance::EnhanceSpec;
use unroll_core::solver::{HyperParams, OperatorSet};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Input image file or directory. For `solve` this is the output root of
    /// a previous `degrade` run (or any directory of PNGs when the kernel
    /// comes from a file or parametric spec).
    pub input: PathBuf,
    /// Output root; subdirectories are created per artifact kind.
    pub output: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSource {
    /// Use the `kernels/<name>.txt` file written next to each degraded image.
    #[default]
    FromDegradation,
    /// One kernel file shared by every input.
    File { path: PathBuf },
    /// Rebuild the kernel from the `[degrade]` section.
    Parametric,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub degrade: DegradeSpec,
    pub solver: HyperParams,
    pub operators: OperatorSet,
    pub enhance: EnhanceSpec,
    pub kernel_source: KernelSource,
    pub dump_diagnostics: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// FNV-1a, used for config fingerprints and per-file seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
