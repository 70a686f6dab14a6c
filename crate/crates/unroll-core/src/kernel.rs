//! Blur kernels (point-spread functions).
//!
//! A kernel is a square, odd-sized tap grid with nonnegative weights summing
//! to one. The text serialization is line-oriented for diffability:
//! `size N` on the first line, then `N` rows of `N` decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CoreError, Result};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(CoreError::InvalidParameter(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        if taps.len() != size * size {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {} taps, got {}",
                size * size,
                taps.len()
            )));
        }
        if taps.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidParameter(
                "kernel taps must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(CoreError::InvalidParameter(format!(
                "kernel taps must sum to 1, got {sum}"
            )));
        }
        Ok(Self { size, taps })
    }

    /// Normalizes raw nonnegative taps to unit sum.
    pub fn from_raw(size: usize, taps: Vec<f64>) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(CoreError::InvalidParameter(
                "kernel would be all-zero after normalization".into(),
            ));
        }
        Kernel::new(size, taps.into_iter().map(|v| v / sum).collect())
    }

    /// Single unit tap at the center: convolution identity.
    pub fn delta(size: usize) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(CoreError::InvalidParameter(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        let mut taps = vec![0.0; size * size];
        taps[(size / 2) * size + size / 2] = 1.0;
        Ok(Self { size, taps })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.taps[u * self.size + v]
    }

    /// Taps reversed in both axes: the adjoint of circular convolution with
    /// `self` is circular convolution with the flipped kernel.
    pub fn flip(&self) -> Kernel {
        let s = self.size;
        let mut taps = vec![0.0; s * s];
        for u in 0..s {
            for v in 0..s {
                taps[u * s + v] = self.taps[(s - 1 - u) * s + (s - 1 - v)];
            }
        }
        Kernel { size: s, taps }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "size {}", self.size);
        for u in 0..self.size {
            let row: Vec<String> = (0..self.size)
                .map(|v| format!("{:.17e}", self.at(u, v)))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Kernel> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CoreError::InvalidParameter("empty kernel file".into()))?;
        let size: usize = header
            .trim()
            .strip_prefix("size")
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                CoreError::InvalidParameter(format!("bad kernel header: {header:?}"))
            })?;
        let mut taps = Vec::with_capacity(size * size);
        for line in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    CoreError::InvalidParameter(format!("bad kernel tap: {tok:?}"))
                })?;
                taps.push(v);
            }
        }
        Kernel::new(size, taps)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Kernel> {
        let text = std::fs::read_to_string(path)?;
        Kernel::from_text(&text)
    }
}
