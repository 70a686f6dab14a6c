//! Procedural test scenes.
//!
//! `mosaic` produces a colorful piecewise-constant scene under a smooth
//! multiplicative illumination field: detail lives in the reflectance,
//! lighting is low-frequency, which is the regime the solver's priors are
//! built for. Deterministic per seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

fn with_luma(rgb: [f64; 3], target: f64) -> [f64; 3] {
    let l = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    let s = target / l.max(1e-3);
    [
        (rgb[0] * s).clamp(0.02, 0.98),
        (rgb[1] * s).clamp(0.02, 0.98),
        (rgb[2] * s).clamp(0.02, 0.98),
    ]
}

fn saturated_color(rng: &mut ChaCha8Rng, luma_target: f64) -> [f64; 3] {
    // squaring skews the channel mix toward saturated hues
    let raw = [
        rng.random::<f64>().powi(2) + 0.02,
        rng.random::<f64>().powi(2) + 0.02,
        rng.random::<f64>().powi(2) + 0.02,
    ];
    with_luma(raw, luma_target)
}

/// Voronoi-style mosaic of saturated tiles plus a few crisp bars, modulated
/// by a smooth illumination field and normalized to mean luma ≈ 0.5.
pub fn mosaic(seed: u64, height: usize, width: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let npts = rng.random_range(12..20);
    let mut pts = Vec::with_capacity(npts);
    let mut cols = Vec::with_capacity(npts);
    for _ in 0..npts {
        pts.push((rng.random_range(0..height), rng.random_range(0..width)));
        let target = 0.25 + 0.5 * rng.random::<f64>();
        cols.push(saturated_color(&mut rng, target));
    }
    let mut img = Image::zeros(height, width, 3);
    let n = height * width;
    for y in 0..height {
        for x in 0..width {
            let mut best = 0usize;
            let mut best_d = usize::MAX;
            for (i, &(py, px)) in pts.iter().enumerate() {
                let dy = y.abs_diff(py);
                let dx = x.abs_diff(px);
                let d = dy * dy + dx * dx;
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            for (c, &v) in cols[best].iter().enumerate() {
                img.data_mut()[c * n + y * width + x] = v;
            }
        }
    }
    // crisp two-pixel bars
    for _ in 0..5 {
        let target = 0.2 + 0.6 * rng.random::<f64>();
        let color = saturated_color(&mut rng, target);
        if rng.random::<bool>() {
            let y = rng.random_range(0..height - 1);
            for yy in y..y + 2 {
                for x in 0..width {
                    for (c, &v) in color.iter().enumerate() {
                        img.data_mut()[c * n + yy * width + x] = v;
                    }
                }
            }
        } else {
            let x = rng.random_range(0..width - 1);
            for y in 0..height {
                for xx in x..x + 2 {
                    for (c, &v) in color.iter().enumerate() {
                        img.data_mut()[c * n + y * width + xx] = v;
                    }
                }
            }
        }
    }
    // smooth multiplicative illumination field
    let (p1, p2) = (rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0);
    for y in 0..height {
        let gy = 2.0 * y as f64 / (height - 1) as f64 - 1.0;
        for x in 0..width {
            let gx = 2.0 * x as f64 / (width - 1) as f64 - 1.0;
            let field = 1.0 + 0.1 * (2.2 * gy + p1).sin() * (1.7 * gx + p2).cos();
            for c in 0..3 {
                img.data_mut()[c * n + y * width + x] *= field;
            }
        }
    }
    // normalize mean luma toward 0.5; clamp re-shifts slightly, so iterate
    for _ in 0..3 {
        let m = img.luma().mean();
        img = img.map(|v| (v * 0.5 / m.max(1e-3)).clamp(0.02, 0.98));
    }
    img
}

/// Two-tone checkerboard, 3-channel.
pub fn checkerboard(height: usize, width: usize, cell: usize) -> Image {
    let mut img = Image::zeros(height, width, 3);
    let n = height * width;
    for y in 0..height {
        for x in 0..width {
            let v = if ((y / cell) + (x / cell)).is_multiple_of(2) {
                0.85
            } else {
                0.15
            };
            for c in 0..3 {
                img.data_mut()[c * n + y * width + x] = v;
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mosaic_is_deterministic_and_normalized() {
        let a = mosaic(7, 64, 64);
        let b = mosaic(7, 64, 64);
        assert_eq!(a.data(), b.data());
        let m = a.luma().mean();
        assert!((m - 0.5).abs() < 0.05, "mean luma {m}");
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn different_seeds_differ() {
        let a = mosaic(1, 32, 32);
        let b = mosaic(2, 32, 32);
        assert!(a.max_abs_diff(&b) > 0.05);
    }

    #[test]
    fn checkerboard_alternates() {
        let img = checkerboard(16, 16, 4);
        assert_eq!(img.at(0, 0, 0), 0.85);
        assert_eq!(img.at(0, 0, 4), 0.15);
        assert_eq!(img.at(0, 4, 4), 0.85);
    }
}
