//! Forward/inverse 2-D DFT and kernel-to-OTF conversion.
//!
//! The forward transform is unnormalized; the inverse divides by `H*W`, so
//! `inverse_fft(forward_fft(x)) == x` to 1e-10. Multi-channel images
//! transform per plane.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::kernel::Kernel;

/// Complex DFT coefficients in standard row-major layout, one plane per
/// channel.
#[derive(Debug, Clone)]
pub struct Spectrum {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Σ |coef|², used by the Parseval check.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Pointwise product with a single-plane spectrum, broadcast over
    /// channels. This is the Fourier route for circular convolution.
    pub fn mul_broadcast(&self, otf: &Spectrum) -> Result<Spectrum> {
        if otf.channels != 1 || otf.height != self.height || otf.width != self.width {
            return Err(CoreError::DimensionMismatch(
                "broadcast spectrum must be single-plane with matching size".into(),
            ));
        }
        let n = self.height * self.width;
        let mut out = self.clone();
        for c in 0..self.channels {
            for (v, &m) in out.data[c * n..(c + 1) * n].iter_mut().zip(&otf.data) {
                *v *= m;
            }
        }
        Ok(out)
    }
}

fn fft2_inplace(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for (y, slot) in col.iter_mut().enumerate() {
            *slot = data[y * w + x];
        }
        col_fft.process(&mut col);
        for (y, slot) in col.iter().enumerate() {
            data[y * w + x] = *slot;
        }
    }
}

pub fn forward_fft(img: &Image) -> Spectrum {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut data: Vec<Complex64> = img
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let n = h * w;
    for plane in data.chunks_exact_mut(n) {
        fft2_inplace(plane, h, w, false);
    }
    Spectrum {
        height: h,
        width: w,
        channels: c,
        data,
    }
}

/// Inverse transform, normalized by `1/(H*W)`; the imaginary residue is
/// dropped (inputs of interest are spectra of real images).
pub fn inverse_fft(s: &Spectrum) -> Image {
    let n = s.height * s.width;
    let mut data = s.data.clone();
    for plane in data.chunks_exact_mut(n) {
        fft2_inplace(plane, s.height, s.width, true);
    }
    let scale = 1.0 / n as f64;
    let real: Vec<f64> = data.iter().map(|v| v.re * scale).collect();
    Image::new(s.height, s.width, s.channels, real)
        .expect("inverse FFT of a finite spectrum is finite")
}

/// Embeds the kernel in an `h`×`w` frame, circularly shifted so the center
/// tap sits at index (0,0), and transforms. Guarantees
/// `conv2d_circular(img, k) == inverse_fft(forward_fft(img) · OTF)` to 1e-9.
pub fn kernel_to_otf(k: &Kernel, h: usize, w: usize) -> Result<Spectrum> {
    if k.size() > h.min(w) {
        return Err(CoreError::KernelTooLarge {
            kernel: k.size(),
            height: h,
            width: w,
        });
    }
    let r = k.radius();
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..k.size() {
        for v in 0..k.size() {
            let y = (u + h - r) % h;
            let x = (v + w - r) % w;
            data[y * w + x] = Complex64::new(k.at(u, v), 0.0);
        }
    }
    fft2_inplace(&mut data, h, w, false);
    Ok(Spectrum {
        height: h,
        width: w,
        channels: 1,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::conv2d_circular;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Image {
        Image::new(h, w, c, (0..h * w * c).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = random_image(&mut rng, 16, 16, 3);
        let back = inverse_fft(&forward_fft(&img));
        assert!(back.max_abs_diff(&img) <= 1e-10);
    }

    #[test]
    fn delta_image_has_flat_spectrum() {
        let mut img = Image::zeros(8, 8, 1);
        img.set(0, 0, 0, 1.0);
        let spec = forward_fft(&img);
        for v in spec.data() {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 12, 16, 1);
        let spec = forward_fft(&img);
        let n = (img.height() * img.width()) as f64;
        assert!((img.norm_sq() - spec.energy() / n).abs() < 1e-9);
    }

    #[test]
    fn delta_kernel_gives_unit_otf() {
        let otf = kernel_to_otf(&Kernel::delta(5).unwrap(), 8, 8).unwrap();
        for v in otf.data() {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn otf_route_matches_spatial_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let box3 = Kernel::from_raw(3, vec![1.0; 9]).unwrap();
        let img = random_image(&mut rng, 8, 8, 1);
        let otf = kernel_to_otf(&box3, 8, 8).unwrap();
        let via_fft = inverse_fft(&forward_fft(&img).mul_broadcast(&otf).unwrap());
        let spatial = conv2d_circular(&img, &box3).unwrap();
        assert!(via_fft.max_abs_diff(&spatial) <= 1e-9);
    }

    #[test]
    fn otf_route_matches_spatial_for_all_sizes_on_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let img = random_image(&mut rng, 64, 64, 3);
        for size in [1usize, 3, 5, 31] {
            let k = Kernel::from_raw(size, (0..size * size).map(|_| rng.random::<f64>()).collect())
                .unwrap();
            let otf = kernel_to_otf(&k, 64, 64).unwrap();
            let via_fft = inverse_fft(&forward_fft(&img).mul_broadcast(&otf).unwrap());
            let spatial = conv2d_circular(&img, &k).unwrap();
            assert!(
                via_fft.max_abs_diff(&spatial) <= 1e-9,
                "size {size}: {}",
                via_fft.max_abs_diff(&spatial)
            );
        }
    }

    #[test]
    fn symmetric_kernel_has_real_otf() {
        // gaussian taps are point-symmetric about the center
        let mut taps = vec![0.0; 25];
        for u in 0..5i32 {
            for v in 0..5i32 {
                let (dy, dx) = (u - 2, v - 2);
                taps[(u * 5 + v) as usize] = (-((dy * dy + dx * dx) as f64) / 2.0).exp();
            }
        }
        let k = Kernel::from_raw(5, taps).unwrap();
        let otf = kernel_to_otf(&k, 16, 16).unwrap();
        let max_im = otf.data().iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        assert!(max_im <= 1e-9);
    }

    #[test]
    fn rejects_kernel_larger_than_frame() {
        assert!(kernel_to_otf(&Kernel::delta(9).unwrap(), 8, 8).is_err());
    }
}
