//! Circular 2-D convolution.
//!
//! Direct spatial evaluation with periodic boundary, applied independently
//! per channel. The Fourier route lives in [`crate::fft`]; the two agree to
//! 1e-9 and tests hold them against each other.

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::kernel::Kernel;

/// `out(y,x) = Σ_{u,v} k(u,v) · img((y−u+r) mod H, (x−v+r) mod W)`, true
/// convolution with the kernel center aligned on the output pixel.
pub fn conv2d_circular(img: &Image, k: &Kernel) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if k.size() > h.min(w) {
        return Err(CoreError::KernelTooLarge {
            kernel: k.size(),
            height: h,
            width: w,
        });
    }
    let s = k.size();
    let r = k.radius();
    let mut out = Image::zeros(h, w, img.channels());
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for u in 0..s {
                    // y - u + r mod h, kept nonnegative
                    let sy = (y + h + r - u) % h;
                    let row = &src[sy * w..(sy + 1) * w];
                    let krow = &k.taps()[u * s..(u + 1) * s];
                    for (v, &kv) in krow.iter().enumerate() {
                        let sx = (x + w + r - v) % w;
                        acc += kv * row[sx];
                    }
                }
                dst[y * w + x] = acc;
            }
        }
    }
    Ok(out)
}
