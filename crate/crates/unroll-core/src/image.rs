//! Pixel containers.
//!
//! [`Image`] stores 1- or 3-channel intensities as `f64`, planar layout
//! (channel-major, each plane row-major). Values are kept in floating point
//! through the whole pipeline; clamping to `[0, 1]` happens only when
//! exporting to 8-bit PNG. [`Illuminance`] is a single-channel map that
//! broadcasts over an image's channels.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{CoreError, Result};

/// Rec. 601 luma weights, used wherever a 3-channel image is reduced to one.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data (`channels` planes of `height*width`).
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::InvalidParameter(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(CoreError::InvalidParameter(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("image data"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(CoreError::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        debug_assert!(self.same_shape(other));
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Image) -> Image {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Image {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Image) -> Image {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Image {
        self.map(|v| v * s)
    }

    /// Broadcasts a single-channel map over every channel: `out = self ⊙ l`.
    pub fn mul_illum(&self, l: &Illuminance) -> Image {
        debug_assert_eq!((self.height, self.width), (l.height, l.width));
        let n = self.height * self.width;
        let mut out = self.clone();
        for c in 0..self.channels {
            let plane = &mut out.data[c * n..(c + 1) * n];
            for (v, &m) in plane.iter_mut().zip(&l.data) {
                *v *= m;
            }
        }
        out
    }

    /// Per-channel division by a broadcast map. The caller is responsible for
    /// keeping the divisor away from zero (see [`Illuminance::clamped`]).
    pub fn div_illum(&self, l: &Illuminance) -> Image {
        debug_assert_eq!((self.height, self.width), (l.height, l.width));
        let n = self.height * self.width;
        let mut out = self.clone();
        for c in 0..self.channels {
            let plane = &mut out.data[c * n..(c + 1) * n];
            for (v, &m) in plane.iter_mut().zip(&l.data) {
                *v /= m;
            }
        }
        out
    }

    /// Mean across channels, as a single-channel map.
    pub fn channel_mean(&self) -> Illuminance {
        let n = self.height * self.width;
        let mut data = vec![0.0; n];
        for c in 0..self.channels {
            for (acc, &v) in data.iter_mut().zip(&self.data[c * n..(c + 1) * n]) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.channels as f64;
        for v in &mut data {
            *v *= inv;
        }
        Illuminance {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Rec. 601 luma. For single-channel images this is the channel itself.
    pub fn luma(&self) -> Illuminance {
        let n = self.height * self.width;
        if self.channels == 1 {
            return Illuminance {
                height: self.height,
                width: self.width,
                data: self.data.clone(),
            };
        }
        let mut data = vec![0.0; n];
        for (c, &w) in LUMA_WEIGHTS.iter().enumerate() {
            for (acc, &v) in data.iter_mut().zip(&self.data[c * n..(c + 1) * n]) {
                *acc += w * v;
            }
        }
        Illuminance {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn dot(&self, other: &Image) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Export-time clamp to `[0, 1]`. Solver arithmetic never clamps.
    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Quantizes to the 8-bit grid, the value an export/import round trip
    /// would produce.
    pub fn quantize8(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    pub fn to_illuminance(&self) -> Result<Illuminance> {
        if self.channels != 1 {
            return Err(CoreError::DimensionMismatch(format!(
                "expected single channel, got {}",
                self.channels
            )));
        }
        Ok(Illuminance {
            height: self.height,
            width: self.width,
            data: self.data.clone(),
        })
    }

    /// Reads an 8-bit PNG (grayscale, gray+alpha, RGB or RGBA; alpha is
    /// dropped), mapping [0,255] to [0,1].
    pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
        let file = std::fs::File::open(path)?;
        let decoder = png::Decoder::new(std::io::BufReader::new(file));
        let mut reader = decoder
            .read_info()
            .map_err(|e| CoreError::Png(e.to_string()))?;
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| CoreError::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(CoreError::Png(format!(
                "only 8-bit PNG supported, got {:?}",
                info.bit_depth
            )));
        }
        let (h, w) = (info.height as usize, info.width as usize);
        let n = h * w;
        let (channels, stride, offsets): (usize, usize, &[usize]) = match info.color_type {
            png::ColorType::Grayscale => (1, 1, &[0]),
            png::ColorType::GrayscaleAlpha => (1, 2, &[0]),
            png::ColorType::Rgb => (3, 3, &[0, 1, 2]),
            png::ColorType::Rgba => (3, 4, &[0, 1, 2]),
            other => {
                return Err(CoreError::Png(format!("unsupported color type {other:?}")));
            }
        };
        let mut data = vec![0.0; n * channels];
        for (i, px) in buf[..n * stride].chunks_exact(stride).enumerate() {
            for (c, &off) in offsets.iter().enumerate() {
                data[c * n + i] = px[off] as f64 / 255.0;
            }
        }
        Image::new(h, w, channels, data)
    }

    /// Writes an 8-bit PNG, clamping to [0,1] and quantizing.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut encoder = png::Encoder::new(
            BufWriter::new(file),
            self.width as u32,
            self.height as u32,
        );
        encoder.set_color(match self.channels {
            1 => png::ColorType::Grayscale,
            _ => png::ColorType::Rgb,
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| CoreError::Png(e.to_string()))?;
        let n = self.height * self.width;
        let mut bytes = vec![0u8; n * self.channels];
        for i in 0..n {
            for c in 0..self.channels {
                let v = self.data[c * n + i].clamp(0.0, 1.0);
                bytes[i * self.channels + c] = (v * 255.0).round() as u8;
            }
        }
        writer
            .write_image_data(&bytes)
            .map_err(|e| CoreError::Png(e.to_string()))?;
        Ok(())
    }
}

/// Single-channel map in `(0, 1]`, broadcast over channels when combined
/// with an [`Image`]. Also used for illuminance-shaped multipliers, which
/// may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct Illuminance {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Illuminance {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(CoreError::DimensionMismatch(format!(
                "expected {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("illuminance data"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Illuminance {
        Illuminance {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Illuminance, f: impl Fn(f64, f64) -> f64) -> Illuminance {
        debug_assert_eq!((self.height, self.width), (other.height, other.width));
        Illuminance {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Illuminance) -> Illuminance {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Illuminance) -> Illuminance {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Illuminance {
        self.map(|v| v * s)
    }

    pub fn clamped(&self, min: f64, max: f64) -> Illuminance {
        self.map(|v| v.clamp(min, max))
    }

    pub fn dot(&self, other: &Illuminance) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Illuminance) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().write_png(path)
    }
}
