//! Float images and bilinear resampling.

use std::path::Path;

use crate::error::{invalid, Result};

/// An `H×W×C` image with values in `[0, 1]`, stored row-major, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(invalid(format!(
                "image {height}×{width}×{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
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

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Decodes a PNG/JPEG file into RGB floats in `[0, 1]`.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        Self::new(h as usize, w as usize, 3, data)
    }

    /// Loads and bilinearly resizes to `height×width`.
    pub fn load_resized(path: &Path, height: usize, width: usize) -> Result<Self> {
        Ok(Self::load(path)?.resize(height, width))
    }

    pub fn resize(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Self::zeros(height, width, self.channels);
        for c in 0..self.channels {
            let plane: Vec<f64> = (0..self.height * self.width)
                .map(|i| self.data[i * self.channels + c])
                .collect();
            let resized = resize_bilinear(&plane, self.width, self.height, width, height);
            for (i, v) in resized.into_iter().enumerate() {
                out.data[i * self.channels + c] = v;
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let px = std::array::from_fn(|c| {
                    let ch = if self.channels == 1 { 0 } else { c.min(self.channels - 1) };
                    (self.get(y, x, ch).clamp(0.0, 1.0) * 255.0).round() as u8
                });
                out.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        out
    }
}

/// Bilinear resampling of a single row-major plane, half-pixel centers,
/// edge-clamped.
pub fn resize_bilinear(src: &[f64], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<f64> {
    if src_w == dst_w && src_h == dst_h {
        return src.to_vec();
    }
    let mut out = vec![0.0; dst_w * dst_h];
    if src_w == 0 || src_h == 0 {
        return out;
    }
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let coord = |d: usize, scale: f64, n: usize| {
        let f = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    for y in 0..dst_h {
        let (y0, y1, fy) = coord(y, sy, src_h);
        for x in 0..dst_w {
            let (x0, x1, fx) = coord(x, sx, src_w);
            let top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
            let bot = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
            out[y * dst_w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}
