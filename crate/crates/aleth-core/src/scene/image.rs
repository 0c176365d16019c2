//! 8-bit sRGB PNG load/save behind an f32 pixel buffer, plus the 16-bit
//! grayscale depth map writer.

use crate::error::{AlethError, Result};
use std::path::Path;

/// Three-channel image; values are sRGB-encoded floats in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, length `width * height * 3`.
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// Mean over all channels of all pixels.
    pub fn mean_value(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            for c in 0..3 {
                let v = self.data[i * 3 + c].clamp(0.0, 1.0);
                px.0[c] = (v * 255.0).round() as u8;
            }
        }
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<ImageBuffer> {
        let img = image::open(path)
            .map_err(|e| AlethError::Image(e))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(w * h * 3);
        for px in img.pixels() {
            for c in 0..3 {
                data.push(px.0[c] as f32 / 255.0);
            }
        }
        Ok(ImageBuffer { width: w, height: h, data })
    }
}

/// Depth values mapped linearly from [near, far] to the 16-bit range.
pub fn save_depth_png(path: &Path, depth: &[f64], width: usize, height: usize, near: f64, far: f64) -> Result<()> {
    if depth.len() != width * height {
        return Err(AlethError::ShapeMismatch(format!(
            "depth map has {} values for a {width}x{height} image",
            depth.len()
        )));
    }
    if far <= near {
        return Err(AlethError::InvalidArgument("depth range requires near < far".into()));
    }
    let mut img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::new(width as u32, height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let t = ((depth[i] - near) / (far - near)).clamp(0.0, 1.0);
        px.0[0] = (t * 65535.0).round() as u16;
    }
    img.save(path)?;
    Ok(())
}
