use std::path::Path;

use image::{imageops, imageops::FilterType, ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;
/// Every text image is this many pixels tall.
pub const HEIGHT: usize = 64;
/// Width of training-time images.
pub const TRAIN_WIDTH: usize = 400;

/// Three-channel raster stored channel-major (CHW), values in `[-1, 1]`
/// with white at `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl TextImage {
    pub fn white(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1.0; CHANNELS * height * width],
        }
    }

    /// Wraps CHW data, rejecting wrong lengths and values outside `[-1, 1]`.
    pub fn from_chw(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "expected {} values for 3x{height}x{width}, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image from one gray plane, replicated to all channels.
    pub fn from_gray(height: usize, width: usize, gray: &[f32]) -> Result<Self> {
        if gray.len() != height * width {
            return Err(Error::Shape(format!(
                "expected {} gray values, got {}",
                height * width,
                gray.len()
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * gray.len());
        for _ in 0..CHANNELS {
            data.extend_from_slice(gray);
        }
        Self::from_chw(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [CHANNELS, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub(crate) fn set_all_channels(&mut self, y: usize, x: usize, v: f32) {
        let plane = self.height * self.width;
        for c in 0..CHANNELS {
            self.data[c * plane + y * self.width + x] = v;
        }
    }

    /// Channel-mean intensity plane.
    pub fn gray(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        (0..plane)
            .map(|i| (0..CHANNELS).map(|c| self.data[c * plane + i]).sum::<f32>() / CHANNELS as f32)
            .collect()
    }

    /// Copy of columns `[x0, x0 + width)`.
    pub fn crop_columns(&self, x0: usize, width: usize) -> Result<Self> {
        if width == 0 || x0 + width > self.width {
            return Err(Error::Shape(format!(
                "column range {x0}..{} outside width {}",
                x0 + width,
                self.width
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * self.height * width);
        for c in 0..CHANNELS {
            for y in 0..self.height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Ok(Self {
            height: self.height,
            width,
            data,
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; CHANNELS * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..CHANNELS {
                data[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 127.5 - 1.0;
            }
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let f = self.get(c, y as usize, x as usize);
                *v = ((f + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
            }
            Rgb(px)
        })
    }

    /// Loads a raster file (grayscale or RGB) and scales it to height 64,
    /// keeping the aspect ratio.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut rgb = image::open(path.as_ref())?.to_rgb8();
        if rgb.height() as usize != HEIGHT {
            let w = ((rgb.width() as f64 * HEIGHT as f64 / rgb.height() as f64).round() as u32).max(1);
            rgb = imageops::resize(&rgb, w, HEIGHT as u32, FilterType::Triangle);
        }
        Ok(Self::from_rgb8(&rgb))
    }

    /// Writes an 8-bit PNG (or any format inferred from the extension).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path.as_ref())?;
        Ok(())
    }

    /// Resamples to `width` columns with a triangle filter, height unchanged.
    pub fn resize_width(&self, width: usize) -> Self {
        let (h, w) = (self.height, self.width);
        let mut hwc = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    hwc.push(self.get(c, y, x));
                }
            }
        }
        let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
            ImageBuffer::from_raw(w as u32, h as u32, hwc).expect("buffer length matches");
        let out = imageops::resize(&buf, width as u32, h as u32, FilterType::Triangle);
        let mut data = vec![0.0; CHANNELS * h * width];
        for (x, y, px) in out.enumerate_pixels() {
            for c in 0..CHANNELS {
                data[(c * h + y as usize) * width + x as usize] = px[c].clamp(-1.0, 1.0);
            }
        }
        Self {
            height: h,
            width,
            data,
        }
    }
}
