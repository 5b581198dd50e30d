//! Dense row-major rasters.
//!
//! [`RgbImage`] holds decoded 8-bit color, [`Plane`] holds a single real
//! valued channel. [`GrayImage`] (luma in `[0, 255]`) and [`FloatImage`]
//! (derived maps such as normalized luminance or contrast) are both planes;
//! the alias documents which producer a value came from.

use serde::{Deserialize, Serialize};

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Panics if the pixel count does not match the dimensions or a side is zero.
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Self {
        assert!(width >= 1 && height >= 1, "empty raster");
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self::new(width, height, vec![rgb; width * height])
    }

    /// Gray raster replicated across the three channels.
    pub fn from_gray(width: usize, height: usize, values: &[u8]) -> Self {
        Self::new(width, height, values.iter().map(|&v| [v, v, v]).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Pixel at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Single real-valued channel, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// Luma plane, values in `[0, 255]`.
pub type GrayImage = Plane;
/// Real-valued derived map.
pub type FloatImage = Plane;

impl Plane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert!(width >= 1 && height >= 1, "empty raster");
        assert_eq!(values.len(), width * height, "value count mismatch");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Each pixel duplicated into a `factor`×`factor` block.
    pub fn block_upsample(&self, factor: usize) -> Self {
        Self::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.get(x / factor, y / factor)
        })
    }

    /// Rounds half-up and clamps to `[0, 255]`.
    pub fn quantize_u8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|&v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Three co-registered real planes (opponent color channels).
#[derive(Debug, Clone, PartialEq)]
pub struct TriChannelImage {
    pub channels: [Plane; 3],
}

impl TriChannelImage {
    pub fn new(channels: [Plane; 3]) -> Self {
        let (w, h) = (channels[0].width(), channels[0].height());
        assert!(
            channels.iter().all(|c| c.width() == w && c.height() == h),
            "channel shape mismatch"
        );
        Self { channels }
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }
}
