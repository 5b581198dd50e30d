//! Luma, normalized luminance and Gaussian opponent color.
//!
//! Inputs are stored display values in `[0, 255]`, used without
//! linearization. Outputs stay real-valued.

use crate::error::{Error, Result};
use crate::raster::{FloatImage, GrayImage, Plane, RgbImage, TriChannelImage};

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Rows map (R, G, B) to (E1, E2, E3).
pub const GAUSSIAN_COLOR: [[f64; 3]; 3] = [
    [0.06, 0.63, 0.27],
    [0.3, 0.04, 0.35],
    [0.34, 0.6, 0.17],
];

/// Scale of the RGB values fed to the color transforms, recorded in reports.
pub const INPUT_SCALE: &str = "0-255";

pub fn luma_of(rgb: [u8; 3]) -> f64 {
    LUMA_WEIGHTS[0] * rgb[0] as f64 + LUMA_WEIGHTS[1] * rgb[1] as f64 + LUMA_WEIGHTS[2] * rgb[2] as f64
}

pub fn to_luma(img: &RgbImage) -> GrayImage {
    Plane::new(
        img.width(),
        img.height(),
        img.pixels().iter().map(|&p| luma_of(p)).collect(),
    )
}

/// Divides every pixel by the image mean.
pub fn normalize_luminance(gray: &GrayImage) -> Result<FloatImage> {
    let mean = gray.mean();
    if !(mean > 0.0) {
        return Err(Error::ZeroMeanImage);
    }
    Ok(gray.map(|v| v / mean))
}

pub fn to_gaussian_color(img: &RgbImage) -> TriChannelImage {
    let n = img.width() * img.height();
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for p in img.pixels() {
        let rgb = [p[0] as f64, p[1] as f64, p[2] as f64];
        for (plane, row) in planes.iter_mut().zip(GAUSSIAN_COLOR.iter()) {
            plane.push(row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2]);
        }
    }
    let [e1, e2, e3] = planes;
    let (w, h) = (img.width(), img.height());
    TriChannelImage::new([Plane::new(w, h, e1), Plane::new(w, h, e2), Plane::new(w, h, e3)])
}
