//! Synthetic corpora with known spectra.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::raster::{Plane, RgbImage};
use crate::spectrum::{default_impulse_amplitudes, fft2, impulse_pattern};

/// Gray level mean and spread of rendered noise images.
pub const NOISE_MEAN: f64 = 128.0;
pub const NOISE_STD: f64 = 40.0;
/// Layers of the impulse comb added by [`comb_image`]; the longest period
/// is `2^(COMB_LAYERS − 1)` = 32 pixels.
pub const COMB_LAYERS: usize = 6;
pub const DEFAULT_COMB_STRENGTH: f64 = 40.0;

/// Zero-mean, unit-variance Gaussian field with amplitude spectrum
/// `|f|^(−exponent/2)`, so power falls as `|f|^(−exponent)`.
pub fn power_law_field(size: usize, exponent: f64, seed: u64) -> Result<Plane> {
    if !size.is_power_of_two() || size < 4 {
        return Err(Error::BadConfig(format!("noise side must be a power of two ≥ 4, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..size * size)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    fft2(&mut buf, size, false);
    let signed = |k: usize| if k < size / 2 { k as f64 } else { k as f64 - size as f64 };
    for ky in 0..size {
        for kx in 0..size {
            let f2 = (signed(kx).powi(2) + signed(ky).powi(2)) / (size * size) as f64;
            let gain = if f2 == 0.0 { 0.0 } else { f2.powf(-exponent / 4.0) };
            buf[ky * size + kx] *= gain;
        }
    }
    fft2(&mut buf, size, true);
    let vals: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    Ok(Plane::new(size, size, vals.iter().map(|v| (v - mean) / std).collect()))
}

fn render_gray(plane: &Plane) -> RgbImage {
    RgbImage::from_gray(plane.width(), plane.height(), &plane.quantize_u8())
}

/// 8-bit gray image of `f^−2` power-law noise.
pub fn f2_noise_image(size: usize, seed: u64) -> RgbImage {
    let field = power_law_field(size, 2.0, seed).expect("valid noise side");
    render_gray(&field.map(|v| NOISE_MEAN + NOISE_STD * v))
}

/// `f^−2` noise plus a superposed impulse comb with periods `2, 4, ..., 32`.
pub fn comb_image(size: usize, seed: u64, strength: f64) -> Result<RgbImage> {
    let field = power_law_field(size, 2.0, seed)?;
    let comb = impulse_pattern(size, COMB_LAYERS, &default_impulse_amplitudes(COMB_LAYERS))?;
    let cm = comb.mean();
    let vals = field
        .values()
        .iter()
        .zip(comb.values())
        .map(|(f, c)| NOISE_MEAN + NOISE_STD * f + strength * (c - cm))
        .collect();
    Ok(render_gray(&Plane::new(size, size, vals)))
}

/// Linear map of `plane` onto `[0, 255]`; a constant plane maps to 0.
pub fn stretch_to_u8(plane: &Plane) -> RgbImage {
    let lo = plane.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    render_gray(&plane.map(|v| 255.0 * (v - lo) / span))
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer matches dimensions");
    let mut bytes = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::BadConfig(format!("png encoding failed: {e}")))?;
    Ok(bytes.into_inner())
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}
