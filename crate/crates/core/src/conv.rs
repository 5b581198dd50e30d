//! Dense 2-D convolution with square kernels.
//!
//! Kernels are row-major `side`×`side` matrices indexed by offset
//! `(dx, dy)` in `[-r, r]²` with `r = side / 2`. Both routines compute the
//! true convolution (kernel flipped), so an odd kernel such as a derivative
//! keeps its sign convention.

use crate::error::{Error, Result};
use crate::raster::Plane;

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn check(img: &Plane, side: usize) -> Result<()> {
    if img.width() < side || img.height() < side {
        return Err(Error::ImageSmallerThanKernel {
            width: img.width(),
            height: img.height(),
            kernel: side,
        });
    }
    Ok(())
}

/// Same-size convolution of an odd-sided kernel with mirrored borders.
pub fn convolve_reflect(img: &Plane, kernel: &[f64], side: usize) -> Result<Plane> {
    assert!(side % 2 == 1 && kernel.len() == side * side);
    check(img, side)?;
    let (w, h) = (img.width(), img.height());
    let r = (side / 2) as isize;
    let src = img.values();
    let mut out = vec![0.0; w * h];

    // interior rows/cols skip the index mirroring
    let interior = |x: usize, y: usize| {
        x as isize >= r && y as isize >= r && (x as isize) < w as isize - r && (y as isize) < h as isize - r
    };
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            if interior(x, y) {
                for ky in 0..side {
                    let sy = (y as isize + r - ky as isize) as usize;
                    let row = &src[sy * w..(sy + 1) * w];
                    let krow = &kernel[ky * side..(ky + 1) * side];
                    for (kx, &kv) in krow.iter().enumerate() {
                        acc += kv * row[(x as isize + r - kx as isize) as usize];
                    }
                }
            } else {
                for ky in 0..side {
                    let sy = reflect101(y as isize + r - ky as isize, h);
                    for kx in 0..side {
                        let sx = reflect101(x as isize + r - kx as isize, w);
                        acc += kernel[ky * side + kx] * src[sy * w + sx];
                    }
                }
            }
            out[y * w + x] = acc;
        }
    }
    Ok(Plane::new(w, h, out))
}

/// Convolution restricted to positions where the kernel is fully supported.
/// Output is `(w - side + 1)`×`(h - side + 1)`.
pub fn convolve_valid(img: &Plane, kernel: &[f64], side: usize) -> Result<Plane> {
    assert_eq!(kernel.len(), side * side);
    check(img, side)?;
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (w - side + 1, h - side + 1);
    let src = img.values();
    // flip once so the inner loop is a plain dot product
    let flipped: Vec<f64> = kernel.iter().rev().copied().collect();
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for ky in 0..side {
            let row = &src[(y + ky) * w..(y + ky + 1) * w];
            let krow = &flipped[ky * side..(ky + 1) * side];
            let orow = &mut out[y * ow..(y + 1) * ow];
            for (x, o) in orow.iter_mut().enumerate() {
                let win = &row[x..x + side];
                *o += win.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    Ok(Plane::new(ow, oh, out))
}
