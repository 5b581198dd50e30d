//! Gaussian-derivative local contrast and Weibull fitting.
//!
//! Local contrast is the root-sum-of-squares of x/y Gaussian-derivative
//! responses over the three opponent color channels. Its per-image
//! distribution is modeled as Weibull(β, γ), fitted by maximum likelihood.

use serde::{Deserialize, Serialize};

use crate::colorspace::to_gaussian_color;
use crate::conv::convolve_reflect;
use crate::error::{Error, Result};
use crate::moments::{kl_masses, quantile_sorted, uniform_edges, Histogram};
use crate::raster::{FloatImage, Plane, RgbImage, TriChannelImage};

/// Contrast values at or below this are treated as exactly flat.
pub const FLAT_CONTRAST: f64 = 1e-9;
pub const MIN_WEIBULL_SAMPLES: usize = 100;
pub const DEFAULT_KL_BINS: usize = 256;
pub const DEFAULT_KL_PERCENTILE: f64 = 0.999;

/// Sampled first-derivative-of-Gaussian kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeKernelPair {
    pub sigma: f64,
    pub radius: usize,
    /// Row-major, `side()`×`side()`; entry `[(dy + r) * side + (dx + r)]`.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
}

impl DerivativeKernelPair {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn kx_at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.kx[((dy + r) * self.side() as isize + dx + r) as usize]
    }

    pub fn ky_at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.ky[((dy + r) * self.side() as isize + dx + r) as usize]
    }
}

/// `G_x(x, y) = -x / (2π σ⁴) · exp(-(x² + y²) / 2σ²)` and its transpose,
/// sampled on `[-r, r]²` with `r = ceil(3σ)`, then mean-subtracted.
pub fn gaussian_derivative_kernels(sigma: f64) -> Result<DerivativeKernelPair> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::BadSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let side = 2 * radius + 1;
    let r = radius as isize;
    let norm = 2.0 * std::f64::consts::PI * sigma.powi(4);
    let two_s2 = 2.0 * sigma * sigma;
    let mut kx = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (dx as f64, dy as f64);
            let g = (-(x * x + y * y) / two_s2).exp() / norm;
            kx.push(-x * g);
        }
    }
    let mean = kx.iter().sum::<f64>() / kx.len() as f64;
    for v in kx.iter_mut() {
        *v -= mean;
    }
    let ky = (0..side * side).map(|i| kx[(i % side) * side + i / side]).collect();
    Ok(DerivativeKernelPair {
        sigma,
        radius,
        kx,
        ky,
    })
}

/// Gradient magnitude `sqrt(Σ_k E_kx² + E_ky²)` with mirrored borders.
pub fn gradient_magnitude(img: &TriChannelImage, kernels: &DerivativeKernelPair) -> Result<FloatImage> {
    let side = kernels.side();
    let (w, h) = (img.width(), img.height());
    let mut acc = vec![0.0; w * h];
    for ch in &img.channels {
        for k in [&kernels.kx, &kernels.ky] {
            let resp = convolve_reflect(ch, k, side)?;
            for (a, v) in acc.iter_mut().zip(resp.values()) {
                *a += v * v;
            }
        }
    }
    for a in &mut acc {
        *a = a.sqrt();
    }
    Ok(Plane::new(w, h, acc))
}

/// Contrast map of an RGB image at scale `sigma`.
pub fn contrast_map(img: &RgbImage, sigma: f64) -> Result<FloatImage> {
    let kernels = gaussian_derivative_kernels(sigma)?;
    gradient_magnitude(&to_gaussian_color(img), &kernels)
}

/// Fitted Weibull parameters and goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub beta: f64,
    pub gamma: f64,
    /// KL divergence (nats) of the empirical histogram from the fitted law.
    pub kld: f64,
    /// Fraction of input samples that were flat (≤ [`FLAT_CONTRAST`]).
    pub zero_fraction: f64,
    /// Positive samples used by the fit.
    pub n_samples: usize,
}

/// Weibull CDF.
pub fn weibull_cdf(x: f64, beta: f64, gamma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-(x / beta).powf(gamma)).exp_m1()
    }
}

pub fn fit_weibull(samples: &[f64]) -> Result<WeibullFit> {
    fit_weibull_with(samples, DEFAULT_KL_BINS, DEFAULT_KL_PERCENTILE)
}

/// Maximum-likelihood Weibull fit.
///
/// γ solves the profile score `Σ xᵞ ln x / Σ xᵞ − 1/γ − mean(ln x) = 0`,
/// which is strictly increasing in γ; β = (mean xᵞ)^(1/γ). The KL term
/// compares `bins` equal bins over `[0, q-quantile]` of the positive
/// samples against the fitted law integrated per bin.
pub fn fit_weibull_with(samples: &[f64], bins: usize, upper_quantile: f64) -> Result<WeibullFit> {
    let total = samples.len();
    let mut pos: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|&v| v > FLAT_CONTRAST && v.is_finite())
        .collect();
    if pos.is_empty() {
        return Err(Error::NoPositiveSamples);
    }
    if pos.len() < MIN_WEIBULL_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_WEIBULL_SAMPLES,
            got: pos.len(),
        });
    }
    let zero_fraction = (total - pos.len()) as f64 / total as f64;

    let logs: Vec<f64> = pos.iter().map(|v| v.ln()).collect();
    let center = logs.iter().sum::<f64>() / logs.len() as f64;
    let u: Vec<f64> = logs.iter().map(|l| l - center).collect();
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gamma = solve_shape(&u, umax)?;

    let n = u.len() as f64;
    let tail: f64 = u.iter().map(|&v| (gamma * (v - umax)).exp()).sum::<f64>() / n;
    let beta = (center + umax + tail.ln() / gamma).exp();

    pos.sort_by(f64::total_cmp);
    let upper = quantile_sorted(&pos, upper_quantile);
    let kld = if upper > pos[0] {
        let edges = uniform_edges(0.0, upper, bins)?;
        let mut hist = Histogram::empty(edges.clone())?;
        for &v in &pos {
            hist.add(v);
        }
        let model: Vec<f64> = edges
            .windows(2)
            .map(|w| weibull_cdf(w[1], beta, gamma) - weibull_cdf(w[0], beta, gamma))
            .collect();
        kl_masses(hist.counts(), &model)?
    } else {
        0.0
    };

    Ok(WeibullFit {
        beta,
        gamma,
        kld,
        zero_fraction,
        n_samples: pos.len(),
    })
}

/// Score and its derivative at `gamma` for centered log-samples `u`.
fn shape_score(u: &[f64], umax: f64, gamma: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &v in u {
        let w = (gamma * (v - umax)).exp();
        s0 += w;
        s1 += w * v;
        s2 += w * v * v;
    }
    let m1 = s1 / s0;
    let var = (s2 / s0 - m1 * m1).max(0.0);
    (m1 - 1.0 / gamma, var + 1.0 / (gamma * gamma))
}

const MAX_SHAPE: f64 = 1e6;

fn solve_shape(u: &[f64], umax: f64) -> Result<f64> {
    // the score tends to max(u) as γ grows; no positive spread, no root
    if !(umax > 1e-12) {
        return Err(Error::NoConvergence("samples are constant"));
    }
    let mut lo = 1.0;
    while shape_score(u, umax, lo).0 > 0.0 {
        lo *= 0.5;
        if lo < 1e-6 {
            return Err(Error::NoConvergence("shape below bracket"));
        }
    }
    let mut hi = 1.0;
    while shape_score(u, umax, hi).0 < 0.0 {
        hi *= 2.0;
        if hi > MAX_SHAPE {
            return Err(Error::NoConvergence("shape above bracket"));
        }
    }
    let mut g = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = shape_score(u, umax, g);
        if f == 0.0 {
            return Ok(g);
        }
        if f < 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        let mut next = g - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - g).abs() <= 1e-13 * g || hi - lo <= 1e-13 * g {
            return Ok(next);
        }
        g = next;
    }
    Err(Error::NoConvergence("iteration cap"))
}
