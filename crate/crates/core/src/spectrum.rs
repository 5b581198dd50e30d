//! Power spectra, `A·f^(−α)` fits and the deconvolution comb fingerprint.
//!
//! Transform convention: unnormalized forward DFT of the mean-subtracted
//! image, power = |X|², so `Σ power / N² = Σ (x − mean)²`. No window is
//! applied; a taper would smear the integer-multiple comb.

use std::cell::RefCell;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FloatImage, GrayImage, Plane};

pub const DEFAULT_SPIKE_WINDOW: usize = 9;
pub const DEFAULT_THRESHOLD_DB: f64 = 6.0;
/// Power below `max · SPECTRUM_FLOOR` is clamped before taking decibels.
pub const SPECTRUM_FLOOR: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2-D DFT of a square row-major buffer.
pub(crate) fn fft2(data: &mut [Complex<f64>], n: usize, inverse: bool) {
    assert_eq!(data.len(), n * n);
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    fft.process(data);
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = data[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            data[y * n + x] = col[y];
        }
    }
}

/// Centered 2-D power spectrum; DC sits at `(size/2, size/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub size: usize,
    /// Row index follows vertical frequency, column horizontal frequency.
    pub power: Vec<f64>,
}

impl SpectrumGrid {
    /// Power at integer frequency indices `kx, ky` in `[-size/2, size/2)`
    /// (indices wrap).
    pub fn at(&self, kx: isize, ky: isize) -> f64 {
        let n = self.size as isize;
        let cx = (kx + n / 2).rem_euclid(n) as usize;
        let cy = (ky + n / 2).rem_euclid(n) as usize;
        self.power[cy * self.size + cx]
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

pub fn power_spectrum(gray: &GrayImage) -> Result<SpectrumGrid> {
    let (w, h) = (gray.width(), gray.height());
    if w != h || !w.is_power_of_two() || w < 2 {
        return Err(Error::NonSquareImage { width: w, height: h });
    }
    let n = w;
    let mean = gray.mean();
    let mut buf: Vec<Complex<f64>> = gray
        .values()
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    fft2(&mut buf, n, false);
    let mut power = vec![0.0; n * n];
    for ky in 0..n {
        for kx in 0..n {
            let c = buf[ky * n + kx];
            let (sx, sy) = ((kx + n / 2) % n, (ky + n / 2) % n);
            power[sy * n + sx] = c.norm_sqr();
        }
    }
    Ok(SpectrumGrid { size: n, power })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Power against frequency along one axis, positive frequencies only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum1D {
    /// Cycles per pixel, `k / size` for `k = 1..=size/2`.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum1D {
    /// Bin-wise mean of spectra sharing a frequency grid.
    pub fn mean(list: &[Spectrum1D]) -> Result<Spectrum1D> {
        let first = list.first().ok_or(Error::EmptyList)?;
        if list.iter().any(|s| s.freqs != first.freqs) {
            return Err(Error::MismatchedEdges);
        }
        let mut power = vec![0.0; first.power.len()];
        for s in list {
            for (a, p) in power.iter_mut().zip(&s.power) {
                *a += p;
            }
        }
        let n = list.len() as f64;
        for a in &mut power {
            *a /= n;
        }
        Ok(Spectrum1D {
            freqs: first.freqs.clone(),
            power,
        })
    }

    /// CSV with header `freq,power`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq", "power"])?;
        for (f, p) in self.freqs.iter().zip(&self.power) {
            w.serialize((f, p))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Directional spectrum: power along the frequency axis, averaged over the
/// positive and negative direction (`±f`). Horizontal means power against
/// horizontal frequency at zero vertical frequency. DC is excluded.
pub fn axis_average(grid: &SpectrumGrid, axis: Axis) -> Spectrum1D {
    let n = grid.size;
    let half = n / 2;
    let mut freqs = Vec::with_capacity(half);
    let mut power = Vec::with_capacity(half);
    for k in 1..=half as isize {
        let (p, m) = match axis {
            Axis::Horizontal => (grid.at(k, 0), grid.at(-k, 0)),
            Axis::Vertical => (grid.at(0, k), grid.at(0, -k)),
        };
        freqs.push(k as f64 / n as f64);
        power.push(0.5 * (p + m));
    }
    Spectrum1D { freqs, power }
}

/// Least-squares line through `(ln f, ln S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Natural log of the amplitude `A`.
    pub log_amplitude: f64,
    /// Spectral exponent, `−slope`.
    pub alpha: f64,
    /// Mean squared log-log deviation.
    pub residual: f64,
}

pub const MIN_FIT_POINTS: usize = 8;

/// Default fit band `[2/size, 0.5 − 2/size]`.
pub fn default_fit_range(size: usize) -> (f64, f64) {
    (2.0 / size as f64, 0.5 - 2.0 / size as f64)
}

pub fn fit_power_law(spec: &Spectrum1D, f_min: f64, f_max: f64) -> Result<PowerLawFit> {
    let tol = 1e-12;
    let pts: Vec<(f64, f64)> = spec
        .freqs
        .iter()
        .zip(&spec.power)
        .filter(|(&f, &p)| f >= f_min - tol && f <= f_max + tol && f > 0.0 && p > 0.0)
        .map(|(&f, &p)| (f.ln(), p.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientSupport(format!(
            "{} positive spectrum samples in [{f_min}, {f_max}]",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| {
            let d = p.1 - intercept - slope * p.0;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(PowerLawFit {
        log_amplitude: intercept,
        alpha: -slope,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub base_freq: f64,
    pub threshold_db: f64,
    pub window: usize,
    pub spike_freqs: Vec<f64>,
    /// dB above the local baseline, one per spike.
    pub prominences: Vec<f64>,
    /// Largest excess (dB, ≥ 0) over bins at integer multiples of `base_freq`.
    pub spikiness: f64,
}

impl SpikeReport {
    /// Detected spikes that sit on multiples of the base frequency.
    pub fn comb_freqs(&self) -> Vec<f64> {
        self.spike_freqs
            .iter()
            .copied()
            .filter(|f| is_multiple(*f, self.base_freq))
            .collect()
    }
}

fn is_multiple(f: f64, base: f64) -> bool {
    let r = f / base;
    (r - r.round()).abs() < 1e-6 && r.round() >= 1.0
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Theil–Sen line `(slope, intercept)`.
fn theil_sen(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut slopes = Vec::with_capacity(x.len() * x.len() / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    let slope = if slopes.is_empty() { 0.0 } else { median(&mut slopes) };
    let mut resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - slope * a).collect();
    (slope, median(&mut resid))
}

/// Finds bins whose log power stands out from a local baseline.
///
/// Log power (dB, floored at [`SPECTRUM_FLOOR`] of the maximum) is first
/// detrended by a Theil–Sen line in `ln f`, then compared against the
/// moving median of the detrended values over `window` bins (truncated at
/// the ends). A spike is a local maximum of the excess that reaches
/// `threshold_db`.
pub fn detect_spikes(
    spec: &Spectrum1D,
    base_freq: f64,
    threshold_db: f64,
    window: usize,
) -> Result<SpikeReport> {
    if !spec.freqs.iter().any(|f| (f - base_freq).abs() < 1e-9) {
        return Err(Error::BaseFreqOffGrid(base_freq));
    }
    if window == 0 {
        return Err(Error::BadConfig("spike window must be positive".into()));
    }
    let empty = SpikeReport {
        base_freq,
        threshold_db,
        window,
        spike_freqs: vec![],
        prominences: vec![],
        spikiness: 0.0,
    };
    let pmax = spec.power.iter().copied().fold(0.0, f64::max);
    if !(pmax > 0.0) {
        return Ok(empty);
    }
    let floor = pmax * SPECTRUM_FLOOR;
    let db: Vec<f64> = spec.power.iter().map(|&p| 10.0 * p.max(floor).log10()).collect();
    let lx: Vec<f64> = spec.freqs.iter().map(|f| f.ln()).collect();
    let (slope, intercept) = theil_sen(&lx, &db);
    let resid: Vec<f64> = db
        .iter()
        .zip(&lx)
        .map(|(d, x)| d - slope * x - intercept)
        .collect();

    let n = resid.len();
    let half = window / 2;
    let excess: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mut win = resid[lo..hi].to_vec();
            resid[i] - median(&mut win)
        })
        .collect();

    let mut report = empty;
    for i in 0..n {
        let left = if i > 0 { excess[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { excess[i + 1] } else { f64::NEG_INFINITY };
        if excess[i] >= threshold_db && excess[i] >= left && excess[i] >= right {
            report.spike_freqs.push(spec.freqs[i]);
            report.prominences.push(excess[i]);
        }
    }
    report.spikiness = spec
        .freqs
        .iter()
        .zip(&excess)
        .filter(|(f, _)| is_multiple(**f, base_freq))
        .map(|(_, e)| *e)
        .fold(0.0, f64::max);
    Ok(report)
}

/// Superposed 2-D impulse grids with periods `2, 4, ..., 2^(L−1)`;
/// `amplitudes[k]` scales the grid of period `2^(k+1)`.
pub fn impulse_pattern(size: usize, layers: usize, amplitudes: &[f64]) -> Result<GrayImage> {
    if layers < 2 || amplitudes.len() != layers - 1 {
        return Err(Error::BadConfig(format!(
            "impulse pattern needs L ≥ 2 and L − 1 amplitudes (L = {layers}, {} given)",
            amplitudes.len()
        )));
    }
    let longest = 1usize << (layers - 1);
    if longest > size {
        return Err(Error::PeriodExceedsImage {
            period: longest,
            size,
        });
    }
    let mut img = Plane::zeros(size, size);
    for (k, &a) in amplitudes.iter().enumerate() {
        let period = 1usize << (k + 1);
        for y in (0..size).step_by(period) {
            for x in (0..size).step_by(period) {
                let v = img.get(x, y);
                img.set(x, y, v + a);
            }
        }
    }
    Ok(img)
}

/// Default impulse intensities: `1/k` for the grid of period `2^k`.
pub fn default_impulse_amplitudes(layers: usize) -> Vec<f64> {
    (1..layers).map(|k| 1.0 / k as f64).collect()
}

/// Strided transposed-convolution chain fed by a 1×1 random input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvConfig {
    /// Number of strided (upsampling) layers after the projection.
    pub layers: usize,
    pub stride: usize,
    pub kernel_side: usize,
    pub channels: usize,
    pub trials: usize,
    pub seed: u64,
    /// Side of the zero canvas the output is centered in.
    pub canvas: usize,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            stride: 2,
            kernel_side: 4,
            channels: 4,
            trials: 200,
            seed: 0,
            canvas: 128,
        }
    }
}

impl DeconvConfig {
    /// Padding that makes a stride-`s` layer map `n` to `s·n` when `k − s` is even.
    fn padding(&self) -> usize {
        (self.kernel_side - self.stride) / 2
    }

    /// Side of the chain output before it is placed on the canvas.
    pub fn output_side(&self) -> usize {
        let mut n = self.kernel_side;
        for _ in 0..self.layers {
            n = self.stride * (n - 1) + self.kernel_side - 2 * self.padding();
        }
        n
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_owned()));
        if self.layers < 1 {
            return bad("deconvolution chain needs at least one layer");
        }
        if self.stride < 1 || self.kernel_side < self.stride {
            return bad("need 1 ≤ stride ≤ kernel_side");
        }
        if self.channels < 1 || self.trials < 1 {
            return bad("channels and trials must be positive");
        }
        if !self.canvas.is_power_of_two() {
            return bad("canvas side must be a power of two");
        }
        // guard against runaway sizes before computing them
        if (self.stride as f64).powi(self.layers as i32) * self.kernel_side as f64 > 4.0 * self.canvas as f64 {
            return bad("chain output exceeds the canvas");
        }
        if self.output_side() > self.canvas {
            return bad("chain output exceeds the canvas");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvOutput {
    pub mean_image: FloatImage,
    pub spectrum_h: Spectrum1D,
    pub spectrum_v: Spectrum1D,
}

struct Layer {
    c_in: usize,
    c_out: usize,
    /// `[out][in][ky * k + kx]`
    weights: Vec<f64>,
}

/// Transposed convolution: scatter each input unit through the kernel at
/// stride `s`, which equals inserting `s − 1` zeros between units, padding
/// and convolving. Output side `s·(n − 1) + k − 2p`.
fn transposed_conv(input: &[Vec<f64>], n: usize, layer: &Layer, k: usize, s: usize, p: usize) -> (Vec<Vec<f64>>, usize) {
    let m = s * (n - 1) + k - 2 * p;
    let mut out = vec![vec![0.0; m * m]; layer.c_out];
    for (o, plane) in out.iter_mut().enumerate() {
        for (i, src) in input.iter().enumerate() {
            let kern = &layer.weights[(o * layer.c_in + i) * k * k..(o * layer.c_in + i + 1) * k * k];
            for a in 0..n {
                for b in 0..n {
                    let v = src[a * n + b];
                    if v == 0.0 {
                        continue;
                    }
                    for u in 0..k {
                        let row = (s * a + u) as isize - p as isize;
                        if row < 0 || row >= m as isize {
                            continue;
                        }
                        for w in 0..k {
                            let col = (s * b + w) as isize - p as isize;
                            if col < 0 || col >= m as isize {
                                continue;
                            }
                            plane[row as usize * m + col as usize] += v * kern[u * k + w];
                        }
                    }
                }
            }
        }
    }
    (out, m)
}

fn relu(planes: &mut [Vec<f64>]) {
    for p in planes {
        for v in p.iter_mut() {
            *v = v.max(0.0);
        }
    }
}

/// Averages the output of a random transposed-convolution generator.
///
/// A projection layer maps the 1×1×c input to `k`×`k`×c; then `layers`
/// stride-`s` transposed convolutions follow, with ReLU between layers and
/// a single output channel. Kernels are drawn once from `seed` (stream 0);
/// trial `t` draws its input from stream `t + 1`. The mean image is
/// centered on a `canvas`-sized zero image before its spectrum is taken.
pub fn simulate_deconv_chain(cfg: &DeconvConfig) -> Result<DeconvOutput> {
    cfg.validate()?;
    let k = cfg.kernel_side;
    let c = cfg.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let mut draw = |c_in: usize, c_out: usize| Layer {
        c_in,
        c_out,
        weights: (0..c_in * c_out * k * k)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    };
    let projection = draw(c, c);
    let layers: Vec<Layer> = (0..cfg.layers)
        .map(|l| draw(c, if l + 1 == cfg.layers { 1 } else { c }))
        .collect();
    let side = cfg.output_side();

    let run_trial = |t: usize| -> Vec<f64> {
        let mut trng = ChaCha8Rng::seed_from_u64(cfg.seed);
        trng.set_stream(t as u64 + 1);
        let z: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut trng)).collect();
        let mut maps: Vec<Vec<f64>> = (0..c)
            .map(|o| {
                let mut m = vec![0.0; k * k];
                for (i, zi) in z.iter().enumerate() {
                    let kern = &projection.weights[(o * c + i) * k * k..(o * c + i + 1) * k * k];
                    for (dst, w) in m.iter_mut().zip(kern) {
                        *dst += zi * w;
                    }
                }
                m
            })
            .collect();
        relu(&mut maps);
        let mut n = k;
        for (l, layer) in layers.iter().enumerate() {
            let (next, m) = transposed_conv(&maps, n, layer, k, cfg.stride, cfg.padding());
            maps = next;
            n = m;
            if l + 1 < layers.len() {
                relu(&mut maps);
            }
        }
        debug_assert_eq!(n, side);
        maps.pop().unwrap()
    };

    let outputs: Vec<Vec<f64>> = (0..cfg.trials).into_par_iter().map(run_trial).collect();
    let mut mean = vec![0.0; side * side];
    for o in &outputs {
        for (a, v) in mean.iter_mut().zip(o) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a /= cfg.trials as f64;
    }

    let off = (cfg.canvas - side) / 2;
    let mut canvas = Plane::zeros(cfg.canvas, cfg.canvas);
    for y in 0..side {
        for x in 0..side {
            canvas.set(x + off, y + off, mean[y * side + x]);
        }
    }
    let grid = power_spectrum(&canvas)?;
    Ok(DeconvOutput {
        spectrum_h: axis_average(&grid, Axis::Horizontal),
        spectrum_v: axis_average(&grid, Axis::Vertical),
        mean_image: canvas,
    })
}
