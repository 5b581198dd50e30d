//! Homogeneous regions: quantile gray-level bands, connected components and
//! the area law `N(s) = K·s^c`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::BadConfig(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

/// Integer gray levels in `[0, 255]`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayLevels {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<u8>,
}

impl GrayLevels {
    pub fn new(width: usize, height: usize, levels: Vec<u8>) -> Self {
        assert_eq!(levels.len(), width * height);
        Self {
            width,
            height,
            levels,
        }
    }

    /// Luma rounded half-up.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self::new(gray.width(), gray.height(), gray.quantize_u8())
    }

    /// Each pixel duplicated into a `factor`×`factor` block.
    pub fn block_upsample(&self, factor: usize) -> Self {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut levels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                levels.push(self.levels[(y / factor) * self.width + x / factor]);
            }
        }
        Self::new(w, h, levels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSeries {
    pub n_levels: usize,
    /// `t_1..t_N`, nondecreasing, each in `[0, 256]`.
    pub thresholds: Vec<u16>,
}

impl ThresholdSeries {
    /// Band index of every gray value: band `n` holds `t_{n-1} ≤ v < t_n`
    /// with `t_0 = 0`.
    fn band_lut(&self) -> [u16; 256] {
        let mut lut = [0u16; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            let n = self.thresholds.partition_point(|&t| t as usize <= v);
            *slot = n.min(self.thresholds.len() - 1) as u16;
        }
        lut
    }
}

/// `t_n` is the least integer with strictly more than `n·HW/N` pixels below
/// it. For `n = N` no integer qualifies, so `t_N` is one past the brightest
/// gray value present (the least integer with every pixel below it).
pub fn quantile_thresholds(gray: &GrayLevels, n_levels: usize) -> Result<ThresholdSeries> {
    if n_levels < 2 {
        return Err(Error::BadConfig(format!("n_levels must be at least 2, got {n_levels}")));
    }
    let mut hist = [0u64; 256];
    for &v in &gray.levels {
        hist[v as usize] += 1;
    }
    // below[t] = number of pixels with value < t, t in 0..=256
    let mut below = [0u64; 257];
    for t in 1..=256 {
        below[t] = below[t - 1] + hist[t - 1];
    }
    let total = gray.levels.len() as u64;
    let n_big = n_levels as u64;
    let top = gray.levels.iter().copied().max().unwrap_or(0) as u16 + 1;
    let thresholds = (1..=n_big)
        .map(|n| {
            // below[t] > n·total/N  ⇔  below[t]·N > n·total
            (0..=256u16)
                .find(|&t| below[t as usize] * n_big > n * total)
                .unwrap_or(top)
        })
        .collect();
    Ok(ThresholdSeries {
        n_levels,
        thresholds,
    })
}

/// Count of connected regions per area.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaHistogram {
    pub areas: BTreeMap<u64, u64>,
}

impl AreaHistogram {
    pub fn add(&mut self, area: u64, count: u64) {
        if count > 0 {
            *self.areas.entry(area).or_default() += count;
        }
    }

    pub fn merge(&mut self, other: &AreaHistogram) {
        for (&s, &n) in &other.areas {
            self.add(s, n);
        }
    }

    /// Σ s·N(s), the number of pixels covered.
    pub fn covered_pixels(&self) -> u64 {
        self.areas.iter().map(|(s, n)| s * n).sum()
    }

    pub fn region_count(&self) -> u64 {
        self.areas.values().sum()
    }

    /// CSV with header `s,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "count"])?;
        for (s, n) in &self.areas {
            w.serialize((s, n))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn with_capacity(n: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling of `band`-equal components.
/// Returns one area per component.
pub fn component_areas(width: usize, height: usize, band: &[u16], conn: Connectivity) -> Vec<u64> {
    assert_eq!(band.len(), width * height);
    let mut labels = vec![0u32; width * height];
    let mut uf = UnionFind::with_capacity(width * height / 4 + 1);

    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let b = band[i];
            let mut label: Option<u32> = None;
            let join = |j: usize, label: &mut Option<u32>, uf: &mut UnionFind| {
                if band[j] == b {
                    *label = Some(match *label {
                        None => labels[j],
                        Some(l) => uf.union(l, labels[j]),
                    });
                }
            };
            if x > 0 {
                join(i - 1, &mut label, &mut uf);
            }
            if y > 0 {
                join(i - width, &mut label, &mut uf);
                if conn == Connectivity::Eight {
                    if x > 0 {
                        join(i - width - 1, &mut label, &mut uf);
                    }
                    if x + 1 < width {
                        join(i - width + 1, &mut label, &mut uf);
                    }
                }
            }
            labels[i] = match label {
                Some(l) => l,
                None => uf.make(),
            };
        }
    }

    let mut area = vec![0u64; uf.parent.len()];
    for &l in &labels {
        let r = uf.find(l);
        area[r as usize] += 1;
    }
    area.into_iter().filter(|&a| a > 0).collect()
}

/// Segments into threshold bands and histograms every component area.
pub fn segment_and_count(
    gray: &GrayLevels,
    thresholds: &ThresholdSeries,
    conn: Connectivity,
) -> AreaHistogram {
    let lut = thresholds.band_lut();
    let band: Vec<u16> = gray.levels.iter().map(|&v| lut[v as usize]).collect();
    let mut hist = AreaHistogram::default();
    for a in component_areas(gray.width, gray.height, &band, conn) {
        hist.add(a, 1);
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionLawFit {
    #[serde(rename = "K")]
    pub k: f64,
    pub c: f64,
    /// Mean squared deviation of ln N(s) from ln(K s^c) over occupied sizes.
    pub residual: f64,
    /// Spacing of the size lattice the likelihood is normalized over.
    pub lattice: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Discrete power-law maximum likelihood over sizes `1 ≤ s < s_max`.
///
/// The likelihood is normalized over the lattice `{g, 2g, ...} < s_max`
/// where `g` is the gcd of the occupied sizes (1 for any image holding a
/// single-pixel region). `K` makes the predicted count below `s_max` equal
/// the observed one.
pub fn fit_region_law(hist: &AreaHistogram, s_max: u64) -> Result<RegionLawFit> {
    let obs: Vec<(u64, f64)> = hist
        .areas
        .range(1..s_max)
        .map(|(&s, &n)| (s, n as f64))
        .collect();
    if obs.len() < 2 {
        return Err(Error::InsufficientSupport(format!(
            "{} distinct region sizes below {s_max}",
            obs.len()
        )));
    }
    let lattice = obs.iter().fold(0, |g, &(s, _)| gcd(g, s));
    let support: Vec<f64> = (1..)
        .map(|k| k * lattice)
        .take_while(|&s| s < s_max)
        .map(|s| (s as f64).ln())
        .collect();
    let n_obs: f64 = obs.iter().map(|o| o.1).sum();
    let mean_log = obs.iter().map(|&(s, n)| n * (s as f64).ln()).sum::<f64>() / n_obs;

    // E_c[ln s] and Var_c[ln s] under p(s) ∝ s^c on the support
    let moments = |c: f64| {
        let top = support.iter().map(|l| c * l).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for &l in &support {
            let w = (c * l - top).exp();
            z += w;
            m1 += w * l;
            m2 += w * l * l;
        }
        let e = m1 / z;
        (e, (m2 / z - e * e).max(0.0), top + z.ln())
    };

    let (mut lo, mut hi) = (-1.0, 1.0);
    while moments(lo).0 > mean_log {
        lo *= 2.0;
        if lo < -1e4 {
            return Err(Error::NoConvergence("region exponent below bracket"));
        }
    }
    while moments(hi).0 < mean_log {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NoConvergence("region exponent above bracket"));
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (e, var, _) = moments(c);
        let f = e - mean_log;
        if f < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let mut next = if var > 0.0 { c - f / var } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - c).abs() < 1e-13 || hi - lo < 1e-13;
        c = next;
        if done {
            break;
        }
    }
    let (_, _, log_z) = moments(c);
    let log_k = n_obs.ln() - log_z;
    let residual = obs
        .iter()
        .map(|&(s, n)| {
            let d = n.ln() - log_k - c * (s as f64).ln();
            d * d
        })
        .sum::<f64>()
        / obs.len() as f64;
    Ok(RegionLawFit {
        k: log_k.exp(),
        c,
        residual,
        lattice,
    })
}
