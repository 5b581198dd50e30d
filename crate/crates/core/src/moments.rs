//! Histograms and distribution-shape statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to reference masses before taking the divergence.
pub const KL_EPSILON: f64 = 1e-12;

/// Population moments of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Mean, standard deviation, skewness and kurtosis with population (1/n)
/// normalization. Kurtosis is not excess kurtosis: a Gaussian gives 3.
pub fn moment_summary(samples: &[f64]) -> Result<MomentSummary> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample("fewer than two samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    // relative threshold: a constant sample leaves only rounding residue
    let scale = mean.abs().max(f64::MIN_POSITIVE);
    if !(m2 > 0.0) || m2.sqrt() <= 1e-12 * scale {
        return Err(Error::DegenerateSample("zero variance"));
    }
    let std = m2.sqrt();
    Ok(MomentSummary {
        mean,
        std,
        skewness: m3 / (m2 * std),
        kurtosis: m4 / (m2 * m2),
    })
}

/// Binned distribution with explicit edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    /// Samples below the first edge.
    pub underflow: f64,
    /// Samples above the last edge (or NaN).
    pub overflow: f64,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2
        || edges.iter().any(|e| !e.is_finite())
        || edges.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::BadEdges);
    }
    Ok(())
}

/// `bins + 1` equally spaced edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::BadEdges);
    }
    let step = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + step * i as f64).collect();
    edges[bins] = hi;
    Ok(edges)
}

impl Histogram {
    pub fn empty(edges: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            counts: vec![0.0; bins],
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    /// Builds from explicit bin masses.
    pub fn from_counts(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if counts.len() + 1 != edges.len() || counts.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::BadEdges);
        }
        Ok(Self {
            edges,
            counts,
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Sum of in-range counts.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Bin index for `x`; the last edge is inclusive.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if !(x >= self.edges[0]) || x > last {
            return None;
        }
        if x == last {
            return Some(self.bins() - 1);
        }
        // first edge strictly greater than x, minus one
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx - 1)
    }

    pub fn add(&mut self, x: f64) {
        match self.bin_of(x) {
            Some(i) => self.counts[i] += 1.0,
            None if x < self.edges[0] => self.underflow += 1.0,
            None => self.overflow += 1.0,
        }
    }

    /// Per-bin probability mass (counts / total).
    pub fn masses(&self) -> Vec<f64> {
        let total = self.total();
        if total > 0.0 {
            self.counts.iter().map(|c| c / total).collect()
        } else {
            vec![0.0; self.bins()]
        }
    }

    /// Mass divided by bin width; integrates to 1 when total > 0.
    pub fn density(&self) -> Vec<f64> {
        self.masses()
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect()
    }

    /// Histogram whose counts are the masses.
    pub fn normalized(&self) -> Histogram {
        Histogram {
            edges: self.edges.clone(),
            counts: self.masses(),
            underflow: 0.0,
            overflow: 0.0,
        }
    }

    /// CSV with header `edge_low,edge_high,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["edge_low", "edge_high", "density"])?;
        for (win, d) in self.edges.windows(2).zip(self.density()) {
            w.serialize((win[0], win[1], d))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn build_histogram(samples: &[f64], edges: &[f64]) -> Result<Histogram> {
    let mut h = Histogram::empty(edges.to_vec())?;
    for &x in samples {
        h.add(x);
    }
    Ok(h)
}

/// Equal-weight average of per-image densities (counts / total).
/// Histograms with no in-range mass contribute zeros.
pub fn average_histograms(list: &[Histogram]) -> Result<Histogram> {
    let first = list.first().ok_or(Error::EmptyList)?;
    if list.iter().any(|h| h.edges != first.edges) {
        return Err(Error::MismatchedEdges);
    }
    let mut acc = vec![0.0; first.bins()];
    for h in list {
        for (a, m) in acc.iter_mut().zip(h.masses()) {
            *a += m;
        }
    }
    let n = list.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Histogram::from_counts(first.edges.clone(), acc)
}

/// Divergence in nats between two mass vectors over the same bins.
///
/// Both are normalized first. If some bin carries mass in `p` while `q`
/// has less than [`KL_EPSILON`], every `q` bin is floored at the epsilon and
/// `q` is renormalized.
pub fn kl_masses(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::MismatchedEdges);
    }
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    if !(ps > 0.0) {
        return Err(Error::DegenerateSample("empty reference histogram"));
    }
    let mut qn: Vec<f64> = if qs > 0.0 {
        q.iter().map(|v| v / qs).collect()
    } else {
        vec![0.0; q.len()]
    };
    let needs_floor = p
        .iter()
        .zip(&qn)
        .any(|(&pi, &qi)| pi > 0.0 && qi < KL_EPSILON);
    if needs_floor {
        for v in &mut qn {
            *v = v.max(KL_EPSILON);
        }
        let s: f64 = qn.iter().sum();
        for v in &mut qn {
            *v /= s;
        }
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(&qn) {
        let pi = pi / ps;
        if pi > 0.0 {
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::MismatchedEdges);
    }
    kl_masses(&p.counts, &q.counts)
}

/// Linear-interpolated quantile of an ascending sorted slice, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Evenly spaced order statistics of one sample, used to pool percentiles
/// across images without keeping every value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSketch {
    pub count: usize,
    /// Quantiles at `i / (len - 1)`, ascending.
    pub points: Vec<f64>,
}

impl QuantileSketch {
    pub const DEFAULT_POINTS: usize = 1025;

    pub fn from_samples(samples: &[f64], points: usize) -> Option<Self> {
        let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() || points < 2 {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let pts = (0..points)
            .map(|i| quantile_sorted(&sorted, i as f64 / (points - 1) as f64))
            .collect();
        Some(Self {
            count: sorted.len(),
            points: pts,
        })
    }

    /// Approximate fraction of samples ≤ `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        let p = &self.points;
        let k = p.len() - 1;
        if t < p[0] {
            return 0.0;
        }
        if t >= p[k] {
            return 1.0;
        }
        let i = p.partition_point(|&v| v <= t) - 1;
        let span = p[i + 1] - p[i];
        let frac = if span > 0.0 { (t - p[i]) / span } else { 1.0 };
        (i as f64 + frac) / k as f64
    }

    /// Quantile `q` of the union of all sketched samples (count weighted),
    /// found by bisection on the pooled distribution function.
    pub fn pooled_quantile(sketches: &[QuantileSketch], q: f64) -> Option<f64> {
        let total: usize = sketches.iter().map(|s| s.count).sum();
        if total == 0 {
            return None;
        }
        let mut lo = sketches.iter().map(|s| s.points[0]).fold(f64::INFINITY, f64::min);
        let mut hi = sketches
            .iter()
            .map(|s| *s.points.last().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let pooled = |t: f64| {
            sketches
                .iter()
                .map(|s| s.cdf(t) * s.count as f64)
                .sum::<f64>()
                / total as f64
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pooled(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_law() {
        let s: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let m = moment_summary(&s).unwrap();
        assert_eq!(m.skewness, 0.0);
        assert_abs_diff_eq!(m.kurtosis, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = moment_summary(&s).unwrap();
        assert!((m.kurtosis - 3.0).abs() < 0.05, "{m:?}");
        assert!(m.skewness.abs() < 0.02, "{m:?}");
    }

    #[test]
    fn degenerate_samples() {
        assert!(matches!(
            moment_summary(&[5.0, 5.0, 5.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(moment_summary(&[1.0]), Err(Error::DegenerateSample(_))));
        assert!(moment_summary(&[0.1; 1000]).is_err());
    }

    #[test]
    fn histogram_binning() {
        let h = build_histogram(&[0.5], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[1.0, 0.0]);

        let h = build_histogram(&[2.0, 1.0, 3.0, -1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[0.0, 2.0]);
        assert_eq!(h.overflow, 1.0);
        assert_eq!(h.underflow, 1.0);

        assert!(matches!(
            build_histogram(&[0.0], &[1.0, 1.0, 2.0]),
            Err(Error::BadEdges)
        ));
    }

    #[test]
    fn density_integrates_to_one() {
        let h = build_histogram(&[0.1, 0.2, 1.5, 3.9], &[0.0, 0.5, 2.0, 4.0]).unwrap();
        let integral: f64 = h
            .density()
            .iter()
            .zip(h.edges().windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn averaging() {
        let e = vec![0.0, 1.0, 2.0];
        let a = Histogram::from_counts(e.clone(), vec![3.0, 1.0]).unwrap();
        let avg = average_histograms(std::slice::from_ref(&a)).unwrap();
        assert_eq!(avg.counts(), &[0.75, 0.25]);

        let b = Histogram::from_counts(e.clone(), vec![5.0, 0.0]).unwrap();
        let c = Histogram::from_counts(e.clone(), vec![0.0, 2.0]).unwrap();
        let avg = average_histograms(&[b.clone(), c]).unwrap();
        assert_eq!(avg.counts(), &[0.5, 0.5]);

        let d = Histogram::from_counts(vec![0.0, 1.0, 3.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(average_histograms(&[b, d]), Err(Error::MismatchedEdges)));
        assert!(matches!(average_histograms(&[]), Err(Error::EmptyList)));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_masses(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        // hand evaluation: 0.5 ln 2 + 0.5 ln(2/3)
        assert_abs_diff_eq!(
            kl_masses(&[0.5, 0.5], &[0.25, 0.75]).unwrap(),
            0.143_841_036_225_890_42,
            epsilon = 1e-12
        );
        let k = kl_masses(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(k.is_finite() && k > 1.0);
    }

    #[test]
    fn pooled_quantile_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let groups: Vec<Vec<f64>> = (0..8)
            .map(|g| {
                (0..4096)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (z * (1.0 + g as f64 * 0.3)).abs()
                    })
                    .collect()
            })
            .collect();
        let sketches: Vec<_> = groups
            .iter()
            .map(|g| QuantileSketch::from_samples(g, QuantileSketch::DEFAULT_POINTS).unwrap())
            .collect();
        let mut all: Vec<f64> = groups.concat();
        all.sort_by(f64::total_cmp);
        for q in [0.5, 0.9, 0.999] {
            let direct = quantile_sorted(&all, q);
            let pooled = QuantileSketch::pooled_quantile(&sketches, q).unwrap();
            assert!((pooled - direct).abs() / direct < 0.01, "q={q} {pooled} {direct}");
        }
    }

    proptest! {
        #[test]
        fn kurtosis_bound(s in proptest::collection::vec(-100.0f64..100.0, 3..200)) {
            if let Ok(m) = moment_summary(&s) {
                prop_assert!(m.kurtosis >= m.skewness * m.skewness + 1.0 - 1e-9);
            }
        }

        #[test]
        fn average_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 4), 1..6),
            rot in 0usize..6,
        ) {
            let edges = uniform_edges(0.0, 4.0, 4).unwrap();
            let hs: Vec<Histogram> = rows
                .iter()
                .map(|r| Histogram::from_counts(edges.clone(), r.clone()).unwrap())
                .collect();
            let mut perm = hs.clone();
            perm.rotate_left(rot % hs.len());
            perm.reverse();
            let a = average_histograms(&hs).unwrap();
            let b = average_histograms(&perm).unwrap();
            for (x, y) in a.counts().iter().zip(b.counts()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_nonnegative(
            p in proptest::collection::vec(0.0f64..1.0, 5),
            q in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            prop_assume!(p.iter().sum::<f64>() > 1e-3);
            let k = kl_masses(&p, &q).unwrap();
            prop_assert!(k >= 0.0);
            prop_assert!(kl_masses(&p, &p).unwrap() < 1e-12);
        }
    }
}
