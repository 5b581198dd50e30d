//! Per-image statistic battery and corpus aggregation.
//!
//! Analysis runs in two passes over the corpus. The first computes every
//! per-image statistic and a quantile sketch of the contrast and filter
//! response values; the pooled sketches fix the contrast and filter
//! histogram ranges. The second pass bins each image over those shared
//! edges. Images run in parallel; every merge is in manifest order, so the
//! output does not depend on the worker count.

use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colorspace::{normalize_luminance, to_luma};
use crate::config::AnalysisConfig;
use crate::contrast::{contrast_map, fit_weibull_with, WeibullFit};
use crate::corpus_io::{center_crop, load_cropped, CorpusManifest};
use crate::error::{Error, Result};
use crate::moments::{average_histograms, build_histogram, moment_summary, uniform_edges, Histogram, QuantileSketch};
use crate::random_filters::{filter_battery, filter_responses, RandomFilter};
use crate::raster::RgbImage;
use crate::regions::{fit_region_law, quantile_thresholds, segment_and_count, AreaHistogram, GrayLevels, RegionLawFit};
use crate::spectrum::{axis_average, detect_spikes, fit_power_law, power_spectrum, Axis, PowerLawFit, Spectrum1D, SpikeReport};

pub const CORPUS_SCHEMA: &str = "imgstat.corpus-stats/1";
pub const TOOL_VERSION: &str = concat!("imgstat ", env!("CARGO_PKG_VERSION"));

/// Every statistic of one cropped image. `None` marks a degenerate value;
/// the reason is in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub luminance_skewness: Option<f64>,
    pub weibull: Option<WeibullFit>,
    pub filter_kurtosis: Vec<Option<f64>>,
    pub region_fit: Option<RegionLawFit>,
    pub spectrum_fit_h: Option<PowerLawFit>,
    pub spectrum_fit_v: Option<PowerLawFit>,
    /// `statistic: reason` for each value left out.
    pub degenerate: Vec<String>,
}

/// Row names in report order for a battery of `filter_count` filters.
pub fn statistic_names(filter_count: usize) -> Vec<String> {
    let mut names = vec![
        "luminance_skewness".to_owned(),
        "weibull_beta".to_owned(),
        "weibull_gamma".to_owned(),
        "weibull_kld".to_owned(),
    ];
    names.extend((1..=filter_count).map(|i| format!("filter_kurtosis_{i}")));
    for n in [
        "region_K",
        "region_c",
        "region_residual",
        "spectrum_log_A_h",
        "spectrum_alpha_h",
        "spectrum_residual_h",
        "spectrum_log_A_v",
        "spectrum_alpha_v",
        "spectrum_residual_v",
    ] {
        names.push(n.to_owned());
    }
    names
}

impl ImageStats {
    /// Values in [`statistic_names`] order.
    pub fn row_values(&self) -> Vec<Option<f64>> {
        let mut v = vec![
            self.luminance_skewness,
            self.weibull.map(|w| w.beta),
            self.weibull.map(|w| w.gamma),
            self.weibull.map(|w| w.kld),
        ];
        v.extend(self.filter_kurtosis.iter().copied());
        v.push(self.region_fit.map(|r| r.k));
        v.push(self.region_fit.map(|r| r.c));
        v.push(self.region_fit.map(|r| r.residual));
        for fit in [self.spectrum_fit_h, self.spectrum_fit_v] {
            v.push(fit.map(|f| f.log_amplitude));
            v.push(fit.map(|f| f.alpha));
            v.push(fit.map(|f| f.residual));
        }
        v
    }
}

/// One statistic over the corpus, one entry per processed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSamples {
    pub name: String,
    /// `null` where the statistic was degenerate for that image.
    pub values: Vec<Option<f64>>,
}

impl StatSamples {
    pub fn valid(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn excluded(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub entry: String,
    pub kind: String,
    pub reason: String,
}

/// Aggregated statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub schema: String,
    pub tool_version: String,
    pub config: AnalysisConfig,
    /// SHA-256 of the manifest JSON.
    pub manifest_digest: String,
    /// Processed entries, in manifest order.
    pub entries: Vec<String>,
    pub failures: Vec<ImageFailure>,
    pub samples: Vec<StatSamples>,
    pub luminance_histogram: Histogram,
    pub contrast_histogram: Histogram,
    pub filter_histograms: Vec<Histogram>,
    /// Mean number of regions of each area per image.
    pub area_histogram: BTreeMap<u64, f64>,
    pub spectrum_h: Spectrum1D,
    pub spectrum_v: Spectrum1D,
    pub spikes_h: Option<SpikeReport>,
    pub spikes_v: Option<SpikeReport>,
}

impl CorpusStats {
    pub fn n_images(&self) -> usize {
        self.entries.len()
    }

    pub fn sample(&self, name: &str) -> Option<&StatSamples> {
        self.samples.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stats: CorpusStats = serde_json::from_str(text)?;
        if stats.schema != CORPUS_SCHEMA {
            return Err(Error::BadConfig(format!("unsupported schema {}", stats.schema)));
        }
        Ok(stats)
    }

    /// Area histogram CSV, header `s,count`.
    pub fn write_area_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "count"])?;
        for (s, n) in &self.area_histogram {
            w.serialize((s, n))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Pass-one output of one image.
struct FirstPass {
    stats: ImageStats,
    luminance: Option<Histogram>,
    contrast_sketch: Option<QuantileSketch>,
    response_sketch: Option<QuantileSketch>,
    areas: AreaHistogram,
    spectrum_h: Spectrum1D,
    spectrum_v: Spectrum1D,
}

fn note<T>(r: Result<T>, what: &str, degenerate: &mut Vec<String>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            degenerate.push(format!("{what}: {e}"));
            None
        }
    }
}

fn first_pass(img: &RgbImage, cfg: &AnalysisConfig, filters: &[RandomFilter], lum_edges: &[f64]) -> Result<FirstPass> {
    let mut degenerate = Vec::new();
    let luma = to_luma(img);

    let normalized = note(normalize_luminance(&luma), "luminance", &mut degenerate);
    let luminance_skewness = normalized
        .as_ref()
        .and_then(|n| note(moment_summary(n.values()), "luminance_skewness", &mut degenerate))
        .map(|m| m.skewness);
    let luminance = match &normalized {
        Some(n) => Some(build_histogram(n.values(), lum_edges)?),
        None => None,
    };

    let contrast = contrast_map(img, cfg.sigma)?;
    let weibull = note(
        fit_weibull_with(contrast.values(), cfg.weibull_kl_bins, cfg.histogram_quantile),
        "weibull",
        &mut degenerate,
    );
    let contrast_sketch = QuantileSketch::from_samples(contrast.values(), QuantileSketch::DEFAULT_POINTS);

    let mut filter_kurtosis = Vec::with_capacity(filters.len());
    let mut abs_responses = Vec::new();
    for (i, f) in filters.iter().enumerate() {
        let resp = filter_responses(&luma, f)?;
        filter_kurtosis.push(
            note(moment_summary(&resp), &format!("filter_kurtosis_{}", i + 1), &mut degenerate).map(|m| m.kurtosis),
        );
        abs_responses.extend(resp.iter().map(|r| r.abs()));
    }
    let response_sketch = QuantileSketch::from_samples(&abs_responses, QuantileSketch::DEFAULT_POINTS);

    let levels = GrayLevels::from_gray(&luma);
    let thresholds = quantile_thresholds(&levels, cfg.n_levels)?;
    let areas = segment_and_count(&levels, &thresholds, cfg.connectivity);
    let region_fit = note(fit_region_law(&areas, cfg.s_max), "region", &mut degenerate);

    let grid = power_spectrum(&luma)?;
    let spectrum_h = axis_average(&grid, Axis::Horizontal);
    let spectrum_v = axis_average(&grid, Axis::Vertical);
    let spectrum_fit_h = note(
        fit_power_law(&spectrum_h, cfg.fit_f_min, cfg.fit_f_max),
        "spectrum_h",
        &mut degenerate,
    );
    let spectrum_fit_v = note(
        fit_power_law(&spectrum_v, cfg.fit_f_min, cfg.fit_f_max),
        "spectrum_v",
        &mut degenerate,
    );

    Ok(FirstPass {
        stats: ImageStats {
            luminance_skewness,
            weibull,
            filter_kurtosis,
            region_fit,
            spectrum_fit_h,
            spectrum_fit_v,
            degenerate,
        },
        luminance,
        contrast_sketch,
        response_sketch,
        areas,
        spectrum_h,
        spectrum_v,
    })
}

/// Pass two: contrast and per-filter histograms over the shared edges.
fn second_pass(
    img: &RgbImage,
    cfg: &AnalysisConfig,
    filters: &[RandomFilter],
    contrast_edges: &[f64],
    filter_edges: &[f64],
) -> Result<(Histogram, Vec<Histogram>)> {
    let contrast = contrast_map(img, cfg.sigma)?;
    let ch = build_histogram(contrast.values(), contrast_edges)?;
    let luma = to_luma(img);
    let fh = filters
        .iter()
        .map(|f| build_histogram(&filter_responses(&luma, f)?, filter_edges))
        .collect::<Result<Vec<_>>>()?;
    Ok((ch, fh))
}

/// Statistics of one image under `cfg`; the image is center-cropped first.
pub fn image_stats(img: &RgbImage, cfg: &AnalysisConfig) -> Result<ImageStats> {
    cfg.validate()?;
    let img = center_crop(img, cfg.crop_size)?;
    let filters = filter_battery(cfg.filter_count, cfg.filter_side, cfg.filter_seed)?;
    let lum_edges = uniform_edges(0.0, cfg.luminance_max, cfg.luminance_bins)?;
    Ok(first_pass(&img, cfg, &filters, &lum_edges)?.stats)
}

pub fn manifest_digest(manifest: &CorpusManifest) -> Result<String> {
    let json = manifest.to_json()?;
    Ok(format!("{:x}", Sha256::digest(json.as_bytes())))
}

/// Upper histogram edge from pooled sketches; falls back to 1 when every
/// value is zero.
fn pooled_upper(sketches: &[QuantileSketch], q: f64) -> f64 {
    match QuantileSketch::pooled_quantile(sketches, q) {
        Some(v) if v > 0.0 && v.is_finite() => v,
        _ => 1.0,
    }
}

/// Runs the battery over `n` images produced by `load`.
///
/// `load(i)` must return the same image on every call. Images whose load
/// fails in the first pass are recorded in `failures` and skipped.
pub fn analyze_source<F>(entries: &[String], digest: String, cfg: &AnalysisConfig, load: F) -> Result<CorpusStats>
where
    F: Fn(usize) -> Result<RgbImage> + Sync,
{
    cfg.validate()?;
    let filters = filter_battery(cfg.filter_count, cfg.filter_side, cfg.filter_seed)?;
    let lum_edges = uniform_edges(0.0, cfg.luminance_max, cfg.luminance_bins)?;

    let first: Vec<Result<FirstPass>> = (0..entries.len())
        .into_par_iter()
        .map(|i| first_pass(&load(i)?, cfg, &filters, &lum_edges))
        .collect();

    let mut ok_index = Vec::new();
    let mut passes = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in first.into_iter().enumerate() {
        match r {
            Ok(p) => {
                ok_index.push(i);
                passes.push(p);
            }
            Err(e) => {
                warn!("{}: {e}", entries[i]);
                failures.push(ImageFailure {
                    entry: entries[i].clone(),
                    kind: e.kind().to_owned(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if passes.is_empty() {
        return Err(Error::AllImagesFailed);
    }
    debug!("first pass: {} ok, {} failed", passes.len(), failures.len());

    let contrast_sketches: Vec<QuantileSketch> = passes.iter().filter_map(|p| p.contrast_sketch.clone()).collect();
    let response_sketches: Vec<QuantileSketch> = passes.iter().filter_map(|p| p.response_sketch.clone()).collect();
    let contrast_edges = uniform_edges(0.0, pooled_upper(&contrast_sketches, cfg.histogram_quantile), cfg.contrast_bins)?;
    let r = pooled_upper(&response_sketches, cfg.histogram_quantile);
    let filter_edges = uniform_edges(-r, r, cfg.filter_bins)?;

    let second: Vec<(Histogram, Vec<Histogram>)> = ok_index
        .par_iter()
        .map(|&i| second_pass(&load(i)?, cfg, &filters, &contrast_edges, &filter_edges))
        .collect::<Result<_>>()?;

    let names = statistic_names(filters.len());
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(passes.len()); names.len()];
    for p in &passes {
        for (col, v) in columns.iter_mut().zip(p.stats.row_values()) {
            col.push(v);
        }
    }
    let samples = names
        .into_iter()
        .zip(columns)
        .map(|(name, values)| StatSamples { name, values })
        .collect();

    let lum_list: Vec<Histogram> = passes.iter().filter_map(|p| p.luminance.clone()).collect();
    let luminance_histogram = if lum_list.is_empty() {
        Histogram::empty(lum_edges)?
    } else {
        average_histograms(&lum_list)?
    };
    let contrast_list: Vec<Histogram> = second.iter().map(|s| s.0.clone()).collect();
    let contrast_histogram = average_histograms(&contrast_list)?;
    let filter_histograms = (0..filters.len())
        .map(|k| average_histograms(&second.iter().map(|s| s.1[k].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    let mut total_areas = AreaHistogram::default();
    for p in &passes {
        total_areas.merge(&p.areas);
    }
    let n = passes.len() as f64;
    let area_histogram = total_areas.areas.iter().map(|(&s, &c)| (s, c as f64 / n)).collect();

    let spectrum_h = Spectrum1D::mean(&passes.iter().map(|p| p.spectrum_h.clone()).collect::<Vec<_>>())?;
    let spectrum_v = Spectrum1D::mean(&passes.iter().map(|p| p.spectrum_v.clone()).collect::<Vec<_>>())?;
    let spikes = |s: &Spectrum1D| detect_spikes(s, cfg.base_freq, cfg.threshold_db, cfg.spike_window).ok();

    Ok(CorpusStats {
        schema: CORPUS_SCHEMA.to_owned(),
        tool_version: TOOL_VERSION.to_owned(),
        config: cfg.clone(),
        manifest_digest: digest,
        entries: ok_index.iter().map(|&i| entries[i].clone()).collect(),
        failures,
        samples,
        luminance_histogram,
        contrast_histogram,
        filter_histograms,
        area_histogram,
        spikes_h: spikes(&spectrum_h),
        spikes_v: spikes(&spectrum_v),
        spectrum_h,
        spectrum_v,
    })
}

pub fn analyze_corpus(manifest: &CorpusManifest, cfg: &AnalysisConfig) -> Result<CorpusStats> {
    if manifest.is_empty() {
        return Err(Error::EmptyCorpus(manifest.root.clone()));
    }
    if manifest.crop_size != cfg.crop_size {
        return Err(Error::BadConfig(format!(
            "manifest crop size {} differs from config crop size {}",
            manifest.crop_size, cfg.crop_size
        )));
    }
    let digest = manifest_digest(manifest)?;
    analyze_source(&manifest.entries, digest, cfg, |i| load_cropped(manifest, i))
}

/// In-memory variant; entries are named by index and each image is
/// center-cropped to `cfg.crop_size`.
pub fn analyze_images(images: &[RgbImage], cfg: &AnalysisConfig) -> Result<CorpusStats> {
    if images.is_empty() {
        return Err(Error::EmptyCorpus("<memory>".into()));
    }
    let entries: Vec<String> = (0..images.len()).map(|i| format!("#{i}")).collect();
    let digest = format!("{:x}", Sha256::digest(entries.join("\n").as_bytes()));
    analyze_source(&entries, digest, cfg, |i| center_crop(&images[i], cfg.crop_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::f2_noise_image;

    fn small_cfg() -> AnalysisConfig {
        AnalysisConfig::with_crop(64)
    }

    #[test]
    fn names_match_values() {
        let img = f2_noise_image(64, 3);
        let s = image_stats(&img, &small_cfg()).unwrap();
        assert_eq!(s.row_values().len(), statistic_names(3).len());
        assert!(s.degenerate.is_empty(), "{:?}", s.degenerate);
        assert!(s.row_values().iter().all(|v| v.is_some()));
    }

    #[test]
    fn constant_image_is_flagged_not_zeroed() {
        let img = RgbImage::filled(64, 64, [90, 90, 90]);
        let s = image_stats(&img, &small_cfg()).unwrap();
        assert_eq!(s.luminance_skewness, None);
        assert_eq!(s.weibull, None);
        assert!(s.filter_kurtosis.iter().all(|k| k.is_none()));
        assert!(!s.degenerate.is_empty());
    }

    #[test]
    fn single_image_corpus() {
        let stats = analyze_images(&[f2_noise_image(64, 1)], &small_cfg()).unwrap();
        assert_eq!(stats.n_images(), 1);
        assert!(stats.samples.iter().all(|s| s.values.len() == 1));
        assert_eq!(stats.schema, CORPUS_SCHEMA);
    }

    #[test]
    fn deterministic_and_ordered() {
        let imgs: Vec<RgbImage> = (0..6).map(|i| f2_noise_image(64, i)).collect();
        let cfg = small_cfg();
        let a = analyze_images(&imgs, &cfg).unwrap();
        let b = analyze_images(&imgs, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let single = image_stats(&imgs[4], &cfg).unwrap();
        let col = a.sample("spectrum_alpha_h").unwrap();
        assert_eq!(col.values[4], single.spectrum_fit_h.map(|f| f.alpha));
        let back = CorpusStats::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn failures_are_recorded() {
        let imgs = vec![f2_noise_image(64, 1), RgbImage::filled(10, 10, [1, 2, 3]), f2_noise_image(64, 2)];
        let stats = analyze_images(&imgs, &small_cfg()).unwrap();
        assert_eq!(stats.entries, ["#0", "#2"]);
        assert_eq!(stats.failures.len(), 1);
        assert_eq!(stats.failures[0].kind, "TooSmall");

        let bad = vec![RgbImage::filled(10, 10, [1, 2, 3])];
        assert!(matches!(analyze_images(&bad, &small_cfg()), Err(Error::AllImagesFailed)));
        assert!(matches!(analyze_images(&[], &small_cfg()), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn histograms_share_corpus_edges() {
        let imgs: Vec<RgbImage> = (0..4).map(|i| f2_noise_image(64, 10 + i)).collect();
        let stats = analyze_images(&imgs, &small_cfg()).unwrap();
        let fe = stats.filter_histograms[0].edges();
        assert_eq!(fe[0], -fe[fe.len() - 1]);
        assert_eq!(stats.contrast_histogram.edges()[0], 0.0);
        for h in [&stats.luminance_histogram, &stats.contrast_histogram, &stats.filter_histograms[2]] {
            // averaged masses; a fraction of samples may fall outside the range
            let t = h.total();
            assert!(t > 0.95 && t <= 1.0 + 1e-12, "{t}");
        }
    }
}
