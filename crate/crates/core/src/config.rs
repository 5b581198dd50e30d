use serde::{Deserialize, Serialize};

use crate::colorspace::INPUT_SCALE;
use crate::error::{Error, Result};
use crate::random_filters::PRNG_NAME;
use crate::regions::Connectivity;
use crate::spectrum::{default_fit_range, DEFAULT_SPIKE_WINDOW, DEFAULT_THRESHOLD_DB};

/// Every parameter that shapes a corpus analysis. Serialized verbatim into
/// each output document; two corpora are comparable only when their
/// configs are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub crop_size: usize,
    /// Gaussian-derivative scale in pixels.
    pub sigma: f64,
    pub n_levels: usize,
    pub connectivity: Connectivity,
    pub filter_seed: u64,
    pub filter_count: usize,
    pub filter_side: usize,
    pub luminance_bins: usize,
    /// Upper edge of the normalized-luminance histogram (lower edge 0).
    pub luminance_max: f64,
    pub contrast_bins: usize,
    pub filter_bins: usize,
    /// Corpus quantile used as the upper contrast edge and the symmetric
    /// filter-response range.
    pub histogram_quantile: f64,
    pub weibull_kl_bins: usize,
    pub s_max: u64,
    pub fit_f_min: f64,
    pub fit_f_max: f64,
    pub base_freq: f64,
    pub threshold_db: f64,
    pub spike_window: usize,
    pub input_scale: String,
    pub prng: String,
    pub spectrum_window: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self::with_crop(128)
    }
}

impl AnalysisConfig {
    /// Defaults with the spectral fit band derived from `crop_size`.
    pub fn with_crop(crop_size: usize) -> Self {
        let (fit_f_min, fit_f_max) = default_fit_range(crop_size);
        Self {
            crop_size,
            sigma: 1.0,
            n_levels: 16,
            connectivity: Connectivity::Eight,
            filter_seed: 1,
            filter_count: 3,
            filter_side: 8,
            luminance_bins: 100,
            luminance_max: 5.0,
            contrast_bins: 256,
            filter_bins: 256,
            histogram_quantile: 0.999,
            weibull_kl_bins: 256,
            s_max: 90,
            fit_f_min,
            fit_f_max,
            base_freq: 4.0 / 128.0,
            threshold_db: DEFAULT_THRESHOLD_DB,
            spike_window: DEFAULT_SPIKE_WINDOW,
            input_scale: INPUT_SCALE.to_owned(),
            prng: PRNG_NAME.to_owned(),
            spectrum_window: "none".to_owned(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if !self.crop_size.is_power_of_two() || self.crop_size < 16 {
            return bad(format!("crop_size must be a power of two ≥ 16, got {}", self.crop_size));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::BadSigma(self.sigma));
        }
        if 2 * (3.0 * self.sigma).ceil() as usize + 1 > self.crop_size {
            return bad(format!("sigma {} needs a kernel wider than the crop", self.sigma));
        }
        if self.n_levels < 2 || self.n_levels > 256 {
            return bad(format!("n_levels must be in [2, 256], got {}", self.n_levels));
        }
        if self.filter_count == 0 || self.filter_side < 2 || self.filter_side > self.crop_size {
            return bad("filter battery needs count ≥ 1 and 2 ≤ side ≤ crop_size".into());
        }
        if self.luminance_bins == 0 || self.contrast_bins == 0 || self.filter_bins == 0 || self.weibull_kl_bins == 0 {
            return bad("histogram bin counts must be positive".into());
        }
        if !(self.luminance_max > 0.0) {
            return bad("luminance_max must be positive".into());
        }
        if !(self.histogram_quantile > 0.0 && self.histogram_quantile <= 1.0) {
            return bad("histogram_quantile must be in (0, 1]".into());
        }
        if self.s_max < 3 {
            return bad("s_max must be at least 3".into());
        }
        if !(self.fit_f_min > 0.0 && self.fit_f_min < self.fit_f_max && self.fit_f_max <= 0.5) {
            return bad("spectral fit range must satisfy 0 < f_min < f_max ≤ 0.5".into());
        }
        let k = self.base_freq * self.crop_size as f64;
        if !(k >= 1.0) || (k - k.round()).abs() > 1e-9 || k.round() > (self.crop_size / 2) as f64 {
            return Err(Error::BaseFreqOffGrid(self.base_freq));
        }
        if self.spike_window == 0 {
            return bad("spike_window must be positive".into());
        }
        if self.input_scale != INPUT_SCALE || self.prng != PRNG_NAME || self.spectrum_window != "none" {
            return bad("unsupported input_scale, prng or spectrum_window".into());
        }
        Ok(())
    }

    /// Names of the fields that differ between two configs.
    pub fn diff(&self, other: &AnalysisConfig) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serializes");
        let b = serde_json::to_value(other).expect("config serializes");
        match (a, b) {
            (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
                keys.sort();
                keys.dedup();
                keys.into_iter()
                    .filter(|k| a.get(*k) != b.get(*k))
                    .cloned()
                    .collect()
            }
            _ => unreachable!(),
        }
    }
}
