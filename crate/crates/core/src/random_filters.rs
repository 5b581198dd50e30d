//! Zero-mean random filter battery and response kurtosis.
//!
//! A filter is `F = (F0 − mean F0) / ‖F0 − mean F0‖` where `F0` has i.i.d.
//! uniform `[0, 1)` entries. Entries are drawn row-major from
//! [`PRNG_NAME`] seeded with the filter seed, so a filter is reproducible
//! from `(seed, side)` alone.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::convolve_valid;
use crate::error::{Error, Result};
use crate::moments::{build_histogram, moment_summary, Histogram};
use crate::raster::GrayImage;

pub const PRNG_NAME: &str = "ChaCha8Rng/rand_chacha-0.9/seed_from_u64/f64-standard";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFilter {
    pub seed: u64,
    pub side: usize,
    /// Row-major `side`×`side`.
    pub weights: Vec<f64>,
}

pub fn make_random_filter(side: usize, seed: u64) -> Result<RandomFilter> {
    if side < 2 {
        return Err(Error::BadSide(side));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>()).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::BadSide(side));
    }
    Ok(RandomFilter {
        seed,
        side,
        weights: centered.iter().map(|v| v / norm).collect(),
    })
}

/// Filters with seeds `base_seed, base_seed + 1, ...`.
pub fn filter_battery(count: usize, side: usize, base_seed: u64) -> Result<Vec<RandomFilter>> {
    (0..count as u64)
        .map(|i| make_random_filter(side, base_seed.wrapping_add(i)))
        .collect()
}

/// Valid-region responses (no padding).
pub fn filter_responses(gray: &GrayImage, filter: &RandomFilter) -> Result<Vec<f64>> {
    Ok(convolve_valid(gray, &filter.weights, filter.side)?.into_values())
}

/// Response histogram over `edges` and response kurtosis.
///
/// A flat image gives all-zero responses and surfaces as
/// `DegenerateSample`.
pub fn filter_response_kurtosis(
    gray: &GrayImage,
    filter: &RandomFilter,
    edges: &[f64],
) -> Result<(Histogram, f64)> {
    let resp = filter_responses(gray, filter)?;
    let hist = build_histogram(&resp, edges)?;
    let k = moment_summary(&resp)?.kurtosis;
    Ok((hist, k))
}

/// Serialized battery for exchange between installations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub prng: String,
    pub filters: Vec<RandomFilter>,
}

impl FilterBank {
    pub fn new(filters: Vec<RandomFilter>) -> Self {
        Self {
            prng: PRNG_NAME.to_owned(),
            filters,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks every filter against its construction contract.
    pub fn from_json(text: &str) -> Result<Self> {
        let bank: FilterBank = serde_json::from_str(text)?;
        for f in &bank.filters {
            if f.side < 2 || f.weights.len() != f.side * f.side {
                return Err(Error::BadSide(f.side));
            }
            let sum: f64 = f.weights.iter().sum();
            let norm: f64 = f.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
            if sum.abs() > 1e-9 || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::BadConfig(format!(
                    "filter with seed {} is not zero-mean unit-norm",
                    f.seed
                )));
            }
        }
        Ok(bank)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
