//! Statistics of image corpora: luminance, contrast, random-filter
//! responses, region sizes and power spectra, plus a per-statistic
//! comparison between two corpora.

pub mod analysis;
pub mod cli;
pub mod colorspace;
pub mod compare;
pub mod config;
pub mod contrast;
pub mod conv;
pub mod corpus_io;
pub mod error;
pub mod moments;
pub mod random_filters;
pub mod raster;
pub mod regions;
pub mod special;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
