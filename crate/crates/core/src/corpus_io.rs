//! Decoding, cropping and deterministic enumeration of image corpora.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::raster::RgbImage;

const EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Decodes a PNG, JPEG or BMP file into 8-bit RGB. Gray sources are
/// replicated across channels; alpha is dropped.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::Decode {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    let decoded = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Decode {
            path: path.to_owned(),
            reason: e.to_string(),
        })?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| p.0).collect();
    Ok(RgbImage::new(w as usize, h as usize, pixels))
}

/// `size`×`size` window around the center, offsets rounded down.
pub fn center_crop(img: &RgbImage, size: usize) -> Result<RgbImage> {
    let (w, h) = (img.width(), img.height());
    if size == 0 || w < size || h < size {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            size,
        });
    }
    let top = (h - size) / 2;
    let left = (w - size) / 2;
    let mut pixels = Vec::with_capacity(size * size);
    for y in top..top + size {
        let row = &img.pixels()[y * w + left..y * w + left + size];
        pixels.extend_from_slice(row);
    }
    Ok(RgbImage::new(size, size, pixels))
}

/// Reproducible list of corpus members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub crop_size: usize,
    pub seed: u64,
    /// `None` means every entry is kept.
    pub limit: Option<usize>,
    /// Paths relative to `root`, `/`-separated, sorted.
    pub entries: Vec<String>,
}

impl CorpusManifest {
    pub fn path_of(&self, index: usize) -> PathBuf {
        self.root.join(&self.entries[index])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Recursively lists image files under `root`.
///
/// Entries are sorted lexicographically by relative path. When `limit` is
/// smaller than the number of files, the sorted list is shuffled with a
/// ChaCha8 stream seeded by `seed`, the first `limit` entries are kept and
/// then re-sorted so iteration order stays lexicographic.
pub fn scan_corpus(
    root: &Path,
    crop_size: usize,
    limit: Option<usize>,
    seed: u64,
) -> Result<CorpusManifest> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory"),
        ));
    }
    let mut entries: Vec<String> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("skipping unreadable entry: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && has_image_extension(e.path()))
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?;
            let parts: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            Some(parts.join("/"))
        })
        .collect();
    entries.sort();
    entries.dedup();

    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_owned()));
    }

    if let Some(limit) = limit {
        if limit < entries.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            entries.shuffle(&mut rng);
            entries.truncate(limit);
            entries.sort();
        }
    }

    Ok(CorpusManifest {
        root: root.to_owned(),
        crop_size,
        seed,
        limit,
        entries,
    })
}

/// Loads and crops one manifest entry.
pub fn load_cropped(manifest: &CorpusManifest, index: usize) -> Result<RgbImage> {
    let img = load_image(&manifest.path_of(index))?;
    center_crop(&img, manifest.crop_size)
}
