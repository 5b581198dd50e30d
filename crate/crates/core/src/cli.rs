//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input, 3 bad configuration, 4 internal
//! failure. Errors are printed to stderr as one JSON object.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{analyze_corpus, CorpusStats, TOOL_VERSION};
use crate::compare::{compare_corpora, ComparisonReport};
use crate::config::AnalysisConfig;
use crate::corpus_io::scan_corpus;
use crate::error::{Error, Result};
use crate::random_filters::{filter_battery, make_random_filter, FilterBank};
use crate::regions::Connectivity;
use crate::spectrum::{
    axis_average, default_impulse_amplitudes, detect_spikes, impulse_pattern, power_spectrum, simulate_deconv_chain,
    Axis, DeconvConfig, Spectrum1D, DEFAULT_SPIKE_WINDOW, DEFAULT_THRESHOLD_DB,
};
use crate::synth::{comb_image, encode_png, f2_noise_image, stretch_to_u8, DEFAULT_COMB_STRENGTH};

#[derive(Debug, Parser)]
#[command(name = "imgstat", version, about = "Low-level statistics of image corpora")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "IMGSTAT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze every image under a directory.
    Analyze(AnalyzeArgs),
    /// Welch's t-test per statistic between two analyses.
    Compare(CompareArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Write the random filter battery as JSON.
    FiltersExport(FiltersExportArgs),
    /// Check a filter battery against this build and print matching flags.
    FiltersImport(FiltersImportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 128)]
    pub crop_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub n_levels: usize,
    #[arg(long, default_value = "8")]
    pub connectivity: String,
    #[arg(long, default_value_t = 1)]
    pub filter_seed: u64,
    #[arg(long, default_value_t = 3)]
    pub filter_count: usize,
    #[arg(long, default_value_t = 8)]
    pub filter_side: usize,
    #[arg(long, default_value_t = 100)]
    pub luminance_bins: usize,
    #[arg(long, default_value_t = 5.0)]
    pub luminance_max: f64,
    #[arg(long, default_value_t = 256)]
    pub contrast_bins: usize,
    #[arg(long, default_value_t = 256)]
    pub filter_bins: usize,
    #[arg(long, default_value_t = 0.999)]
    pub histogram_quantile: f64,
    #[arg(long, default_value_t = 256)]
    pub weibull_kl_bins: usize,
    #[arg(long, default_value_t = 90)]
    pub s_max: u64,
    /// Lower edge of the spectral fit band (default 2/crop_size).
    #[arg(long)]
    pub fit_f_min: Option<f64>,
    /// Upper edge of the spectral fit band (default 0.5 − 2/crop_size).
    #[arg(long)]
    pub fit_f_max: Option<f64>,
    #[arg(long, default_value_t = 4.0 / 128.0)]
    pub base_freq: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB)]
    pub threshold_db: f64,
    #[arg(long, default_value_t = DEFAULT_SPIKE_WINDOW)]
    pub spike_window: usize,
}

impl ConfigArgs {
    pub fn to_config(&self) -> Result<AnalysisConfig> {
        let mut c = AnalysisConfig::with_crop(self.crop_size);
        c.sigma = self.sigma;
        c.n_levels = self.n_levels;
        c.connectivity = self.connectivity.parse::<Connectivity>()?;
        c.filter_seed = self.filter_seed;
        c.filter_count = self.filter_count;
        c.filter_side = self.filter_side;
        c.luminance_bins = self.luminance_bins;
        c.luminance_max = self.luminance_max;
        c.contrast_bins = self.contrast_bins;
        c.filter_bins = self.filter_bins;
        c.histogram_quantile = self.histogram_quantile;
        c.weibull_kl_bins = self.weibull_kl_bins;
        c.s_max = self.s_max;
        if let Some(f) = self.fit_f_min {
            c.fit_f_min = f;
        }
        if let Some(f) = self.fit_f_max {
            c.fit_f_max = f;
        }
        c.base_freq = self.base_freq;
        c.threshold_db = self.threshold_db;
        c.spike_window = self.spike_window;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub dir: PathBuf,
    /// Output JSON; CSV sidecars are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Analyze a seeded random subset of this many images.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub stats_a: PathBuf,
    pub stats_b: PathBuf,
    /// Output JSON; the text table goes to the same stem with `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SynthKind {
    F2noise,
    Comb,
    ImpulsePattern,
    DeconvChain,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub kind: SynthKind,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_COMB_STRENGTH)]
    pub strength: f64,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    #[arg(long, default_value_t = 4)]
    pub kernel_side: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 4.0 / 128.0)]
    pub base_freq: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB)]
    pub threshold_db: f64,
}

#[derive(Debug, Args)]
pub struct FiltersExportArgs {
    #[arg(long, default_value_t = 1)]
    pub filter_seed: u64,
    #[arg(long, default_value_t = 3)]
    pub filter_count: usize,
    #[arg(long, default_value_t = 8)]
    pub filter_side: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FiltersImportArgs {
    pub bank: PathBuf,
}

/// Writes through a temporary file in the target directory, then renames,
/// so a failed run leaves no partial file.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))
}

/// `dir/stem.suffix` for a sidecar of `out`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<CorpusStats> {
    let cfg = args.config.to_config()?;
    let manifest = scan_corpus(&args.dir, cfg.crop_size, args.limit, args.sample_seed)?;
    log::info!("analyzing {} images under {}", manifest.len(), args.dir.display());
    let stats = analyze_corpus(&manifest, &cfg)?;
    for f in &stats.failures {
        log::warn!("{} failed: {}", f.entry, f.reason);
    }

    let out = &args.out;
    write_atomic(&sidecar(out, "luminance.csv"), |w| stats.luminance_histogram.write_csv(w))?;
    write_atomic(&sidecar(out, "contrast.csv"), |w| stats.contrast_histogram.write_csv(w))?;
    for (i, h) in stats.filter_histograms.iter().enumerate() {
        write_atomic(&sidecar(out, &format!("filter{}.csv", i + 1)), |w| h.write_csv(w))?;
    }
    write_atomic(&sidecar(out, "areas.csv"), |w| stats.write_area_csv(w))?;
    write_atomic(&sidecar(out, "spectrum_h.csv"), |w| stats.spectrum_h.write_csv(w))?;
    write_atomic(&sidecar(out, "spectrum_v.csv"), |w| stats.spectrum_v.write_csv(w))?;
    write_text(&sidecar(out, "manifest.json"), &manifest.to_json()?)?;
    // the main document goes last so its presence marks a complete run
    write_text(out, &stats.to_json()?)?;
    Ok(stats)
}

fn read_stats(path: &Path) -> Result<CorpusStats> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CorpusStats::from_json(&text)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<ComparisonReport> {
    let a = read_stats(&args.stats_a)?;
    let b = read_stats(&args.stats_b)?;
    let report = compare_corpora(&a, &b)?;
    write_text(&args.out.with_extension("txt"), &report.to_table())?;
    write_text(&args.out, &report.to_json()?)?;
    Ok(report)
}

fn spectrum_csv(path: &Path, s: &Spectrum1D) -> Result<()> {
    write_atomic(path, |w| s.write_csv(w))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let dir = &args.out;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let png = |img: &crate::raster::RgbImage, name: String, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        let bytes = encode_png(img)?;
        write_atomic(&path, |w| w.write_all(&bytes).map_err(|e| Error::io(&path, e)))?;
        written.push(path);
        Ok(())
    };
    if !args.size.is_power_of_two() || args.size < 4 {
        return Err(Error::BadConfig(format!("size must be a power of two ≥ 4, got {}", args.size)));
    }
    let spikes = |s: &Spectrum1D| detect_spikes(s, args.base_freq, args.threshold_db, DEFAULT_SPIKE_WINDOW);
    match args.kind {
        SynthKind::F2noise => {
            for i in 0..args.count {
                let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                png(&f2_noise_image(args.size, seed), format!("f2noise_{i:05}.png"), &mut written)?;
            }
        }
        SynthKind::Comb => {
            for i in 0..args.count {
                let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                png(&comb_image(args.size, seed, args.strength)?, format!("comb_{i:05}.png"), &mut written)?;
            }
        }
        SynthKind::ImpulsePattern => {
            let pat = impulse_pattern(args.size, args.layers, &default_impulse_amplitudes(args.layers))?;
            png(&stretch_to_u8(&pat), "impulse_pattern.png".into(), &mut written)?;
            let h = axis_average(&power_spectrum(&pat)?, Axis::Horizontal);
            let path = dir.join("impulse_pattern.spectrum_h.csv");
            spectrum_csv(&path, &h)?;
            written.push(path);
            let path = dir.join("impulse_pattern.spikes.json");
            write_text(&path, &serde_json::to_string_pretty(&spikes(&h)?)?)?;
            written.push(path);
        }
        SynthKind::DeconvChain => {
            let cfg = DeconvConfig {
                layers: args.layers,
                stride: args.stride,
                kernel_side: args.kernel_side,
                channels: args.channels,
                trials: args.trials,
                seed: args.seed,
                canvas: args.size,
            };
            let out = simulate_deconv_chain(&cfg)?;
            png(&stretch_to_u8(&out.mean_image), "deconv_mean.png".into(), &mut written)?;
            for (name, s) in [("deconv_mean.spectrum_h.csv", &out.spectrum_h), ("deconv_mean.spectrum_v.csv", &out.spectrum_v)] {
                let path = dir.join(name);
                spectrum_csv(&path, s)?;
                written.push(path);
            }
            let path = dir.join("deconv_mean.spikes.json");
            let doc = json!({
                "tool_version": TOOL_VERSION,
                "deconv": cfg,
                "spikes_h": spikes(&out.spectrum_h)?,
                "spikes_v": spikes(&out.spectrum_v)?,
            });
            write_text(&path, &serde_json::to_string_pretty(&doc)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_filters_export(args: &FiltersExportArgs) -> Result<()> {
    let bank = FilterBank::new(filter_battery(args.filter_count, args.filter_side, args.filter_seed)?);
    write_text(&args.out, &bank.to_json()?)
}

/// Confirms every filter in a bank regenerates bit-for-bit from its seed
/// here, then returns the matching analysis flags.
pub fn cmd_filters_import(args: &FiltersImportArgs) -> Result<serde_json::Value> {
    let bank = FilterBank::read(&args.bank)?;
    if bank.prng != crate::random_filters::PRNG_NAME {
        return Err(Error::BadConfig(format!("filter bank uses generator {}", bank.prng)));
    }
    let first = bank.filters.first().ok_or(Error::EmptyList)?;
    for (i, f) in bank.filters.iter().enumerate() {
        if f.seed != first.seed.wrapping_add(i as u64) || f.side != first.side {
            return Err(Error::BadConfig("filter seeds must be consecutive with one side".into()));
        }
        if make_random_filter(f.side, f.seed)?.weights != f.weights {
            return Err(Error::BadConfig(format!("filter with seed {} does not regenerate", f.seed)));
        }
    }
    Ok(json!({
        "filter_seed": first.seed,
        "filter_count": bank.filters.len(),
        "filter_side": first.side,
    }))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => {
            let stats = cmd_analyze(a)?;
            println!(
                "{} images analyzed, {} failed -> {}",
                stats.n_images(),
                stats.failures.len(),
                a.out.display()
            );
        }
        Command::Compare(c) => {
            let report = cmd_compare(c)?;
            print!("{}", report.to_table());
        }
        Command::Synth(s) => {
            let files = cmd_synth(s)?;
            println!("{} files written to {}", files.len(), s.out.display());
        }
        Command::FiltersExport(f) => cmd_filters_export(f)?,
        Command::FiltersImport(f) => println!("{}", cmd_filters_import(f)?),
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let pool = match cli.threads {
        Some(0) => Err("--threads must be positive".to_owned()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| e.to_string()),
        None => rayon::ThreadPoolBuilder::new().build().map_err(|e| e.to_string()),
    };
    let result = match pool {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(e) => Err(Error::BadConfig(e)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let mut doc = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
            if let Error::ConfigMismatch(fields) = &e {
                doc["fields"] = json!(fields);
            }
            eprintln!("{doc}");
            code
        }
    }
}
