use imgstat::analysis::{analyze_corpus, analyze_images, CorpusStats};
use imgstat::compare::compare_corpora;
use imgstat::config::AnalysisConfig;
use imgstat::corpus_io::scan_corpus;
use imgstat::raster::RgbImage;
use imgstat::synth::{comb_image, f2_noise_image, write_png, DEFAULT_COMB_STRENGTH};
use imgstat::Error;

fn noise(n: u64, offset: u64) -> Vec<RgbImage> {
    (0..n).map(|s| f2_noise_image(128, offset + s)).collect()
}

#[test]
fn corpus_against_itself() {
    let stats = analyze_images(&noise(12, 0), &AnalysisConfig::default()).unwrap();
    let report = compare_corpora(&stats, &stats).unwrap();
    assert_eq!(report.rows.len(), 16);
    for row in &report.rows {
        assert_eq!(row.t_stat, Some(0.0), "{}", row.name);
        assert_eq!(row.p_value, Some(1.0), "{}", row.name);
    }
}

#[test]
fn comb_corpus_differs_in_spectral_residual() {
    let cfg = AnalysisConfig::default();
    let a = analyze_images(&noise(100, 1000), &cfg).unwrap();
    let combs: Vec<RgbImage> = (0..100)
        .map(|s| comb_image(128, 2000 + s, DEFAULT_COMB_STRENGTH).unwrap())
        .collect();
    let b = analyze_images(&combs, &cfg).unwrap();
    let report = compare_corpora(&a, &b).unwrap();
    let p = |name: &str| report.rows.iter().find(|r| r.name == name).unwrap().p_value.unwrap();
    assert!(p("spectrum_residual_h") < 0.01, "{}", report.to_table());
    assert!(p("spectrum_residual_v") < 0.01, "{}", report.to_table());
    assert!(b.spikes_h.as_ref().unwrap().spikiness > a.spikes_h.as_ref().unwrap().spikiness);
    for w in report.ranking.windows(2) {
        let (x, y) = (p(&w[0]), p(&w[1]));
        assert!(x >= y);
    }
}

#[test]
fn mismatched_configs_are_refused() {
    let imgs = noise(3, 7);
    let a = analyze_images(&imgs, &AnalysisConfig::default()).unwrap();
    let mut cfg = AnalysisConfig::default();
    cfg.sigma = 1.5;
    cfg.filter_seed = 4;
    let b = analyze_images(&imgs, &cfg).unwrap();
    match compare_corpora(&a, &b) {
        Err(Error::ConfigMismatch(fields)) => assert_eq!(fields, ["filter_seed", "sigma"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corpus_on_disk_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    for (i, img) in noise(5, 40).iter().enumerate() {
        write_png(img, &dir.path().join(format!("img{i}.png"))).unwrap();
    }
    std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
    std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();

    let manifest = scan_corpus(dir.path(), 128, None, 0).unwrap();
    assert_eq!(manifest.len(), 6);
    let cfg = AnalysisConfig::default();
    let stats = analyze_corpus(&manifest, &cfg).unwrap();
    assert_eq!(stats.n_images(), 5);
    assert_eq!(stats.failures.len(), 1);
    assert_eq!(stats.failures[0].entry, "broken.png");
    assert_eq!(stats.failures[0].kind, "DecodeError");
    assert!(stats.samples.iter().all(|s| s.values.len() == 5));

    let again = analyze_corpus(&manifest, &cfg).unwrap();
    assert_eq!(again, stats);
    let back = CorpusStats::from_json(&stats.to_json().unwrap()).unwrap();
    assert_eq!(back, stats);

    // in-memory analysis of the decoded files agrees value for value
    let mem = analyze_images(&noise(5, 40), &cfg).unwrap();
    assert_eq!(mem.samples, stats.samples);
    assert_eq!(mem.spectrum_h, stats.spectrum_h);
}

#[test]
fn crop_mismatch_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&f2_noise_image(128, 1), &dir.path().join("a.png")).unwrap();
    let manifest = scan_corpus(dir.path(), 64, None, 0).unwrap();
    let err = analyze_corpus(&manifest, &AnalysisConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
