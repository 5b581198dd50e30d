//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use imgstat::analysis::{analyze_images, statistic_names, StatSamples};
use imgstat::colorspace::to_luma;
use imgstat::compare::{compare_samples, welch_t_test};
use imgstat::config::AnalysisConfig;
use imgstat::contrast::fit_weibull;
use imgstat::moments::moment_summary;
use imgstat::raster::{Plane, RgbImage};
use imgstat::regions::{
    fit_region_law, quantile_thresholds, segment_and_count, AreaHistogram, Connectivity, GrayLevels,
};
use imgstat::spectrum::{
    axis_average, default_impulse_amplitudes, detect_spikes, impulse_pattern, power_spectrum,
    simulate_deconv_chain, Axis, DeconvConfig,
};
use imgstat::synth::{comb_image, f2_noise_image, write_png};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(ok: bool, msg: impl Into<String>, pass: &mut bool, notes: &mut Vec<String>) {
    *pass &= ok;
    notes.push(format!("{}{}", if ok { "" } else { "FAILED " }, msg.into()));
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration, bool) {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let in_time = limit.is_none_or(|l| el < l);
    (out, el, in_time)
}

// 1
fn moments() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = moment_summary(&x).unwrap();
    check((m.kurtosis - 3.0).abs() <= 0.05, format!("kurtosis {:.4}", m.kurtosis), &mut pass, &mut notes);
    check(m.skewness.abs() <= 0.02, format!("skewness {:.4}", m.skewness), &mut pass, &mut notes);
    let two = moment_summary(&[-1.5, 1.5, -1.5, 1.5]).unwrap();
    check(two.kurtosis == 1.0, format!("two-point kurtosis {}", two.kurtosis), &mut pass, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

// 2
fn weibull() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    for (i, &(gamma, beta)) in [(1.15, 1250.0), (1.0, 1.0), (2.0, 5.0)].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let x: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                beta * (-(-u).ln_1p()).powf(1.0 / gamma)
            })
            .collect();
        let fit = fit_weibull(&x).unwrap();
        let (eg, eb) = ((fit.gamma / gamma - 1.0).abs(), (fit.beta / beta - 1.0).abs());
        check(
            eg <= 0.02 && eb <= 0.02,
            format!("({gamma}, {beta}) -> ({:.4}, {:.2})", fit.gamma, fit.beta),
            &mut pass,
            &mut notes,
        );
        let scaled: Vec<f64> = x.iter().map(|v| 7.0 * v).collect();
        let fs = fit_weibull(&scaled).unwrap();
        check(
            (fs.gamma - fit.gamma).abs() <= 1e-3,
            format!("x7 dγ {:.1e}", (fs.gamma - fit.gamma).abs()),
            &mut pass,
            &mut notes,
        );
    }
    Outcome { pass, detail: notes.join(", ") }
}

fn flood_fill(w: usize, h: usize, band: &[u16], conn: Connectivity) -> Vec<u64> {
    let mut seen = vec![false; w * h];
    let mut areas = vec![];
    let offsets: &[(isize, isize)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    };
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        let mut area = 0;
        while let Some(i) = q.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && band[j] == band[start] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        areas.push(area);
    }
    areas.sort_unstable();
    areas
}

// 3
fn region_counting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let levels = [20u8, 90, 160, 230];
    let mut mismatches = 0;
    for _ in 0..1000 {
        let g = GrayLevels::new(16, 16, (0..256).map(|_| levels[rng.random_range(0..4)]).collect());
        let t = quantile_thresholds(&g, 4).unwrap();
        // band of a gray value: how many thresholds it reaches, capped at N − 1
        let band: Vec<u16> = g
            .levels
            .iter()
            .map(|&v| t.thresholds.iter().filter(|&&th| th as usize <= v as usize).count().min(3) as u16)
            .collect();
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let got = segment_and_count(&g, &t, conn);
            let mut got: Vec<u64> = got.areas.iter().flat_map(|(&s, &n)| std::iter::repeat_n(s, n as usize)).collect();
            got.sort_unstable();
            if got != flood_fill(16, 16, &band, conn) {
                mismatches += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over 2000 labelings"),
    }
}

// 4
fn region_law() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    let mut hist = AreaHistogram::default();
    for s in 1..90u64 {
        hist.add(s, (1e6 / (s * s) as f64).round() as u64);
    }
    let fit = fit_region_law(&hist, 90).unwrap();
    check((-2.05..=-1.95).contains(&fit.c), format!("c = {:.4}", fit.c), &mut pass, &mut notes);

    let (mut orig, mut up) = (AreaHistogram::default(), AreaHistogram::default());
    for seed in 0..50 {
        let g = GrayLevels::from_gray(&to_luma(&f2_noise_image(128, seed)));
        let u = g.block_upsample(2);
        orig.merge(&segment_and_count(&g, &quantile_thresholds(&g, 16).unwrap(), Connectivity::Eight));
        up.merge(&segment_and_count(&u, &quantile_thresholds(&u, 16).unwrap(), Connectivity::Eight));
    }
    let (a, b) = (fit_region_law(&orig, 90).unwrap(), fit_region_law(&up, 90).unwrap());
    check(
        (a.c - b.c).abs() < 0.05,
        format!("2x2 upsampling c {:.4} -> {:.4} (|dc| {:.4})", a.c, b.c, (a.c - b.c).abs()),
        &mut pass,
        &mut notes,
    );
    Outcome { pass, detail: notes.join(", ") }
}

// 5
fn spectrum() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let img = Plane::from_fn(128, 128, |_, _| rng.random_range(0.0..255.0));
        let mean = img.mean();
        let energy: f64 = img.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * (128.0 * 128.0);
        let total = power_spectrum(&img).unwrap().total();
        worst = worst.max((total - energy).abs() / energy);
    }
    check(worst <= 1e-6, format!("Parseval rel err {worst:.1e}"), &mut pass, &mut notes);

    let k0 = 9;
    let cosine = Plane::from_fn(128, 128, |x, _| (2.0 * std::f64::consts::PI * k0 as f64 * x as f64 / 128.0).cos());
    let grid = power_spectrum(&cosine).unwrap();
    let frac = (grid.at(k0, 0) + grid.at(-k0, 0)) / grid.total();
    check(frac >= 0.999999, format!("cosine energy in 2 bins {frac:.9}"), &mut pass, &mut notes);

    let imgs: Vec<RgbImage> = (0..100).map(|s| f2_noise_image(128, 5000 + s)).collect();
    let stats = analyze_images(&imgs, &AnalysisConfig::default()).unwrap();
    for axis in ["h", "v"] {
        let col = stats.sample(&format!("spectrum_alpha_{axis}")).unwrap().valid();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        check(
            (1.9..=2.1).contains(&mean),
            format!("mean alpha_{axis} {mean:.4} over {}", col.len()),
            &mut pass,
            &mut notes,
        );
    }
    Outcome { pass, detail: notes.join(", ") }
}

// 6
fn deconv_fingerprint() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    let pat = impulse_pattern(128, 5, &default_impulse_amplitudes(5)).unwrap();
    let grid = power_spectrum(&pat).unwrap();
    let expected: Vec<f64> = (1..=8).map(|k| k as f64 / 16.0).collect();
    for axis in [Axis::Horizontal, Axis::Vertical] {
        let rep = detect_spikes(&axis_average(&grid, axis), 4.0 / 128.0, 6.0, 9).unwrap();
        check(
            rep.spike_freqs == expected,
            format!("impulse {axis:?} spikes at {:?}", rep.spike_freqs.iter().map(|f| f * 16.0).collect::<Vec<_>>()),
            &mut pass,
            &mut notes,
        );
    }

    let base = 4.0 / 128.0;
    let cfg = DeconvConfig {
        layers: 5,
        stride: 2,
        trials: 200,
        ..DeconvConfig::default()
    };
    let out = simulate_deconv_chain(&cfg).unwrap();
    for (name, spec) in [("h", &out.spectrum_h), ("v", &out.spectrum_v)] {
        let rep = detect_spikes(spec, base, 6.0, 9).unwrap();
        let comb = rep.comb_freqs();
        let ks: Vec<i64> = comb.iter().map(|f| (f / base).round() as i64).collect();
        check(
            comb.len() >= 3,
            format!("deconv {name} comb at k/32 for k in {ks:?}"),
            &mut pass,
            &mut notes,
        );
        // spacing is judged on the horizontally averaged spectrum
        if name == "h" {
            let spaced = comb.windows(2).any(|w| ((w[1] - w[0]) - base).abs() < 1e-12);
            check(spaced, "deconv h comb has neighbours 4/128 apart", &mut pass, &mut notes);
        }
    }
    let control = simulate_deconv_chain(&DeconvConfig { stride: 1, ..cfg }).unwrap();
    let n_comb = detect_spikes(&control.spectrum_h, base, 6.0, 9).unwrap().comb_freqs().len()
        + detect_spikes(&control.spectrum_v, base, 6.0, 9).unwrap().comb_freqs().len();
    check(n_comb == 0, format!("stride-1 control comb spikes {n_comb}"), &mut pass, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

// 7
fn welch() -> Outcome {
    let (mut pass, mut notes) = (true, vec![]);
    let x = [3.2, 1.0, 4.4, 2.9, 5.1, 0.3];
    let same = welch_t_test(&x, &x).unwrap();
    check(same.t == 0.0 && same.p == 1.0, format!("identical t={} p={}", same.t, same.p), &mut pass, &mut notes);

    let a = [2.1, 2.3, 2.5, 2.7, 2.9];
    let b = [1.0, 1.4, 1.8, 2.2];
    // hand evaluation: means 2.5 and 1.6, variances 0.1 and 0.8/3
    let (qa, qb): (f64, f64) = (0.1 / 5.0, (0.8 / 3.0) / 4.0);
    let t_hand = 0.9 / (qa + qb).sqrt();
    let df_hand = (qa + qb).powi(2) / (qa * qa / 4.0 + qb * qb / 3.0);
    let p_oracle = 2.0 * StudentsT::new(0.0, 1.0, df_hand).unwrap().sf(t_hand);
    let r = welch_t_test(&a, &b).unwrap();
    check(
        (r.t - t_hand).abs() <= 1e-10 && (r.p - p_oracle).abs() <= 1e-8,
        format!("5-vs-4 t={:.10} (hand {t_hand:.10}) p={:.10} (oracle {p_oracle:.10})", r.t, r.p),
        &mut pass,
        &mut notes,
    );

    // maps that are exact in floating point leave p bit-identical
    let exact = |u: f64, v: f64| {
        let f = |s: &[f64]| s.iter().map(|x| u * x + v).collect::<Vec<_>>();
        welch_t_test(&f(&a), &f(&b)).unwrap().p
    };
    let bitwise = [(2.0, 0.0), (-0.5, 0.0), (-4.0, 0.0)].iter().all(|&(u, v)| exact(u, v) == r.p);
    check(bitwise, "affine p exact for dyadic scalings", &mut pass, &mut notes);
    let general = [(3.7, -12.5), (-0.013, 400.0), (1e3, 1e3)]
        .iter()
        .map(|&(u, v)| (exact(u, v) - r.p).abs())
        .fold(0.0, f64::max);
    check(general <= 1e-12, format!("affine p drift {general:.1e} for general maps"), &mut pass, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

// 8
fn self_consistency() -> Outcome {
    let imgs: Vec<RgbImage> = (0..2000).map(|s| f2_noise_image(128, 80_000 + s)).collect();
    let stats = analyze_images(&imgs, &AnalysisConfig::default()).unwrap();
    let rows = statistic_names(3).len();
    // the battery has 16 rows against the 12 the target was written for;
    // the same allowance of 2 failing rows is kept
    let need = rows - 2;
    let mut counts = vec![];
    let mut pass = true;
    for rep in 0..20u64 {
        let mut idx: Vec<usize> = (0..stats.n_images()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(800 + rep));
        let (ha, hb) = idx.split_at(idx.len() / 2);
        let pick = |h: &[usize]| -> Vec<StatSamples> {
            stats
                .samples
                .iter()
                .map(|s| StatSamples {
                    name: s.name.clone(),
                    values: h.iter().map(|&i| s.values[i]).collect(),
                })
                .collect()
        };
        let result = compare_samples(&pick(ha), &pick(hb)).unwrap();
        let ok = result.iter().filter(|r| r.p_value.is_some_and(|p| p > 0.01)).count();
        pass &= ok >= need;
        counts.push(ok);
    }
    Outcome {
        pass,
        detail: format!("rows with p > 0.01 per split (need >= {need} of {rows}): {counts:?}"),
    }
}

// 9
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(corpus.join("sub")).unwrap();
    for i in 0..50u64 {
        let (img, path) = if i % 5 == 0 {
            (comb_image(256, i, 40.0).unwrap(), corpus.join("sub").join(format!("c{i:02}.png")))
        } else {
            (f2_noise_image(128, i), corpus.join(format!("n{i:02}.png")))
        };
        write_png(&img, &path).unwrap();
    }
    let run = |threads: &str, out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_imgstat"))
            .args(["--threads", threads, "analyze"])
            .arg(&corpus)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("1", &dir.path().join("a.json"));
    let b = run("1", &dir.path().join("b.json"));
    let c = run("8", &dir.path().join("c.json"));
    Outcome {
        pass: a == b && a == c,
        detail: format!(
            "rerun identical {}, threads 1 vs 8 identical {} ({} bytes)",
            a == b,
            a == c,
            a.len()
        ),
    }
}

// 10
fn throughput() -> Outcome {
    let imgs: Vec<RgbImage> = (0..1000)
        .map(|s| if s % 2 == 0 { f2_noise_image(128, s) } else { comb_image(128, s, 40.0).unwrap() })
        .collect();
    let t = Instant::now();
    let stats = analyze_images(&imgs, &AnalysisConfig::default()).unwrap();
    let el = t.elapsed();
    Outcome {
        pass: stats.n_images() == 1000 && el < Duration::from_secs(120),
        detail: format!(
            "1000 images in {:.1} s on {} threads",
            el.as_secs_f64(),
            rayon::current_num_threads()
        ),
    }
}

fn main() {
    let criteria: Vec<(u32, &str, Option<Duration>, fn() -> Outcome)> = vec![
        (1, "moment correctness", Some(Duration::from_secs(1)), moments),
        (2, "Weibull MLE recovery", Some(Duration::from_secs(5)), weibull),
        (3, "region counting exactness", Some(Duration::from_secs(5)), region_counting),
        (4, "region-law fit", Some(Duration::from_secs(10)), region_law),
        (5, "spectrum correctness", Some(Duration::from_secs(30)), spectrum),
        (6, "deconvolution fingerprint", Some(Duration::from_secs(60)), deconv_fingerprint),
        (7, "Welch test correctness", None, welch),
        (8, "self-consistency", None, self_consistency),
        (9, "end-to-end determinism", None, determinism),
        (10, "throughput", None, throughput),
    ];
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        let (out, el, in_time) = timed(limit, f);
        let ok = out.pass && in_time;
        if !ok {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {} s", l.as_secs()));
        println!(
            "criterion {n:>2} [PRIMARY] {name}: {} ({:.2} s{budget}) {}",
            if ok { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
