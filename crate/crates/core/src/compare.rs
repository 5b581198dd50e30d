//! Welch's t-test per statistic between two analyzed corpora.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{CorpusStats, StatSamples, TOOL_VERSION};
use crate::config::AnalysisConfig;
use crate::error::{Error, Result};
use crate::special::student_t_two_sided;

pub const REPORT_SCHEMA: &str = "imgstat.comparison/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test with Bessel-corrected variances.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample("Welch test needs at least two samples per group"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(Error::DegenerateSample("zero variance in a Welch group"));
    }
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = qa + qb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() - 1) as f64 + qb * qb / (b.len() - 1) as f64);
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub n_a: usize,
    pub n_b: usize,
    /// Degenerate per-image values left out of each group.
    pub excluded_a: usize,
    pub excluded_b: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub t_stat: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    /// Why the test could not run, if it could not.
    pub note: Option<String>,
}

fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

pub fn compare_column(a: &StatSamples, b: &StatSamples) -> ComparisonRow {
    let (va, vb) = (a.valid(), b.valid());
    let test = welch_t_test(&va, &vb);
    ComparisonRow {
        name: a.name.clone(),
        n_a: va.len(),
        n_b: vb.len(),
        excluded_a: a.excluded(),
        excluded_b: b.excluded(),
        mean_a: mean(&va),
        mean_b: mean(&vb),
        t_stat: test.as_ref().ok().map(|r| r.t),
        df: test.as_ref().ok().map(|r| r.df),
        p_value: test.as_ref().ok().map(|r| r.p),
        note: test.err().map(|e| e.to_string()),
    }
}

/// One row per statistic; both lists must name the same statistics in the
/// same order.
pub fn compare_samples(a: &[StatSamples], b: &[StatSamples]) -> Result<Vec<ComparisonRow>> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.name != y.name) {
        return Err(Error::ConfigMismatch(vec!["statistics".to_owned()]));
    }
    Ok(a.iter().zip(b).map(|(x, y)| compare_column(x, y)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub tool_version: String,
    pub config: AnalysisConfig,
    /// Always true in a produced report; mismatched configs are refused.
    pub config_compatible: bool,
    pub manifest_digest_a: String,
    pub manifest_digest_b: String,
    pub n_images_a: usize,
    pub n_images_b: usize,
    pub rows: Vec<ComparisonRow>,
    /// Statistic names from most to least similar (descending p).
    pub ranking: Vec<String>,
    pub ranking_note: String,
    /// Unweighted mean p over testable rows. A heuristic summary only.
    pub heuristic_mean_p: Option<f64>,
}

const RANKING_NOTE: &str = "larger p means the two corpora are more alike on that statistic; \
rows are ranked by p, and heuristic_mean_p is an unweighted average with no statistical meaning";

pub fn compare_corpora(a: &CorpusStats, b: &CorpusStats) -> Result<ComparisonReport> {
    let diff = a.config.diff(&b.config);
    if !diff.is_empty() {
        return Err(Error::ConfigMismatch(diff));
    }
    let rows = compare_samples(&a.samples, &b.samples)?;
    let mut ranked: Vec<&ComparisonRow> = rows.iter().filter(|r| r.p_value.is_some()).collect();
    // stable: ties keep report order
    ranked.sort_by(|x, y| y.p_value.unwrap().total_cmp(&x.p_value.unwrap()));
    let ps: Vec<f64> = rows.iter().filter_map(|r| r.p_value).collect();
    Ok(ComparisonReport {
        schema: REPORT_SCHEMA.to_owned(),
        tool_version: TOOL_VERSION.to_owned(),
        config: a.config.clone(),
        config_compatible: true,
        manifest_digest_a: a.manifest_digest.clone(),
        manifest_digest_b: b.manifest_digest.clone(),
        n_images_a: a.n_images(),
        n_images_b: b.n_images(),
        ranking: ranked.iter().map(|r| r.name.clone()).collect(),
        ranking_note: RANKING_NOTE.to_owned(),
        heuristic_mean_p: mean(&ps),
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-3) => format!("{x:.4e}"),
        Some(x) => format!("{x:.4}"),
        None => "-".to_owned(),
    }
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned plain-text table, one row per statistic.
    pub fn to_table(&self) -> String {
        let header = ["statistic", "mean A", "mean B", "t-stat", "p-value", "n A", "n B"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    cell(r.mean_a),
                    cell(r.mean_b),
                    cell(r.t_stat),
                    cell(r.p_value),
                    r.n_a.to_string(),
                    r.n_b.to_string(),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
                if i == 0 {
                    let _ = write!(out, "{c:<w$}");
                } else {
                    let _ = write!(out, "  {c:>w$}");
                }
            }
            out.push('\n');
        };
        line(&mut out, &header.map(str::to_owned));
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for row in &body {
            line(&mut out, row);
        }
        let _ = writeln!(out, "\n{} (A: {} images) vs (B: {} images)", self.tool_version, self.n_images_a, self.n_images_b);
        let _ = writeln!(out, "most similar first: {}", self.ranking.join(", "));
        if let Some(p) = self.heuristic_mean_p {
            let _ = writeln!(out, "heuristic mean p: {}", cell(Some(p)));
        }
        out
    }
}
