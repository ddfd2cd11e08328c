use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use fixmark_core::data::{group_sequences, parse_records};
use fixmark_core::markov::BayesFactorReport;
use fixmark_core::Dataset;

use crate::config::RunConfig;

/// Reads a dataset from canonical JSON (`.json`) or raw fixation rows.
pub fn load_dataset(path: &Path, cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        return Dataset::from_json(&text).with_context(|| format!("parsing dataset {}", path.display()));
    }
    let records = parse_records(text.as_bytes(), cfg.ingest_format()).with_context(|| format!("in {}", path.display()))?;
    group_sequences(&records).with_context(|| format!("grouping {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// A stored report together with the settings that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: RunConfig,
    pub report: BayesFactorReport,
}

/// Directory holding report files: `--input` if given (or its `reports`
/// subdirectory), else `<out-dir>/reports`.
pub fn reports_dir(cfg: &RunConfig) -> PathBuf {
    match &cfg.input {
        Some(p) if p.join("reports").is_dir() => p.join("reports"),
        Some(p) => p.clone(),
        None => cfg.out_dir.join("reports"),
    }
}

/// Loads every `*.json` report in `dir`, ordered by file name.
pub fn load_reports(dir: &Path) -> anyhow::Result<Vec<BayesFactorReport>> {
    if !dir.is_dir() {
        bail!("report directory {} does not exist; run `fixmark score` first or pass --input DIR", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no report files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            // untagged enums cannot read the integer keys of `per_k`, so try each shape in turn
            serde_json::from_str::<ReportFile>(&text)
                .map(|f| f.report)
                .or_else(|_| serde_json::from_str::<BayesFactorReport>(&text))
                .with_context(|| format!("{} is not a Bayes-factor report", p.display()))
        })
        .collect()
}

/// CSV cell for a float: shortest round-trip form (scientific for tiny or
/// huge magnitudes), `inf`/`-inf` for infinities.
pub fn cell(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}

/// Plot-ready 1D KDE curve: Sheather–Jones bandwidth when it can be
/// computed, the normal-reference rule otherwise. `None` for fewer than two
/// values or no spread.
pub fn density_curve(values: &[f64], points: usize) -> Option<Vec<(f64, f64)>> {
    use fixmark_core::density::{fit_kde1d_sj, normal_reference_bandwidth, Kde1D};
    if values.len() < 2 {
        return None;
    }
    let kde = fit_kde1d_sj(values)
        .or_else(|_| Kde1D::new(values.to_vec(), normal_reference_bandwidth(values)))
        .ok()?;
    Some(kde.curve(points))
}
