//! `ingest` and `simulate`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use fixmark_core::data::{write_records, IngestFormat};
use fixmark_core::rng::derive_seed;
use fixmark_core::simulate::{empirical_check, simulate as run_simulation, EmpiricalCheck, SimSpec, Simulation};
use fixmark_core::Dataset;

use super::Outcome;
use crate::config::RunConfig;
use crate::io::{load_dataset, write_json, write_text};

pub fn summarize(ds: &Dataset) -> String {
    let schemes: Vec<&str> = ds.schemes().into_iter().map(|s| s.as_str()).collect();
    let images: std::collections::BTreeSet<u32> = ds.image_schemes().into_iter().map(|(i, _)| i).collect();
    format!(
        "{} fixations in {} sequences: {} subjects, {} images, {} schemes ({})",
        ds.fixation_count(),
        ds.len(),
        ds.subjects().len(),
        images.len(),
        schemes.len(),
        schemes.join(", ")
    )
}

pub fn ingest(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let input = cfg.require_input()?;
    let ds = load_dataset(input, cfg)?;
    if ds.is_empty() {
        eprintln!("warning: {} contains no fixation records", input.display());
    }
    let out = cfg.out_dir.join("dataset.json");
    let mut text = ds.to_json()?;
    text.push('\n');
    write_text(&out, &text)?;
    println!("{}", summarize(&ds));
    println!("dataset written to {}", out.display());
    Ok(Outcome::default())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(SimSpec),
    Many(Vec<SimSpec>),
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    config: &'a RunConfig,
    specs: &'a [SimSpec],
    checks: Vec<EmpiricalCheck>,
}

/// `data.csv` → `data.states.csv`.
fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "simulated".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn simulate(cfg: &RunConfig, spec_path: &Path, out: Option<&Path>, seed_flag: Option<u64>) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading spec {}", spec_path.display()))?;
    let mut specs = match serde_json::from_str(&text).with_context(|| format!("parsing spec {}", spec_path.display()))? {
        SpecFile::One(s) => vec![s],
        SpecFile::Many(v) => v,
    };
    if let Some(seed) = seed_flag {
        let single = specs.len() == 1;
        for (i, s) in specs.iter_mut().enumerate() {
            s.seed = if single { seed } else { derive_seed(seed, &[i as u64]) };
        }
    }
    let mut sims = Vec::new();
    let mut checks = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let sim = run_simulation(spec).with_context(|| format!("spec #{i} (image {})", spec.image_id))?;
        checks.push(empirical_check(&sim.dataset, spec, &sim.states)?);
        sims.push(sim);
    }
    let sim = Simulation::merge(sims).context("specs overlap in (image, subject)")?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join("simulated.csv"));
    let mut buf = Vec::new();
    write_records(&mut buf, &sim.dataset.records(), IngestFormat::default())?;
    write_text(&out, &String::from_utf8(buf).expect("formatted records are UTF-8"))?;
    let states = sidecar_path(&out, "states.csv");
    write_text(&states, &sim.labels_csv())?;
    write_json(
        &sidecar_path(&out, "check.json"),
        &SimulateSummary {
            config: cfg,
            specs: &specs,
            checks,
        },
    )?;
    println!("{}", summarize(&sim.dataset));
    println!("data written to {}; true states in {}", out.display(), states.display());
    Ok(Outcome::default())
}
