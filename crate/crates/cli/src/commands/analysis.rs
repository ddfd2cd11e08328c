//! `saccades` and `duration`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use fixmark_core::stats::{
    duration_density_pairs, fixation_count_tests, format_p, ks_battery,
    normalize_per_subject, pearson, render_listing, saccade_sets, FixationCountTests, ListingStyle, PairTest,
    TestResult,
};
use fixmark_core::ColourScheme;

use super::Outcome;
use crate::config::RunConfig;
use crate::io::{cell, density_curve, load_dataset, write_json, write_text};

#[derive(Serialize)]
struct SaccadeSummary<'a> {
    config: &'a RunConfig,
    saccades_per_scheme: BTreeMap<ColourScheme, usize>,
    ks_raw: Vec<PairTest>,
    ks_normalized: Option<Vec<PairTest>>,
    fixation_counts: FixationCountTests,
    failures: &'a [String],
}

pub fn saccades(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let ds = load_dataset(cfg.require_input()?, cfg)?;
    let sets = saccade_sets(&ds);
    let mut failures = Vec::new();

    let ks_raw = ks_battery(&sets)?;
    let ks_normalized = match normalize_per_subject(&sets) {
        Ok(norm) => Some(ks_battery(&norm)?),
        Err(e) => {
            failures.push(format!("normalized saccades: {e}"));
            None
        }
    };
    let counts = fixation_count_tests(&ds)?;

    let mut per_scheme: BTreeMap<ColourScheme, Vec<f64>> = BTreeMap::new();
    for s in &sets {
        per_scheme.entry(s.scheme).or_default().extend_from_slice(&s.lengths);
    }
    let mut curve = String::from("scheme,length,density\n");
    for (scheme, v) in &per_scheme {
        for (x, d) in density_curve(v, 512).unwrap_or_default() {
            let _ = writeln!(curve, "{scheme},{},{}", cell(x), cell(d));
        }
    }
    write_text(&cfg.out_dir.join("saccade_kde.csv"), &curve)?;

    let mut table = String::from("scheme,image,subject,fixations\n");
    for seq in ds.canonical_order() {
        let _ = writeln!(table, "{},{},{},{}", seq.colour_scheme, seq.image_id, seq.subject_id, seq.len());
    }
    write_text(&cfg.out_dir.join("fixation_counts.csv"), &table)?;

    let mut text = String::from("KS tests on saccade lengths:\n");
    text.push_str(&render_listing(&ks_raw, ListingStyle::PValue));
    if let Some(n) = &ks_normalized {
        text.push_str("KS tests on per-subject normalized saccade lengths:\n");
        text.push_str(&render_listing(n, ListingStyle::PValue));
    }
    if let Some(kw) = &counts.kruskal_wallis {
        let p = format_p(kw.p_value);
        let eq = if p.starts_with('<') { "" } else { "= " };
        let _ = writeln!(text, "Fixation counts, Kruskal-Wallis: H = {:.3}, p {eq}{p}", kw.statistic);
        text.push_str("Fixation counts, Mann-Whitney:\n");
        text.push_str(&render_listing(&counts.mann_whitney, ListingStyle::PValue));
    }
    write_text(&cfg.out_dir.join("saccades.txt"), &text)?;
    write_json(
        &cfg.out_dir.join("saccades.json"),
        &SaccadeSummary {
            config: cfg,
            saccades_per_scheme: per_scheme.iter().map(|(s, v)| (*s, v.len())).collect(),
            ks_raw,
            ks_normalized,
            fixation_counts: counts,
            failures: &failures,
        },
    )?;
    print!("{text}");
    Ok(Outcome { failures })
}

#[derive(Serialize)]
struct ImageCorrelation {
    image_id: u32,
    scheme: ColourScheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct DurationSummary<'a> {
    config: &'a RunConfig,
    pooled: BTreeMap<ColourScheme, TestResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_image: Vec<ImageCorrelation>,
    failures: &'a [String],
}

pub fn duration(cfg: &RunConfig, per_image: bool) -> anyhow::Result<Outcome> {
    let ds = load_dataset(cfg.require_input()?, cfg)?;
    let mut failures = Vec::new();
    let mut csv = String::from("image,scheme,density,duration_ms\n");
    let mut images = Vec::new();
    let mut by_scheme: BTreeMap<ColourScheme, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (image, scheme) in ds.image_schemes() {
        if ds.for_image(image, scheme).len() < 2 {
            continue;
        }
        match duration_density_pairs(&ds, image, scheme) {
            Ok(pairs) => {
                let acc = by_scheme.entry(scheme).or_default();
                for (d, t) in &pairs {
                    let _ = writeln!(csv, "{image},{scheme},{},{}", cell(*d), cell(*t));
                    acc.0.push(*d);
                    acc.1.push(*t);
                }
                if per_image {
                    let (dens, durs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                    let r = pearson(&dens, &durs);
                    images.push(ImageCorrelation {
                        image_id: image,
                        scheme,
                        error: r.as_ref().err().map(|e| e.to_string()),
                        result: r.ok(),
                    });
                }
            }
            Err(e) => failures.push(format!("image {image} ({scheme}): {e}")),
        }
    }
    write_text(&cfg.out_dir.join("duration_pairs.csv"), &csv)?;

    let mut pooled = BTreeMap::new();
    let mut text = String::from("Duration vs leave-one-out density (Pearson r, 95% CI):\n");
    for (scheme, (dens, durs)) in &by_scheme {
        let scheme = *scheme;
        match pearson(dens, durs) {
            Ok(r) => {
                match r.ci {
                    Some((lo, hi)) => {
                        let _ = writeln!(text, "{}:  r = {:.4}  [{lo:.4}, {hi:.4}]  n = {}", scheme.short(), r.statistic, r.n);
                    }
                    None => {
                        let _ = writeln!(text, "{}:  r = {:.4}  n = {}", scheme.short(), r.statistic, r.n);
                    }
                }
                pooled.insert(scheme, r);
            }
            Err(e) => failures.push(format!("{scheme} pooled correlation: {e}")),
        }
    }
    write_json(
        &cfg.out_dir.join("duration.json"),
        &DurationSummary {
            config: cfg,
            pooled,
            per_image: images,
            failures: &failures,
        },
    )?;
    print!("{text}");
    Ok(Outcome { failures })
}
