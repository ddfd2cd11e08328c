//! `fit`, `score`, `roc` and `report`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use fixmark_core::classify::{best_threshold, rank_images, roc, split_by_colour, BestThreshold, RankedImage};
use fixmark_core::markov::{fit_image_model, format_bf, score_image, BayesFactorReport, MarkovMixtureModel, PosteriorMean};
use fixmark_core::stats::{paired_t, render_listing, ListingStyle, PairTest, SCHEME_PAIRS};
use fixmark_core::ColourScheme;

use super::Outcome;
use crate::config::RunConfig;
use crate::io::{cell, density_curve, load_dataset, load_reports, reports_dir, write_json, write_text, ReportFile};

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a RunConfig,
    image_id: u32,
    scheme: ColourScheme,
    k: usize,
    posterior_mean: PosteriorMean,
    model: &'a MarkovMixtureModel,
}

pub fn fit(cfg: &RunConfig, image: u32, scheme: ColourScheme, k: usize, grid: Option<&[usize]>) -> anyhow::Result<Outcome> {
    let ds = load_dataset(cfg.require_input()?, cfg)?;
    let model = fit_image_model(&ds, image, scheme, k, &cfg.score_config())
        .with_context(|| format!("fitting image {image} ({scheme}) with k = {k}"))?;
    let stem = format!("fit_image{image:04}_{scheme}_k{k}");
    let path = cfg.out_dir.join(format!("{stem}.json"));
    write_json(
        &path,
        &FitOutput {
            config: cfg,
            image_id: image,
            scheme,
            k,
            posterior_mean: model.posterior.posterior_mean(),
            model: &model,
        },
    )?;
    println!("image {image} ({scheme}), k = {k}: model written to {}", path.display());
    print!("{}", model.posterior.posterior_mean().render());
    if let Some(&[w, h]) = grid {
        let (xr, yr) = model.null_density.extent(3.0);
        let mut csv = String::from("x,y,density,cluster\n");
        for (x, y, d) in model.null_density.grid(xr, yr, w.max(1), h.max(1)) {
            let label = model.clusters.assign(fixmark_core::Point::new(x, y));
            let _ = writeln!(csv, "{},{},{},{label}", cell(x), cell(y), cell(d));
        }
        let gpath = cfg.out_dir.join(format!("{stem}_grid.csv"));
        write_text(&gpath, &csv)?;
        println!("density grid written to {}", gpath.display());
    }
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct Skipped {
    label: String,
    reason: String,
}

#[derive(Serialize)]
struct ScoreSummary<'a> {
    config: &'a RunConfig,
    scored: usize,
    failures: &'a [String],
    paired_t: Vec<PairTest>,
    paired_t_skipped: Vec<Skipped>,
}

fn report_file_name(r: &BayesFactorReport) -> String {
    format!("image{:04}_{}.json", r.image_id, r.scheme)
}

/// Paired t-tests of per-image log2 Bayes factors between schemes, pairing by image.
fn scheme_paired_tests(reports: &[BayesFactorReport]) -> (Vec<PairTest>, Vec<Skipped>) {
    let mut by_scheme: BTreeMap<ColourScheme, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in reports {
        by_scheme.entry(r.scheme).or_default().insert(r.image_id, r.strongest_log2_bf);
    }
    let empty = BTreeMap::new();
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    for (a, b) in SCHEME_PAIRS {
        let (ma, mb) = (by_scheme.get(&a).unwrap_or(&empty), by_scheme.get(&b).unwrap_or(&empty));
        let (xa, xb): (Vec<f64>, Vec<f64>) = ma.iter().filter_map(|(img, v)| mb.get(img).map(|w| (*v, *w))).unzip();
        let label = format!("{} - {}", a.short(), b.short());
        match paired_t(&xa, &xb) {
            Ok(res) => tests.push(PairTest::new(a, b, res)),
            Err(e) => skipped.push(Skipped {
                label,
                reason: format!("{} paired image(s): {e}", xa.len()),
            }),
        }
    }
    (tests, skipped)
}

pub fn score(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let ds = load_dataset(cfg.require_input()?, cfg)?;
    let cells: Vec<(u32, ColourScheme)> = ds.image_schemes().into_iter().collect();
    if cells.is_empty() {
        eprintln!("warning: dataset is empty; nothing to score");
    }
    let sc = cfg.score_config();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(image, scheme)| score_image(&ds, image, scheme, 1..=cfg.k_max, &sc).map_err(|e| (image, scheme, e)))
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err((image, scheme, e)) => failures.push(format!("image {image} ({scheme}): {e}")),
        }
    }
    let dir = cfg.out_dir.join("reports");
    for r in &reports {
        write_json(
            &dir.join(report_file_name(r)),
            &ReportFile {
                config: cfg.clone(),
                report: r.clone(),
            },
        )?;
    }

    let mut table = String::from("image,scheme,selected_k,strongest_bf,strongest_log2_bf");
    for k in 1..=cfg.k_max {
        let _ = write!(table, ",log2_bf_k{k}");
    }
    table.push('\n');
    for r in &reports {
        let _ = write!(
            table,
            "{},{},{},{},{}",
            r.image_id,
            r.scheme,
            r.selected_k,
            cell(r.strongest_bf),
            cell(r.strongest_log2_bf)
        );
        for k in 1..=cfg.k_max {
            let v = r.per_k.get(&k).map(|s| cell(s.combined_log2_bf)).unwrap_or_default();
            let _ = write!(table, ",{v}");
        }
        table.push('\n');
    }
    write_text(&cfg.out_dir.join("log2_bf.csv"), &table)?;

    let mut curves = String::from("scheme,log2_bf,density\n");
    for scheme in ColourScheme::ALL {
        let v: Vec<f64> = reports
            .iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| r.strongest_log2_bf)
            .collect();
        for (x, d) in density_curve(&v, 256).unwrap_or_default() {
            let _ = writeln!(curves, "{scheme},{},{}", cell(x), cell(d));
        }
    }
    write_text(&cfg.out_dir.join("log2_bf_density.csv"), &curves)?;

    let (tests, skipped) = scheme_paired_tests(&reports);
    let listing = render_listing(&tests, ListingStyle::Interval);
    write_text(&cfg.out_dir.join("paired_t.txt"), &listing)?;
    write_json(
        &cfg.out_dir.join("score_summary.json"),
        &ScoreSummary {
            config: cfg,
            scored: reports.len(),
            failures: &failures,
            paired_t: tests,
            paired_t_skipped: skipped,
        },
    )?;

    println!("scored {} image/scheme pair(s); reports in {}", reports.len(), dir.display());
    if !listing.is_empty() {
        println!("paired t-tests on log2 Bayes factors (95% CI of the mean difference):");
        print!("{listing}");
    }
    Ok(Outcome { failures })
}

#[derive(Serialize)]
struct AtThreshold {
    threshold: f64,
    coloured_below: f64,
    grayscale_below: f64,
}

#[derive(Serialize)]
struct Best {
    threshold_bf: f64,
    threshold_log2: f64,
    tpr: f64,
    fpr: f64,
    youden_j: f64,
}

impl From<BestThreshold> for Best {
    fn from(b: BestThreshold) -> Self {
        Best {
            threshold_bf: b.threshold.exp2(),
            threshold_log2: b.threshold,
            tpr: b.tpr,
            fpr: b.fpr,
            youden_j: b.j,
        }
    }
}

#[derive(Serialize)]
struct RocSummary<'a> {
    config: &'a RunConfig,
    n_coloured: usize,
    n_grayscale: usize,
    auc: f64,
    best_threshold: Option<Best>,
    at_threshold: AtThreshold,
}

pub fn roc_cmd(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let reports = load_reports(&reports_dir(cfg))?;
    let (coloured, grayscale) = split_by_colour(&reports);
    // curves are built on log2 BF: same ordering, no underflow
    let curve = roc(&coloured, &grayscale).context("need reports for both coloured and grayscale images")?;
    let mut csv = String::from("threshold_bf,threshold_log2,tpr,fpr\n");
    for p in &curve.points {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            cell(p.threshold.exp2()),
            cell(p.threshold),
            cell(p.tpr),
            cell(p.fpr)
        );
    }
    write_text(&cfg.out_dir.join("roc.csv"), &csv)?;
    let t = cfg.threshold.log2();
    let below = |v: &[f64]| v.iter().filter(|x| **x < t).count() as f64 / v.len() as f64;
    let summary = RocSummary {
        config: cfg,
        n_coloured: coloured.len(),
        n_grayscale: grayscale.len(),
        auc: curve.auc,
        best_threshold: best_threshold(&curve).map(Best::from),
        at_threshold: AtThreshold {
            threshold: cfg.threshold,
            coloured_below: below(&coloured),
            grayscale_below: below(&grayscale),
        },
    };
    write_json(&cfg.out_dir.join("roc.json"), &summary)?;
    println!(
        "AUC = {:.4} ({} coloured, {} grayscale)",
        summary.auc, summary.n_coloured, summary.n_grayscale
    );
    if let Some(b) = &summary.best_threshold {
        println!(
            "most separating threshold: BF < {} (TPR {:.2}, FPR {:.2})",
            format_bf(b.threshold_bf),
            b.tpr,
            b.fpr
        );
    }
    println!(
        "at BF < {}: {:.0}% of coloured and {:.0}% of grayscale images",
        cfg.threshold,
        100.0 * summary.at_threshold.coloured_below,
        100.0 * summary.at_threshold.grayscale_below
    );
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct SchemeRanking {
    best: Vec<RankedImage>,
    worst: Vec<RankedImage>,
}

#[derive(Serialize)]
struct RankingSummary<'a> {
    config: &'a RunConfig,
    top: usize,
    per_scheme: BTreeMap<ColourScheme, SchemeRanking>,
    overall: Vec<RankedImage>,
}

fn ranking_rows(out: &mut String, title: &str, rows: &[RankedImage]) {
    let _ = writeln!(out, "  {title}");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "    {:>2}. image {:>4}  k = {:>2}  BF = {:<10}  log2 = {:>9.3}",
            i + 1,
            r.image_id,
            r.selected_k,
            format_bf(r.strongest_bf),
            r.strongest_log2_bf
        );
    }
}

pub fn report(cfg: &RunConfig, top: usize) -> anyhow::Result<Outcome> {
    let reports = load_reports(&reports_dir(cfg))?;
    let overall = rank_images(&reports);
    let mut per_scheme = BTreeMap::new();
    let mut text = String::new();
    for scheme in ColourScheme::ALL {
        let ranked: Vec<RankedImage> = overall.iter().filter(|r| r.scheme == scheme).copied().collect();
        if ranked.is_empty() {
            continue;
        }
        let best: Vec<RankedImage> = ranked.iter().take(top).copied().collect();
        let worst: Vec<RankedImage> = ranked.iter().rev().take(top).copied().collect();
        let _ = writeln!(text, "{scheme} ({} images)", ranked.len());
        ranking_rows(&mut text, "best", &best);
        ranking_rows(&mut text, "worst", &worst);
        if let Some(b) = best.first() {
            let rep = reports
                .iter()
                .find(|r| r.image_id == b.image_id && r.scheme == b.scheme)
                .expect("ranked from these reports");
            let _ = writeln!(text, "  posterior means for image {} at k = {}:", rep.image_id, rep.selected_k);
            for line in rep.selected().posterior_mean.render().lines() {
                let _ = writeln!(text, "    {line}");
            }
        }
        text.push('\n');
        per_scheme.insert(scheme, SchemeRanking { best, worst });
    }
    write_text(&cfg.out_dir.join("ranking.txt"), &text)?;
    write_json(
        &cfg.out_dir.join("ranking.json"),
        &RankingSummary {
            config: cfg,
            top,
            per_scheme,
            overall,
        },
    )?;
    print!("{text}");
    Ok(Outcome::default())
}
