//! Leave-one-subject-out Bayes-factor scoring and selection of k.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{MarkovMixtureModel, PosteriorMean};
use crate::clustering::{kmeans, AssignmentRule, ClusterModel, Dendrogram, Linkage, Metric, DEFAULT_KNN};
use crate::data::{ColourScheme, Dataset, FixationSequence, Point, SubjectId};
use crate::density::log_sum_exp;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    #[serde(alias = "hier")]
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub method: ClusterMethod,
    /// Merge metric for hierarchical clustering and the k-NN metric.
    pub metric: Metric,
    pub linkage: Linkage,
    /// k-NN neighbour count. k-means assigns by nearest centre unless set;
    /// hierarchical clustering always uses k-NN (default 5).
    pub knn: Option<usize>,
    pub restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            method: ClusterMethod::Kmeans,
            metric: Metric::L2,
            linkage: Linkage::Ward,
            knn: None,
            restarts: 10,
        }
    }
}

/// How per-subject Bayes factors are pooled into one score per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    /// Mean of log BF.
    #[default]
    Geometric,
    Arithmetic,
}

/// Which per-subject value feeds `combined_bf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfEstimator {
    #[default]
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub clustering: ClusteringConfig,
    pub mc_samples: usize,
    pub estimator: BfEstimator,
    pub combine: CombineRule,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            clustering: ClusteringConfig::default(),
            mc_samples: 10_000,
            estimator: BfEstimator::MonteCarlo,
            combine: CombineRule::Geometric,
            seed: 0,
        }
    }
}

/// One held-out subject's Bayes factor at one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectBf {
    pub subject: SubjectId,
    pub bf: f64,
    pub log2_bf: f64,
    pub mc_std_error: f64,
    pub closed_form_bf: f64,
    pub closed_form_log2_bf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub per_subject: Vec<SubjectBf>,
    pub combined_bf: f64,
    pub combined_log2_bf: f64,
    pub mc_std_error: f64,
    pub closed_form_bf: f64,
    /// Posterior-mean initial vector and transition matrix, averaged over folds.
    pub posterior_mean: PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorReport {
    pub image_id: u32,
    pub scheme: ColourScheme,
    pub subjects: Vec<SubjectId>,
    pub per_k: BTreeMap<usize, KScore>,
    /// k ≥ 2 with the smallest combined Bayes factor.
    pub selected_k: usize,
    pub strongest_bf: f64,
    pub strongest_log2_bf: f64,
}

impl BayesFactorReport {
    pub fn selected(&self) -> &KScore {
        &self.per_k[&self.selected_k]
    }

    /// Human-readable summary with the selected model's posterior means.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "image {} ({}): strongest Bayes factor {} (log2 {:.3}) for k = {} against k = 1",
            self.image_id,
            self.scheme,
            format_bf(self.strongest_bf),
            self.strongest_log2_bf,
            self.selected_k
        );
        for (k, s) in &self.per_k {
            let _ = writeln!(
                out,
                "  k = {k:>2}: BF = {:<10} log2 = {:>9.3}  (closed form {}, MC s.e. {})",
                format_bf(s.combined_bf),
                s.combined_log2_bf,
                format_bf(s.closed_form_bf),
                format_bf(s.mc_std_error)
            );
        }
        out.push_str(&self.selected().posterior_mean.render());
        out
    }
}

/// Four significant digits, switching to scientific notation for small or
/// large magnitudes.
pub fn format_bf(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor();
    if (-4.0..6.0).contains(&mag) {
        let decimals = (3.0 - mag).max(0.0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}

/// Fits one cluster model per k over the same training points.
fn cluster_models(
    points: &[Point],
    ks: &[usize],
    cfg: &ClusteringConfig,
    seed_for: impl Fn(usize) -> u64,
) -> Result<Vec<ClusterModel>> {
    match cfg.method {
        ClusterMethod::Kmeans => ks
            .iter()
            .map(|&k| {
                let m = kmeans(points, k, cfg.restarts, seed_for(k))?;
                Ok(match cfg.knn {
                    Some(n) => ClusterModel {
                        metric: cfg.metric,
                        ..m.with_rule(AssignmentRule::Knn { neighbours: n })
                    },
                    None => m,
                })
            })
            .collect(),
        ClusterMethod::Hierarchical => {
            if let Some(&k) = ks.iter().find(|&&k| k > points.len()) {
                return Err(Error::TooFewPoints { need: k, got: points.len() });
            }
            let tree = Dendrogram::build(points, cfg.linkage, cfg.metric)?;
            ks.iter()
                .map(|&k| tree.model(points, k, cfg.knn.unwrap_or(DEFAULT_KNN)))
                .collect()
        }
    }
}

fn combine_logs(logs: &[f64], rule: CombineRule) -> f64 {
    let m = logs.len() as f64;
    match rule {
        CombineRule::Geometric => logs.iter().sum::<f64>() / m,
        CombineRule::Arithmetic => log_sum_exp(logs.iter().copied()) - m.ln(),
    }
}

fn combine_std_error(per: &[SubjectBf], combined_bf: f64, rule: CombineRule) -> f64 {
    let m = per.len() as f64;
    match rule {
        CombineRule::Geometric => {
            let rel: f64 = per
                .iter()
                .map(|s| if s.bf > 0.0 { (s.mc_std_error / s.bf).powi(2) } else { 0.0 })
                .sum();
            combined_bf * rel.sqrt() / m
        }
        CombineRule::Arithmetic => per.iter().map(|s| s.mc_std_error.powi(2)).sum::<f64>().sqrt() / m,
    }
}

/// Fits the k-state model on every subject of one (image, scheme), with no
/// subject held out. Clustering is seeded from `(config.seed, k)`.
pub fn fit_image_model(
    dataset: &Dataset,
    image_id: u32,
    scheme: ColourScheme,
    k: usize,
    config: &ScoreConfig,
) -> Result<MarkovMixtureModel> {
    let train = dataset.for_image(image_id, scheme);
    if train.is_empty() {
        return Err(Error::InsufficientSubjects {
            image: image_id,
            scheme: scheme.to_string(),
            need: 1,
            got: 0,
        });
    }
    let points: Vec<Point> = train.iter().flat_map(|s| s.points.iter().copied()).collect();
    let mut models = cluster_models(&points, &[k], &config.clustering, |k| derive_seed(config.seed, &[k as u64]))?;
    MarkovMixtureModel::fit(&train, models.remove(0))
}

/// Scores one (image, scheme) by leave-one-subject-out cross-validation.
///
/// For each held-out subject, clusters and densities are fitted on the
/// remaining subjects for every k in `ks`, and the held-out sequence's
/// Bayes factor is computed. Seeds for clustering and Monte Carlo are
/// derived from `(config.seed, subject index, k)`.
pub fn score_image(
    dataset: &Dataset,
    image_id: u32,
    scheme: ColourScheme,
    ks: RangeInclusive<usize>,
    config: &ScoreConfig,
) -> Result<BayesFactorReport> {
    let ks: Vec<usize> = ks.collect();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::InvalidArgument("k range must start at 1 or above".into()));
    }
    if !ks.iter().any(|&k| k >= 2) {
        return Err(Error::InvalidArgument("k range must include some k >= 2".into()));
    }
    if config.mc_samples == 0 && config.estimator == BfEstimator::MonteCarlo {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let sequences = dataset.for_image(image_id, scheme);
    if sequences.len() < 2 {
        return Err(Error::InsufficientSubjects {
            image: image_id,
            scheme: scheme.to_string(),
            need: 2,
            got: sequences.len(),
        });
    }
    let ctx = |k: Option<usize>, subject: &SubjectId| match k {
        Some(k) => format!("image {image_id} ({scheme}), k = {k}, held-out subject {subject}"),
        None => format!("image {image_id} ({scheme}), held-out subject {subject}"),
    };

    let mut per_k: BTreeMap<usize, (Vec<SubjectBf>, Vec<PosteriorMean>)> = BTreeMap::new();
    for (si, test) in sequences.iter().enumerate() {
        let train: Vec<&FixationSequence> = sequences
            .iter()
            .copied()
            .filter(|s| s.subject_id != test.subject_id)
            .collect();
        let points: Vec<Point> = train.iter().flat_map(|s| s.points.iter().copied()).collect();
        let models = cluster_models(&points, &ks, &config.clustering, |k| {
            derive_seed(config.seed, &[si as u64, k as u64, 0])
        })
        .map_err(|e| e.context(ctx(None, &test.subject_id)))?;

        for (&k, clusters) in ks.iter().zip(models) {
            let model = MarkovMixtureModel::fit(&train, clusters).map_err(|e| e.context(ctx(Some(k), &test.subject_id)))?;
            let exact = model.closed_form_bf(test)?;
            let (log_bf, se) = match config.estimator {
                BfEstimator::MonteCarlo => {
                    let mc = model.mc_bf(test, config.mc_samples, derive_seed(config.seed, &[si as u64, k as u64, 1]))?;
                    (mc.log_bf, mc.std_error)
                }
                BfEstimator::ClosedForm => (exact.log_bf, 0.0),
            };
            let entry = per_k.entry(k).or_default();
            entry.0.push(SubjectBf {
                subject: test.subject_id.clone(),
                bf: log_bf.exp(),
                log2_bf: log_bf / std::f64::consts::LN_2,
                mc_std_error: se,
                closed_form_bf: exact.bf(),
                closed_form_log2_bf: exact.log2(),
            });
            entry.1.push(model.posterior.posterior_mean());
        }
    }

    let per_k: BTreeMap<usize, KScore> = per_k
        .into_iter()
        .map(|(k, (per_subject, means))| {
            let logs: Vec<f64> = per_subject.iter().map(|s| s.log2_bf * std::f64::consts::LN_2).collect();
            let exact_logs: Vec<f64> = per_subject
                .iter()
                .map(|s| s.closed_form_log2_bf * std::f64::consts::LN_2)
                .collect();
            let combined_log = combine_logs(&logs, config.combine);
            let combined_bf = combined_log.exp();
            let score = KScore {
                k,
                mc_std_error: combine_std_error(&per_subject, combined_bf, config.combine),
                closed_form_bf: combine_logs(&exact_logs, config.combine).exp(),
                combined_bf,
                combined_log2_bf: combined_log / std::f64::consts::LN_2,
                posterior_mean: PosteriorMean::average(&means).expect("at least two folds"),
                per_subject,
            };
            (k, score)
        })
        .collect();

    let (selected_k, best) = per_k
        .iter()
        .filter(|(k, _)| **k >= 2)
        .min_by(|a, b| a.1.combined_log2_bf.total_cmp(&b.1.combined_log2_bf).then(a.0.cmp(b.0)))
        .map(|(k, s)| (*k, s))
        .expect("k range includes k >= 2");
    let strongest_bf = best.combined_bf;
    let strongest_log2_bf = best.combined_log2_bf;
    Ok(BayesFactorReport {
        image_id,
        scheme,
        subjects: sequences.iter().map(|s| s.subject_id.clone()).collect(),
        per_k,
        selected_k,
        strongest_bf,
        strongest_log2_bf,
    })
}
