//! Dataset-level analyses: saccade lengths, fixation counts and the
//! duration–density correlation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{kruskal_wallis, ks_two_sample, mann_whitney, pearson, TestResult};
use crate::data::{ColourScheme, Dataset, FixationSequence, SubjectId};
use crate::density::{is_zero_spread, mean, sample_sd, Kde2D};
use crate::error::{Error, Result};

/// The three scheme comparisons, in reporting order.
pub const SCHEME_PAIRS: [(ColourScheme, ColourScheme); 3] = [
    (ColourScheme::Normal, ColourScheme::Abnormal),
    (ColourScheme::Normal, ColourScheme::Grayscale),
    (ColourScheme::Abnormal, ColourScheme::Grayscale),
];

/// Euclidean distances between successive fixations.
pub fn saccades(seq: &FixationSequence) -> Vec<f64> {
    seq.points
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaccadeSet {
    pub subject_id: SubjectId,
    pub scheme: ColourScheme,
    pub lengths: Vec<f64>,
}

/// One set per (subject, scheme), concatenating that subject's images in image order.
pub fn saccade_sets(dataset: &Dataset) -> Vec<SaccadeSet> {
    let mut sets: BTreeMap<(SubjectId, ColourScheme), Vec<f64>> = BTreeMap::new();
    for seq in dataset.sequences() {
        sets.entry((seq.subject_id.clone(), seq.colour_scheme))
            .or_default()
            .extend(saccades(seq));
    }
    sets.into_iter()
        .map(|((subject_id, scheme), lengths)| SaccadeSet {
            subject_id,
            scheme,
            lengths,
        })
        .collect()
}

/// Standardizes each subject's lengths to sample mean 0 and sd 1.
pub fn normalize_per_subject(sets: &[SaccadeSet]) -> Result<Vec<SaccadeSet>> {
    sets.iter()
        .map(|s| {
            if s.lengths.len() < 2 {
                return Err(Error::ZeroVariance(format!(
                    "subject {} has {} saccade(s); need at least 2",
                    s.subject_id,
                    s.lengths.len()
                )));
            }
            let sd = sample_sd(&s.lengths);
            if is_zero_spread(sd, &s.lengths) {
                return Err(Error::ZeroVariance(format!("subject {} has constant saccade lengths", s.subject_id)));
            }
            let m = mean(&s.lengths);
            Ok(SaccadeSet {
                lengths: s.lengths.iter().map(|v| (v - m) / sd).collect(),
                ..s.clone()
            })
        })
        .collect()
}

/// A test comparing two colour schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: ColourScheme,
    pub b: ColourScheme,
    pub label: String,
    pub result: TestResult,
}

impl PairTest {
    pub fn new(a: ColourScheme, b: ColourScheme, result: TestResult) -> Self {
        PairTest {
            a,
            b,
            label: format!("{} - {}", a.short(), b.short()),
            result,
        }
    }
}

fn pool_by_scheme<'a>(items: impl IntoIterator<Item = (ColourScheme, &'a [f64])>) -> BTreeMap<ColourScheme, Vec<f64>> {
    let mut pooled: BTreeMap<ColourScheme, Vec<f64>> = BTreeMap::new();
    for (scheme, v) in items {
        pooled.entry(scheme).or_default().extend_from_slice(v);
    }
    pooled
}

fn pairwise(
    pooled: &BTreeMap<ColourScheme, Vec<f64>>,
    test: impl Fn(&[f64], &[f64]) -> Result<TestResult>,
) -> Result<Vec<PairTest>> {
    SCHEME_PAIRS
        .iter()
        .filter_map(|&(a, b)| match (pooled.get(&a), pooled.get(&b)) {
            (Some(x), Some(y)) if !x.is_empty() && !y.is_empty() => Some((a, b, x, y)),
            _ => None,
        })
        .map(|(a, b, x, y)| Ok(PairTest::new(a, b, test(x, y)?)))
        .collect()
}

/// KS tests between schemes on saccade lengths pooled across subjects.
/// Pairs whose schemes have no saccades are omitted.
pub fn ks_battery(sets: &[SaccadeSet]) -> Result<Vec<PairTest>> {
    let pooled = pool_by_scheme(sets.iter().map(|s| (s.scheme, s.lengths.as_slice())));
    pairwise(&pooled, ks_two_sample)
}

/// Number of fixations in each (subject, image) sequence, grouped by scheme.
pub fn fixation_counts(dataset: &Dataset) -> BTreeMap<ColourScheme, Vec<f64>> {
    let mut counts: BTreeMap<ColourScheme, Vec<f64>> = BTreeMap::new();
    for seq in dataset.canonical_order() {
        counts.entry(seq.colour_scheme).or_default().push(seq.len() as f64);
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationCountTests {
    pub counts: BTreeMap<ColourScheme, Vec<f64>>,
    /// Absent when fewer than two schemes are present.
    pub kruskal_wallis: Option<TestResult>,
    pub mann_whitney: Vec<PairTest>,
}

pub fn fixation_count_tests(dataset: &Dataset) -> Result<FixationCountTests> {
    let counts = fixation_counts(dataset);
    let kw = if counts.len() >= 2 {
        Some(kruskal_wallis(&counts.values().cloned().collect::<Vec<_>>())?)
    } else {
        None
    };
    let mann_whitney = pairwise(&counts, mann_whitney)?;
    Ok(FixationCountTests {
        counts,
        kruskal_wallis: kw,
        mann_whitney,
    })
}

/// (training density at the held-out fixation, held-out duration) pairs for
/// one image, over every leave-one-subject-out fold.
///
/// Each fold's density is a KDE on the training subjects' fixation
/// locations with kernels weighted by fixation duration.
pub fn duration_density_pairs(dataset: &Dataset, image_id: u32, scheme: ColourScheme) -> Result<Vec<(f64, f64)>> {
    let seqs = dataset.for_image(image_id, scheme);
    if seqs.len() < 2 {
        return Err(Error::InsufficientSubjects {
            image: image_id,
            scheme: scheme.to_string(),
            need: 2,
            got: seqs.len(),
        });
    }
    let mut pairs = Vec::new();
    for (held, test) in seqs.iter().enumerate() {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, s) in seqs.iter().enumerate() {
            if i != held {
                points.extend_from_slice(&s.points);
                weights.extend_from_slice(&s.durations);
            }
        }
        let kde = Kde2D::fit_weighted(&points, &weights)
            .map_err(|e| e.context(format!("image {image_id} ({scheme}), holding out {}", test.subject_id)))?;
        pairs.extend(test.points.iter().zip(&test.durations).map(|(p, d)| (kde.density(*p), *d)));
    }
    Ok(pairs)
}

fn correlate(pairs: &[(f64, f64)]) -> Result<TestResult> {
    let (dens, durs): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    pearson(&dens, &durs)
}

/// Pearson correlation between leave-one-out density and duration for one image.
pub fn duration_density_correlation(dataset: &Dataset, image_id: u32, scheme: ColourScheme) -> Result<TestResult> {
    correlate(&duration_density_pairs(dataset, image_id, scheme)?)
}

/// As [`duration_density_correlation`], pooling pairs across every image
/// shown in `scheme`. Images with fewer than two subjects are skipped.
pub fn duration_density_correlation_pooled(dataset: &Dataset, scheme: ColourScheme) -> Result<TestResult> {
    let mut pairs = Vec::new();
    for (image, s) in dataset.image_schemes() {
        if s != scheme || dataset.for_image(image, s).len() < 2 {
            continue;
        }
        pairs.extend(duration_density_pairs(dataset, image, s)?);
    }
    correlate(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListingStyle {
    /// `Norm - Abno:  p = 0.0163`
    PValue,
    /// `Norm - Abno:  [-1.25,  1.71]  p-value = 0.76`
    Interval,
}

pub fn format_p(p: f64) -> String {
    if p < 1e-15 {
        "< 1e-15".to_string()
    } else if p < 1e-3 {
        format!("{p:.1e}")
    } else {
        let digits = (2 - p.log10().floor() as i32).max(0) as usize;
        format!("{p:.digits$}")
    }
}

/// Renders one line per comparison.
pub fn render_listing(tests: &[PairTest], style: ListingStyle) -> String {
    let mut out = String::new();
    for t in tests {
        let p = format_p(t.result.p_value);
        let eq = if p.starts_with('<') { "" } else { "= " };
        match (style, t.result.ci) {
            (ListingStyle::Interval, Some((lo, hi))) => {
                let _ = writeln!(out, "{}:  [{lo:>5.2}, {hi:>5.2}]  p-value {eq}{p}", t.label);
            }
            _ => {
                let _ = writeln!(out, "{}:  p {eq}{p}", t.label);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Orientation, Point};
    use crate::simulate::{simulate, SimSpec};

    fn seq(subject: &str, scheme: ColourScheme, image: u32, pts: &[(f64, f64)]) -> FixationSequence {
        FixationSequence {
            subject_id: SubjectId::new(subject),
            image_id: image,
            colour_scheme: scheme,
            orientation: Orientation::Landscape,
            points: pts.iter().map(|&p| Point::from(p)).collect(),
            durations: vec![200.0; pts.len()],
            indices: (1..=pts.len() as u32).collect(),
        }
    }

    #[test]
    fn saccade_lengths() {
        let s = seq("n1", ColourScheme::Normal, 1, &[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(saccades(&s), vec![5.0]);
        assert!(saccades(&seq("n1", ColourScheme::Normal, 1, &[(1.0, 1.0)])).is_empty());
        let c = seq("n1", ColourScheme::Normal, 1, &[(2.0, 2.0); 4]);
        assert_eq!(saccades(&c), vec![0.0; 3]);
    }

    #[test]
    fn saccade_set_sizes() {
        let ds = Dataset::from_sequences(vec![
            seq("n1", ColourScheme::Normal, 1, &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]),
            seq("n1", ColourScheme::Normal, 2, &[(0.0, 0.0), (2.0, 0.0)]),
            seq("g1", ColourScheme::Grayscale, 1, &[(0.0, 0.0)]),
        ])
        .unwrap();
        let sets = saccade_sets(&ds);
        assert_eq!(sets.len(), 2);
        let n1 = sets.iter().find(|s| s.subject_id.as_str() == "n1").unwrap();
        assert_eq!(n1.lengths, vec![1.0, 1.0, 2.0]);
        assert!(sets.iter().find(|s| s.subject_id.as_str() == "g1").unwrap().lengths.is_empty());
    }

    fn set(subject: &str, lengths: Vec<f64>) -> SaccadeSet {
        SaccadeSet {
            subject_id: SubjectId::new(subject),
            scheme: ColourScheme::Normal,
            lengths,
        }
    }

    #[test]
    fn normalization() {
        let out = normalize_per_subject(&[set("a", vec![1.0, 3.0])]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out[0].lengths[0] + h).abs() < 1e-12 && (out[0].lengths[1] - h).abs() < 1e-12);
        let again = normalize_per_subject(&out).unwrap();
        for (a, b) in again[0].lengths.iter().zip(&out[0].lengths) {
            assert!((a - b).abs() < 1e-10);
        }
        match normalize_per_subject(&[set("z9", vec![2.0, 2.0, 2.0])]) {
            Err(Error::ZeroVariance(m)) => assert!(m.contains("z9")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn normalized_moments_on_simulated_data() {
        let sim = simulate(&SimSpec::three_state_example(3)).unwrap();
        let norm = normalize_per_subject(&saccade_sets(&sim.dataset)).unwrap();
        let mut pooled = Vec::new();
        for s in &norm {
            assert!(mean(&s.lengths).abs() < 1e-10);
            assert!((sample_sd(&s.lengths) - 1.0).abs() < 1e-10);
            pooled.extend_from_slice(&s.lengths);
        }
        assert!(mean(&pooled).abs() < 1e-10);
    }

    #[test]
    fn constant_durations_have_no_correlation() {
        let mut spec = SimSpec::three_state_example(2);
        spec.duration_model = None;
        let sim = simulate(&spec).unwrap();
        assert!(matches!(
            duration_density_correlation(&sim.dataset, 1, ColourScheme::Normal),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn simulated_durations_correlate_with_density() {
        let hits = (0..10)
            .filter(|&seed| {
                let sim = simulate(&SimSpec::three_state_example(seed)).unwrap();
                let r = duration_density_correlation(&sim.dataset, 1, ColourScheme::Normal).unwrap();
                r.statistic > 0.0 && r.ci.unwrap().0 > 0.0
            })
            .count();
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn single_subject_is_rejected() {
        let ds = Dataset::from_sequences(vec![seq("n1", ColourScheme::Normal, 4, &[(0.0, 0.0), (1.0, 2.0)])]).unwrap();
        assert!(matches!(
            duration_density_correlation(&ds, 4, ColourScheme::Normal),
            Err(Error::InsufficientSubjects { got: 1, .. })
        ));
    }

    #[test]
    fn listings_are_shaped_like_the_three_row_block() {
        let mut r = TestResult::new(2.0, 0.0163, 10);
        let tests = vec![
            PairTest::new(ColourScheme::Normal, ColourScheme::Abnormal, r.clone()),
            {
                r.p_value = 0.394;
                PairTest::new(ColourScheme::Normal, ColourScheme::Grayscale, r.clone())
            },
            {
                r.p_value = 4e-11;
                PairTest::new(ColourScheme::Abnormal, ColourScheme::Grayscale, r.clone())
            },
        ];
        assert_eq!(
            render_listing(&tests, ListingStyle::PValue),
            "Norm - Abno:  p = 0.0163\nNorm - Gray:  p = 0.394\nAbno - Gray:  p = 4.0e-11\n"
        );
        let mut t = tests[0].clone();
        t.result.ci = Some((-1.25, 1.71));
        t.result.p_value = 0.76;
        assert_eq!(
            render_listing(&[t], ListingStyle::Interval),
            "Norm - Abno:  [-1.25,  1.71]  p-value = 0.760\n"
        );
        assert_eq!(format_p(1e-16), "< 1e-15");
    }
}
