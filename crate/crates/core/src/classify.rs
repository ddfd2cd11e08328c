//! Colour-versus-grayscale classification by thresholding Bayes factors.
//!
//! A coloured image (normal or abnormal scheme) is the positive class. An
//! image counts as positive at threshold `t` when its Bayes factor is
//! strictly below `t`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::ColourScheme;
use crate::error::{Error, Result};
use crate::markov::BayesFactorReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Coloured,
    Grayscale,
}

/// `bf < threshold` is coloured; equality counts as grayscale.
pub fn classify_at(bf: f64, threshold: f64) -> Verdict {
    if bf < threshold {
        Verdict::Coloured
    } else {
        Verdict::Grayscale
    }
}

/// JSON has no infinities; the sentinels are written as strings.
mod threshold_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad threshold `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ascending in threshold, from −∞ to +∞.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn check_bfs(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("no {name} Bayes factors")));
    }
    if v.iter().any(|b| b.is_nan()) {
        return Err(Error::InvalidArgument(format!("{name} Bayes factors contain NaN")));
    }
    Ok(())
}

/// Fraction of sorted values strictly below `t`.
fn frac_below(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|v| *v < t) as f64 / sorted.len() as f64
}

/// ROC curve over every observed value plus ±∞, with trapezoid AUC.
///
/// Any strictly increasing transform of all values (such as log2) gives
/// the same TPR/FPR sequence, so log-scale inputs work as well.
pub fn roc(coloured: &[f64], grayscale: &[f64]) -> Result<RocCurve> {
    check_bfs(coloured, "coloured")?;
    check_bfs(grayscale, "grayscale")?;
    let mut c = coloured.to_vec();
    let mut g = grayscale.to_vec();
    c.sort_by(f64::total_cmp);
    g.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = c.iter().chain(&g).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.insert(0, f64::NEG_INFINITY);
    if thresholds.last() != Some(&f64::INFINITY) {
        thresholds.push(f64::INFINITY);
    }
    let mut points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            tpr: frac_below(&c, t),
            fpr: frac_below(&g, t),
        })
        .collect();
    // +∞ itself is never strictly below +∞, but the sentinel closes the curve
    let last = points.last_mut().expect("sentinels present");
    last.tpr = 1.0;
    last.fpr = 1.0;
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestThreshold {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Youden's J, `tpr − fpr`.
    pub j: f64,
}

/// Observed threshold maximizing Youden's J; the lowest wins ties.
pub fn best_threshold(curve: &RocCurve) -> Option<BestThreshold> {
    curve
        .points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .map(|p| BestThreshold {
            threshold: p.threshold,
            tpr: p.tpr,
            fpr: p.fpr,
            j: p.tpr - p.fpr,
        })
        .fold(None, |best: Option<BestThreshold>, cand| match best {
            Some(b) if b.j >= cand.j => Some(b),
            _ => Some(cand),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image_id: u32,
    pub scheme: ColourScheme,
    pub selected_k: usize,
    pub strongest_bf: f64,
    pub strongest_log2_bf: f64,
}

/// Orders reports by strongest Bayes factor, smallest (best Markov fit)
/// first; ties go to the lower image id, then scheme.
pub fn rank_images(reports: &[BayesFactorReport]) -> Vec<RankedImage> {
    let mut ranked: Vec<RankedImage> = reports
        .iter()
        .map(|r| RankedImage {
            image_id: r.image_id,
            scheme: r.scheme,
            selected_k: r.selected_k,
            strongest_bf: r.strongest_bf,
            strongest_log2_bf: r.strongest_log2_bf,
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.strongest_log2_bf
            .total_cmp(&b.strongest_log2_bf)
            .then(a.image_id.cmp(&b.image_id))
            .then(a.scheme.cmp(&b.scheme))
    });
    ranked
}

/// Splits strongest Bayes factors into (coloured, grayscale) for [`roc`].
pub fn split_by_colour(reports: &[BayesFactorReport]) -> (Vec<f64>, Vec<f64>) {
    let (c, g): (Vec<_>, Vec<_>) = reports.iter().partition(|r| r.scheme.is_coloured());
    let bfs = |v: Vec<&BayesFactorReport>| v.iter().map(|r| r.strongest_log2_bf).collect::<Vec<f64>>();
    (bfs(c), bfs(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{KScore, PosteriorMean};
    use crate::stats::mann_whitney;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn verdicts() {
        assert_eq!(classify_at(0.0009, 0.2), Verdict::Coloured);
        assert_eq!(classify_at(0.2, 0.2), Verdict::Grayscale);
        assert_eq!(classify_at(5.0, 0.2), Verdict::Grayscale);
    }

    #[test]
    fn perfect_and_uninformative() {
        let r = roc(&[0.01, 0.02, 0.05], &[0.5, 1.0, 3.0, 7.0]).unwrap();
        assert_eq!(r.auc, 1.0);
        let first = r.points[0];
        let last = *r.points.last().unwrap();
        assert_eq!((first.tpr, first.fpr), (0.0, 0.0));
        assert_eq!((last.tpr, last.fpr), (1.0, 1.0));
        let b = best_threshold(&r).unwrap();
        assert_eq!(b.threshold, 0.5);
        assert_eq!(b.j, 1.0);

        let same = [0.1, 0.4, 0.4, 2.0, 9.0];
        let r = roc(&same, &same).unwrap();
        assert!((r.auc - 0.5).abs() < 0.02);
    }

    #[test]
    fn auc_is_scaled_u_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let c: Vec<f64> = (0..23).map(|_| rng.random::<f64>().powi(2)).collect();
            let g: Vec<f64> = (0..31).map(|_| rng.random::<f64>()).collect();
            let r = roc(&c, &g).unwrap();
            let u = mann_whitney(&g, &c).unwrap().statistic;
            assert!((r.auc - u / (23.0 * 31.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn thresholds_survive_json() {
        let r = roc(&[0.1], &[0.3]).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"-inf\"") && text.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<RocCurve>(&text).unwrap(), r);
    }

    fn report(image_id: u32, bf: f64) -> BayesFactorReport {
        let pm = PosteriorMean {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
        };
        let score = KScore {
            k: 2,
            per_subject: vec![],
            combined_bf: bf,
            combined_log2_bf: bf.log2(),
            mc_std_error: 0.0,
            closed_form_bf: bf,
            posterior_mean: pm,
        };
        BayesFactorReport {
            image_id,
            scheme: ColourScheme::Normal,
            subjects: vec![],
            per_k: BTreeMap::from([(2, score)]),
            selected_k: 2,
            strongest_bf: bf,
            strongest_log2_bf: bf.log2(),
        }
    }

    #[test]
    fn ranking() {
        let order: Vec<u32> = rank_images(&[report(7, 0.5), report(3, 0.01), report(9, 0.01)])
            .iter()
            .map(|r| r.image_id)
            .collect();
        assert_eq!(order, vec![3, 9, 7]);
        assert_eq!(rank_images(&[report(4, 2.0)]).len(), 1);
    }

    proptest! {
        #[test]
        fn monotone_curve_and_transform_invariance(
            c in prop::collection::vec(1e-6f64..1e3, 1..30),
            g in prop::collection::vec(1e-6f64..1e3, 1..30),
        ) {
            let r = roc(&c, &g).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].tpr <= w[1].tpr && w[0].fpr <= w[1].fpr);
            }
            let lc: Vec<f64> = c.iter().map(|v| v.log2()).collect();
            let lg: Vec<f64> = g.iter().map(|v| v.log2()).collect();
            let l = roc(&lc, &lg).unwrap();
            let rates = |r: &RocCurve| r.points.iter().map(|p| (p.tpr, p.fpr)).collect::<Vec<_>>();
            prop_assert_eq!(rates(&r), rates(&l));
            prop_assert!((r.auc - l.auc).abs() < 1e-12);
        }

        #[test]
        fn lower_threshold_never_flips_to_coloured(bf in 1e-6f64..1e3, t in 1e-6f64..1e3, s in 0.0f64..1.0) {
            if classify_at(bf, t * s) == Verdict::Coloured {
                prop_assert_eq!(classify_at(bf, t), Verdict::Coloured);
            }
        }

        #[test]
        fn ranking_matches_negated_descending(bfs in prop::collection::vec(1e-6f64..10.0, 1..12)) {
            let reports: Vec<_> = bfs.iter().enumerate().map(|(i, b)| report(i as u32 + 1, *b)).collect();
            let asc: Vec<u32> = rank_images(&reports).iter().map(|r| r.image_id).collect();
            let mut desc: Vec<(f64, u32)> = reports.iter().map(|r| (-r.strongest_log2_bf, r.image_id)).collect();
            desc.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            prop_assert_eq!(asc, desc.into_iter().map(|x| x.1).collect::<Vec<_>>());
        }
    }
}
