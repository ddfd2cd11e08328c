//! Classical two-sample and rank tests.
//!
//! Distribution functions come from `statrs`. Rank tests use average ranks
//! for ties and the usual tie-correction factors.

mod analysis;

pub use analysis::{
    duration_density_correlation, duration_density_correlation_pooled, duration_density_pairs,
    fixation_count_tests, fixation_counts, format_p, ks_battery, normalize_per_subject, render_listing, saccade_sets,
    saccades, FixationCountTests, ListingStyle, PairTest, SaccadeSet, SCHEME_PAIRS,
};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::density::{is_zero_spread, mean, sample_sd};
use crate::error::{Error, Result};

/// Terms kept in the Kolmogorov tail series.
const KS_TERMS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// 95% interval for `estimate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    /// Standardized statistic before any continuity correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub n: usize,
    #[serde(default)]
    pub tie_corrected: bool,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, n: usize) -> Self {
        TestResult {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            df: None,
            ci: None,
            estimate: None,
            z: None,
            n,
            tie_corrected: false,
        }
    }
}

fn non_empty(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("sample `{name}` is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("sample `{name}` has non-finite values")));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // the alternating series converges slowly here; use the theta-function form
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=KS_TERMS)
            .map(|j| {
                let m = (2 * j - 1) as f64;
                (c * m * m).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=KS_TERMS)
        .map(|j| {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value at
/// effective size `n_a·n_b/(n_a+n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    non_empty(a, "a")?;
    non_empty(b, "b")?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let mut r = TestResult::new(d, kolmogorov_sf(ne.sqrt() * d), a.len() + b.len());
    r.estimate = Some(ne);
    Ok(r)
}

/// Paired t-test on `a − b` with a 95% interval for the mean difference.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    non_empty(&d, "a - b")?;
    let sd = sample_sd(&d);
    if is_zero_spread(sd, &d) {
        return Err(Error::ZeroVariance("paired differences are constant".into()));
    }
    let n = d.len();
    let m = mean(&d);
    let se = sd / (n as f64).sqrt();
    let t = m / se;
    let df = (n - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    let q = dist.inverse_cdf(0.975);
    let mut r = TestResult::new(t, 2.0 * dist.sf(t.abs()), n);
    r.df = Some(df);
    r.estimate = Some(m);
    r.ci = Some((m - q * se, m + q * se));
    Ok(r)
}

/// Average (mid) ranks, 1-based, and the tie term `Σ (t³ − t)`.
pub(crate) fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Mann–Whitney U test. `statistic` is `U = R_a − n_a(n_a+1)/2`, so a sample
/// lying entirely below the other gives 0. The two-sided p-value uses the
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    non_empty(a, "a")?;
    non_empty(b, "b")?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let mut r = if var > 0.0 {
        let sigma = var.sqrt();
        let zc = ((u - mu).abs() - 0.5).max(0.0) / sigma;
        let mut r = TestResult::new(u, 2.0 * std_normal().sf(zc), a.len() + b.len());
        r.z = Some((u - mu) / sigma);
        r
    } else {
        TestResult::new(u, 1.0, a.len() + b.len())
    };
    r.estimate = Some(u / (na * nb));
    r.tie_corrected = ties > 0.0;
    Ok(r)
}

/// Kruskal–Wallis H with tie correction; chi-squared p-value on `groups − 1` df.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("Kruskal-Wallis needs at least two groups".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        non_empty(g, &format!("group {i}"))?;
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let n = pooled.len() as f64;
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let correction = 1.0 - ties / (n * n * n - n);
    let h = if correction > 0.0 { (raw / correction).max(0.0) } else { 0.0 };
    let df = (groups.len() - 1) as f64;
    let chi = ChiSquared::new(df).expect("positive df");
    let mut r = TestResult::new(h, chi.sf(h), pooled.len());
    r.df = Some(df);
    r.tie_corrected = ties > 0.0;
    Ok(r)
}

/// Pearson correlation with a 95% Fisher-z interval (needs `n > 3` for the
/// interval) and a t-based two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("correlation needs equal-length samples".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    non_empty(x, "x")?;
    non_empty(y, "y")?;
    let (sx, sy) = (sample_sd(x), sample_sd(y));
    if is_zero_spread(sx, x) {
        return Err(Error::ZeroVariance("first variable is constant".into()));
    }
    if is_zero_spread(sy, y) {
        return Err(Error::ZeroVariance("second variable is constant".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let n = x.len();
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1) as f64;
    let rho = (cov / (sx * sy)).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        2.0 * StudentsT::new(0.0, 1.0, df).expect("positive df").sf(t.abs())
    };
    let mut r = TestResult::new(rho, p, n);
    r.df = Some(df);
    r.estimate = Some(rho);
    if n > 3 && rho.abs() < 1.0 {
        let z = rho.atanh();
        let half = std_normal().inverse_cdf(0.975) / ((n - 3) as f64).sqrt();
        r.z = Some(z);
        r.ci = Some(((z - half).tanh(), (z + half).tanh()));
    }
    Ok(r)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}
