//! Gaussian kernel density estimates.
//!
//! [`Kde2D`] is a product-Gaussian estimate on the viewing plane with a
//! per-axis bandwidth; it backs both the i.i.d. null density and the
//! per-cluster densities. [`Kde1D`] is used for saccade-length curves and
//! picks its bandwidth by the Sheather–Jones solve-the-equation rule.
//!
//! All evaluation is exact summation over the support. Densities are
//! computed in log space so far-away queries stay finite.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::Point;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Relative spread below which an axis counts as having zero variance.
const ZERO_VARIANCE_EPS: f64 = 1e-12;

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub(crate) fn is_zero_spread(sd: f64, values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    !(sd > ZERO_VARIANCE_EPS * scale)
}

/// Streaming log(Σ exp(v)); −∞ for an empty input.
pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > max {
            acc = acc * (max - v).exp() + 1.0;
            max = v;
        } else {
            acc += (v - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + acc.ln()
    }
}

/// Per-axis standard deviations of a point set.
pub fn axis_sds(points: &[Point]) -> (f64, f64) {
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    (sample_sd(&xs), sample_sd(&ys))
}

/// Two-dimensional product-Gaussian KDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde2D {
    pub support: Vec<Point>,
    /// Kernel weights summing to 1; absent means uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub bandwidth: (f64, f64),
}

/// Scott's rule for two dimensions: `h = sd * n^(-1/6)` per axis.
pub fn scott_bandwidth_2d(points: &[Point]) -> (f64, f64) {
    let (sx, sy) = axis_sds(points);
    let f = (points.len() as f64).powf(-1.0 / 6.0);
    (sx * f, sy * f)
}

impl Kde2D {
    /// Fits with the normal-reference (Scott) bandwidth.
    ///
    /// Fails on fewer than two points or a zero-variance axis; callers that
    /// must stay total use [`Kde2D::fit_floored`].
    pub fn fit(points: &[Point]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateCluster(format!(
                "{} point(s) cannot support a bandwidth estimate",
                points.len()
            )));
        }
        let (sx, sy) = axis_sds(points);
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        if is_zero_spread(sx, &xs) || is_zero_spread(sy, &ys) {
            return Err(Error::DegenerateCluster("zero variance along an axis".into()));
        }
        Ok(Kde2D {
            support: points.to_vec(),
            weights: None,
            bandwidth: scott_bandwidth_2d(points),
        })
    }

    /// Fits with the Scott bandwidth raised to at least `floor` on each axis.
    ///
    /// Accepts a single point (its bandwidth is the floor). `floor` must be
    /// positive on both axes.
    pub fn fit_floored(points: &[Point], floor: (f64, f64)) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateCluster("empty cluster".into()));
        }
        if !(floor.0 > 0.0 && floor.1 > 0.0) {
            return Err(Error::DegenerateCluster(format!(
                "bandwidth floor must be positive, got ({}, {})",
                floor.0, floor.1
            )));
        }
        let (hx, hy) = if points.len() < 2 {
            (0.0, 0.0)
        } else {
            scott_bandwidth_2d(points)
        };
        Ok(Kde2D {
            support: points.to_vec(),
            weights: None,
            bandwidth: (hx.max(floor.0), hy.max(floor.1)),
        })
    }

    /// Weighted KDE: kernel `i` carries weight `weights[i] / sum(weights)`.
    /// The bandwidth is the unweighted Scott rule on the locations.
    pub fn fit_weighted(points: &[Point], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument("one weight per point required".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        let mut kde = Kde2D::fit(points)?;
        let total: f64 = weights.iter().sum();
        kde.weights = Some(weights.iter().map(|w| w / total).collect());
        Ok(kde)
    }

    pub fn with_bandwidth(points: &[Point], bandwidth: (f64, f64)) -> Result<Self> {
        if points.is_empty() || !(bandwidth.0 > 0.0 && bandwidth.1 > 0.0) {
            return Err(Error::InvalidArgument("non-empty support and positive bandwidth required".into()));
        }
        Ok(Kde2D {
            support: points.to_vec(),
            weights: None,
            bandwidth,
        })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Natural log of the density at `q`.
    pub fn log_density(&self, q: Point) -> f64 {
        let (hx, hy) = self.bandwidth;
        let n = self.support.len() as f64;
        let exponents = self.support.iter().enumerate().map(|(i, p)| {
            let u = (q.x - p.x) / hx;
            let v = (q.y - p.y) / hy;
            let w = match &self.weights {
                Some(w) => w[i].ln(),
                None => -n.ln(),
            };
            w - 0.5 * (u * u + v * v)
        });
        log_sum_exp(exponents) - LN_2PI - hx.ln() - hy.ln()
    }

    pub fn density(&self, q: Point) -> f64 {
        self.log_density(q).exp()
    }

    /// Sum of log densities over `points` (0 for an empty slice).
    pub fn log_likelihood(&self, points: &[Point]) -> f64 {
        points.iter().map(|p| self.log_density(*p)).sum()
    }

    /// Density on a `width × height` grid of cell centres spanning
    /// `[x0, x1] × [y0, y1]`, row-major from `y0`.
    pub fn grid(&self, (x0, x1): (f64, f64), (y0, y1): (f64, f64), width: usize, height: usize) -> Vec<(f64, f64, f64)> {
        let dx = (x1 - x0) / width as f64;
        let dy = (y1 - y0) / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for r in 0..height {
            let y = y0 + (r as f64 + 0.5) * dy;
            for c in 0..width {
                let x = x0 + (c as f64 + 0.5) * dx;
                out.push((x, y, self.density(Point::new(x, y))));
            }
        }
        out
    }

    /// Bounding box of the support padded by `pad` bandwidths on each side.
    pub fn extent(&self, pad: f64) -> ((f64, f64), (f64, f64)) {
        let (hx, hy) = self.bandwidth;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.support {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        ((x0 - pad * hx, x1 + pad * hx), (y0 - pad * hy, y1 + pad * hy))
    }
}

/// Σ_t log f(X_t) for a fixation sequence under an i.i.d. density.
pub fn log_likelihood_iid(kde: &Kde2D, points: &[Point]) -> f64 {
    kde.log_likelihood(points)
}

/// One-dimensional Gaussian KDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde1D {
    pub support: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde1D {
    pub fn new(support: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if support.is_empty() || !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument("non-empty support and positive bandwidth required".into()));
        }
        Ok(Kde1D { support, bandwidth })
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self
            .support
            .iter()
            .map(|v| {
                let u = (x - v) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        s / (self.support.len() as f64 * h * (2.0 * PI).sqrt())
    }

    /// `points` evenly spaced evaluations over the support padded by 3 bandwidths.
    pub fn curve(&self, points: usize) -> Vec<(f64, f64)> {
        let lo = self.support.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * self.bandwidth;
        let hi = self.support.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * self.bandwidth;
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                (x, self.density(x))
            })
            .collect()
    }
}

/// Rule-of-thumb bandwidth `1.06 · sd · n^(-1/5)`.
pub fn normal_reference_bandwidth(values: &[f64]) -> f64 {
    1.06 * sample_sd(values) * (values.len() as f64).powf(-0.2)
}

/// Linear-interpolation quantile (type 7) of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample size above which pairwise sums are computed on a binned grid.
const SJ_EXACT_LIMIT: usize = 2000;
const SJ_BINS: usize = 1000;

/// Pairwise differences, exact or binned, for the density-functional sums.
enum PairSums {
    /// All |x_i - x_j| for i < j.
    Exact(Vec<f64>),
    /// (lag distance, pair count) per bin offset.
    Binned(Vec<(f64, f64)>),
}

impl PairSums {
    fn new(values: &[f64], binned: bool) -> Self {
        let n = values.len();
        if !binned {
            let mut d = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    d.push((values[i] - values[j]).abs());
                }
            }
            return PairSums::Exact(d);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / SJ_BINS as f64;
        let mut counts = vec![0.0f64; SJ_BINS];
        for v in values {
            let b = (((v - lo) / width) as usize).min(SJ_BINS - 1);
            counts[b] += 1.0;
        }
        let mut lags = vec![0.0f64; SJ_BINS];
        for i in 0..SJ_BINS {
            if counts[i] == 0.0 {
                continue;
            }
            lags[0] += counts[i] * (counts[i] - 1.0) / 2.0;
            for j in (i + 1)..SJ_BINS {
                lags[j - i] += counts[i] * counts[j];
            }
        }
        PairSums::Binned(
            lags.into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0.0)
                .map(|(l, c)| (l as f64 * width, c))
                .collect(),
        )
    }

    fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            PairSums::Exact(d) => d.iter().map(|&x| f(x)).sum(),
            PairSums::Binned(l) => l.iter().map(|&(x, c)| c * f(x)).sum(),
        }
    }
}

/// Estimate of ∫ f⁽⁴⁾ f using a Gaussian kernel with bandwidth `h`.
fn psi4(pairs: &PairSums, n: f64, h: f64) -> f64 {
    let s = pairs.sum(|d| {
        let u2 = (d / h).powi(2);
        (-0.5 * u2).exp() * (u2 * u2 - 6.0 * u2 + 3.0)
    });
    (2.0 * s + 3.0 * n) / (n * (n - 1.0) * h.powi(5) * (2.0 * PI).sqrt())
}

/// Estimate of ∫ f⁽⁶⁾ f using a Gaussian kernel with bandwidth `h`.
fn psi6(pairs: &PairSums, n: f64, h: f64) -> f64 {
    let s = pairs.sum(|d| {
        let u2 = (d / h).powi(2);
        (-0.5 * u2).exp() * (u2 * u2 * u2 - 15.0 * u2 * u2 + 45.0 * u2 - 15.0)
    });
    (2.0 * s - 15.0 * n) / (n * (n - 1.0) * h.powi(7) * (2.0 * PI).sqrt())
}

/// Sheather–Jones bandwidth by solving the plug-in equation.
///
/// Pilot bandwidths for ψ₄ and ψ₆ start from the normal reference scale
/// `min(sd, IQR/1.349)`; the fixed point `h = (R(K) / (n ψ₄(g(h))))^(1/5)`
/// with `g(h) = α₂ h^(5/7)` is then found by bisection.
pub fn sheather_jones_bandwidth(values: &[f64]) -> Result<f64> {
    sheather_jones_impl(values, values.len() > SJ_EXACT_LIMIT)
}

fn sheather_jones_impl(values: &[f64], binned: bool) -> Result<f64> {
    let n = values.len();
    if n < 5 {
        return Err(Error::TooFewPoints { need: 5, got: n });
    }
    let sd = sample_sd(values);
    if is_zero_spread(sd, values) {
        return Err(Error::ZeroVariance("Sheather-Jones bandwidth needs spread data".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    let nf = n as f64;

    let pairs = PairSums::new(values, binned);
    let a = 1.24 * scale * nf.powf(-1.0 / 7.0);
    let b = 1.23 * scale * nf.powf(-1.0 / 9.0);
    let c1 = 1.0 / (2.0 * PI.sqrt() * nf);
    let td = -psi6(&pairs, nf, b);
    let sd_a = psi4(&pairs, nf, a);
    if !(td > 0.0 && sd_a > 0.0) {
        return Err(Error::BandwidthBracket("pilot density functionals are not positive".into()));
    }
    let alpha2 = 1.357 * (sd_a / td).powf(1.0 / 7.0);
    let equation = |h: f64| {
        let psi = psi4(&pairs, nf, alpha2 * h.powf(5.0 / 7.0));
        if psi > 0.0 {
            (c1 / psi).powf(0.2) - h
        } else {
            f64::NAN
        }
    };

    let hmax = 1.144 * scale * nf.powf(-0.2);
    let (mut lo, mut hi) = (0.1 * hmax, hmax);
    let mut tries = 0;
    while !(equation(lo) * equation(hi) < 0.0) {
        tries += 1;
        if tries > 100 {
            return Err(Error::BandwidthBracket(format!(
                "no sign change in [{lo:e}, {hi:e}]"
            )));
        }
        if tries % 2 == 1 {
            hi *= 1.2;
        } else {
            lo /= 1.2;
        }
    }
    let f_lo_positive = equation(lo) > 0.0;
    while (hi - lo) > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        let f = equation(mid);
        if f.is_nan() {
            return Err(Error::BandwidthBracket("density functional lost positivity".into()));
        }
        if (f > 0.0) == f_lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn fit_kde1d_sj(values: &[f64]) -> Result<Kde1D> {
    let h = sheather_jones_bandwidth(values)?;
    Kde1D::new(values.to_vec(), h)
}
