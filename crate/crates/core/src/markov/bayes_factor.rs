use serde::{Deserialize, Serialize};

use super::{DirichletMarkovPosterior, DirichletSampler, TransitionCounts};
use crate::clustering::ClusterModel;
use crate::data::{FixationSequence, Point};
use crate::density::{axis_sds, log_sum_exp, Kde2D};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Fraction of the training data's per-axis sd used as the bandwidth floor.
pub const BANDWIDTH_FLOOR_FRACTION: f64 = 0.01;

/// i.i.d.-versus-Markov Bayes factor, stored as a natural log.
///
/// Values below 1 favour the Markov mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub log_bf: f64,
}

impl BayesFactor {
    pub fn bf(self) -> f64 {
        self.log_bf.exp()
    }

    pub fn log2(self) -> f64 {
        self.log_bf / std::f64::consts::LN_2
    }
}

/// Monte Carlo Bayes factor with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub log_bf: f64,
    pub bf: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Per-image model: clusters, their densities, the null density and the
/// Dirichlet posterior fitted on the training subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovMixtureModel {
    pub clusters: ClusterModel,
    /// Density of each cluster, indexed by label.
    pub densities: Vec<Kde2D>,
    /// Density of all training fixations, used by the i.i.d. model.
    pub null_density: Kde2D,
    pub posterior: DirichletMarkovPosterior,
}

impl MarkovMixtureModel {
    /// Builds the model from training sequences and a clustering of their
    /// concatenated fixations (in sequence order).
    ///
    /// Training states come from the clustering's own labels. Every
    /// bandwidth is floored at 1% of the training data's per-axis standard
    /// deviation, which keeps single-point and collinear clusters usable.
    pub fn fit(train: &[&FixationSequence], clusters: ClusterModel) -> Result<Self> {
        let points: Vec<Point> = train.iter().flat_map(|s| s.points.iter().copied()).collect();
        if points.len() != clusters.training_points.len() || points != clusters.training_points {
            return Err(Error::InvalidArgument(
                "cluster model was not fitted on these training sequences".into(),
            ));
        }
        if points.len() < 2 {
            return Err(Error::TooFewPoints {
                need: 2,
                got: points.len(),
            });
        }
        let (sx, sy) = axis_sds(&points);
        let floor = (BANDWIDTH_FLOOR_FRACTION * sx, BANDWIDTH_FLOOR_FRACTION * sy);
        if !(floor.0 > 0.0 && floor.1 > 0.0) {
            return Err(Error::DegenerateCluster(
                "training fixations have zero spread along an axis".into(),
            ));
        }
        let null_density = Kde2D::fit_floored(&points, floor)?;
        let densities = (0..clusters.k)
            .map(|label| Kde2D::fit_floored(&clusters.members(label), floor))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.context(format!("k = {}", clusters.k)))?;

        let mut counts = TransitionCounts::new(clusters.k);
        let mut offset = 0;
        for s in train {
            counts.add_path(&clusters.labels[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(MarkovMixtureModel {
            posterior: DirichletMarkovPosterior::from_counts(&counts),
            clusters,
            densities,
            null_density,
        })
    }

    pub fn k(&self) -> usize {
        self.clusters.k
    }

    /// Hard state assignment for test fixations.
    pub fn states(&self, points: &[Point]) -> Vec<usize> {
        self.clusters.assign_all(points)
    }

    /// (Σ log f(Xₜ), Σ log f_{sₜ}(Xₜ)) for the assigned states.
    fn log_densities(&self, points: &[Point], states: &[usize]) -> (f64, f64) {
        let null = self.null_density.log_likelihood(points);
        let mixture = points
            .iter()
            .zip(states)
            .map(|(p, &s)| self.densities[s].log_density(*p))
            .sum();
        (null, mixture)
    }

    fn check_test(test: &FixationSequence) -> Result<()> {
        if test.is_empty() {
            return Err(Error::InvalidArgument("empty test sequence".into()));
        }
        Ok(())
    }

    /// Exact Bayes factor: with states fixed by assignment, the density
    /// product factors out and the Dirichlet expectation has a closed form.
    pub fn closed_form_bf(&self, test: &FixationSequence) -> Result<BayesFactor> {
        Self::check_test(test)?;
        let states = self.states(&test.points);
        let (null, mixture) = self.log_densities(&test.points, &states);
        let log_e = self.posterior.log_expected_path_probability(&states);
        Ok(BayesFactor {
            log_bf: null - (log_e + mixture),
        })
    }

    /// Monte Carlo Bayes factor from `samples` posterior draws of (π, p).
    ///
    /// The path probability is averaged with log-sum-exp; the reported
    /// standard error propagates the sample variance of the average through
    /// BF = numerator / average.
    pub fn mc_bf(&self, test: &FixationSequence, samples: usize, seed: u64) -> Result<McEstimate> {
        Self::check_test(test)?;
        if samples == 0 {
            return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
        }
        let states = self.states(&test.points);
        let (null, mixture) = self.log_densities(&test.points, &states);
        let path = TransitionCounts::from_paths(self.k(), [states.as_slice()]);

        let k = self.k();
        let initial = DirichletSampler::new(&self.posterior.initial_alpha);
        let rows: Vec<(usize, DirichletSampler)> = (0..k)
            .filter(|&i| path.transitions[i].iter().any(|&u| u > 0))
            .map(|i| (i, DirichletSampler::new(&self.posterior.transition_alpha[i])))
            .collect();

        let mut rng = rng_from_seed(seed);
        let mut buf = vec![0.0; k];
        let mut log_w = Vec::with_capacity(samples);
        for _ in 0..samples {
            initial.sample_log(&mut rng, &mut buf);
            let mut lw = buf[states[0]];
            for (i, sampler) in &rows {
                sampler.sample_log(&mut rng, &mut buf);
                for (j, &u) in path.transitions[*i].iter().enumerate() {
                    if u > 0 {
                        lw += u as f64 * buf[j];
                    }
                }
            }
            log_w.push(lw);
        }

        let n = samples as f64;
        let log_mean = log_sum_exp(log_w.iter().copied()) - n.ln();
        // relative standard error of the mean weight
        let rel_se = if samples > 1 {
            let var = log_w
                .iter()
                .map(|lw| ((lw - log_mean).exp() - 1.0).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::INFINITY
        };
        let log_bf = null - (log_mean + mixture);
        let bf = log_bf.exp();
        Ok(McEstimate {
            log_bf,
            bf,
            std_error: bf * rel_se,
            samples,
        })
    }

    /// The same model with labels renamed: old label `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k();
        let mut densities = self.densities.clone();
        let mut initial_alpha = vec![0.0; k];
        let mut transition_alpha = vec![vec![0.0; k]; k];
        for i in 0..k {
            densities[perm[i]] = self.densities[i].clone();
            initial_alpha[perm[i]] = self.posterior.initial_alpha[i];
            for j in 0..k {
                transition_alpha[perm[i]][perm[j]] = self.posterior.transition_alpha[i][j];
            }
        }
        MarkovMixtureModel {
            clusters: self.clusters.permuted(perm),
            densities,
            null_density: self.null_density.clone(),
            posterior: DirichletMarkovPosterior {
                k,
                initial_alpha,
                transition_alpha,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans;
    use crate::data::{ColourScheme, Orientation, SubjectId};
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn seq(subject: &str, points: Vec<Point>) -> FixationSequence {
        let n = points.len();
        FixationSequence {
            subject_id: SubjectId::new(subject),
            image_id: 1,
            colour_scheme: ColourScheme::Normal,
            orientation: Orientation::Landscape,
            points,
            durations: vec![200.0; n],
            indices: (1..=n as u32).collect(),
        }
    }

    /// Sticky chain over `k` blobs on a circle.
    fn markov_sequences(k: usize, subjects: usize, len: usize, seed: u64) -> Vec<FixationSequence> {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..subjects)
            .map(|s| {
                let mut state = rng.random_range(0..k);
                let pts = (0..len)
                    .map(|_| {
                        if rng.random::<f64>() > 0.7 {
                            state = rng.random_range(0..k);
                        }
                        let a = state as f64 * std::f64::consts::TAU / k as f64;
                        Point::new(10.0 * a.cos() + noise.sample(&mut rng), 10.0 * a.sin() + noise.sample(&mut rng))
                    })
                    .collect();
                seq(&format!("s{s}"), pts)
            })
            .collect()
    }

    fn fit_model(train: &[FixationSequence], k: usize, seed: u64) -> MarkovMixtureModel {
        let refs: Vec<&FixationSequence> = train.iter().collect();
        let points: Vec<Point> = train.iter().flat_map(|s| s.points.clone()).collect();
        let clusters = kmeans(&points, k, 10, seed).unwrap();
        MarkovMixtureModel::fit(&refs, clusters).unwrap()
    }

    #[test]
    fn k_one_is_exactly_one() {
        let data = markov_sequences(3, 6, 20, 1);
        let model = fit_model(&data[1..], 1, 0);
        let bf = model.closed_form_bf(&data[0]).unwrap();
        assert_eq!(bf.bf(), 1.0);
        let mc = model.mc_bf(&data[0], 100, 3).unwrap();
        assert_eq!(mc.bf, 1.0);
        assert_eq!(mc.std_error, 0.0);
    }

    #[test]
    fn single_fixation_test_uses_one_moment() {
        let data = markov_sequences(3, 6, 20, 2);
        let model = fit_model(&data[1..], 3, 0);
        let x = data[0].points[0];
        let test = seq("t", vec![x]);
        let s = model.states(&[x])[0];
        let alpha = &model.posterior.initial_alpha;
        let total: f64 = alpha.iter().sum();
        let expected = model.null_density.density(x) * total / (alpha[s] * model.densities[s].density(x));
        let got = model.closed_form_bf(&test).unwrap().bf();
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let data = markov_sequences(3, 8, 30, 3);
        let model = fit_model(&data[1..], 3, 1);
        let exact = model.closed_form_bf(&data[0]).unwrap().bf();
        let mc = model.mc_bf(&data[0], 10_000, 11).unwrap();
        assert!((mc.bf - exact).abs() < 3.0 * mc.std_error, "{} vs {exact} ± {}", mc.bf, mc.std_error);
    }

    #[test]
    fn monte_carlo_error_shrinks_with_samples() {
        let data = markov_sequences(3, 8, 30, 4);
        let model = fit_model(&data[1..], 3, 1);
        let test = &data[0];
        let small = model.mc_bf(test, 100, 5).unwrap();
        let large = model.mc_bf(test, 10_000, 5).unwrap();
        let ratio = small.std_error / large.std_error;
        // expected ratio √100 = 10, asserted within a factor of 2
        assert!(ratio > 5.0 && ratio < 20.0, "ratio {ratio}");
        assert!(model.mc_bf(test, 0, 5).is_err());
        assert!(model.mc_bf(test, 1, 5).unwrap().std_error.is_infinite());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let data = markov_sequences(2, 5, 15, 5);
        let model = fit_model(&data[1..], 2, 1);
        let a = model.mc_bf(&data[0], 500, 9).unwrap();
        let b = model.mc_bf(&data[0], 500, 9).unwrap();
        assert_eq!(a.log_bf.to_bits(), b.log_bf.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn label_permutation_leaves_bf_unchanged() {
        let data = markov_sequences(4, 8, 25, 6);
        let model = fit_model(&data[1..], 4, 2);
        let perm = [2, 0, 3, 1];
        let permuted = model.permuted(&perm);
        let a = model.closed_form_bf(&data[0]).unwrap().bf();
        let b = permuted.closed_form_bf(&data[0]).unwrap().bf();
        assert!(((a - b) / a).abs() < 1e-10);
    }

    #[test]
    fn bayes_factor_positive_and_finite() {
        let data = markov_sequences(3, 6, 40, 7);
        for k in 1..=6 {
            let model = fit_model(&data[1..], k, 3);
            let bf = model.closed_form_bf(&data[0]).unwrap();
            assert!(bf.log_bf.is_finite() && bf.bf() > 0.0);
        }
    }

    #[test]
    fn alpha_total_grows_by_sequence_length() {
        let data = markov_sequences(3, 6, 12, 8);
        let points: Vec<Point> = data.iter().flat_map(|s| s.points.clone()).collect();
        let clusters = kmeans(&points, 3, 5, 0).unwrap();
        let refs: Vec<&FixationSequence> = data[..5].iter().collect();
        let before = super::super::count_transitions(&refs, &clusters);
        let refs6: Vec<&FixationSequence> = data.iter().collect();
        let after = super::super::count_transitions(&refs6, &clusters);
        let a = DirichletMarkovPosterior::from_counts(&before).alpha_total();
        let b = DirichletMarkovPosterior::from_counts(&after).alpha_total();
        assert_eq!(b - a, data[5].len() as f64);
    }

    #[test]
    fn rejects_mismatched_clusters() {
        let data = markov_sequences(2, 3, 10, 9);
        let refs: Vec<&FixationSequence> = data.iter().collect();
        let clusters = kmeans(&data[0].points, 2, 1, 0).unwrap();
        assert!(MarkovMixtureModel::fit(&refs, clusters).is_err());
    }
}
