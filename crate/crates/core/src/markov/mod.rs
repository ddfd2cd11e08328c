//! Discrete-time Markov chains over cluster states with Dirichlet posteriors.
//!
//! Initial and transition probabilities carry independent Dirichlet priors
//! with every concentration at 0.5 (Jeffreys). Observed first states and
//! adjacent state pairs from training sequences update them by simple
//! addition. The Bayes factor compares an i.i.d. density for the test
//! fixations against a k-state mixture whose component is chosen by the
//! chain; see [`MarkovMixtureModel`].

mod bayes_factor;
mod score;

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::clustering::ClusterModel;
use crate::data::FixationSequence;
use crate::rng::Rng;

pub use bayes_factor::{BayesFactor, MarkovMixtureModel, McEstimate, BANDWIDTH_FLOOR_FRACTION};
pub use score::{
    fit_image_model, format_bf, score_image, BayesFactorReport, BfEstimator, ClusterMethod, ClusteringConfig, CombineRule, KScore,
    ScoreConfig, SubjectBf,
};

/// Dirichlet concentration of the Jeffreys prior.
pub const JEFFREYS_ALPHA: f64 = 0.5;

/// Initial-state and transition tallies over training sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub k: usize,
    pub initial: Vec<u64>,
    /// `transitions[i][j]` counts adjacent pairs going from state `i` to `j`.
    pub transitions: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn new(k: usize) -> Self {
        TransitionCounts {
            k,
            initial: vec![0; k],
            transitions: vec![vec![0; k]; k],
        }
    }

    /// Adds one state path; an empty path contributes nothing.
    pub fn add_path(&mut self, states: &[usize]) {
        if let Some(&first) = states.first() {
            self.initial[first] += 1;
        }
        for w in states.windows(2) {
            self.transitions[w[0]][w[1]] += 1;
        }
    }

    pub fn from_paths<'a>(k: usize, paths: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut c = TransitionCounts::new(k);
        for p in paths {
            c.add_path(p);
        }
        c
    }

    pub fn initial_total(&self) -> u64 {
        self.initial.iter().sum()
    }

    pub fn transition_total(&self) -> u64 {
        self.transitions.iter().flatten().sum()
    }
}

/// Tallies states of the training sequences, obtained by assigning each
/// fixation with `clusters`.
pub fn count_transitions(train: &[&FixationSequence], clusters: &ClusterModel) -> TransitionCounts {
    let mut counts = TransitionCounts::new(clusters.k);
    for seq in train {
        counts.add_path(&clusters.assign_all(&seq.points));
    }
    counts
}

/// Row-normalized posterior means of the initial vector and transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMean {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl PosteriorMean {
    /// Element-wise average of several summaries with the same `k`.
    pub fn average(items: &[PosteriorMean]) -> Option<PosteriorMean> {
        let first = items.first()?;
        let k = first.initial.len();
        let m = items.len() as f64;
        let mut initial = vec![0.0; k];
        let mut transition = vec![vec![0.0; k]; k];
        for it in items {
            for i in 0..k {
                initial[i] += it.initial[i] / m;
                for j in 0..k {
                    transition[i][j] += it.transition[i][j] / m;
                }
            }
        }
        Some(PosteriorMean { initial, transition })
    }

    /// Two-decimal matrix rendering:
    ///
    /// ```text
    /// pi = ( 0.05  0.45  0.13  0.37 )
    /// p  = ( 0.51  0.29  0.14  0.06
    ///        0.30  0.26  0.24  0.20 )
    /// ```
    pub fn render(&self) -> String {
        let row = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("  ");
        let mut out = String::new();
        let _ = writeln!(out, "pi = ( {} )", row(&self.initial));
        let k = self.transition.len();
        for (i, r) in self.transition.iter().enumerate() {
            let lead = if i == 0 { "p  = ( " } else { "       " };
            let tail = if i + 1 == k { " )" } else { "" };
            let _ = writeln!(out, "{lead}{}{tail}", row(r));
        }
        out
    }
}

/// Dirichlet posteriors for the initial distribution and each transition row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletMarkovPosterior {
    pub k: usize,
    pub initial_alpha: Vec<f64>,
    pub transition_alpha: Vec<Vec<f64>>,
}

impl DirichletMarkovPosterior {
    pub fn prior(k: usize) -> Self {
        Self::from_counts(&TransitionCounts::new(k))
    }

    pub fn from_counts(counts: &TransitionCounts) -> Self {
        DirichletMarkovPosterior {
            k: counts.k,
            initial_alpha: counts.initial.iter().map(|&c| JEFFREYS_ALPHA + c as f64).collect(),
            transition_alpha: counts
                .transitions
                .iter()
                .map(|row| row.iter().map(|&m| JEFFREYS_ALPHA + m as f64).collect())
                .collect(),
        }
    }

    pub fn alpha_total(&self) -> f64 {
        self.initial_alpha.iter().sum::<f64>() + self.transition_alpha.iter().flatten().sum::<f64>()
    }

    pub fn posterior_mean(&self) -> PosteriorMean {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum();
            v.iter().map(|a| a / s).collect::<Vec<f64>>()
        };
        PosteriorMean {
            initial: norm(&self.initial_alpha),
            transition: self.transition_alpha.iter().map(|r| norm(r)).collect(),
        }
    }

    /// log E[π_{s₁} ∏ₜ p_{sₜ₋₁,sₜ}] under the posterior, in closed form.
    ///
    /// Each Dirichlet row contributes a ratio of Gamma functions in the
    /// counts of test transitions leaving that row; the initial state
    /// contributes `α_{s₁} / Σα`. Returns 0 for an empty path.
    pub fn log_expected_path_probability(&self, states: &[usize]) -> f64 {
        let Some(&first) = states.first() else {
            return 0.0;
        };
        let initial_sum: f64 = self.initial_alpha.iter().sum();
        let mut log_e = self.initial_alpha[first].ln() - initial_sum.ln();
        let path = TransitionCounts::from_paths(self.k, [states]);
        for (alpha_row, used_row) in self.transition_alpha.iter().zip(&path.transitions) {
            let used: u64 = used_row.iter().sum();
            if used == 0 {
                continue;
            }
            let row_sum: f64 = alpha_row.iter().sum();
            let mut row = ln_gamma(row_sum) - ln_gamma(row_sum + used as f64);
            for (&a, &u) in alpha_row.iter().zip(used_row) {
                if u > 0 {
                    row += ln_gamma(a + u as f64) - ln_gamma(a);
                }
            }
            log_e += row;
        }
        log_e
    }
}

/// Draws log-probabilities from Dirichlet(alpha) by normalizing Gamma variates.
pub(crate) struct DirichletSampler {
    gammas: Vec<Gamma<f64>>,
}

impl DirichletSampler {
    pub(crate) fn new(alpha: &[f64]) -> Self {
        DirichletSampler {
            gammas: alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("Dirichlet concentrations are positive"))
                .collect(),
        }
    }

    /// Fills `out` with log p for one draw.
    pub(crate) fn sample_log(&self, rng: &mut Rng, out: &mut [f64]) {
        let mut total = 0.0;
        for (o, g) in out.iter_mut().zip(&self.gammas) {
            let mut v = g.sample(rng);
            if v == 0.0 {
                // shape < 1 can underflow; keep the draw strictly positive
                v = f64::MIN_POSITIVE * rng.random::<f64>().max(f64::EPSILON);
            }
            *o = v;
            total += v;
        }
        let log_total = total.ln();
        for o in out.iter_mut() {
            *o = o.ln() - log_total;
        }
    }
}
