//! Synthetic fixation data from a known Markov mixture.
//!
//! Each subject's states follow the specified chain and each fixation is an
//! axis-aligned Gaussian draw around its state's centre. True states are
//! kept apart from the dataset and written to a separate sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColourScheme, Dataset, FixationSequence, Orientation, Point, SubjectId};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Axis-aligned Gaussian emission for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub mean: Point,
    pub sd: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixationCount {
    Fixed(usize),
    Range { min: usize, max: usize },
}

/// `duration = base_ms · (1 + coupling · g(x)/g_max) · LogNormal(0, 0.25)`,
/// where `g` is the true location density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub base_ms: f64,
    pub density_coupling: f64,
}

fn default_image() -> u32 {
    1
}

fn default_scheme() -> ColourScheme {
    ColourScheme::Normal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub k: usize,
    pub initial_probs: Vec<f64>,
    pub transition_matrix: Vec<Vec<f64>>,
    pub emissions: Vec<Emission>,
    pub subjects: usize,
    pub fixations_per_subject: FixationCount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_model: Option<DurationModel>,
    pub seed: u64,
    #[serde(default = "default_image")]
    pub image_id: u32,
    #[serde(default = "default_scheme")]
    pub scheme: ColourScheme,
}

impl SimSpec {
    /// Three sticky, well-separated regions; 10 subjects × 60 fixations.
    pub fn three_state_example(seed: u64) -> Self {
        SimSpec {
            k: 3,
            initial_probs: vec![0.4, 0.3, 0.3],
            transition_matrix: vec![
                vec![0.8, 0.1, 0.1],
                vec![0.1, 0.8, 0.1],
                vec![0.1, 0.1, 0.8],
            ],
            emissions: vec![
                Emission {
                    mean: Point::new(-300.0, -100.0),
                    sd: (40.0, 40.0),
                },
                Emission {
                    mean: Point::new(300.0, -100.0),
                    sd: (40.0, 40.0),
                },
                Emission {
                    mean: Point::new(0.0, 250.0),
                    sd: (40.0, 40.0),
                },
            ],
            subjects: 10,
            fixations_per_subject: FixationCount::Fixed(60),
            duration_model: Some(DurationModel {
                base_ms: 200.0,
                density_coupling: 1.0,
            }),
            seed,
            image_id: 1,
            scheme: ColourScheme::Normal,
        }
    }

    /// A single Gaussian blob: fixations are i.i.d.
    pub fn iid_blob(seed: u64) -> Self {
        SimSpec {
            k: 1,
            initial_probs: vec![1.0],
            transition_matrix: vec![vec![1.0]],
            emissions: vec![Emission {
                mean: Point::new(0.0, 0.0),
                sd: (150.0, 100.0),
            }],
            subjects: 10,
            fixations_per_subject: FixationCount::Fixed(60),
            duration_model: Some(DurationModel {
                base_ms: 200.0,
                density_coupling: 1.0,
            }),
            seed,
            image_id: 1,
            scheme: ColourScheme::Grayscale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.initial_probs.len() != k || self.transition_matrix.len() != k || self.emissions.len() != k {
            return bad(format!("expected {k} initial probabilities, transition rows and emissions"));
        }
        let stochastic = |v: &[f64]| {
            v.len() == k
                && v.iter().all(|p| *p >= 0.0 && p.is_finite())
                && (v.iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL
        };
        if !stochastic(&self.initial_probs) {
            return bad("initial probabilities must be non-negative and sum to 1".into());
        }
        if let Some(i) = self.transition_matrix.iter().position(|r| !stochastic(r)) {
            return bad(format!("transition row {i} must be non-negative and sum to 1"));
        }
        if self.emissions.iter().any(|e| !(e.sd.0 > 0.0 && e.sd.1 > 0.0)) {
            return bad("emission standard deviations must be positive".into());
        }
        if self.subjects == 0 {
            return bad("need at least one subject".into());
        }
        match self.fixations_per_subject {
            FixationCount::Fixed(0) => return bad("need at least one fixation per subject".into()),
            FixationCount::Range { min, max } if min == 0 || min > max => {
                return bad("fixation range must satisfy 1 <= min <= max".into())
            }
            _ => {}
        }
        if let Some(d) = self.duration_model {
            if !(d.base_ms > 0.0) || !(d.density_coupling >= 0.0) {
                return bad("duration base must be positive and coupling non-negative".into());
            }
        }
        if self.image_id == 0 {
            return bad("image id must be positive".into());
        }
        Ok(())
    }

    fn subject_prefix(&self) -> char {
        match self.scheme {
            ColourScheme::Normal => 'n',
            ColourScheme::Abnormal => 'a',
            ColourScheme::Grayscale => 'g',
        }
    }

    /// True location density: the emission mixture weighted by the initial probabilities.
    pub fn true_density(&self, x: Point) -> f64 {
        self.initial_probs
            .iter()
            .zip(&self.emissions)
            .map(|(w, e)| {
                let u = (x.x - e.mean.x) / e.sd.0;
                let v = (x.y - e.mean.y) / e.sd.1;
                w * (-0.5 * (u * u + v * v)).exp() / (std::f64::consts::TAU * e.sd.0 * e.sd.1)
            })
            .sum()
    }
}

/// A simulated dataset with its hidden state paths.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub states: BTreeMap<(u32, SubjectId), Vec<usize>>,
}

impl Simulation {
    /// Sidecar CSV: `image,subject,fixation_index,state`.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("image,subject,fixation_index,state\n");
        for ((image, subject), states) in &self.states {
            for (i, s) in states.iter().enumerate() {
                let _ = writeln!(out, "{image},{subject},{},{s}", i + 1);
            }
        }
        out
    }

    /// Combines simulations of different images into one dataset.
    pub fn merge(parts: impl IntoIterator<Item = Simulation>) -> Result<Simulation> {
        let mut seqs = Vec::new();
        let mut states = BTreeMap::new();
        for p in parts {
            seqs.extend(p.dataset.sequences().cloned());
            states.extend(p.states);
        }
        Ok(Simulation {
            dataset: Dataset::from_sequences(seqs)?,
            states,
        })
    }
}

fn draw_categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding leftovers land on the last state with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let g_max = spec
        .emissions
        .iter()
        .map(|e| spec.true_density(e.mean))
        .fold(0.0f64, f64::max);
    let noise = Normal::new(0.0, 0.25).expect("valid log-normal scale");
    let mut seqs = Vec::with_capacity(spec.subjects);
    let mut states = BTreeMap::new();
    for subject in 0..spec.subjects {
        let mut rng = rng_from_seed(derive_seed(spec.seed, &[subject as u64]));
        let n = match spec.fixations_per_subject {
            FixationCount::Fixed(n) => n,
            FixationCount::Range { min, max } => rng.random_range(min..=max),
        };
        let mut path = Vec::with_capacity(n);
        let mut points = Vec::with_capacity(n);
        let mut durations = Vec::with_capacity(n);
        let mut state = draw_categorical(&mut rng, &spec.initial_probs);
        for t in 0..n {
            if t > 0 {
                state = draw_categorical(&mut rng, &spec.transition_matrix[state]);
            }
            let e = spec.emissions[state];
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            let p = Point::new(e.mean.x + e.sd.0 * zx, e.mean.y + e.sd.1 * zy);
            let d = match spec.duration_model {
                Some(m) => {
                    let g = spec.true_density(p) / g_max;
                    m.base_ms * (1.0 + m.density_coupling * g) * Distribution::<f64>::sample(&noise, &mut rng).exp()
                }
                None => 200.0,
            };
            path.push(state);
            points.push(p);
            durations.push(d);
        }
        let subject_id = SubjectId::new(format!("{}{}", spec.subject_prefix(), subject + 1));
        states.insert((spec.image_id, subject_id.clone()), path);
        seqs.push(FixationSequence {
            subject_id,
            image_id: spec.image_id,
            colour_scheme: spec.scheme,
            orientation: Orientation::Landscape,
            points,
            durations,
            indices: (1..=n as u32).collect(),
        });
    }
    Ok(Simulation {
        dataset: Dataset::from_sequences(seqs)?,
        states,
    })
}

/// Empirical chain frequencies recovered from true states, compared with the `SimSpec` they were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCheck {
    pub empirical_initial: Vec<f64>,
    /// Row-normalized; rows with no observed transitions are NaN-free zeros.
    pub empirical_transition: Vec<Vec<f64>>,
    pub initial_deviation: f64,
    /// Sup-norm over rows that have at least one observed transition.
    pub transition_deviation: f64,
    pub transitions_observed: u64,
    pub flagged: bool,
}

/// Transition deviation above which an empirical check is flagged.
pub const DEVIATION_FLAG: f64 = 0.2;

pub fn empirical_check(
    dataset: &Dataset,
    spec: &SimSpec,
    states: &BTreeMap<(u32, SubjectId), Vec<usize>>,
) -> Result<EmpiricalCheck> {
    let k = spec.k;
    let mut initial = vec![0u64; k];
    let mut trans = vec![vec![0u64; k]; k];
    for seq in dataset.sequences() {
        let path = states
            .get(&(seq.image_id, seq.subject_id.clone()))
            .ok_or_else(|| Error::InvalidArgument(format!("no states for subject {} image {}", seq.subject_id, seq.image_id)))?;
        if path.len() != seq.len() || path.iter().any(|&s| s >= k) {
            return Err(Error::InvalidArgument(format!(
                "state path for subject {} image {} does not match the sequence",
                seq.subject_id, seq.image_id
            )));
        }
        initial[path[0]] += 1;
        for w in path.windows(2) {
            trans[w[0]][w[1]] += 1;
        }
    }
    let freq = |v: &[u64]| {
        let s: u64 = v.iter().sum();
        v.iter()
            .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
            .collect::<Vec<f64>>()
    };
    let empirical_initial = freq(&initial);
    let empirical_transition: Vec<Vec<f64>> = trans.iter().map(|r| freq(r)).collect();
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let initial_deviation = sup(&empirical_initial, &spec.initial_probs);
    let transition_deviation = (0..k)
        .filter(|&i| trans[i].iter().sum::<u64>() > 0)
        .map(|i| sup(&empirical_transition[i], &spec.transition_matrix[i]))
        .fold(0.0, f64::max);
    Ok(EmpiricalCheck {
        empirical_initial,
        empirical_transition,
        initial_deviation,
        transition_deviation,
        transitions_observed: trans.iter().flatten().sum(),
        flagged: transition_deviation > DEVIATION_FLAG,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{group_sequences, parse_str, write_records, IngestFormat};

    #[test]
    fn single_state_mean_within_bound() {
        let spec = SimSpec::iid_blob(3);
        let sim = simulate(&spec).unwrap();
        let pts: Vec<Point> = sim.dataset.sequences().flat_map(|s| s.points.clone()).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        assert!(mx.abs() < 4.0 * 150.0 / n.sqrt());
        assert!(my.abs() < 4.0 * 100.0 / n.sqrt());
    }

    fn identity_spec(seed: u64) -> SimSpec {
        let mut spec = SimSpec::three_state_example(seed);
        spec.transition_matrix = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        spec
    }

    #[test]
    fn identity_matrix_keeps_state() {
        let spec = identity_spec(1);
        let sim = simulate(&spec).unwrap();
        for path in sim.states.values() {
            assert!(path.iter().all(|&s| s == path[0]));
        }
        let check = empirical_check(&sim.dataset, &spec, &sim.states).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(check.empirical_transition[i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn transition_frequencies_close_to_spec() {
        for seed in 0..5 {
            let spec = SimSpec::three_state_example(seed);
            let sim = simulate(&spec).unwrap();
            let check = empirical_check(&sim.dataset, &spec, &sim.states).unwrap();
            assert!(check.transition_deviation < 0.1, "seed {seed}: {}", check.transition_deviation);
            assert!(!check.flagged);
            assert_eq!(check.transitions_observed, 10 * 59);
        }
    }

    #[test]
    fn deviation_shrinks_with_more_fixations() {
        let mut short = 0.0;
        let mut long = 0.0;
        for seed in 0..5 {
            let mut spec = SimSpec::three_state_example(seed);
            let sim = simulate(&spec).unwrap();
            short += empirical_check(&sim.dataset, &spec, &sim.states).unwrap().transition_deviation;
            spec.fixations_per_subject = FixationCount::Fixed(600);
            let sim = simulate(&spec).unwrap();
            long += empirical_check(&sim.dataset, &spec, &sim.states).unwrap().transition_deviation;
        }
        assert!(long < short);
    }

    #[test]
    fn unrelated_data_is_flagged() {
        let spec = SimSpec::three_state_example(1);
        let mut cyclic = SimSpec::three_state_example(2);
        cyclic.transition_matrix = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let other = simulate(&cyclic).unwrap();
        let check = empirical_check(&other.dataset, &spec, &other.states).unwrap();
        assert!(check.flagged);
    }

    #[test]
    fn seed_determinism() {
        let spec = SimSpec::three_state_example(9);
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn round_trips_through_ingestion() {
        let sim = simulate(&SimSpec::three_state_example(4)).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &sim.dataset.records(), IngestFormat::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = group_sequences(&parse_str(&text, IngestFormat::default()).unwrap()).unwrap();
        assert_eq!(back, sim.dataset);
        assert!(back.sequences().flat_map(|s| &s.durations).all(|d| *d > 0.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SimSpec::three_state_example(0);
        spec.transition_matrix[1] = vec![0.5, 0.5, 0.1];
        assert!(matches!(simulate(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = SimSpec::three_state_example(0);
        spec.initial_probs = vec![0.5, 0.5];
        assert!(simulate(&spec).is_err());
        let mut spec = SimSpec::three_state_example(0);
        spec.fixations_per_subject = FixationCount::Range { min: 5, max: 2 };
        assert!(simulate(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SimSpec::three_state_example(5);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SimSpec>(&json).unwrap(), spec);
        let ranged = r#"{"k":1,"initial_probs":[1.0],"transition_matrix":[[1.0]],
            "emissions":[{"mean":{"x":0,"y":0},"sd":[1,1]}],"subjects":2,
            "fixations_per_subject":{"min":3,"max":5},"seed":1}"#;
        let spec: SimSpec = serde_json::from_str(ranged).unwrap();
        let sim = simulate(&spec).unwrap();
        assert!(sim.dataset.sequences().all(|s| (3..=5).contains(&s.len())));
    }
}
