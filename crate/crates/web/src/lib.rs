//! Browser demo bindings. Every export takes plain numbers and returns a
//! JSON string; the page in `www/` draws the results on canvases.
//!
//! The `*_json` functions hold the logic so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fixmark_core::classify::{best_threshold, roc, split_by_colour, BestThreshold, RocCurve};
use fixmark_core::markov::{fit_image_model, score_image, BfEstimator, PosteriorMean, ScoreConfig};
use fixmark_core::rng::derive_seed;
use fixmark_core::simulate::{simulate, Emission, FixationCount, SimSpec, Simulation};
use fixmark_core::{ColourScheme, Point};

/// Scene parameters shared by the scene and Bayes-factor views.
#[derive(Debug, Clone, Copy)]
pub struct Scene {
    pub seed: u32,
    /// Number of salient regions; 1 gives a single i.i.d. blob.
    pub regions: usize,
    /// Probability of staying in the current region.
    pub stickiness: f64,
    pub subjects: usize,
    pub fixations: usize,
}

impl Scene {
    fn spec(&self, image_id: u32, scheme: ColourScheme) -> Result<SimSpec, String> {
        let k = self.regions;
        if !(1..=8).contains(&k) {
            return Err("regions must be between 1 and 8".into());
        }
        if !(0.0..=1.0).contains(&self.stickiness) {
            return Err("stickiness must lie in [0, 1]".into());
        }
        let off = if k > 1 { (1.0 - self.stickiness) / (k - 1) as f64 } else { 0.0 };
        let (emissions, transition_matrix) = if k == 1 {
            let blob = Emission {
                mean: Point::new(0.0, 0.0),
                sd: (150.0, 100.0),
            };
            (vec![blob], vec![vec![1.0]])
        } else {
            let emissions = (0..k)
                .map(|i| {
                    let a = i as f64 * std::f64::consts::TAU / k as f64;
                    Emission {
                        mean: Point::new(280.0 * a.cos(), 200.0 * a.sin()),
                        sd: (40.0, 40.0),
                    }
                })
                .collect();
            let p = (0..k)
                .map(|i| (0..k).map(|j| if i == j { self.stickiness } else { off }).collect())
                .collect();
            (emissions, p)
        };
        Ok(SimSpec {
            k,
            initial_probs: vec![1.0 / k as f64; k],
            transition_matrix,
            emissions,
            subjects: self.subjects,
            fixations_per_subject: FixationCount::Fixed(self.fixations),
            duration_model: None,
            seed: derive_seed(self.seed as u64, &[image_id as u64]),
            image_id,
            scheme,
        })
    }

    fn simulate(&self) -> Result<Simulation, String> {
        simulate(&self.spec(1, ColourScheme::Normal)?).map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct SubjectPath {
    id: String,
    points: Vec<(f64, f64)>,
    true_states: Vec<usize>,
    fitted_states: Vec<usize>,
}

#[derive(Serialize)]
struct Grid {
    x: (f64, f64),
    y: (f64, f64),
    width: usize,
    height: usize,
    /// Row-major from the lowest y.
    density: Vec<f64>,
    /// Fitted cluster of each cell centre.
    cluster: Vec<usize>,
}

#[derive(Serialize)]
struct SceneView {
    k: usize,
    subjects: Vec<SubjectPath>,
    centres: Vec<(f64, f64)>,
    grid: Grid,
    posterior_mean: PosteriorMean,
    rendered: String,
}

/// Simulates one image, fits the `k`-region model on all subjects and
/// returns paths, fitted labels and a density heatmap.
pub fn scene_json(scene: Scene, k: usize, width: usize, height: usize) -> Result<String, String> {
    let sim = scene.simulate()?;
    let model = fit_image_model(&sim.dataset, 1, ColourScheme::Normal, k, &ScoreConfig::default())
        .map_err(|e| e.to_string())?;
    let subjects = sim
        .dataset
        .canonical_order()
        .map(|s| SubjectPath {
            id: s.subject_id.to_string(),
            points: s.points.iter().map(|p| (p.x, p.y)).collect(),
            true_states: sim.states[&(1, s.subject_id.clone())].clone(),
            fitted_states: model.states(&s.points),
        })
        .collect();
    let (xr, yr) = model.null_density.extent(2.0);
    let cells = model.null_density.grid(xr, yr, width.max(1), height.max(1));
    let grid = Grid {
        x: xr,
        y: yr,
        width: width.max(1),
        height: height.max(1),
        cluster: cells.iter().map(|&(x, y, _)| model.clusters.assign(Point::new(x, y))).collect(),
        density: cells.into_iter().map(|c| c.2).collect(),
    };
    let mean = model.posterior.posterior_mean();
    let view = SceneView {
        k: model.k(),
        subjects,
        centres: model.clusters.centres.iter().map(|p| (p.x, p.y)).collect(),
        grid,
        rendered: mean.render(),
        posterior_mean: mean,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CurvePoint {
    k: usize,
    log2_bf: f64,
    closed_form_log2_bf: f64,
}

#[derive(Serialize)]
struct CurveView {
    points: Vec<CurvePoint>,
    selected_k: usize,
    strongest_log2_bf: f64,
    rendered: String,
}

fn score_config(mc_samples: usize, seed: u32) -> ScoreConfig {
    ScoreConfig {
        mc_samples,
        estimator: if mc_samples == 0 {
            BfEstimator::ClosedForm
        } else {
            BfEstimator::MonteCarlo
        },
        seed: seed as u64,
        ..ScoreConfig::default()
    }
}

/// Leave-one-subject-out Bayes factor for k = 1..=k_max on the scene.
/// `mc_samples = 0` uses the closed form.
pub fn bf_curve_json(scene: Scene, k_max: usize, mc_samples: usize) -> Result<String, String> {
    if k_max < 2 {
        return Err("k_max must be at least 2".into());
    }
    let sim = scene.simulate()?;
    let report = score_image(&sim.dataset, 1, ColourScheme::Normal, 1..=k_max, &score_config(mc_samples, scene.seed))
        .map_err(|e| e.to_string())?;
    let view = CurveView {
        points: report
            .per_k
            .values()
            .map(|s| CurvePoint {
                k: s.k,
                log2_bf: s.combined_log2_bf,
                closed_form_log2_bf: s.closed_form_bf.log2(),
            })
            .collect(),
        selected_k: report.selected_k,
        strongest_log2_bf: report.strongest_log2_bf,
        rendered: report.render(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RocView {
    curve: RocCurve,
    best: Option<BestThreshold>,
    coloured_log2: Vec<f64>,
    grayscale_log2: Vec<f64>,
}

/// Scores `images` Markovian coloured images against as many i.i.d.
/// grayscale images and returns the ROC of their strongest log2 BFs.
pub fn roc_json(seed: u32, images: usize, stickiness: f64, regions: usize, k_max: usize) -> Result<String, String> {
    if images == 0 {
        return Err("need at least one image per group".into());
    }
    let markov = Scene {
        seed,
        regions,
        stickiness,
        subjects: 5,
        fixations: 30,
    };
    let iid = Scene { regions: 1, ..markov };
    let cfg = score_config(0, seed);
    let mut reports = Vec::new();
    for i in 0..images as u32 {
        for (scene, scheme) in [(markov, ColourScheme::Normal), (iid, ColourScheme::Grayscale)] {
            let spec = scene.spec(i + 1, scheme)?;
            let sim = simulate(&spec).map_err(|e| e.to_string())?;
            reports.push(score_image(&sim.dataset, i + 1, scheme, 1..=k_max.max(2), &cfg).map_err(|e| e.to_string())?);
        }
    }
    let (coloured_log2, grayscale_log2) = split_by_colour(&reports);
    let curve = roc(&coloured_log2, &grayscale_log2).map_err(|e| e.to_string())?;
    let view = RocView {
        best: best_threshold(&curve),
        curve,
        coloured_log2,
        grayscale_log2,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_scene(
    seed: u32,
    regions: usize,
    stickiness: f64,
    subjects: usize,
    fixations: usize,
    k: usize,
    width: usize,
    height: usize,
) -> Result<String, JsError> {
    let scene = Scene {
        seed,
        regions,
        stickiness,
        subjects,
        fixations,
    };
    js(scene_json(scene, k, width, height))
}

#[wasm_bindgen]
pub fn bf_curve(
    seed: u32,
    regions: usize,
    stickiness: f64,
    subjects: usize,
    fixations: usize,
    k_max: usize,
    mc_samples: usize,
) -> Result<String, JsError> {
    let scene = Scene {
        seed,
        regions,
        stickiness,
        subjects,
        fixations,
    };
    js(bf_curve_json(scene, k_max, mc_samples))
}

#[wasm_bindgen]
pub fn roc_demo(seed: u32, images: usize, stickiness: f64, regions: usize, k_max: usize) -> Result<String, JsError> {
    js(roc_json(seed, images, stickiness, regions, k_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn scene(regions: usize) -> Scene {
        Scene {
            seed: 3,
            regions,
            stickiness: 0.85,
            subjects: 6,
            fixations: 40,
        }
    }

    #[test]
    fn scene_has_paths_and_grid() {
        let v: Value = serde_json::from_str(&scene_json(scene(3), 3, 20, 15).unwrap()).unwrap();
        assert_eq!(v["subjects"].as_array().unwrap().len(), 6);
        assert_eq!(v["grid"]["density"].as_array().unwrap().len(), 300);
        assert_eq!(v["centres"].as_array().unwrap().len(), 3);
        assert!(v["rendered"].as_str().unwrap().starts_with("pi = ("));
        let path = &v["subjects"][0];
        assert_eq!(path["points"].as_array().unwrap().len(), 40);
        assert_eq!(path["fitted_states"].as_array().unwrap().len(), 40);
    }

    #[test]
    fn curve_selects_the_true_region_count() {
        let v: Value = serde_json::from_str(&bf_curve_json(scene(3), 5, 0).unwrap()).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 5);
        assert_eq!(v["points"][0]["log2_bf"], 0.0);
        assert_eq!(v["selected_k"], 3);
        assert!(v["strongest_log2_bf"].as_f64().unwrap() < 0.0);
    }

    #[test]
    fn roc_separates_sticky_from_iid() {
        let v: Value = serde_json::from_str(&roc_json(1, 4, 0.9, 3, 4).unwrap()).unwrap();
        assert_eq!(v["coloured_log2"].as_array().unwrap().len(), 4);
        assert!(v["curve"]["auc"].as_f64().unwrap() > 0.9);
        assert_eq!(v["curve"]["points"][0]["threshold"], "-inf");
    }

    #[test]
    fn bad_parameters_are_reported() {
        assert!(scene_json(scene(0), 2, 4, 4).is_err());
        assert!(bf_curve_json(scene(3), 1, 0).is_err());
        assert!(roc_json(1, 0, 0.9, 3, 4).is_err());
    }

    #[test]
    fn outputs_are_deterministic() {
        assert_eq!(bf_curve_json(scene(2), 3, 200), bf_curve_json(scene(2), 3, 200));
    }
}
