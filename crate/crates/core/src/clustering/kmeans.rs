use rand::seq::index::sample;

use super::{centroids, nearest_centre, squared_l2, AssignmentRule, ClusterModel, Metric};
use crate::data::Point;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Lloyd iteration cap per restart.
pub const MAX_ITERATIONS: usize = 100;

/// Result of a multi-start k-means run.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub model: ClusterModel,
    /// Within-cluster sum of squared L2 distances of the winning restart.
    pub objective: f64,
    pub best_restart: usize,
    /// Objective after each assignment step of the winning restart.
    pub trace: Vec<f64>,
}

struct Restart {
    labels: Vec<usize>,
    objective: f64,
    trace: Vec<f64>,
}

fn assign_step(points: &[Point], centres: &[Point], labels: &mut [usize]) -> (f64, bool) {
    let mut objective = 0.0;
    let mut changed = false;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let c = nearest_centre(centres, *p);
        objective += squared_l2(*p, centres[c]);
        if *l != c {
            *l = c;
            changed = true;
        }
    }
    (objective, changed)
}

/// Moves each empty centre onto the point farthest from its own centre.
fn repair_empty(points: &[Point], centres: &mut [Point], labels: &[usize], k: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut repaired = false;
    let mut taken = vec![false; points.len()];
    for empty in (0..k).filter(|&c| sizes[c] == 0) {
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(i, p)| (squared_l2(*p, centres[labels[i]]), i))
            .fold(None, |best: Option<(f64, usize)>, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            });
        if let Some((_, i)) = far {
            taken[i] = true;
            centres[empty] = points[i];
            repaired = true;
        }
    }
    repaired
}

fn run_restart(points: &[Point], k: usize, seed: u64) -> Restart {
    let mut rng = rng_from_seed(seed);
    let mut centres: Vec<Point> = sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i])
        .collect();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (obj, changed) = assign_step(points, &centres, &mut labels);
        trace.push(obj);
        iterations += 1;
        let fresh = centroids(points, &labels, k);
        let mut repaired = false;
        for (c, f) in centres.iter_mut().zip(&fresh) {
            if !f.x.is_nan() {
                *c = *f;
            }
        }
        if fresh.iter().any(|c| c.x.is_nan()) {
            repaired = repair_empty(points, &mut centres, &labels, k);
        }
        if (!changed && !repaired) || iterations >= MAX_ITERATIONS + k {
            break;
        }
    }
    // the returned partition is the final assignment; centres are recomputed from it
    let c = centroids(points, &labels, k);
    let objective = if c.iter().all(|p| !p.x.is_nan()) {
        points.iter().zip(&labels).map(|(p, &l)| squared_l2(*p, c[l])).sum()
    } else {
        f64::INFINITY
    };
    Restart {
        labels,
        objective,
        trace,
    }
}

fn validate(points: &[Point], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            need: k,
            got: points.len(),
        });
    }
    let mut distinct: Vec<(u64, u64)> = points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::DegenerateCluster(format!(
            "{} distinct locations cannot form {k} clusters",
            distinct.len()
        )));
    }
    Ok(())
}

/// Multi-start Lloyd k-means with Forgy initialization.
///
/// Restart `r` draws its k distinct starting points from a stream seeded
/// by `(seed, r)`, so adding restarts never changes earlier ones.
pub fn kmeans_fit(points: &[Point], k: usize, restarts: usize, seed: u64) -> Result<KmeansFit> {
    validate(points, k)?;
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut best: Option<(usize, Restart)> = None;
    for r in 0..restarts {
        let run = run_restart(points, k, derive_seed(seed, &[r as u64]));
        let better = match &best {
            None => true,
            Some((_, b)) => run.objective < b.objective,
        };
        if better {
            best = Some((r, run));
        }
    }
    let (best_restart, run) = best.expect("restarts >= 1");
    if !run.objective.is_finite() {
        return Err(Error::DegenerateCluster(format!(
            "k-means left an empty cluster after {MAX_ITERATIONS} iterations"
        )));
    }
    let model = ClusterModel::from_labels(points, &run.labels, AssignmentRule::NearestCentre, Metric::L2, None);
    Ok(KmeansFit {
        objective: model.within_ss(),
        model,
        best_restart,
        trace: run.trace,
    })
}

pub fn kmeans(points: &[Point], k: usize, restarts: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_fit(points, k, restarts, seed).map(|f| f.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
            .collect()
    }

    /// Exhaustive optimum of the within-cluster sum of squares over all 2-partitions.
    fn brute_force_two_partition(points: &[Point]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let c = centroids(points, &labels, 2);
            let obj: f64 = points.iter().zip(&labels).map(|(p, &l)| squared_l2(*p, c[l])).sum();
            best = best.min(obj);
        }
        best
    }

    #[test]
    fn symmetric_pairs() {
        let pts = [(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)].map(Point::from);
        let m = kmeans(&pts, 2, 10, 1).unwrap();
        let mut centres: Vec<(f64, f64)> = m.centres.iter().map(|c| (c.x, c.y)).collect();
        centres.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(centres, vec![(0.0, 0.5), (10.0, 0.5)]);
        assert_eq!(m.labels[0], m.labels[1]);
        assert_eq!(m.labels[2], m.labels[3]);
        assert_ne!(m.labels[0], m.labels[2]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = random_points(13, 3);
        let m = kmeans(&pts, 1, 3, 0).unwrap();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / 13.0;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / 13.0;
        assert!((m.centres[0].x - mx).abs() < 1e-12 && (m.centres[0].y - my).abs() < 1e-12);
    }

    #[test]
    fn six_points_match_exhaustive_optimum() {
        // Forgy starts can all land in one local optimum, so only the rate is asserted
        let mut hits = 0;
        for seed in 0..20 {
            let pts = random_points(6, 100 + seed);
            let fit = kmeans_fit(&pts, 2, 10, seed).unwrap();
            let opt = brute_force_two_partition(&pts);
            assert!(fit.objective >= opt - 1e-9);
            if (fit.objective - opt).abs() < 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn objective_non_increasing() {
        for seed in 0..10 {
            let pts = random_points(60, seed);
            let fit = kmeans_fit(&pts, 4, 1, seed).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.trace);
            }
        }
    }

    #[test]
    fn more_restarts_never_worse() {
        for seed in 0..10 {
            let pts = random_points(40, 50 + seed);
            let few = kmeans_fit(&pts, 5, 2, seed).unwrap();
            let many = kmeans_fit(&pts, 5, 10, seed).unwrap();
            assert!(many.objective <= few.objective + 1e-12);
        }
    }

    #[test]
    fn converged_partition_is_voronoi_consistent() {
        let pts = random_points(50, 9);
        let m = kmeans(&pts, 3, 10, 9).unwrap();
        for (p, &l) in pts.iter().zip(&m.labels) {
            assert_eq!(m.assign(*p), l);
        }
        assert!(m.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = random_points(30, 4);
        assert_eq!(kmeans(&pts, 3, 5, 42).unwrap(), kmeans(&pts, 3, 5, 42).unwrap());
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let mut pts = vec![Point::new(0.0, 0.0); 10];
        pts.push(Point::new(1.0, 0.0));
        pts.push(Point::new(2.0, 0.0));
        let m = kmeans(&pts, 3, 5, 0).unwrap();
        assert!(m.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn rejects_bad_k() {
        let pts = random_points(3, 0);
        assert!(kmeans(&pts, 0, 1, 0).is_err());
        assert!(kmeans(&pts, 4, 1, 0).is_err());
        assert!(kmeans(&pts, 2, 0, 0).is_err());
        assert!(kmeans(&[Point::default(); 4], 2, 1, 0).is_err());
    }
}
