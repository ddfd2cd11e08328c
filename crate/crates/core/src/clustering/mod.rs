//! Partitioning fixation locations into salient regions.
//!
//! Two families are provided: multi-start Lloyd k-means and agglomerative
//! hierarchical clustering with Ward, complete or average (UPGMA) linkage
//! under the L1, L2 or L∞ metric. Labels are 0-based: a model with `k`
//! clusters uses labels `0..k`, numbered in order of first appearance in
//! the training points.

mod hierarchical;
mod kmeans;

use serde::{Deserialize, Serialize};

use crate::data::Point;

pub use hierarchical::{hierarchical, Dendrogram, Merge};
pub use kmeans::{kmeans, kmeans_fit, KmeansFit, MAX_ITERATIONS};

/// Default neighbour count for k-NN assignment.
pub const DEFAULT_KNN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Linf,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::Linf];

    pub fn distance(self, a: Point, b: Point) -> f64 {
        let dx = (a.x - b.x).abs();
        let dy = (a.y - b.y).abs();
        match self {
            Metric::L1 => dx + dy,
            Metric::L2 => dx.hypot(dy),
            Metric::Linf => dx.max(dy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Ward,
    Complete,
    Upgma,
}

impl Linkage {
    pub const ALL: [Linkage; 3] = [Linkage::Ward, Linkage::Complete, Linkage::Upgma];
}

/// How a new point is mapped onto a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AssignmentRule {
    /// Closest centre under L2.
    NearestCentre,
    /// Majority label among the `neighbours` closest training points.
    Knn { neighbours: usize },
}

/// A fitted partition of training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub rule: AssignmentRule,
    /// Metric used for k-NN assignment and, for hierarchical models, for merging.
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linkage: Option<Linkage>,
    /// Coordinate-wise mean of each cluster.
    pub centres: Vec<Point>,
    pub training_points: Vec<Point>,
    pub labels: Vec<usize>,
}

impl ClusterModel {
    /// Builds a model from a labelling, relabelling clusters by first appearance.
    pub(crate) fn from_labels(
        points: &[Point],
        raw_labels: &[usize],
        rule: AssignmentRule,
        metric: Metric,
        linkage: Option<Linkage>,
    ) -> Self {
        let labels = canonical_labels(raw_labels);
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let centres = centroids(points, &labels, k);
        ClusterModel {
            k,
            rule,
            metric,
            linkage,
            centres,
            training_points: points.to_vec(),
            labels,
        }
    }

    pub fn with_rule(mut self, rule: AssignmentRule) -> Self {
        self.rule = rule;
        self
    }

    /// Points carrying `label`.
    pub fn members(&self, label: usize) -> Vec<Point> {
        self.training_points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Label for a new point. Ties resolve to the lowest label.
    pub fn assign(&self, point: Point) -> usize {
        match self.rule {
            AssignmentRule::NearestCentre => nearest_centre(&self.centres, point),
            AssignmentRule::Knn { neighbours } => self.knn_label(point, neighbours),
        }
    }

    pub fn assign_all(&self, points: &[Point]) -> Vec<usize> {
        points.iter().map(|p| self.assign(*p)).collect()
    }

    fn knn_label(&self, point: Point, neighbours: usize) -> usize {
        let mut order: Vec<(f64, usize)> = self
            .training_points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.metric.distance(*p, point), i))
            .collect();
        // (distance, index) ordering puts the lower training index first on ties
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.k];
        for &(_, i) in order.iter().take(neighbours.max(1)) {
            votes[self.labels[i]] += 1;
        }
        let best = votes.iter().copied().max().unwrap_or(0);
        votes.iter().position(|&v| v == best).unwrap_or(0)
    }

    /// Sum of squared L2 distances from each training point to its cluster centre.
    pub fn within_ss(&self) -> f64 {
        self.training_points
            .iter()
            .zip(&self.labels)
            .map(|(p, &l)| squared_l2(*p, self.centres[l]))
            .sum()
    }

    /// Applies a label permutation: old label `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ClusterModel {
        let mut centres = vec![Point::default(); self.k];
        for (old, c) in self.centres.iter().enumerate() {
            centres[perm[old]] = *c;
        }
        ClusterModel {
            centres,
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn squared_l2(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

pub(crate) fn nearest_centre(centres: &[Point], point: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centres.iter().enumerate() {
        let d = squared_l2(*c, point);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub(crate) fn centroids(points: &[Point], labels: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].0 += p.x;
        sums[l].1 += p.y;
        sums[l].2 += 1;
    }
    sums.into_iter()
        .map(|(sx, sy, n)| {
            if n == 0 {
                Point::new(f64::NAN, f64::NAN)
            } else {
                Point::new(sx / n as f64, sy / n as f64)
            }
        })
        .collect()
}

/// Renumbers labels so that they appear as 0, 1, 2, ... in point order.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(raw, _)| *raw == l) {
            Some(&(_, c)) => c,
            None => {
                let c = map.len();
                map.push((l, c));
                c
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt() -> impl Strategy<Value = Point> {
        (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn metric_axioms(a in pt(), b in pt(), c in pt()) {
            for m in Metric::ALL {
                prop_assert_eq!(m.distance(a, a), 0.0);
                prop_assert_eq!(m.distance(a, b), m.distance(b, a));
                prop_assert!(m.distance(a, c) <= m.distance(a, b) + m.distance(b, c) + 1e-9);
            }
        }
    }

    #[test]
    fn metrics_on_known_pair() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(3.0, -4.0);
        assert_eq!(Metric::L1.distance(a, b), 7.0);
        assert_eq!(Metric::L2.distance(a, b), 5.0);
        assert_eq!(Metric::Linf.distance(a, b), 4.0);
    }

    fn two_centre_model() -> ClusterModel {
        let pts = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        ClusterModel::from_labels(&pts, &[0, 1], AssignmentRule::NearestCentre, Metric::L2, None)
    }

    #[test]
    fn nearest_centre_assignment() {
        let m = two_centre_model();
        assert_eq!(m.assign(Point::new(1.0, 1.0)), 0);
        assert_eq!(m.assign(Point::new(9.0, -3.0)), 1);
    }

    #[test]
    fn equidistant_point_takes_lowest_label() {
        let m = two_centre_model();
        assert_eq!(m.assign(Point::new(5.0, 2.0)), 0);
    }

    #[test]
    fn knn_majority_vote() {
        // three nearest neighbours of the origin: two in cluster 0, one in cluster 1
        let pts = vec![
            Point::new(0.1, 0.0),
            Point::new(0.0, 0.2),
            Point::new(-0.15, 0.0),
            Point::new(5.0, 5.0),
            Point::new(6.0, 5.0),
        ];
        let m = ClusterModel::from_labels(
            &pts,
            &[0, 0, 1, 1, 1],
            AssignmentRule::Knn { neighbours: 3 },
            Metric::L2,
            None,
        );
        assert_eq!(m.assign(Point::new(0.0, 0.0)), 0);
        // a 1-1 vote tie goes to the lower label
        let m2 = m.clone().with_rule(AssignmentRule::Knn { neighbours: 2 });
        assert_eq!(m2.assign(Point::new(-0.1, 0.0)), 0);
    }

    #[test]
    fn canonical_relabelling() {
        assert_eq!(canonical_labels(&[4, 4, 2, 7, 2]), vec![0, 0, 1, 2, 1]);
    }
}
