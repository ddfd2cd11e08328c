use serde::{Deserialize, Serialize};

use super::{AssignmentRule, ClusterModel, Linkage, Metric, DEFAULT_KNN};
use crate::data::Point;
use crate::error::{Error, Result};

/// One agglomeration step. Clusters are identified by the smallest point
/// index they contain; `left < right` and `left` survives the merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Lance–Williams dissimilarity at which the pair merged
    /// (squared for Ward).
    pub height: f64,
    pub size: usize,
}

/// Full merge history from singletons to one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub metric: Metric,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Builds the dendrogram with Lance–Williams updates on a dense
    /// dissimilarity matrix.
    ///
    /// Complete and UPGMA work on the metric distances; Ward works on their
    /// squares. The closest active pair merges next, with the
    /// lexicographically smallest `(i, j)` winning ties.
    pub fn build(points: &[Point], linkage: Linkage, metric: Metric) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::TooFewPoints { need: 1, got: 0 });
        }
        let mut d = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let mut v = metric.distance(points[i], points[j]);
                if linkage == Linkage::Ward {
                    v *= v;
                }
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        let mut active = vec![true; n];
        let mut size = vec![1usize; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for i in (0..n).filter(|&i| active[i]) {
                let row = &d[i * n..(i + 1) * n];
                for j in (i + 1)..n {
                    if active[j] && row[j] < best.0 {
                        best = (row[j], i, j);
                    }
                }
            }
            let (height, a, b) = best;
            let (na, nb) = (size[a] as f64, size[b] as f64);
            let dab = d[a * n + b];
            for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
                let (dac, dbc) = (d[a * n + c], d[b * n + c]);
                let nc = size[c] as f64;
                let v = match linkage {
                    Linkage::Complete => dac.max(dbc),
                    Linkage::Upgma => (na * dac + nb * dbc) / (na + nb),
                    Linkage::Ward => ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc),
                };
                d[a * n + c] = v;
                d[c * n + a] = v;
            }
            active[b] = false;
            size[a] += size[b];
            merges.push(Merge {
                left: a,
                right: b,
                height,
                size: size[a],
            });
        }
        Ok(Dendrogram {
            n,
            linkage,
            metric,
            merges,
        })
    }

    /// Labels after applying the first `n - k` merges, numbered by first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if k > self.n {
            return Err(Error::TooFewPoints { need: k, got: self.n });
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..self.n - k] {
            let ra = find(&mut parent, m.left);
            let rb = find(&mut parent, m.right);
            parent[rb] = ra;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Ok(super::canonical_labels(&roots))
    }

    /// Cluster model at `k` clusters, assigning new points by k-NN.
    pub fn model(&self, points: &[Point], k: usize, neighbours: usize) -> Result<ClusterModel> {
        if points.len() != self.n {
            return Err(Error::InvalidArgument("point count differs from dendrogram".into()));
        }
        let labels = self.cut(k)?;
        Ok(ClusterModel::from_labels(
            points,
            &labels,
            AssignmentRule::Knn { neighbours },
            self.metric,
            Some(self.linkage),
        ))
    }
}

/// Agglomerative clustering cut at exactly `k` clusters, with k-NN assignment
/// using the default neighbour count.
pub fn hierarchical(points: &[Point], k: usize, linkage: Linkage, metric: Metric) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            need: k,
            got: points.len(),
        });
    }
    Dendrogram::build(points, linkage, metric)?.model(points, k, DEFAULT_KNN)
}

#[cfg(test)]
pub(crate) mod reference {
    //! Naive agglomeration that recomputes every cluster dissimilarity from
    //! its definition over member pairs at each step.

    use super::*;

    fn cluster_distance(points: &[Point], a: &[usize], b: &[usize], linkage: Linkage, metric: Metric) -> f64 {
        let d = |i: usize, j: usize| metric.distance(points[i], points[j]);
        match linkage {
            Linkage::Complete => a
                .iter()
                .flat_map(|&i| b.iter().map(move |&j| (i, j)))
                .map(|(i, j)| d(i, j))
                .fold(0.0, f64::max),
            Linkage::Upgma => {
                let s: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| d(i, j))).sum();
                s / (a.len() * b.len()) as f64
            }
            Linkage::Ward => {
                // 2|A||B|/(|A|+|B|) * (mean_AB d² - mean_AA d²/2 - mean_BB d²/2),
                // means over ordered pairs including the diagonal
                let mean_sq = |x: &[usize], y: &[usize]| {
                    let s: f64 = x
                        .iter()
                        .flat_map(|&i| y.iter().map(move |&j| d(i, j).powi(2)))
                        .sum();
                    s / (x.len() * y.len()) as f64
                };
                let (na, nb) = (a.len() as f64, b.len() as f64);
                2.0 * na * nb / (na + nb) * (mean_sq(a, b) - 0.5 * mean_sq(a, a) - 0.5 * mean_sq(b, b))
            }
        }
    }

    pub fn naive_partition(points: &[Point], k: usize, linkage: Linkage, metric: Metric) -> Vec<usize> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        while clusters.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in (a + 1)..clusters.len() {
                    let v = cluster_distance(points, &clusters[a], &clusters[b], linkage, metric);
                    if v < best.0 {
                        best = (v, a, b);
                    }
                }
            }
            let moved = clusters.remove(best.2);
            clusters[best.1].extend(moved);
        }
        let mut labels = vec![0; points.len()];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                labels[i] = c;
            }
        }
        crate::clustering::canonical_labels(&labels)
    }
}
