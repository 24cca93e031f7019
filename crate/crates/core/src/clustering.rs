//! Density peaks clustering with k-nearest-neighbour density (DPC-KNN).
//!
//! For each point `i`:
//!
//! * `ρ_i = exp(-mean_{j ∈ kNN(i)} ‖x_i − x_j‖²)`, where the neighbour set is
//!   the `k` nearest points counting `i` itself (distance 0)
//! * `δ_i = min_{j ranked above i} ‖x_i − x_j‖`, where points are ranked by
//!   density descending and then by index ascending; the top-ranked point
//!   takes the largest pairwise distance instead.
//!
//! The `n_clusters` points with the largest `ρ·δ` become centers and every
//! other point joins its nearest center. Ties at every stage go to the lower
//! point index.
//!
//! Densities of far-apart points underflow `exp` quickly, so ranking and the
//! `ρ·δ` comparison run on `ln ρ = −mean sq dist` and `ln ρ + ln δ`; the order
//! is the same as in linear space.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster index per point, in `[0, n_clusters)`.
    pub labels: Vec<usize>,
    /// Point index of each cluster's center, ascending. Cluster `c` is the
    /// one centred on `centers[c]`.
    pub centers: Vec<usize>,
    /// `ρ` per point.
    pub densities: Vec<f64>,
    /// `δ` per point.
    pub deltas: Vec<f64>,
}

impl ClusterResult {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    /// Member point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centers.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn dpc_knn(points: &Matrix, k_knn: usize, n_clusters: usize) -> Result<ClusterResult> {
    let p = points.rows();
    if p == 0 {
        return Err(Error::EmptyInput);
    }
    if n_clusters == 0 || n_clusters > p {
        return Err(Error::TooManyClusters {
            requested: n_clusters,
            points: p,
        });
    }
    let k = k_knn.max(1).min(p);

    let dist2: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| sq_dist(points.row(i), points.row(j))).collect())
        .collect();

    // ln ρ_i = −mean of the k smallest squared distances, self included.
    let log_density: Vec<f64> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = dist2[i].clone();
            row.sort_by(f64::total_cmp);
            -row[..k].iter().sum::<f64>() / k as f64
        })
        .collect();

    let mut rank: Vec<usize> = (0..p).collect();
    rank.sort_by(|&a, &b| {
        log_density[b]
            .total_cmp(&log_density[a])
            .then(a.cmp(&b))
    });

    let mut deltas = vec![0.0f64; p];
    for (pos, &i) in rank.iter().enumerate() {
        deltas[i] = if pos == 0 {
            dist2
                .iter()
                .flat_map(|row| row.iter())
                .fold(0.0f64, |m, &d| m.max(d))
                .sqrt()
        } else {
            rank[..pos]
                .iter()
                .map(|&j| dist2[i][j])
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        };
    }

    // ln(ρ·δ); δ = 0 maps to −∞, i.e. a zero score.
    let log_score: Vec<f64> = (0..p)
        .map(|i| log_density[i] + deltas[i].ln())
        .collect();
    let mut by_score: Vec<usize> = (0..p).collect();
    by_score.sort_by(|&a, &b| match log_score[b].partial_cmp(&log_score[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    let mut centers: Vec<usize> = by_score[..n_clusters].to_vec();
    centers.sort_unstable();

    let mut labels = vec![usize::MAX; p];
    for (c, &ci) in centers.iter().enumerate() {
        labels[ci] = c;
    }
    for i in 0..p {
        if labels[i] != usize::MAX {
            continue;
        }
        // Strict `<` keeps the lowest-index center on ties.
        let mut best = 0;
        for c in 1..centers.len() {
            if dist2[i][centers[c]] < dist2[i][centers[best]] {
                best = c;
            }
        }
        labels[i] = best;
    }

    Ok(ClusterResult {
        labels,
        centers,
        densities: log_density.iter().map(|l| l.exp()).collect(),
        deltas,
    })
}
