//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;
use crate::rng::seeded;

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: DenseMatrix,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest(centroids: &DenseMatrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = squared_distance(centroids.row(c), x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(data: &DenseMatrix, k: usize, rng: &mut impl Rng) -> DenseMatrix {
    let n = data.rows();
    let mut centroids = DenseMatrix::zeros(k, data.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), centroids.row(c)));
        }
    }
    centroids
}

/// Clusters the rows of `data` into `k` groups.
///
/// Stops when an assignment pass changes nothing or after `max_iterations`.
/// A cluster that empties is re-seeded with the point farthest from its
/// current centroid.
pub fn kmeans(data: &DenseMatrix, k: usize, seed: u64, max_iterations: usize) -> Result<KMeansFit> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut rng = seeded(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(&centroids, data.row(i));
            dists[i] = d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }

        let mut sums = DenseMatrix::zeros(k, data.cols());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // farthest point not already used to re-seed this round
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n");
                taken[far] = true;
                dists[far] = 0.0;
                centroids.row_mut(c).copy_from_slice(data.row(far));
            }
        }
    }
    if !converged {
        // Final pass so assignments are nearest to the returned centroids.
        for i in 0..n {
            assignments[i] = nearest(&centroids, data.row(i)).0;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignments,
        iterations,
        converged,
    })
}
