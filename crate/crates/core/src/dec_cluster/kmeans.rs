//! Seeded k-means: k-means++ initialization, Lloyd iterations to an
//! assignment fixpoint, best inertia over restarts.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClusterError;

const MAX_LLOYD_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// `k x d` cluster centers.
    pub centroids: Array2<f64>,
    /// Index of the nearest centroid per point.
    pub assignments: Vec<usize>,
    /// Total squared distance of points to their centroids.
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-centroid assignment; ties go to the lowest centroid index.
pub fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> Vec<usize> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn plus_plus_init(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining points coincide with chosen centers.
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for i in 0..n {
            let d2 = sq_dist(points.row(i), centroids.row(c));
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    centroids
}

fn lloyd(points: &Array2<f64>, mut centroids: Array2<f64>) -> KmeansResult {
    let n = points.nrows();
    let k = centroids.nrows();
    let mut assignments = assign(points, &centroids);
    for _ in 0..MAX_LLOYD_ITERS {
        // Means of the assigned points.
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &points.row(i);
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mut row = sums.row_mut(j);
                row.mapv_inplace(|v| v / counts[j] as f64);
                centroids.row_mut(j).assign(&sums.row(j));
            }
        }
        // Re-seat any empty cluster on the point farthest from its centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(points.row(b), centroids.row(assignments[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids.row_mut(j).assign(&points.row(far));
                counts[assignments[far]] -= 1;
                assignments[far] = j;
                counts[j] = 1;
            }
        }
        let next = assign(points, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let inertia = assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), centroids.row(a)))
        .sum();
    KmeansResult {
        centroids,
        assignments,
        inertia,
    }
}

/// Cluster `points` into `k` groups, keeping the best of `restarts` seeded
/// k-means++ runs. Deterministic for a fixed seed.
pub fn kmeans(
    points: &Array2<f64>,
    k: usize,
    seed: u64,
    restarts: u32,
) -> Result<KmeansResult, ClusterError> {
    let n = points.nrows();
    if k == 0 {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    if n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    let restarts = restarts.max(1);
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let init = plus_plus_init(points, k, &mut rng);
        let result = lloyd(points, init);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.unwrap())
}
