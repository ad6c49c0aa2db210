//! Seeded k-means with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            restarts: 10,
            seed: 0,
        }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

fn lloyd(points: &Array2<f64>, mut centers: Array2<f64>, max_iter: usize) -> (Vec<usize>, f64) {
    let (n, k) = (points.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(points.row(i), centers.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &points.row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centers.row_mut(c);
                row.assign(&sums.row(c));
                row /= counts[c] as f64;
            }
        }
        // Empty cluster: move its centroid to the point farthest from its own centroid.
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centers.row(labels[a]));
                        let db = sq_dist(points.row(b), centers.row(labels[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centers.row_mut(c).assign(&points.row(far));
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                reseeded = true;
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centers.row(labels[i])))
        .sum();
    (labels, inertia)
}

/// Relabels clusters in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Clusters the rows of `points` into `k` groups. Labels are canonical
/// (first appearance order) and every cluster is non-empty when `k <= n`.
pub fn kmeans(points: &Array2<f64>, k: usize, cfg: &KMeansConfig) -> Vec<usize> {
    let n = points.nrows();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    if k == 1 {
        return vec![0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let centers = plus_plus(points, k, &mut rng);
        let (labels, inertia) = lloyd(points, centers, cfg.max_iter);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    canonical_labels(&best.expect("at least one restart").0)
}
