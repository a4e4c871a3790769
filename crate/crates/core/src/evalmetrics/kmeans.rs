use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Lloyd iteration budget and number of k-means++ restarts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
}

impl KMeansConfig {
    /// Settings for scoring and baselines.
    pub const STANDARD: KMeansConfig = KMeansConfig {
        max_iter: 100,
        restarts: 4,
    };
    /// Settings for prototype refresh during training and the final clustering.
    pub const PROTOTYPES: KMeansConfig = KMeansConfig {
        max_iter: 20,
        restarts: 4,
    };
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seed(points: ArrayView2<'_, f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.below(n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut dist: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, points.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.below(n)
        };
        centroids.row_mut(c).assign(&points.row(chosen));
        for (i, p) in points.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, points.row(chosen)));
        }
    }
    centroids
}

fn lloyd(points: ArrayView2<'_, f64>, mut centroids: Array2<f64>, max_iter: usize) -> KMeansResult {
    let (n, dim) = points.dim();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.rows().into_iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let mut row = sums.row_mut(labels[i]);
            row += &p;
            counts[labels[i]] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = sums.row_mut(c);
                row /= counts[c] as f64;
                centroids.row_mut(c).assign(&row);
            } else {
                // Empty cluster: move it onto the worst-fit point.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= n");
                taken[far] = true;
                dists[far] = 0.0;
                centroids.row_mut(c).assign(&points.row(far));
            }
        }
    }
    let mut inertia = 0.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        inertia += d;
    }
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// k-means with k-means++ seeding; the restart with the lowest inertia wins
/// (earliest restart on ties).
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, config: KMeansConfig, rng: &mut Rng) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("k-means input contains non-finite values".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.restarts.max(1) {
        let seeds = plus_plus_seed(points, k, rng);
        let run = lloyd(points, seeds, config.max_iter.max(1));
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
