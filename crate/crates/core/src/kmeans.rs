//! Seeded k-means (Lloyd iterations, k-means++ initialisation, best of
//! several restarts).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (label, p) in labels.iter_mut().zip(points) {
            let (i, _) = nearest(p, &centers);
            if *label != i {
                *label = i;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (i, (s, &n)) in sums.into_iter().zip(&counts).enumerate() {
            // empty clusters keep their previous center
            if n > 0 {
                centers[i] = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    KMeansFit {
        centers,
        labels,
        inertia,
    }
}

/// Best-inertia fit over `restarts` seeded runs; earlier runs win ties.
///
/// Panics if `points` is empty or `k` is zero or larger than the point count.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, max_iter: usize, seed: u64) -> KMeansFit {
    assert!(!points.is_empty() && k >= 1 && k <= points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let fit = lloyd(points, init, max_iter);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn separates_exact_clusters() {
        let pts = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let fit = kmeans(&pts, 2, 10, 300, 0);
        assert_eq!(fit.inertia, 0.0);
        let mut centers = fit.centers.clone();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_ne!(fit.labels[0], fit.labels[2]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = vec![vec![0.2, 0.8], vec![0.4, 0.6], vec![0.9, 0.1]];
        let fit = kmeans(&pts, 1, 10, 300, 5);
        assert!((fit.centers[0][0] - 0.5).abs() < 1e-12);
        assert!((fit.centers[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_repeat() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = (i as f64 * 0.37).sin().abs();
                vec![t, 1.0 - t]
            })
            .collect();
        assert_eq!(kmeans(&pts, 4, 10, 300, 11), kmeans(&pts, 4, 10, 300, 11));
    }

    #[test]
    fn duplicate_points_fill_all_clusters() {
        let pts = vec![vec![0.5, 0.5]; 3];
        let fit = kmeans(&pts, 3, 2, 300, 1);
        assert_eq!(fit.centers.len(), 3);
        assert_eq!(fit.inertia, 0.0);
    }
}
