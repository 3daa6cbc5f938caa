//! Lloyd's k-means with k-means++ initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, then D^2-weighted picks.
fn kmeanspp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; any pick works
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, centroids.last().expect("just pushed"));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// One run of Lloyd's algorithm. Stops at an assignment fixpoint or after
/// `max_iters` update rounds; inertia is non-increasing across iterations.
pub fn kmeans_run(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Result<KmeansResult> {
    if points.len() < k {
        return Err(Error::Clustering(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    if k == 0 {
        return Err(Error::Clustering("k must be >= 1".into()));
    }
    let dim = points[0].len();
    let mut centroids = kmeanspp_init(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

    for _ in 0..max_iters {
        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            } else {
                // empty cluster: steal the point farthest from its centroid
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = squared_distance(&points[i], &centroids[assignment[i]]);
                        let dj = squared_distance(&points[j], &centroids[assignment[j]]);
                        di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("non-empty points");
                centroids[c] = points[far].clone();
                assignment[far] = c;
            }
        }
        // assignment step
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let inertia = points
        .iter()
        .map(|p| nearest(p, &centroids).1)
        .sum::<f64>();
    Ok(KmeansResult {
        centroids,
        assignment,
        inertia,
    })
}

/// k centroids via Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut r = rng::stream(seed, &[rng::stage::SIGNATURE, 0x6B]);
    Ok(kmeans_run(points, k, max_iters, &mut r)?.centroids)
}

/// Best of `restarts` seeded runs by inertia.
pub fn kmeans_best_of(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<KmeansResult> {
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut stream = rng::stream(seed, &[rng::stage::SIGNATURE, 0x6B, r as u64]);
        let run = kmeans_run(points, k, max_iters, &mut stream)?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Total within-cluster sum of squared distances for a given assignment.
pub fn inertia_of(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut total = 0.0;
    for (p, &a) in points.iter().zip(assignment) {
        if counts[a] == 0 {
            continue;
        }
        total += p
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                let mean = sums[a][d] / counts[a] as f64;
                (v - mean) * (v - mean)
            })
            .sum::<f64>();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let c = kmeans(&pts, 1, 50, 3).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0][0] - 1.0).abs() < 1e-12);
        assert!((c[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_far_pairs_recovered() {
        // exhaustive optimum for k=2 is the two pair means
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![10.0, 10.0],
            vec![10.2, 10.0],
        ];
        let res = kmeans_best_of(&pts, 2, 50, 5, 7).unwrap();
        let mut centroids = res.centroids.clone();
        centroids.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((centroids[0][0] - 0.1).abs() < 1e-9);
        assert!((centroids[1][0] - 10.1).abs() < 1e-9);
        assert_eq!(res.assignment[0], res.assignment[1]);
        assert_eq!(res.assignment[2], res.assignment[3]);
        assert_ne!(res.assignment[0], res.assignment[2]);
    }

    #[test]
    fn rejects_fewer_points_than_k() {
        let pts = vec![vec![0.0]];
        assert!(kmeans(&pts, 2, 10, 0).is_err());
    }

    #[test]
    fn inertia_non_increasing_over_iteration_caps() {
        // running with more allowed iterations can never raise inertia
        let mut pts = Vec::new();
        let mut r = crate::rng::stream(11, &[]);
        use rand::Rng;
        for _ in 0..60 {
            pts.push(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
        }
        let mut prev = f64::INFINITY;
        for iters in [1, 2, 4, 8, 32] {
            let mut stream = crate::rng::stream(5, &[crate::rng::stage::SIGNATURE, 0x6B]);
            let res = kmeans_run(&pts, 4, iters, &mut stream).unwrap();
            assert!(res.inertia <= prev + 1e-9, "inertia rose at {iters} iters");
            prev = res.inertia;
        }
    }

    #[test]
    fn duplicate_points_do_not_panic() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let res = kmeans_best_of(&pts, 3, 20, 3, 2).unwrap();
        assert_eq!(res.centroids.len(), 3);
        assert!(res.inertia < 1e-18);
    }
}
