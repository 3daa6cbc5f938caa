//! UMAP embedding: exact kNN graph, smoothed affinities with binary-search
//! bandwidths, fuzzy-union symmetrization, and negative-sampling SGD on the
//! cross-entropy layout objective. Single-threaded and deterministic per seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    /// Output dimension u (2 or 3 in practice).
    pub target_dim: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for UmapParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            target_dim: 2,
            min_dist: 0.1,
            epochs: 200,
            seed: 0,
        }
    }
}

const NEGATIVE_SAMPLE_RATE: usize = 5;
const INITIAL_ALPHA: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;

struct Edge {
    i: usize,
    j: usize,
    weight: f64,
}

/// Binary search for the smoothing bandwidth sigma_i such that
/// `sum_j exp(-max(0, d_ij - rho) / sigma) = target`. The sum is strictly
/// increasing in sigma, so bisection converges; degenerate neighborhoods
/// (all gaps zero) clamp at the lower bound.
pub fn smooth_knn_sigma(dists: &[f64], rho: f64, target: f64) -> f64 {
    let sum_at = |sigma: f64| -> f64 {
        dists
            .iter()
            .map(|&d| (-((d - rho).max(0.0)) / sigma).exp())
            .sum()
    };
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while sum_at(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    if sum_at(lo) >= target {
        return lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares fit of the layout curve 1/(1 + a x^(2b)) to the target
/// membership decay exp(-(x - min_dist)/spread) (1 inside min_dist), via a
/// deterministic coarse-to-fine grid search.
pub fn find_ab_params(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..=300).map(|i| i as f64 * (3.0 * spread) / 300.0).collect();
    let targets: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x <= min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&targets)
            .map(|(&x, &t)| {
                let y = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (y - t) * (y - t)
            })
            .sum()
    };
    let (mut a0, mut a1) = (0.1, 10.0);
    let (mut b0, mut b1) = (0.3, 3.0);
    let mut best = (1.0, 1.0);
    for _pass in 0..4 {
        let mut best_err = f64::INFINITY;
        for ia in 0..=60 {
            let a = a0 + (a1 - a0) * ia as f64 / 60.0;
            for ib in 0..=60 {
                let b = b0 + (b1 - b0) * ib as f64 / 60.0;
                let e = sse(a, b);
                if e < best_err {
                    best_err = e;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let aw = (a1 - a0) / 10.0;
        let bw = (b1 - b0) / 10.0;
        a0 = (a - aw).max(1e-3);
        a1 = a + aw;
        b0 = (b - bw).max(1e-3);
        b1 = b + bw;
    }
    best
}

/// Embeds `points` into `params.target_dim` dimensions; output order matches
/// input order.
pub fn umap_embed(points: &[Vec<f64>], params: &UmapParams) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if params.n_neighbors < 2 {
        return Err(Error::InvalidArgument("n_neighbors must be >= 2".into()));
    }
    if n <= params.n_neighbors {
        return Err(Error::Clustering(format!(
            "UMAP needs more than n_neighbors = {} points, got {n}",
            params.n_neighbors
        )));
    }
    let k = params.n_neighbors;
    let dim = params.target_dim;

    // exact kNN (ties broken by index for determinism)
    let mut knn: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (crate::linalg::euclidean(&points[i], &points[j]), j))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        dists.truncate(k);
        knn.push(dists);
    }

    // smoothed affinities
    let target = (k as f64).log2();
    let mut weights: std::collections::HashMap<(usize, usize), f64> =
        std::collections::HashMap::with_capacity(n * k);
    for (i, neigh) in knn.iter().enumerate() {
        let rho = neigh[0].0;
        let ds: Vec<f64> = neigh.iter().map(|&(d, _)| d).collect();
        let sigma = smooth_knn_sigma(&ds, rho, target).max(1e-12);
        for &(d, j) in neigh {
            let w = (-((d - rho).max(0.0)) / sigma).exp();
            weights.insert((i, j), w);
        }
    }

    // fuzzy set union: w(i,j) + w(j,i) - w(i,j) w(j,i)
    let mut edges: Vec<Edge> = Vec::with_capacity(weights.len());
    for (&(i, j), &wij) in &weights {
        if i > j {
            continue;
        }
        let wji = weights.get(&(j, i)).copied().unwrap_or(0.0);
        let w = wij + wji - wij * wji;
        if w > 1e-9 {
            edges.push(Edge { i, j, weight: w });
        }
    }
    // reverse-direction edges whose forward twin is absent
    for (&(i, j), &wji) in &weights {
        if i < j || weights.contains_key(&(j, i)) {
            continue;
        }
        let (i, j) = (j, i);
        if wji > 1e-9 {
            edges.push(Edge { i, j, weight: wji });
        }
    }
    // deterministic processing order
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));

    let max_weight = edges.iter().map(|e| e.weight).fold(0.0_f64, f64::max);
    if max_weight <= 0.0 {
        return Err(Error::Clustering("degenerate fuzzy graph (no edges)".into()));
    }
    // canonical pruning of negligible edges
    let floor = max_weight / params.epochs.max(1) as f64;
    edges.retain(|e| e.weight >= floor);

    let (a, b) = find_ab_params(1.0, params.min_dist);

    // random init in [-10, 10]^dim
    let mut r = rng::stream(params.seed, &[stage::UMAP]);
    let mut emb: Vec<f64> = (0..n * dim).map(|_| r.random_range(-10.0..10.0)).collect();

    // negative-sampling SGD on the layout objective
    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_weight / e.weight).collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|&e| e / NEGATIVE_SAMPLE_RATE as f64)
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let n_epochs = params.epochs;
    for epoch in 0..n_epochs {
        let alpha = INITIAL_ALPHA * (1.0 - epoch as f64 / n_epochs as f64);
        let en = epoch as f64 + 1.0;
        for (e, edge) in edges.iter().enumerate() {
            if next_sample[e] > en {
                continue;
            }
            next_sample[e] += epochs_per_sample[e];
            let (i, j) = (edge.i, edge.j);

            // attractive move along the positive edge
            let mut d2 = 0.0;
            for c in 0..dim {
                let diff = emb[i * dim + c] - emb[j * dim + c];
                d2 += diff * diff;
            }
            if d2 > 0.0 {
                let coeff = (-2.0 * a * b * d2.powf(b - 1.0)) / (1.0 + a * d2.powf(b));
                for c in 0..dim {
                    let diff = emb[i * dim + c] - emb[j * dim + c];
                    let g = (coeff * diff).clamp(-GRAD_CLIP, GRAD_CLIP) * alpha;
                    emb[i * dim + c] += g;
                    emb[j * dim + c] -= g;
                }
            }

            // repulsive moves against sampled non-neighbors
            let n_neg = ((en - next_negative[e]) / epochs_per_negative[e]).max(0.0) as usize;
            for _ in 0..n_neg {
                let t = r.random_range(0..n);
                if t == i {
                    continue;
                }
                let mut d2 = 0.0;
                for c in 0..dim {
                    let diff = emb[i * dim + c] - emb[t * dim + c];
                    d2 += diff * diff;
                }
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)))
                } else {
                    0.0
                };
                for c in 0..dim {
                    let diff = emb[i * dim + c] - emb[t * dim + c];
                    let g = if d2 > 0.0 {
                        (coeff * diff).clamp(-GRAD_CLIP, GRAD_CLIP)
                    } else {
                        GRAD_CLIP
                    } * alpha;
                    emb[i * dim + c] += g;
                }
            }
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
    }

    Ok((0..n).map(|i| emb[i * dim..(i + 1) * dim].to_vec()).collect())
}
