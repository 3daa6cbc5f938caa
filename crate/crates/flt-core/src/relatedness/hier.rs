//! Agglomerative clustering with the Lance-Williams Ward update, dendrogram
//! cutting, and auto-selection of the cluster count from merge-height gaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One merge step: `left` and `right` are cluster ids (leaves are `0..M`,
/// the i-th merge creates cluster `M + i`), `height` the Ward distance at
/// the merge, `size` the merged cluster's member count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Stepwise dendrogram: exactly M-1 merges in merge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }
}

/// Result of [`ward_hc`]: the dendrogram, a flat cluster assignment, and a
/// permutation of items grouping them by cluster (so a reordered adjacency
/// matrix is block-diagonal when the clusters are separable).
#[derive(Debug, Clone)]
pub struct WardResult {
    pub dendrogram: Dendrogram,
    pub assignment: Vec<usize>,
    pub permutation: Vec<usize>,
    pub num_clusters: usize,
}

/// Ward agglomerative clustering on a symmetric dissimilarity matrix.
///
/// If `num_clusters` is given the dendrogram is cut to that many flat
/// clusters; otherwise the count is proposed from the largest relative gap
/// between consecutive merge heights (ties toward fewer clusters).
pub fn ward_hc(dissimilarity: &[Vec<f64>], num_clusters: Option<usize>) -> Result<WardResult> {
    let m = dissimilarity.len();
    if m == 0 {
        return Err(Error::Clustering("empty dissimilarity matrix".into()));
    }
    for (i, row) in dissimilarity.iter().enumerate() {
        if row.len() != m {
            return Err(Error::Clustering("dissimilarity matrix not square".into()));
        }
        if row[i] != 0.0 {
            return Err(Error::Clustering(format!("nonzero diagonal at {i}")));
        }
    }
    if let Some(c) = num_clusters {
        if c == 0 || c > m {
            return Err(Error::Clustering(format!(
                "cannot cut {m} items into {c} clusters"
            )));
        }
    }

    // working distance matrix between active clusters
    let mut dist: Vec<Vec<f64>> = dissimilarity.to_vec();
    let mut active: Vec<bool> = vec![true; m];
    let mut size: Vec<usize> = vec![1; m];
    // cluster id in dendrogram numbering for each active slot
    let mut label: Vec<usize> = (0..m).collect();
    // members of each active slot, for flat assignment later
    let mut members: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();

    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    let mut merge_members: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();

    for step in 0..m.saturating_sub(1) {
        // closest active pair, ties to smallest indices
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..m {
                if !active[j] {
                    continue;
                }
                if dist[i][j] < best_d {
                    best_d = dist[i][j];
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;

        // Lance-Williams Ward update of distances to the merged cluster,
        // stored in slot i
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for t in 0..m {
            if !active[t] || t == i || t == j {
                continue;
            }
            let nt = size[t] as f64;
            let dit2 = dist[i][t] * dist[i][t];
            let djt2 = dist[j][t] * dist[j][t];
            let dij2 = best_d * best_d;
            let d2 = ((ni + nt) * dit2 + (nj + nt) * djt2 - nt * dij2) / (ni + nj + nt);
            let d = d2.max(0.0).sqrt();
            dist[i][t] = d;
            dist[t][i] = d;
        }

        merges.push(Merge {
            left: label[i].min(label[j]),
            right: label[i].max(label[j]),
            height: best_d,
            size: size[i] + size[j],
        });
        merge_members.push((members[i].clone(), members[j].clone()));

        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        size[i] += size[j];
        active[j] = false;
        label[i] = m + step;
    }

    let dendrogram = Dendrogram { merges };
    let c = match num_clusters {
        Some(c) => c,
        None => propose_cluster_count(&dendrogram.heights(), m),
    };

    // cut: union the first M - c merges
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (left_members, right_members) in merge_members.iter().take(m - c) {
        let a = find(&mut parent, left_members[0]);
        let b = find(&mut parent, right_members[0]);
        parent[a] = b;
    }
    // stable cluster ids ordered by smallest member
    let mut root_to_id = std::collections::BTreeMap::new();
    let mut roots = Vec::with_capacity(m);
    for x in 0..m {
        roots.push(find(&mut parent, x));
    }
    for (x, &root) in roots.iter().enumerate() {
        root_to_id.entry(root).or_insert(x);
    }
    let mut order: Vec<usize> = root_to_id.values().copied().collect();
    order.sort_unstable();
    let id_of_root: std::collections::HashMap<usize, usize> = root_to_id
        .iter()
        .map(|(&root, &smallest)| (root, order.binary_search(&smallest).expect("present")))
        .collect();
    let assignment: Vec<usize> = roots.iter().map(|r| id_of_root[r]).collect();

    let mut permutation: Vec<usize> = (0..m).collect();
    permutation.sort_by_key(|&x| (assignment[x], x));

    Ok(WardResult {
        dendrogram,
        assignment,
        permutation,
        num_clusters: c,
    })
}

/// Largest relative gap between consecutive merge heights; ties break toward
/// fewer clusters. With fewer than three merges the fully merged tree (one
/// cluster) is proposed.
fn propose_cluster_count(heights: &[f64], m: usize) -> usize {
    if m <= 2 || heights.len() < 2 {
        return 1;
    }
    let mut best_gap = f64::NEG_INFINITY;
    let mut best_j = heights.len() - 1; // default: keep all merges -> 1 cluster
    for j in 1..heights.len() {
        let prev = heights[j - 1];
        let next = heights[j];
        let gap = (next - prev) / next.abs().max(1e-30);
        if gap >= best_gap {
            best_gap = gap;
            best_j = j;
        }
    }
    if best_gap <= 1e-12 {
        return 1;
    }
    // keeping merges 0..best_j leaves m - best_j clusters
    m - best_j
}

/// Exhaustive minimum-Ward-cost flat partition for small instances; the
/// independent oracle used by tests. Points are Euclidean rows.
pub fn brute_force_ward_partition(points: &[Vec<f64>], c: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    assert!(n <= 10, "oracle is exponential");
    let mut best_cost = f64::INFINITY;
    let mut best = vec![0; n];
    let mut assign = vec![0usize; n];
    enumerate(points, c, 0, &mut assign, &mut best_cost, &mut best);
    (best_cost, best)
}

fn enumerate(
    points: &[Vec<f64>],
    c: usize,
    idx: usize,
    assign: &mut Vec<usize>,
    best_cost: &mut f64,
    best: &mut Vec<usize>,
) {
    let n = points.len();
    if idx == n {
        let used = assign.iter().copied().collect::<std::collections::BTreeSet<_>>();
        if used.len() != c {
            return;
        }
        let cost = ward_cost(points, assign, c);
        if cost < *best_cost - 1e-12 {
            *best_cost = cost;
            best.clone_from(assign);
        }
        return;
    }
    // canonical labeling: item can open at most one new cluster
    let max_label = (assign[..idx].iter().copied().max().map_or(0, |m| m + 1)).min(c - 1);
    for l in 0..=max_label {
        assign[idx] = l;
        enumerate(points, c, idx + 1, assign, best_cost, best);
    }
}

/// Total within-cluster sum of squared deviations (the Ward objective).
pub fn ward_cost(points: &[Vec<f64>], assign: &[usize], c: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut cost = 0.0;
    for (p, &a) in points.iter().zip(assign) {
        for (d, &v) in p.iter().enumerate() {
            let mean = sums[a][d] / counts[a] as f64;
            cost += (v - mean) * (v - mean);
        }
    }
    cost
}

/// Pairwise Euclidean distance matrix for point rows.
pub fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = crate::linalg::euclidean(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}
