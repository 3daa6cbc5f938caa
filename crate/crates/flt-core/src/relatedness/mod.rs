//! One-shot client relatedness discovery.
//!
//! The pipeline: every client compresses its data through the shared encoder
//! and sends k latent centroids (its signature); the server pools all
//! signatures, embeds them with UMAP (or the PCA baseline), forms the
//! min-pairwise-distance adjacency, applies the hard threshold, and runs
//! Ward hierarchical clustering for disjoint clusters and block-diagonal
//! reordering.

mod hier;
mod kmeans;
mod pca;
mod umap;

pub use hier::{
    brute_force_ward_partition, distance_matrix, ward_cost, ward_hc, Dendrogram, Merge, WardResult,
};
pub use kmeans::{inertia_of, kmeans, kmeans_best_of, kmeans_run, KmeansResult};
pub use pca::{pca_components, pca_project};
pub use umap::{find_ab_params, smooth_knn_sigma, umap_embed, UmapParams};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::linalg::euclidean;
use crate::nn::EncoderHandle;
use crate::rng::{self, stage};

/// The payload a client transmits: k latent-space centroids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Signature {
    pub client_id: usize,
    /// The k that was asked for; `centroids.len()` may be smaller when the
    /// client holds fewer samples than k.
    pub requested_k: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl Signature {
    /// Number of transmitted values (k * e).
    pub fn payload_len(&self) -> usize {
        self.centroids.iter().map(|c| c.len()).sum()
    }

    /// Flat wire form: (client_id, k, e) header plus concatenated centroids.
    pub fn to_payload(&self) -> SignaturePayload {
        let e = self.centroids.first().map_or(0, |c| c.len());
        SignaturePayload {
            client_id: self.client_id,
            k: self.centroids.len(),
            e,
            values: self.centroids.iter().flatten().copied().collect(),
        }
    }

    pub fn from_payload(p: &SignaturePayload) -> Result<Signature> {
        if p.values.len() != p.k * p.e {
            return Err(Error::ShapeMismatch {
                context: "signature payload".into(),
                expected: format!("{} values", p.k * p.e),
                got: format!("{}", p.values.len()),
            });
        }
        Ok(Signature {
            client_id: p.client_id,
            requested_k: p.k,
            centroids: p.values.chunks(p.e).map(|c| c.to_vec()).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignaturePayload {
    pub client_id: usize,
    pub k: usize,
    pub e: usize,
    pub values: Vec<f64>,
}

/// Client relatedness: raw distances, thresholded adjacency, row-normalized
/// aggregation weights, flat clusters, and the block-diagonal reordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelatednessGraph {
    /// Raw min-pairwise distance matrix (symmetric, zero diagonal).
    pub a: Vec<Vec<f64>>,
    /// Binary adjacency with forced unit diagonal.
    pub a_tilde: Vec<Vec<f64>>,
    /// Row-stochastic aggregation weights.
    pub a_bar: Vec<Vec<f64>>,
    /// Flat cluster id per client.
    pub clusters: Option<Vec<usize>>,
    /// Permutation grouping clients by cluster.
    pub order: Option<Vec<usize>>,
}

impl RelatednessGraph {
    pub fn num_clients(&self) -> usize {
        self.a.len()
    }

    /// Complete graph: every client adjacent to every other. With data
    /// fractions p this makes graph-weighted averaging coincide with
    /// plain federated averaging.
    pub fn complete(p: &[f64]) -> Self {
        let m = p.len();
        let a = vec![vec![0.0; m]; m];
        let a_tilde = vec![vec![1.0; m]; m];
        let a_bar = crate::federation::row_normalize(&a_tilde, p);
        RelatednessGraph {
            a,
            a_tilde,
            a_bar,
            clusters: Some(vec![0; m]),
            order: Some((0..m).collect()),
        }
    }

    /// Identity graph: no client is related to any other; graph-weighted
    /// averaging degenerates to local training.
    pub fn isolated(m: usize) -> Self {
        let mut a = vec![vec![0.0; m]; m];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 0.0 } else { f64::INFINITY };
            }
        }
        let mut a_tilde = vec![vec![0.0; m]; m];
        let mut a_bar = vec![vec![0.0; m]; m];
        for i in 0..m {
            a_tilde[i][i] = 1.0;
            a_bar[i][i] = 1.0;
        }
        RelatednessGraph {
            a,
            a_tilde,
            a_bar,
            clusters: Some((0..m).collect()),
            order: Some((0..m).collect()),
        }
    }

    /// Adjacency reordered by the cluster permutation (block-diagonal when
    /// the clusters are separable).
    pub fn reordered_adjacency(&self) -> Option<Vec<Vec<f64>>> {
        let order = self.order.as_ref()?;
        Some(
            order
                .iter()
                .map(|&i| order.iter().map(|&j| self.a_tilde[i][j]).collect())
                .collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes a matrix as plain CSV rows.
    pub fn matrix_csv(matrix: &[Vec<f64>]) -> String {
        let mut out = String::new();
        for row in matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Encode-then-cluster: the client's transmitted signature. When the client
/// has fewer samples than k, k is clamped to the sample count.
pub fn client_signature(
    encoder: &EncoderHandle,
    client: &ClientDataset,
    k: usize,
    seed: u64,
) -> Result<Signature> {
    if client.train.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "client {} has no samples to sign",
            client.client_id
        )));
    }
    let embeddings = encoder.encode(&client.train)?;
    let eff_k = k.min(embeddings.len());
    let mut stream = rng::stream(seed, &[stage::SIGNATURE, client.client_id as u64]);
    let centroids = kmeans::kmeans_run(&embeddings, eff_k, 100, &mut stream)?.centroids;
    Ok(Signature {
        client_id: client.client_id,
        requested_k: k,
        centroids,
    })
}

/// Min-pairwise Euclidean distance between every two clients' embedded
/// centroid groups. Symmetric with zero diagonal.
pub fn build_adjacency(embedded: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let m = embedded.len();
    for (i, group) in embedded.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::Clustering(format!("client {i} has no embedded points")));
        }
    }
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let mut best = f64::INFINITY;
            for u in &embedded[i] {
                for v in &embedded[j] {
                    let d = euclidean(u, v);
                    if d < best {
                        best = d;
                    }
                }
            }
            a[i][j] = best;
            a[j][i] = best;
        }
    }
    Ok(a)
}

/// Hard threshold: related iff the embedded distance is within gamma.
/// The diagonal is forced to 1.
pub fn threshold(a: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut t = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            t[i][j] = if i == j || a[i][j] <= gamma { 1.0 } else { 0.0 };
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcrMode {
    Normal,
    /// Each client fine-tunes the autoencoder on its own data first.
    FineTune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcrBaseline {
    Umap,
    Pca,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcrConfig {
    /// Centroids per client signature.
    pub k: usize,
    /// Hard-threshold distance.
    pub gamma: f64,
    pub umap: UmapParams,
    /// Cut the dendrogram to this many clusters; `None` auto-selects.
    pub num_clusters: Option<usize>,
    pub mode: FcrMode,
    pub baseline: FcrBaseline,
    /// Fine-tune epochs (fine-tune mode only).
    pub finetune_epochs: usize,
    pub finetune_batch_size: usize,
    pub finetune_lr: f64,
    pub seed: u64,
}

impl Default for FcrConfig {
    fn default() -> Self {
        Self {
            k: 5,
            gamma: 1.0,
            umap: UmapParams::default(),
            num_clusters: None,
            mode: FcrMode::Normal,
            baseline: FcrBaseline::Umap,
            finetune_epochs: 5,
            finetune_batch_size: 10,
            finetune_lr: 0.01,
            seed: 0,
        }
    }
}

/// The one-shot relatedness pipeline over all clients.
pub fn run_fcr(
    clients: &[ClientDataset],
    encoder: &EncoderHandle,
    cfg: &FcrConfig,
) -> Result<RelatednessGraph> {
    if clients.is_empty() {
        return Err(Error::InvalidArgument("run_fcr with no clients".into()));
    }

    // client-side: (optional fine-tune then) encode + k-means, in parallel
    let signatures: Vec<Signature> = clients
        .par_iter()
        .map(|client| {
            let enc = match cfg.mode {
                FcrMode::Normal => encoder.clone(),
                FcrMode::FineTune => encoder.finetuned(
                    &client.train,
                    cfg.finetune_epochs,
                    cfg.finetune_batch_size,
                    cfg.finetune_lr,
                    rng::derive(cfg.seed, &[stage::FINETUNE, client.client_id as u64]),
                )?,
            };
            client_signature(&enc, client, cfg.k, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;

    // server-side: pool centroids, embed, regroup
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut bounds = Vec::with_capacity(signatures.len());
    for s in &signatures {
        let start = pooled.len();
        pooled.extend(s.centroids.iter().cloned());
        bounds.push((start, pooled.len()));
    }
    let embedded_flat = match cfg.baseline {
        FcrBaseline::Umap => {
            let mut params = cfg.umap.clone();
            params.seed = cfg.seed;
            umap_embed(&pooled, &params)?
        }
        FcrBaseline::Pca => pca_project(&pooled, cfg.umap.target_dim)?,
    };
    let groups: Vec<Vec<Vec<f64>>> = bounds
        .iter()
        .map(|&(lo, hi)| embedded_flat[lo..hi].to_vec())
        .collect();

    let a = build_adjacency(&groups)?;
    let a_tilde = threshold(&a, cfg.gamma);
    let ward = ward_hc(&a, cfg.num_clusters)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    let a_bar = crate::federation::row_normalize(&a_tilde, &p);

    Ok(RelatednessGraph {
        a,
        a_tilde,
        a_bar,
        clusters: Some(ward.assignment),
        order: Some(ward.permutation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn client_from_rows(id: usize, rows: Vec<Vec<f64>>, p: f64) -> ClientDataset {
        let n = rows.len();
        ClientDataset {
            client_id: id,
            train: Dataset::from_rows(rows, vec![0; n], 1).unwrap(),
            test: Dataset::empty(vec![2], 1),
            p,
        }
    }

    #[test]
    fn adjacency_min_over_cross_pairs() {
        let z1 = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let z2 = vec![vec![3.0, 0.0], vec![5.0, 0.0]];
        let a = build_adjacency(&[z1.clone(), z2.clone()]).unwrap();
        assert_eq!(a[0][1], 2.0);
        assert_eq!(a[1][0], 2.0);
        assert_eq!(a[0][0], 0.0);
        // permuting centroid order changes nothing
        let a2 = build_adjacency(&[
            vec![z1[1].clone(), z1[0].clone()],
            vec![z2[1].clone(), z2[0].clone()],
        ])
        .unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn threshold_polarity_marks_close_pairs() {
        let a = vec![vec![0.0, 0.5], vec![0.5, 0.0]];
        let t = threshold(&a, 1.0);
        assert_eq!(t, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let a = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let t = threshold(&a, 1.0);
        assert_eq!(t, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn identity_encoder_signature_with_k_equal_n_returns_samples() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]];
        let client = client_from_rows(0, rows.clone(), 1.0);
        let enc = EncoderHandle::identity(2);
        let sig = client_signature(&enc, &client, 3, 0).unwrap();
        let mut got = sig.centroids.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, rows);
    }

    #[test]
    fn signature_clamps_k_and_reports_payload() {
        let client = client_from_rows(1, vec![vec![1.0, 2.0], vec![3.0, 4.0]], 1.0);
        let enc = EncoderHandle::identity(2);
        let sig = client_signature(&enc, &client, 5, 0).unwrap();
        assert_eq!(sig.requested_k, 5);
        assert_eq!(sig.centroids.len(), 2);
        assert_eq!(sig.payload_len(), 4);
        let payload = sig.to_payload();
        let back = Signature::from_payload(&payload).unwrap();
        assert_eq!(back.centroids, sig.centroids);
    }

    #[test]
    fn identical_clients_are_fully_adjacent() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i % 4) as f64, (i / 4) as f64])
            .collect();
        let clients = vec![
            client_from_rows(0, rows.clone(), 0.5),
            client_from_rows(1, rows, 0.5),
        ];
        let cfg = FcrConfig {
            k: 4,
            umap: UmapParams {
                n_neighbors: 4,
                epochs: 200,
                ..Default::default()
            },
            seed: 2,
            ..Default::default()
        };
        let g = run_fcr(&clients, &EncoderHandle::identity(2), &cfg).unwrap();
        assert_eq!(g.a_tilde, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }
}
