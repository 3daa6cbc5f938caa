//! Datasets, loading, and non-IID partitioners.

mod idx;
mod partition;
mod synthetic;

pub use idx::load_idx;
pub use partition::{
    partition_pathological, sample_structured_noniid, solve_beta, ClientManifest, Partition,
    PartitionManifest,
};
pub use synthetic::{axis_aligned_means, gen_gaussian_mixture, GaussianMixtureSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A labeled dataset. Features are stored contiguously row-major; every
/// sample shares `feature_shape`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_shape: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn empty(feature_shape: Vec<usize>, num_classes: usize) -> Self {
        Self {
            num_classes,
            feature_shape,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Builds a dataset of flat feature rows (feature shape = [row length]).
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows vs {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut ds = Dataset::empty(vec![dim], num_classes);
        for (row, label) in rows.into_iter().zip(labels) {
            if row.len() != dim {
                return Err(Error::InvalidArgument("ragged feature rows".into()));
            }
            ds.push_flat(&row, label)?;
        }
        Ok(ds)
    }

    pub fn push_flat(&mut self, features: &[f64], label: usize) -> Result<()> {
        if features.len() != self.sample_len() {
            return Err(Error::ShapeMismatch {
                context: "Dataset::push_flat".into(),
                expected: format!("{} values", self.sample_len()),
                got: format!("{}", features.len()),
            });
        }
        if label >= self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range [0, {})",
                self.num_classes
            )));
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Gathers the given sample indices into a batch tensor plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.feature(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.feature_shape);
        (
            Tensor::new(shape, data).expect("batch shape consistent"),
            labels,
        )
    }

    /// New dataset containing the given samples (in order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.sample_len();
        let mut out = Dataset::empty(self.feature_shape.clone(), self.num_classes);
        for &i in indices {
            out.features.extend_from_slice(&self.features[i * n..(i + 1) * n]);
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Reinterprets flat features as `shape` (same element count).
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != self.sample_len() {
            return Err(Error::ShapeMismatch {
                context: "Dataset::reshaped".into(),
                expected: format!("{} elements", self.sample_len()),
                got: format!("{want} for {shape:?}"),
            });
        }
        self.feature_shape = shape;
        Ok(self)
    }

    /// Keeps at most `n` samples per class (first-come in a seeded shuffle),
    /// preserving the original relative order of the kept samples.
    pub fn take_per_class(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream(seed, &[crate::rng::stage::DATA, 0xD5]);
        let mut order: Vec<usize> = (0..self.len()).collect();
        crate::nn::model::shuffle(&mut order, &mut rng);
        let mut kept = vec![0usize; self.num_classes];
        let mut chosen: Vec<usize> = order
            .into_iter()
            .filter(|&i| {
                let l = self.labels[i];
                if kept[l] < n {
                    kept[l] += 1;
                    true
                } else {
                    false
                }
            })
            .collect();
        chosen.sort_unstable();
        self.subset(&chosen)
    }

    /// Indices of samples per class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// One client's data: a train split, a test split drawn from the same label
/// distribution, and the client's fraction of the total training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub train: Dataset,
    pub test: Dataset,
    /// n_m / N over the partition's training data.
    pub p: f64,
}

/// How a source dataset is split across clients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    /// Number of clients.
    pub m: usize,
    /// Number of ground-truth clusters.
    pub c: usize,
    /// Labels per cluster (pathological modes).
    pub labels_per_cluster: usize,
    /// Minimum samples per client (structured mode).
    pub alpha: f64,
    /// Power exponent (structured mode).
    pub delta: f64,
    /// Test fraction per client.
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Disjoint label sets per cluster.
    Pathological,
    /// One shared label between consecutive clusters.
    Overlap1,
    /// Power-law quantity skew with per-cluster label sets.
    Structured,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.c == 0 {
            return Err(Error::InvalidArgument("M and C must be positive".into()));
        }
        if self.alpha < 1.0 {
            return Err(Error::InvalidArgument("alpha must be >= 1".into()));
        }
        if self.delta < 0.0 {
            return Err(Error::InvalidArgument("delta must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidArgument(
                "test_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth cluster id per client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthClusters {
    pub assignment: Vec<usize>,
}

impl GroundTruthClusters {
    pub fn num_clusters(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }
}
