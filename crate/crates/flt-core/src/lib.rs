//! Federated learning simulation with one-shot client task-relatedness discovery.
//!
//! The crate is organised around the stages of a simulated federation:
//!
//! * [`nn`] — a small dense/convolutional network engine with manual
//!   backpropagation and SGD (classifiers and the autoencoder used as the
//!   signature encoder).
//! * [`data`] — dataset generation, IDX loading, and non-IID partitioners
//!   (pathological label skew and power-law structured skew).
//! * [`relatedness`] — the one-shot pipeline that turns client data
//!   signatures into a relatedness graph: per-client k-means on latent
//!   embeddings, server-side UMAP, min-pairwise adjacency, hard threshold,
//!   and Ward hierarchical clustering (plus a PCA baseline).
//! * [`federation`] — round-based orchestration: client selection, local
//!   training, and graph-weighted / cluster-wise / plain federated averaging.
//! * [`analysis`] — accuracy and fairness metrics, clustering scores,
//!   convergence-bound evaluators, and communication-cost accounting.

pub mod analysis;
pub mod data;
pub mod error;
pub mod federation;
pub mod linalg;
pub mod nn;
pub mod relatedness;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
