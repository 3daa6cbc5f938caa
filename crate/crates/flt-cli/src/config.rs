//! Declarative scenario configuration (JSON on disk).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flt_core::data::{PartitionMode, PartitionSpec};
use flt_core::federation::{DriftEvent, Method};
use flt_core::relatedness::{FcrBaseline, FcrMode, UmapParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub encoder: EncoderConfig,
    pub fcr: FcrSection,
    pub federation: FederationSection,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Labeled Gaussian mixture with axis-aligned well-separated means.
    SyntheticMixture {
        dims: usize,
        num_classes: usize,
        samples_per_class: usize,
        separation: f64,
        std: f64,
    },
    /// MNIST-shaped synthetic stand-in: 1x28x28 features, 10 classes, one
    /// Gaussian glyph template per class.
    MnistLike { samples_per_class: usize, std: f64 },
    /// IDX image/label pair on disk.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep at most this many samples per class (seeded subsample).
        #[serde(default)]
        take_per_class: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub clients: usize,
    pub clusters: usize,
    #[serde(default)]
    pub labels_per_cluster: usize,
    /// Structured mode: minimum samples per client.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Structured mode: power exponent.
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Structured mode: labels per cluster are dealt in contiguous blocks of
    /// this size; defaults to num_classes / clusters.
    #[serde(default)]
    pub structured_labels_per_cluster: Option<usize>,
}

fn default_alpha() -> f64 {
    20.0
}

fn default_test_fraction() -> f64 {
    0.2
}

impl PartitionConfig {
    pub fn to_spec(&self, seed: u64) -> PartitionSpec {
        PartitionSpec {
            mode: self.mode,
            m: self.clients,
            c: self.clusters,
            labels_per_cluster: self.labels_per_cluster,
            alpha: self.alpha,
            delta: self.delta,
            test_fraction: self.test_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderConfig {
    /// Latent vector = flattened raw features.
    Identity,
    /// Convolutional autoencoder on image-shaped data.
    ConvAe {
        #[serde(default = "default_latent_dim")]
        latent_dim: usize,
        /// Server-side pretraining epochs on the full source dataset.
        #[serde(default)]
        pretrain_epochs: usize,
        #[serde(default = "default_pretrain_lr")]
        pretrain_lr: f64,
    },
    /// Dense autoencoder on flat data.
    DenseAe {
        hidden: usize,
        latent_dim: usize,
        #[serde(default)]
        pretrain_epochs: usize,
        #[serde(default = "default_pretrain_lr")]
        pretrain_lr: f64,
    },
}

fn default_pretrain_lr() -> f64 {
    0.01
}

fn default_latent_dim() -> usize {
    128
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcrSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub umap: UmapSection,
    #[serde(default)]
    pub baseline: Option<FcrBaselineConfig>,
    /// Cut the dendrogram to this many clusters; absent = auto-select.
    #[serde(default)]
    pub num_clusters: Option<usize>,
    #[serde(default)]
    pub fine_tune: bool,
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
}

fn default_k() -> usize {
    5
}

fn default_gamma() -> f64 {
    1.0
}

fn default_finetune_epochs() -> usize {
    5
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcrBaselineConfig {
    Umap,
    Pca,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UmapSection {
    #[serde(default = "default_n_neighbors")]
    pub n_neighbors: usize,
    #[serde(default = "default_target_dim")]
    pub target_dim: usize,
    #[serde(default = "default_min_dist")]
    pub min_dist: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_n_neighbors() -> usize {
    15
}
fn default_target_dim() -> usize {
    2
}
fn default_min_dist() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    200
}

impl Default for UmapSection {
    fn default() -> Self {
        Self {
            n_neighbors: default_n_neighbors(),
            target_dim: default_target_dim(),
            min_dist: default_min_dist(),
            epochs: default_epochs(),
        }
    }
}

impl FcrSection {
    pub fn to_core(&self, seed: u64) -> flt_core::relatedness::FcrConfig {
        flt_core::relatedness::FcrConfig {
            k: self.k,
            gamma: self.gamma,
            umap: UmapParams {
                n_neighbors: self.umap.n_neighbors,
                target_dim: self.umap.target_dim,
                min_dist: self.umap.min_dist,
                epochs: self.umap.epochs,
                seed,
            },
            num_clusters: self.num_clusters,
            mode: if self.fine_tune { FcrMode::FineTune } else { FcrMode::Normal },
            baseline: match self.baseline {
                Some(FcrBaselineConfig::Pca) => FcrBaseline::Pca,
                _ => FcrBaseline::Umap,
            },
            finetune_epochs: self.finetune_epochs,
            finetune_batch_size: 10,
            finetune_lr: 0.01,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub methods: Vec<Method>,
    pub rounds: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub model: ModelConfig,
    #[serde(default)]
    pub literal_normalization: bool,
    #[serde(default)]
    pub dynamic: Option<DynamicSection>,
}

fn default_rho() -> f64 {
    0.2
}
fn default_local_epochs() -> usize {
    5
}
fn default_batch_size() -> usize {
    10
}
fn default_lr() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "default_dropout")]
        dropout: f64,
    },
    SmallCnn,
}

fn default_hidden() -> usize {
    200
}
fn default_dropout() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSection {
    pub lambda: usize,
    pub tau: usize,
    #[serde(default)]
    pub drift: Vec<DriftEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub emit_graph_csv: bool,
    #[serde(default)]
    pub emit_plots: bool,
    #[serde(default)]
    pub checkpoints: CheckpointPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    None,
    #[default]
    Global,
    All,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// All validation problems, or empty when the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let p = &self.partition;
        if p.clients == 0 {
            errors.push("partition.clients must be >= 1".into());
        }
        if p.clusters == 0 {
            errors.push("partition.clusters must be >= 1".into());
        }
        if p.clusters > 0 && p.clients % p.clusters != 0 {
            errors.push(format!(
                "partition.clients ({}) must be divisible by partition.clusters ({})",
                p.clients, p.clusters
            ));
        }
        if matches!(p.mode, PartitionMode::Pathological | PartitionMode::Overlap1)
            && p.labels_per_cluster == 0
        {
            errors.push("partition.labels_per_cluster must be >= 1 for pathological modes".into());
        }
        if p.mode == PartitionMode::Overlap1 && p.labels_per_cluster < 2 {
            errors.push("partition.labels_per_cluster must be >= 2 for overlap1".into());
        }
        if p.mode == PartitionMode::Structured && p.alpha < 1.0 {
            errors.push("partition.alpha must be >= 1 for structured mode".into());
        }
        if p.delta < 0.0 {
            errors.push("partition.delta must be >= 0".into());
        }
        if !(0.0..1.0).contains(&p.test_fraction) {
            errors.push("partition.test_fraction must be in [0, 1)".into());
        }
        if let DatasetConfig::Idx { images, labels, .. } = &self.dataset {
            if !images.exists() {
                errors.push(format!("dataset.images not found: {}", images.display()));
            }
            if !labels.exists() {
                errors.push(format!("dataset.labels not found: {}", labels.display()));
            }
        }
        let f = &self.federation;
        if f.methods.is_empty() {
            errors.push("federation.methods must list at least one method".into());
        }
        if f.rounds == 0 {
            errors.push("federation.rounds must be >= 1".into());
        }
        if !(f.rho > 0.0 && f.rho <= 1.0) {
            errors.push(format!("federation.rho ({}) must be in (0, 1]", f.rho));
        }
        if f.batch_size == 0 {
            errors.push("federation.batch_size must be >= 1".into());
        }
        if f.lr < 0.0 {
            errors.push("federation.lr must be >= 0".into());
        }
        if self.fcr.k == 0 {
            errors.push("fcr.k must be >= 1".into());
        }
        if self.fcr.gamma <= 0.0 {
            errors.push("fcr.gamma must be > 0".into());
        }
        if self.fcr.umap.n_neighbors < 2 {
            errors.push("fcr.umap.n_neighbors must be >= 2".into());
        }
        if let Some(c) = self.fcr.num_clusters {
            if c == 0 || c > p.clients {
                errors.push(format!(
                    "fcr.num_clusters ({c}) must be in [1, clients = {}]",
                    p.clients
                ));
            }
        }
        if let Some(d) = &f.dynamic {
            for event in &d.drift {
                if event.round >= f.rounds {
                    errors.push(format!(
                        "dynamic.drift round {} beyond federation.rounds {}",
                        event.round, f.rounds
                    ));
                }
                for &c in &event.rotate_clients {
                    if c >= p.clients {
                        errors.push(format!("dynamic.drift client {c} out of range"));
                    }
                }
            }
        }
        errors
    }

    /// Output directory with the environment override applied.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os("FLT_OUTPUT_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.dir.clone(),
        }
    }
}
