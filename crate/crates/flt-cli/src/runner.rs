//! Experiment orchestration: dataset -> partition -> encoder -> relatedness
//! graph -> federated runs -> artifacts on disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use flt_core::analysis::{adjusted_rand_index, comm_cost, CommMethod, CommParams};
use flt_core::data::{
    gen_gaussian_mixture, load_idx, partition_pathological, sample_structured_noniid, Dataset,
    GaussianMixtureSpec, Partition, PartitionMode,
};
use flt_core::federation::{
    run_federation, DynamicRecluster, FederationConfig, FederationOutcome, Method, RoundMetrics,
};
use flt_core::nn::{self, EncoderHandle, Mode, Model};
use flt_core::relatedness::RelatednessGraph;
use flt_core::rng;

use crate::config::{
    CheckpointPolicy, DatasetConfig, EncoderConfig, ModelConfig, ScenarioConfig,
};

/// Tags for seed streams owned by the orchestrator.
mod tag {
    pub const DATASET: u64 = 0x10;
    pub const PARTITION: u64 = 0x11;
    pub const ENCODER: u64 = 0x12;
    pub const FCR: u64 = 0x13;
    pub const MODEL: u64 = 0x14;
    pub const FEDERATION: u64 = 0x15;
}

fn stage_err(stage: &str, err: impl std::fmt::Display) -> String {
    format!("stage {stage}: {err}")
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub final_mean_train_acc: f64,
    pub final_mean_test_acc: f64,
    pub final_test_acc_stderr: f64,
    pub final_test_acc_variance: f64,
    pub final_optimality_gap: f64,
    pub comm_units: u64,
    pub reclustered_at: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub clients: usize,
    pub rounds: usize,
    pub methods: Vec<MethodSummary>,
    /// ARI of the discovered graph clusters against the partition ground
    /// truth, when a graph was computed.
    pub graph_ari: Option<f64>,
    pub graph_num_clusters: Option<usize>,
    /// One-shot relatedness overhead charged to graph-based methods,
    /// in parameter-count units.
    pub one_off_comm_units: u64,
    pub output_dir: PathBuf,
}

/// Runs every configured method over one shared partition, graph, and model
/// template, then writes metrics.csv, graph.json, summary.json, and optional
/// checkpoints/plots under the output directory.
pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentSummary, String> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(format!(
            "stage validate: {} problem(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        ));
    }
    let seed = config.seed;

    let dataset = build_dataset(&config.dataset, rng::derive(seed, &[tag::DATASET]))
        .map_err(|e| stage_err("dataset", e))?;

    let partition = build_partition(config, &dataset, rng::derive(seed, &[tag::PARTITION]))
        .map_err(|e| stage_err("partition", e))?;

    let encoder = build_encoder(
        &config.encoder,
        &dataset,
        rng::derive(seed, &[tag::ENCODER]),
    )
    .map_err(|e| stage_err("encoder", e))?;

    let needs_graph = config.federation.methods.iter().any(Method::needs_graph);
    let graph: Option<RelatednessGraph> = if needs_graph {
        let fcr_cfg = config.fcr.to_core(rng::derive(seed, &[tag::FCR]));
        Some(
            flt_core::relatedness::run_fcr(&partition.clients, &encoder, &fcr_cfg)
                .map_err(|e| stage_err("fcr", e))?,
        )
    } else {
        None
    };

    let template = build_model(
        &config.federation.model,
        &dataset,
        rng::derive(seed, &[tag::MODEL]),
    )
    .map_err(|e| stage_err("model", e))?;

    // one-off relatedness overhead per Table-style accounting:
    // encoder broadcast + signature upload
    let encoder_params = match &encoder {
        EncoderHandle::Identity { .. } => 0,
        EncoderHandle::Autoencoder { model, .. } => model.param_count(),
    } as u64;
    let m = partition.clients.len() as u64;
    let one_off = m * encoder_params
        + (config.fcr.k as u64) * m * (encoder.latent_dim() as u64);

    let mut all_metrics: Vec<RoundMetrics> = Vec::new();
    let mut method_summaries = Vec::new();
    let mut outcomes: Vec<(Method, FederationOutcome)> = Vec::new();
    for &method in &config.federation.methods {
        let fed_cfg = FederationConfig {
            method,
            rounds: config.federation.rounds,
            rho: config.federation.rho,
            local_epochs: config.federation.local_epochs,
            batch_size: config.federation.batch_size,
            lr: config.federation.lr,
            literal_normalization: config.federation.literal_normalization,
            initial_comm_units: if method.needs_graph() { one_off } else { 0 },
        };
        let dynamic = config.federation.dynamic.as_ref().map(|d| DynamicRecluster {
            lambda: d.lambda,
            tau: d.tau,
            encoder: encoder.clone(),
            fcr: config.fcr.to_core(rng::derive(seed, &[tag::FCR, 1])),
            drift: d.drift.clone(),
        });
        let outcome = run_federation(
            &fed_cfg,
            &partition.clients,
            graph.as_ref(),
            &template,
            dynamic,
            rng::derive(seed, &[tag::FEDERATION]),
        )
        .map_err(|e| stage_err(&format!("federation[{}]", method.as_str()), e))?;

        let last = outcome.history.last().expect("rounds >= 1");
        method_summaries.push(MethodSummary {
            method,
            final_mean_train_acc: last.mean_train_acc,
            final_mean_test_acc: last.mean_test_acc,
            final_test_acc_stderr: last.test_acc_stderr,
            final_test_acc_variance: last.test_acc_variance,
            final_optimality_gap: last.optimality_gap,
            comm_units: last.comm_units_cumulative,
            reclustered_at: outcome.reclustered_at.clone(),
        });
        all_metrics.extend(outcome.history.iter().cloned());
        outcomes.push((method, outcome));
    }

    let graph_ari = match &graph {
        Some(g) => match &g.clusters {
            Some(clusters) => Some(
                adjusted_rand_index(clusters, &partition.ground_truth.assignment)
                    .map_err(|e| stage_err("summary", e))?,
            ),
            None => None,
        },
        None => None,
    };

    let out_dir = config.output_dir();
    write_artifacts(
        config,
        &out_dir,
        &all_metrics,
        graph.as_ref(),
        &partition,
        &template,
        &outcomes,
        &method_summaries,
        graph_ari,
        one_off,
        encoder_params,
        encoder.latent_dim() as u64,
    )
    .map_err(|e| stage_err("output", e))?;

    Ok(ExperimentSummary {
        seed,
        clients: partition.clients.len(),
        rounds: config.federation.rounds,
        methods: method_summaries,
        graph_ari,
        graph_num_clusters: graph
            .as_ref()
            .and_then(|g| g.clusters.as_ref())
            .map(|c| c.iter().copied().max().map_or(0, |m| m + 1)),
        one_off_comm_units: one_off,
        output_dir: out_dir,
    })
}

pub fn build_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset, flt_core::Error> {
    match cfg {
        DatasetConfig::SyntheticMixture {
            dims,
            num_classes,
            samples_per_class,
            separation,
            std,
        } => {
            let spec = GaussianMixtureSpec {
                dims: *dims,
                means: flt_core::data::axis_aligned_means(*num_classes, *dims, *separation),
                stds: vec![*std; *num_classes],
                samples_per_cluster: *samples_per_class,
            };
            gen_gaussian_mixture(&spec, seed)
        }
        DatasetConfig::MnistLike { samples_per_class, std } => {
            mnist_like(*samples_per_class, *std, seed)
        }
        DatasetConfig::Idx {
            images,
            labels,
            take_per_class,
        } => {
            let ds = load_idx(images, labels)?;
            Ok(match take_per_class {
                Some(n) => ds.take_per_class(*n, seed),
                None => ds,
            })
        }
    }
}

/// 1x28x28, 10 classes: one blurred random glyph template per class plus
/// per-pixel Gaussian noise, clamped to [0, 1]. A digits-shaped stand-in for
/// runs that have no IDX files on disk.
pub fn mnist_like(samples_per_class: usize, std: f64, seed: u64) -> Result<Dataset, flt_core::Error> {
    use rand::Rng;
    let mut r = rng::stream(seed, &[0x33]);
    let mut means = Vec::with_capacity(10);
    for _ in 0..10 {
        // sparse positive template: strokes on a dark background
        let raw: Vec<f64> = (0..784)
            .map(|_| {
                let v: f64 = r.random_range(-1.0..1.0);
                if v > 0.35 {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        // 3x3 box blur for stroke-like correlation
        let mut blurred = vec![0.0; 784];
        for y in 0..28 {
            for x in 0..28 {
                let mut acc = 0.0f64;
                let mut cnt = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let ny = y as i32 + dy;
                        let nx = x as i32 + dx;
                        if (0..28).contains(&ny) && (0..28).contains(&nx) {
                            acc += raw[(ny * 28 + nx) as usize];
                            cnt += 1.0;
                        }
                    }
                }
                blurred[y * 28 + x] = (acc / cnt * 2.0).min(1.0);
            }
        }
        means.push(blurred);
    }
    let spec = GaussianMixtureSpec {
        dims: 784,
        means,
        stds: vec![std; 10],
        samples_per_cluster: samples_per_class,
    };
    let raw = gen_gaussian_mixture(&spec, seed)?;
    let mut ds = Dataset::empty(vec![784], 10);
    for i in 0..raw.len() {
        let row: Vec<f64> = raw.feature(i).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ds.push_flat(&row, raw.label(i))?;
    }
    ds.reshaped(vec![1, 28, 28])
}

pub fn build_partition(
    config: &ScenarioConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<Partition, flt_core::Error> {
    let spec = config.partition.to_spec(seed);
    match config.partition.mode {
        PartitionMode::Pathological => partition_pathological(dataset, &spec, 0),
        PartitionMode::Overlap1 => partition_pathological(dataset, &spec, 1),
        PartitionMode::Structured => {
            let c = config.partition.clusters;
            let lpc = config
                .partition
                .structured_labels_per_cluster
                .unwrap_or_else(|| (dataset.num_classes / c).max(1));
            let cluster_labels: Vec<Vec<usize>> = (0..c)
                .map(|ci| {
                    (ci * lpc..(ci + 1) * lpc)
                        .filter(|&l| l < dataset.num_classes)
                        .collect()
                })
                .collect();
            let per = config.partition.clients / c;
            let membership: Vec<Vec<usize>> =
                (0..c).map(|ci| (ci * per..(ci + 1) * per).collect()).collect();
            sample_structured_noniid(dataset, &spec, &cluster_labels, &membership)
        }
    }
}

pub fn build_encoder(
    cfg: &EncoderConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<EncoderHandle, flt_core::Error> {
    match cfg {
        EncoderConfig::Identity => Ok(EncoderHandle::identity(dataset.sample_len())),
        EncoderConfig::ConvAe {
            latent_dim,
            pretrain_epochs,
            pretrain_lr,
        } => {
            let shape = dataset.feature_shape.clone();
            let (c, h, w) = match shape.as_slice() {
                [c, h, w] => (*c, *h, *w),
                _ => {
                    return Err(flt_core::Error::ShapeMismatch {
                        context: "conv_ae encoder".into(),
                        expected: "[C,H,W] features".into(),
                        got: format!("{shape:?}"),
                    })
                }
            };
            let mut ae = nn::conv_ae(c, h, w, *latent_dim, seed)?;
            pretrain(&mut ae, dataset, *pretrain_epochs, *pretrain_lr, seed)?;
            EncoderHandle::from_autoencoder(ae, nn::CONV_AE_ENCODER_LAYERS)
        }
        EncoderConfig::DenseAe {
            hidden,
            latent_dim,
            pretrain_epochs,
            pretrain_lr,
        } => {
            let mut ae = nn::dense_ae(dataset.sample_len(), *hidden, *latent_dim, seed)?;
            let flat = if dataset.feature_shape.len() > 1 {
                dataset.clone().reshaped(vec![dataset.sample_len()])?
            } else {
                dataset.clone()
            };
            pretrain(&mut ae, &flat, *pretrain_epochs, *pretrain_lr, seed)?;
            EncoderHandle::from_autoencoder(ae, nn::DENSE_AE_ENCODER_LAYERS)
        }
    }
}

fn pretrain(
    ae: &mut Model,
    dataset: &Dataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(), flt_core::Error> {
    if epochs == 0 {
        return Ok(());
    }
    ae.set_mode(Mode::Train);
    nn::finetune_autoencoder(ae, dataset, epochs, 32, lr, seed)
}

pub fn build_model(cfg: &ModelConfig, dataset: &Dataset, seed: u64) -> Result<Model, flt_core::Error> {
    match cfg {
        ModelConfig::Mlp { hidden, dropout } => nn::mlp(
            &dataset.feature_shape,
            *hidden,
            dataset.num_classes,
            *dropout,
            seed,
        ),
        ModelConfig::SmallCnn => {
            let (c, h, w) = match dataset.feature_shape.as_slice() {
                [c, h, w] => (*c, *h, *w),
                _ => {
                    return Err(flt_core::Error::ShapeMismatch {
                        context: "small_cnn".into(),
                        expected: "[C,H,W] features".into(),
                        got: format!("{:?}", dataset.feature_shape),
                    })
                }
            };
            nn::small_cnn(c, h, w, dataset.num_classes, seed)
        }
    }
}

pub const METRICS_HEADER: &str = "round,method,mean_train_acc,mean_test_acc,test_acc_stderr,test_acc_variance,optimality_gap,comm_units_cumulative,comm_bytes_cumulative";

/// Renders round metrics as CSV, one row per (method, round).
pub fn metrics_to_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.round,
            r.method.as_str(),
            r.mean_train_acc,
            r.mean_test_acc,
            r.test_acc_stderr,
            r.test_acc_variance,
            r.optimality_gap,
            r.comm_units_cumulative,
            r.comm_bytes_cumulative
        ));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    config: &ScenarioConfig,
    out_dir: &Path,
    metrics: &[RoundMetrics],
    graph: Option<&RelatednessGraph>,
    partition: &Partition,
    template: &Model,
    outcomes: &[(Method, FederationOutcome)],
    summaries: &[MethodSummary],
    graph_ari: Option<f64>,
    one_off: u64,
    encoder_params: u64,
    latent_dim: u64,
) -> Result<(), String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("mkdir {}: {e}", out_dir.display()))?;
    let write = |name: &str, contents: &str| -> Result<(), String> {
        fs::write(out_dir.join(name), contents).map_err(|e| format!("write {name}: {e}"))
    };

    write("metrics.csv", &metrics_to_csv(metrics))?;

    if let Some(g) = graph {
        write("graph.json", &g.to_json().map_err(|e| e.to_string())?)?;
        if config.output.emit_graph_csv {
            write("adjacency_raw.csv", &RelatednessGraph::matrix_csv(&g.a))?;
            write("adjacency.csv", &RelatednessGraph::matrix_csv(&g.a_tilde))?;
            if let Some(reordered) = g.reordered_adjacency() {
                write("adjacency_reordered.csv", &RelatednessGraph::matrix_csv(&reordered))?;
            }
        }
    }

    write(
        "manifest.json",
        &serde_json::to_string_pretty(&partition.manifest).map_err(|e| e.to_string())?,
    )?;

    // Table-style communication formulas evaluated at this run's parameters
    let comm_formula = {
        let p = CommParams {
            m: partition.clients.len() as u64,
            w_enc: encoder_params,
            w_local: template.param_count() as u64,
            k: config.fcr.k as u64,
            e: latent_dim,
            rho: config.federation.rho,
            t: config.federation.rounds as u64,
            c: config.partition.clusters as u64,
        };
        json!({
            "flt_units": comm_cost(CommMethod::Flt, &p),
            "fedsem_units": comm_cost(CommMethod::FedSem, &p),
            "ifca_units": comm_cost(CommMethod::Ifca, &p),
        })
    };

    let summary = json!({
        "seed": config.seed,
        "clients": partition.clients.len(),
        "rounds": config.federation.rounds,
        "methods": summaries,
        "graph_ari": graph_ari,
        "graph_num_clusters": graph.and_then(|g| g.clusters.as_ref().map(|c| c.iter().copied().max().map_or(0, |m| m + 1))),
        "one_off_comm_units": one_off,
        "comm_formula": comm_formula,
    });
    write(
        "summary.json",
        &serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?,
    )?;

    match config.output.checkpoints {
        CheckpointPolicy::None => {}
        CheckpointPolicy::Global | CheckpointPolicy::All => {
            let dir = out_dir.join("checkpoints");
            fs::create_dir_all(&dir).map_err(|e| format!("mkdir checkpoints: {e}"))?;
            for (method, outcome) in outcomes {
                let ids: Vec<usize> = match config.output.checkpoints {
                    CheckpointPolicy::All => (0..outcome.final_params.num_clients()).collect(),
                    _ => vec![0],
                };
                for id in ids {
                    let mut model = template.clone();
                    model
                        .unflatten_params(&outcome.final_params.columns[id])
                        .map_err(|e| e.to_string())?;
                    model.set_mode(Mode::Eval);
                    let name = dir.join(format!("{}_client{id}.ckpt", method.as_str()));
                    flt_core::nn::checkpoint::save(&model, &name).map_err(|e| e.to_string())?;
                }
            }
        }
    }

    if config.output.emit_plots {
        let series: Vec<(String, Vec<(f64, f64)>)> = config
            .federation
            .methods
            .iter()
            .map(|m| {
                (
                    m.as_str().to_string(),
                    metrics
                        .iter()
                        .filter(|r| r.method == *m)
                        .map(|r| (r.round as f64, r.mean_test_acc))
                        .collect(),
                )
            })
            .collect();
        write(
            "test_accuracy.svg",
            &crate::report::line_chart_svg("mean test accuracy per round", &series),
        )?;
    }

    Ok(())
}
