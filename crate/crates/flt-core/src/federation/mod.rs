//! Round-based federated orchestration: client selection, local training,
//! and the aggregation rules (plain averaging, graph-weighted averaging over
//! the full relatedness matrix, cluster-wise averaging, and pure local).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::accuracy;
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::nn::{EncoderHandle, Mode, Model};
use crate::relatedness::{run_fcr, FcrConfig, FcrMode, RelatednessGraph};
use crate::rng::{self, stage};

/// Flattened per-client parameter vectors, one column per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMatrix {
    pub dim: usize,
    pub columns: Vec<Vec<f64>>,
}

impl ParamMatrix {
    /// Every client starts from the same template parameters.
    pub fn replicate(template: &Model, num_clients: usize) -> Self {
        let flat = template.flatten_params();
        ParamMatrix {
            dim: flat.len(),
            columns: vec![flat; num_clients],
        }
    }

    pub fn num_clients(&self) -> usize {
        self.columns.len()
    }

    /// Squared Frobenius norm of the difference (the optimality gap measure).
    pub fn gap(&self, other: &ParamMatrix) -> Result<f64> {
        if self.dim != other.dim || self.columns.len() != other.columns.len() {
            return Err(Error::ShapeMismatch {
                context: "ParamMatrix::gap".into(),
                expected: format!("{}x{}", self.dim, self.columns.len()),
                got: format!("{}x{}", other.dim, other.columns.len()),
            });
        }
        Ok(self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.columns
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "fedavg")]
    FedAvg,
    FltFull,
    FltClustered,
    Local,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FedAvg => "fedavg",
            Method::FltFull => "flt_full",
            Method::FltClustered => "flt_clustered",
            Method::Local => "local",
        }
    }

    pub fn needs_graph(&self) -> bool {
        matches!(self, Method::FltFull | Method::FltClustered)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FederationConfig {
    pub method: Method,
    /// Communication rounds T.
    pub rounds: usize,
    /// Participation fraction rho in (0, 1].
    pub rho: f64,
    /// Local epochs E per selected client per round.
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Use the literal aggregation normalizations (degree scaling for the
    /// full graph, 1/|C_c| for clusters) instead of the row-stochastic /
    /// renormalized forms. Off by default; the literal forms do not reduce
    /// to plain averaging on the complete graph.
    pub literal_normalization: bool,
    /// One-off communication charged before round 1 (encoder broadcast and
    /// signature upload for graph-based methods), in parameter-count units.
    pub initial_comm_units: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            method: Method::FedAvg,
            rounds: 10,
            rho: 0.2,
            local_epochs: 5,
            batch_size: 10,
            lr: 0.01,
            literal_normalization: false,
            initial_comm_units: 0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho = {} outside (0, 1]", self.rho)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-round change flags (1 = client reports a data-distribution change).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChangeFlags {
    pub delta: Vec<u8>,
}

impl ChangeFlags {
    pub fn zeros(m: usize) -> Self {
        Self { delta: vec![0; m] }
    }

    pub fn sum(&self) -> usize {
        self.delta.iter().map(|&d| d as usize).sum()
    }
}

/// Dynamic re-clustering: when triggered, the relatedness graph is rebuilt
/// with the encoder in fine-tune mode and the flags reset.
#[derive(Debug, Clone)]
pub struct DynamicRecluster {
    /// Re-cluster when more than `lambda` clients flag a change.
    pub lambda: usize,
    /// Also re-cluster every `tau` rounds (0 disables the periodic trigger).
    pub tau: usize,
    pub encoder: EncoderHandle,
    pub fcr: FcrConfig,
    /// Scenario-level distribution drift: at `round`, rotate the datasets of
    /// the listed clients (client i receives client i+1's data, cyclically)
    /// and raise their change flags.
    pub drift: Vec<DriftEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftEvent {
    pub round: usize,
    pub rotate_clients: Vec<usize>,
}

/// Per-round evaluation over all clients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub method: Method,
    pub mean_train_acc: f64,
    pub mean_test_acc: f64,
    pub test_acc_stderr: f64,
    pub test_acc_variance: f64,
    pub optimality_gap: f64,
    pub comm_units_cumulative: u64,
    /// Units are parameter counts; the byte view assumes 64-bit reals.
    pub comm_bytes_cumulative: u64,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub history: Vec<RoundMetrics>,
    pub final_params: ParamMatrix,
    /// The relatedness graph in effect at the end (rebuilt if dynamic
    /// re-clustering fired).
    pub final_graph: Option<RelatednessGraph>,
    /// Rounds at which dynamic re-clustering fired.
    pub reclustered_at: Vec<usize>,
}

/// Uniform sample without replacement of round(rho * M) clients,
/// deterministic per (seed, round) stream. Returned sorted.
pub fn select_clients(m: usize, rho: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = ((rho * m as f64) + 0.5).floor() as usize;
    let count = count.min(m);
    let mut pool: Vec<usize> = (0..m).collect();
    for i in 0..count {
        let j = rng.random_range(i..m);
        pool.swap(i, j);
    }
    let mut chosen = pool[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Row-normalized aggregation weights: `A_bar[i][j] = A~[i][j] p_j / sum_j'
/// A~[i][j'] p_j'`. Every row sums to 1 because the diagonal of the
/// adjacency is 1 and p is positive somewhere in each neighborhood.
pub fn row_normalize(a_tilde: &[Vec<f64>], p: &[f64]) -> Vec<Vec<f64>> {
    let m = a_tilde.len();
    let mut a_bar = vec![vec![0.0; m]; m];
    for i in 0..m {
        let denom: f64 = (0..m).map(|j| a_tilde[i][j] * p[j]).sum();
        if denom > 0.0 {
            for j in 0..m {
                a_bar[i][j] = a_tilde[i][j] * p[j] / denom;
            }
        } else {
            a_bar[i][i] = 1.0;
        }
    }
    a_bar
}

/// Graph-weighted averaging: column i becomes the data-weighted average of
/// client i's neighborhood, `sum_j A_bar[i][j] w_j`.
pub fn aggregate_full(w_bar: &ParamMatrix, a_bar: &[Vec<f64>]) -> Result<ParamMatrix> {
    let m = w_bar.num_clients();
    if a_bar.len() != m {
        return Err(Error::ShapeMismatch {
            context: "aggregate_full".into(),
            expected: format!("{m}x{m} weights"),
            got: format!("{}x?", a_bar.len()),
        });
    }
    for (i, row) in a_bar.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "aggregation weights row {i} sums to {s}, not 1"
            )));
        }
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut out = vec![0.0; w_bar.dim];
            for j in 0..m {
                let w = a_bar[i][j];
                if w == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&w_bar.columns[j]) {
                    *o += w * v;
                }
            }
            out
        })
        .collect();
    Ok(ParamMatrix {
        dim: w_bar.dim,
        columns,
    })
}

/// The literal full-graph update `W A~ diag(p_i / deg_i)`: column i is
/// scaled by p_i over its degree rather than row-normalized. Kept for
/// comparison; it does not reduce to plain averaging on the complete graph.
pub fn aggregate_full_literal(
    w_bar: &ParamMatrix,
    a_tilde: &[Vec<f64>],
    p: &[f64],
) -> Result<ParamMatrix> {
    let m = w_bar.num_clients();
    if a_tilde.len() != m || p.len() != m {
        return Err(Error::ShapeMismatch {
            context: "aggregate_full_literal".into(),
            expected: format!("{m} clients"),
            got: format!("{}x{}", a_tilde.len(), p.len()),
        });
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let degree: f64 = a_tilde[i].iter().filter(|&&v| v != 0.0).count() as f64;
            let scale = p[i] / degree.max(1.0);
            let mut out = vec![0.0; w_bar.dim];
            for j in 0..m {
                if a_tilde[i][j] == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&w_bar.columns[j]) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|v| *v *= scale);
            out
        })
        .collect();
    Ok(ParamMatrix {
        dim: w_bar.dim,
        columns,
    })
}

/// Cluster-wise averaging: one model per cluster, the within-cluster
/// data-weighted mean (weights renormalized to sum to 1 inside the cluster);
/// every member receives the cluster model.
pub fn aggregate_clustered(
    w_bar: &ParamMatrix,
    clusters: &[usize],
    p: &[f64],
) -> Result<ParamMatrix> {
    aggregate_clustered_impl(w_bar, clusters, p, false)
}

/// The literal cluster rule `(1/|C_c|) sum p_m w_m`; shrinks parameters when
/// cluster data fractions are small. Kept for comparison.
pub fn aggregate_clustered_literal(
    w_bar: &ParamMatrix,
    clusters: &[usize],
    p: &[f64],
) -> Result<ParamMatrix> {
    aggregate_clustered_impl(w_bar, clusters, p, true)
}

fn aggregate_clustered_impl(
    w_bar: &ParamMatrix,
    clusters: &[usize],
    p: &[f64],
    literal: bool,
) -> Result<ParamMatrix> {
    let m = w_bar.num_clients();
    if clusters.len() != m || p.len() != m {
        return Err(Error::InvalidArgument(format!(
            "cluster assignment covers {} of {m} clients",
            clusters.len()
        )));
    }
    let num_clusters = clusters.iter().copied().max().map_or(0, |c| c + 1);
    let mut cluster_models = vec![vec![0.0; w_bar.dim]; num_clusters];
    let mut cluster_psum = vec![0.0; num_clusters];
    let mut cluster_size = vec![0usize; num_clusters];
    for (i, &c) in clusters.iter().enumerate() {
        cluster_psum[c] += p[i];
        cluster_size[c] += 1;
        for (o, &v) in cluster_models[c].iter_mut().zip(&w_bar.columns[i]) {
            *o += p[i] * v;
        }
    }
    for c in 0..num_clusters {
        if cluster_size[c] == 0 {
            continue;
        }
        let scale = if literal {
            1.0 / cluster_size[c] as f64
        } else {
            if cluster_psum[c] <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cluster {c} has zero total data weight"
                )));
            }
            1.0 / cluster_psum[c]
        };
        cluster_models[c].iter_mut().for_each(|v| *v *= scale);
    }
    let columns: Vec<Vec<f64>> = clusters.iter().map(|&c| cluster_models[c].clone()).collect();
    Ok(ParamMatrix {
        dim: w_bar.dim,
        columns,
    })
}

/// Re-cluster when more than `lambda` clients flag a change or every `tau`
/// rounds (`tau = 0` disables the periodic trigger). `t` is the 1-based
/// round number.
pub fn dynamic_recluster_check(flags: &ChangeFlags, lambda: usize, tau: usize, t: usize) -> bool {
    flags.sum() > lambda || (tau > 0 && t % tau == 0)
}

/// Runs T communication rounds: select clients, train locally in parallel,
/// aggregate per the configured method, and record metrics over all clients.
/// Non-selected clients keep their current parameters.
pub fn run_federation(
    cfg: &FederationConfig,
    clients: &[ClientDataset],
    graph: Option<&RelatednessGraph>,
    model_template: &Model,
    mut dynamic: Option<DynamicRecluster>,
    seed: u64,
) -> Result<FederationOutcome> {
    cfg.validate()?;
    let m = clients.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    if cfg.method.needs_graph() && graph.is_none() {
        return Err(Error::InvalidArgument(format!(
            "method {} requires a relatedness graph",
            cfg.method.as_str()
        )));
    }
    if let Some(g) = graph {
        if g.num_clients() != m {
            return Err(Error::ShapeMismatch {
                context: "run_federation graph".into(),
                expected: format!("{m} clients"),
                got: format!("{}", g.num_clients()),
            });
        }
    }

    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    let mut working_graph = graph.cloned();
    let mut working_clients: Vec<ClientDataset> = clients.to_vec();
    let mut params = ParamMatrix::replicate(model_template, m);
    let mut flags = ChangeFlags::zeros(m);
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut reclustered_at = Vec::new();
    let mut comm_units: u64 = cfg.initial_comm_units;
    let param_count = model_template.param_count() as u64;

    for t in 0..cfg.rounds {
        // scenario drift: swap datasets and raise flags
        if let Some(dyn_cfg) = dynamic.as_ref() {
            for event in dyn_cfg.drift.iter().filter(|e| e.round == t) {
                rotate_datasets(&mut working_clients, &event.rotate_clients);
                for &c in &event.rotate_clients {
                    if c < m {
                        flags.delta[c] = 1;
                    }
                }
            }
        }

        let mut sel_rng = rng::stream(seed, &[stage::SELECTION, t as u64]);
        let selected = select_clients(m, cfg.rho, &mut sel_rng);
        comm_units += 2 * selected.len() as u64 * param_count;

        // local training, parallel across selected clients; per-client
        // streams make the result independent of scheduling
        let trained: Vec<(usize, Vec<f64>)> = selected
            .par_iter()
            .map(|&client_id| -> Result<(usize, Vec<f64>)> {
                let client = &working_clients[client_id];
                let mut model = model_template.clone();
                model.unflatten_params(&params.columns[client_id])?;
                model.set_mode(Mode::Train);
                model.train_local(
                    &client.train,
                    cfg.local_epochs,
                    cfg.batch_size,
                    cfg.lr,
                    rng::derive(seed, &[stage::LOCAL_TRAIN, client_id as u64, t as u64]),
                )?;
                Ok((client_id, model.flatten_params()))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut w_bar = params.clone();
        for (client_id, flat) in trained {
            w_bar.columns[client_id] = flat;
        }

        let next = match cfg.method {
            Method::Local => w_bar,
            Method::FedAvg => {
                let mut global = vec![0.0; w_bar.dim];
                for (j, col) in w_bar.columns.iter().enumerate() {
                    for (g, &v) in global.iter_mut().zip(col) {
                        *g += p[j] * v;
                    }
                }
                ParamMatrix {
                    dim: w_bar.dim,
                    columns: vec![global; m],
                }
            }
            Method::FltFull => {
                let g = working_graph.as_ref().expect("graph checked");
                if cfg.literal_normalization {
                    aggregate_full_literal(&w_bar, &g.a_tilde, &p)?
                } else {
                    aggregate_full(&w_bar, &g.a_bar)?
                }
            }
            Method::FltClustered => {
                let g = working_graph.as_ref().expect("graph checked");
                let clusters = g.clusters.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("graph has no cluster assignment".into())
                })?;
                if cfg.literal_normalization {
                    aggregate_clustered_literal(&w_bar, clusters, &p)?
                } else {
                    aggregate_clustered(&w_bar, clusters, &p)?
                }
            }
        };

        let gap = next.gap(&params)?;
        params = next;

        // evaluate all clients on their own train/test data
        let accs: Vec<(Option<f64>, Option<f64>)> = (0..m)
            .into_par_iter()
            .map(|i| -> Result<(Option<f64>, Option<f64>)> {
                let mut model = model_template.clone();
                model.unflatten_params(&params.columns[i])?;
                model.set_mode(Mode::Eval);
                let train_acc = if working_clients[i].train.is_empty() {
                    None
                } else {
                    Some(accuracy(&model, &working_clients[i].train)?)
                };
                let test_acc = if working_clients[i].test.is_empty() {
                    None
                } else {
                    Some(accuracy(&model, &working_clients[i].test)?)
                };
                Ok((train_acc, test_acc))
            })
            .collect::<Result<Vec<_>>>()?;
        let train_accs: Vec<f64> = accs.iter().filter_map(|(tr, _)| *tr).collect();
        let test_accs: Vec<f64> = accs.iter().filter_map(|(_, te)| *te).collect();
        let train_stats = crate::analysis::accuracy_stats(&train_accs)?;
        let test_stats = crate::analysis::accuracy_stats(&test_accs)?;

        history.push(RoundMetrics {
            round: t,
            method: cfg.method,
            mean_train_acc: train_stats.mean,
            mean_test_acc: test_stats.mean,
            test_acc_stderr: test_stats.stderr,
            test_acc_variance: test_stats.variance,
            optimality_gap: gap,
            comm_units_cumulative: comm_units,
            comm_bytes_cumulative: comm_units * 8,
        });

        // optional dynamic re-clustering (1-based round number)
        if let Some(dyn_cfg) = dynamic.as_mut() {
            if cfg.method.needs_graph()
                && dynamic_recluster_check(&flags, dyn_cfg.lambda, dyn_cfg.tau, t + 1)
            {
                let mut fcr_cfg = dyn_cfg.fcr.clone();
                fcr_cfg.mode = FcrMode::FineTune;
                fcr_cfg.seed = rng::derive(seed, &[stage::FINETUNE, 0xF, t as u64]);
                working_graph = Some(run_fcr(&working_clients, &dyn_cfg.encoder, &fcr_cfg)?);
                flags = ChangeFlags::zeros(m);
                reclustered_at.push(t);
            }
        }
    }

    Ok(FederationOutcome {
        history,
        final_params: params,
        final_graph: working_graph,
        reclustered_at,
    })
}

/// Cyclically rotates the train/test datasets among the listed clients.
fn rotate_datasets(clients: &mut [ClientDataset], ids: &[usize]) {
    if ids.len() < 2 {
        return;
    }
    let first_train = clients[ids[0]].train.clone();
    let first_test = clients[ids[0]].test.clone();
    for w in 0..ids.len() - 1 {
        let (src, dst) = (ids[w + 1], ids[w]);
        clients[dst].train = clients[src].train.clone();
        clients[dst].test = clients[src].test.clone();
    }
    let last = *ids.last().expect("len >= 2");
    clients[last].train = first_train;
    clients[last].test = first_test;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_matrix(values: &[f64]) -> ParamMatrix {
        ParamMatrix {
            dim: 1,
            columns: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    #[test]
    fn select_all_when_rho_one() {
        let mut r = rng::stream(0, &[stage::SELECTION]);
        assert_eq!(select_clients(7, 1.0, &mut r), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn selection_is_stream_deterministic() {
        let pick = |seed| {
            let mut r = rng::stream(seed, &[stage::SELECTION, 3]);
            select_clients(50, 0.2, &mut r)
        };
        assert_eq!(pick(9), pick(9));
        assert_eq!(pick(9).len(), 10);
    }

    #[test]
    fn row_normalize_matches_hand_arithmetic() {
        // all-ones with uniform p -> 1/M
        let ones = vec![vec![1.0; 3]; 3];
        let p = vec![1.0 / 3.0; 3];
        let a = row_normalize(&ones, &p);
        for row in &a {
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // identity stays identity
        let mut eye = vec![vec![0.0; 3]; 3];
        for (i, r) in eye.iter_mut().enumerate() {
            r[i] = 1.0;
        }
        assert_eq!(row_normalize(&eye, &p), eye);
        // p = (0.5, 0.3, 0.2), client 0 adjacent to {0, 1}
        let adj = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let p = vec![0.5, 0.3, 0.2];
        let a = row_normalize(&adj, &p);
        assert!((a[0][0] - 0.625).abs() < 1e-12);
        assert!((a[0][1] - 0.375).abs() < 1e-12);
        assert_eq!(a[0][2], 0.0);
        for row in &a {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_full_neighborhood_means() {
        // block graph {0,1} + {2}, uniform p, scalar models (0, 2, 5)
        let w = scalar_matrix(&[0.0, 2.0, 5.0]);
        let adj = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let p = vec![1.0 / 3.0; 3];
        let a_bar = row_normalize(&adj, &p);
        let out = aggregate_full(&w, &a_bar).unwrap();
        assert!((out.columns[0][0] - 1.0).abs() < 1e-12);
        assert!((out.columns[1][0] - 1.0).abs() < 1e-12);
        assert!((out.columns[2][0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_full_complete_graph_is_fedavg() {
        let w = scalar_matrix(&[1.0, 2.0, 4.0]);
        let p = vec![0.5, 0.25, 0.25];
        let ones = vec![vec![1.0; 3]; 3];
        let a_bar = row_normalize(&ones, &p);
        let out = aggregate_full(&w, &a_bar).unwrap();
        let fedavg = 0.5 * 1.0 + 0.25 * 2.0 + 0.25 * 4.0;
        for c in &out.columns {
            assert!((c[0] - fedavg).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_full_identity_is_local() {
        let w = scalar_matrix(&[1.0, 2.0, 4.0]);
        let mut eye = vec![vec![0.0; 3]; 3];
        for (i, r) in eye.iter_mut().enumerate() {
            r[i] = 1.0;
        }
        let out = aggregate_full(&w, &eye).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn aggregate_clustered_hand_case() {
        // clusters {0,1} and {2}, uniform p, scalar models (0, 2, 5)
        let w = scalar_matrix(&[0.0, 2.0, 5.0]);
        let out = aggregate_clustered(&w, &[0, 0, 1], &[1.0 / 3.0; 3]).unwrap();
        assert!((out.columns[0][0] - 1.0).abs() < 1e-12);
        assert!((out.columns[1][0] - 1.0).abs() < 1e-12);
        assert!((out.columns[2][0] - 5.0).abs() < 1e-12);
        // singleton cluster keeps its column
        let out = aggregate_clustered(&scalar_matrix(&[7.5]), &[0], &[1.0]).unwrap();
        assert_eq!(out.columns[0][0], 7.5);
    }

    #[test]
    fn aggregate_clustered_one_global_cluster_is_fedavg() {
        let w = scalar_matrix(&[1.0, 2.0, 4.0]);
        let p = vec![0.5, 0.25, 0.25];
        let out = aggregate_clustered(&w, &[0, 0, 0], &p).unwrap();
        for c in &out.columns {
            assert!((c[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn literal_forms_differ_from_row_stochastic_on_complete_graph() {
        let w = scalar_matrix(&[1.0, 1.0, 1.0]);
        let ones = vec![vec![1.0; 3]; 3];
        let p = vec![1.0 / 3.0; 3];
        let literal = aggregate_full_literal(&w, &ones, &p).unwrap();
        // literal scale: p_i/deg * sum = (1/3)/3 * 3 = 1/3, not 1
        assert!((literal.columns[0][0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_convex_max_norm_never_grows() {
        let w = scalar_matrix(&[-3.0, 2.0, 5.0, 0.5]);
        let adj = vec![
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
        ];
        let p = vec![0.1, 0.4, 0.3, 0.2];
        let a_bar = row_normalize(&adj, &p);
        let out = aggregate_full(&w, &a_bar).unwrap();
        assert!(out.max_abs() <= w.max_abs() + 1e-12);
    }

    #[test]
    fn dynamic_trigger_logic() {
        let flags0 = ChangeFlags::zeros(5);
        // periodic trigger at t = tau
        assert!(dynamic_recluster_check(&flags0, 5, 4, 4));
        assert!(!dynamic_recluster_check(&flags0, 5, 4, 3));
        // tau = 0 disables periodic; lambda = M never exceeded
        assert!(!dynamic_recluster_check(&flags0, 5, 0, 12));
        // flag trigger
        let flags3 = ChangeFlags { delta: vec![1, 1, 1, 0, 0] };
        assert!(dynamic_recluster_check(&flags3, 2, 0, 1));
        assert!(!dynamic_recluster_check(&flags3, 3, 0, 1));
    }
}
