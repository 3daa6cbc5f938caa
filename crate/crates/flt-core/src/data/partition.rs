//! Non-IID partitioners: pathological label skew (disjoint or one-overlap
//! cluster label sets) and structured power-law quantity skew.

use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, Dataset, GroundTruthClusters, PartitionSpec};
use crate::error::{Error, Result};
use crate::nn::model::shuffle;
use crate::rng::{self, stage};

/// Reproducibility record: which source samples each client received.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub clients: Vec<ClientManifest>,
    /// Source samples whose label is not covered by any cluster.
    pub unassigned: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientManifest {
    pub client_id: usize,
    pub cluster: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// A partitioned federation workload.
#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<ClientDataset>,
    pub ground_truth: GroundTruthClusters,
    pub manifest: PartitionManifest,
}

/// Splits `data` across `spec.m` clients in `spec.c` equally sized clusters;
/// clients in a cluster draw only from that cluster's label set.
///
/// With `overlap = 0` the cluster label sets are disjoint blocks of
/// `labels_per_cluster`; with `overlap = 1`, consecutive clusters (cyclically)
/// share exactly one label. Samples of every covered label are split evenly,
/// first across the clusters sharing the label, then across the clients of
/// each cluster.
pub fn partition_pathological(
    data: &Dataset,
    spec: &PartitionSpec,
    overlap: usize,
) -> Result<Partition> {
    spec.validate()?;
    if overlap > 1 {
        return Err(Error::InvalidArgument("overlap must be 0 or 1".into()));
    }
    if spec.m % spec.c != 0 {
        return Err(Error::Partition(format!(
            "M = {} not divisible by C = {}",
            spec.m, spec.c
        )));
    }
    let lpc = spec.labels_per_cluster;
    if lpc == 0 || (overlap == 1 && lpc < 2) {
        return Err(Error::Partition(format!(
            "labels_per_cluster = {lpc} too small for overlap = {overlap}"
        )));
    }
    let labels_used = if overlap == 0 { spec.c * lpc } else { spec.c * (lpc - 1) };
    if labels_used > data.num_classes {
        return Err(Error::Partition(format!(
            "need {labels_used} distinct labels but dataset has {}",
            data.num_classes
        )));
    }

    // cluster -> label set
    let cluster_labels: Vec<Vec<usize>> = (0..spec.c)
        .map(|c| {
            (0..lpc)
                .map(|i| {
                    if overlap == 0 {
                        c * lpc + i
                    } else {
                        (c * (lpc - 1) + i) % labels_used
                    }
                })
                .collect()
        })
        .collect();

    // label -> owning clusters
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for (c, labels) in cluster_labels.iter().enumerate() {
        for &l in labels {
            owners[l].push(c);
        }
    }

    // deal each label's samples to its owners, evenly
    let by_class = data.indices_by_class();
    let mut cluster_pools: Vec<Vec<usize>> = vec![Vec::new(); spec.c];
    let mut unassigned = Vec::new();
    for (label, mut indices) in by_class.into_iter().enumerate() {
        if owners[label].is_empty() {
            unassigned.extend(indices);
            continue;
        }
        let mut r = rng::stream(spec.seed, &[stage::PARTITION, 0xA, label as u64]);
        shuffle(&mut indices, &mut r);
        let k = owners[label].len();
        let base = indices.len() / k;
        let extra = indices.len() % k;
        let mut off = 0;
        for (j, &c) in owners[label].iter().enumerate() {
            let take = base + usize::from(j < extra);
            cluster_pools[c].extend_from_slice(&indices[off..off + take]);
            off += take;
        }
    }

    let per_cluster = spec.m / spec.c;
    let mut assignment = Vec::with_capacity(spec.m);
    let mut client_indices: Vec<(usize, Vec<usize>)> = Vec::with_capacity(spec.m);
    for (c, mut pool) in cluster_pools.into_iter().enumerate() {
        if pool.len() < per_cluster {
            return Err(Error::Partition(format!(
                "cluster {c} has {} samples for {per_cluster} clients (deficit {})",
                pool.len(),
                per_cluster - pool.len()
            )));
        }
        let mut r = rng::stream(spec.seed, &[stage::PARTITION, 0xB, c as u64]);
        shuffle(&mut pool, &mut r);
        let base = pool.len() / per_cluster;
        let extra = pool.len() % per_cluster;
        let mut off = 0;
        for j in 0..per_cluster {
            let take = base + usize::from(j < extra);
            client_indices.push((c, pool[off..off + take].to_vec()));
            off += take;
            assignment.push(c);
        }
    }

    build_partition(data, spec, client_indices, assignment, unassigned)
}

/// Finds the power-law rate `beta` such that the per-cluster batch sizes
/// `alpha + e^(beta * m^delta)` for `m = 1..=m_c` sum to `total`, to within
/// half a sample. The objective is strictly increasing in beta, so the root
/// is isolated by doubling and closed by bisection.
pub fn solve_beta(alpha: f64, delta: f64, m_c: usize, total: f64) -> Result<f64> {
    if m_c == 0 {
        return Err(Error::InvalidArgument("m_c must be >= 1".into()));
    }
    if total <= alpha * m_c as f64 {
        return Err(Error::Partition(format!(
            "total {total} <= alpha * M_c = {}; power law cannot shrink below alpha",
            alpha * m_c as f64
        )));
    }
    let sum = |beta: f64| -> f64 {
        (1..=m_c)
            .map(|m| alpha + (beta * (m as f64).powf(delta)).min(700.0).exp())
            .sum()
    };

    let mut lo = -1.0;
    while sum(lo) > total {
        lo *= 2.0;
        if lo < -1e12 {
            break;
        }
    }
    let mut hi = 1.0;
    while sum(hi) < total {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Partition("solve_beta bracket overflow".into()));
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..200 {
        beta = 0.5 * (lo + hi);
        let s = sum(beta);
        if (s - total).abs() <= 1e-9 {
            break;
        }
        if s < total {
            lo = beta;
        } else {
            hi = beta;
        }
        if (hi - lo) <= 1e-14 * beta.abs().max(1.0) {
            break;
        }
    }
    if (sum(beta) - total).abs() > 0.5 {
        return Err(Error::Partition(format!(
            "solve_beta residual {} exceeds 0.5 samples",
            (sum(beta) - total).abs()
        )));
    }
    Ok(beta)
}

/// Power-law structured sampler: per cluster, samples are shuffled and dealt
/// sequentially in batches of `alpha + e^(beta* m^delta)` (rounded half-up;
/// the rounding residual, positive or negative, lands on the cluster's last
/// client). Produces both quantity skew and label skew.
pub fn sample_structured_noniid(
    data: &Dataset,
    spec: &PartitionSpec,
    cluster_labels: &[Vec<usize>],
    cluster_membership: &[Vec<usize>],
) -> Result<Partition> {
    spec.validate()?;
    if cluster_labels.len() != spec.c || cluster_membership.len() != spec.c {
        return Err(Error::Partition(format!(
            "expected {} cluster label sets and membership lists",
            spec.c
        )));
    }
    // label sets must be disjoint; membership must cover 0..M exactly once
    let mut label_owner = vec![None::<usize>; data.num_classes];
    for (c, labels) in cluster_labels.iter().enumerate() {
        for &l in labels {
            if l >= data.num_classes {
                return Err(Error::Partition(format!("label {l} out of range")));
            }
            if let Some(prev) = label_owner[l] {
                return Err(Error::Partition(format!(
                    "label {l} assigned to clusters {prev} and {c}; sets must be disjoint"
                )));
            }
            label_owner[l] = Some(c);
        }
    }
    let mut seen = vec![false; spec.m];
    for members in cluster_membership {
        for &m in members {
            if m >= spec.m || seen[m] {
                return Err(Error::Partition(format!(
                    "client {m} missing or duplicated in cluster membership"
                )));
            }
            seen[m] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Partition("some clients belong to no cluster".into()));
    }

    let by_class = data.indices_by_class();
    let mut unassigned: Vec<usize> = Vec::new();
    for (label, indices) in by_class.iter().enumerate() {
        if label_owner[label].is_none() {
            unassigned.extend(indices.iter().copied());
        }
    }

    let mut client_indices: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new()); spec.m];
    let mut assignment = vec![0usize; spec.m];
    for (c, members) in cluster_membership.iter().enumerate() {
        let mut pool: Vec<usize> = cluster_labels[c]
            .iter()
            .flat_map(|&l| by_class[l].iter().copied())
            .collect();
        let m_c = members.len();
        if m_c == 0 {
            continue;
        }
        let beta = solve_beta(spec.alpha, spec.delta, m_c, pool.len() as f64)?;
        let mut r = rng::stream(spec.seed, &[stage::PARTITION, 0xC, c as u64]);
        shuffle(&mut pool, &mut r);

        let mut sizes: Vec<usize> = (1..=m_c)
            .map(|m| {
                let raw = spec.alpha + (beta * (m as f64).powf(spec.delta)).min(700.0).exp();
                (raw + 0.5).floor() as usize
            })
            .collect();
        let assigned: usize = sizes.iter().sum();
        let total = pool.len();
        // residual from rounding (and the half-sample solve tolerance)
        if assigned > total {
            let overshoot = assigned - total;
            let last = sizes.last_mut().expect("m_c >= 1");
            if *last < overshoot {
                return Err(Error::Partition(format!(
                    "cluster {c}: rounding overshoot {overshoot} exceeds last client's batch"
                )));
            }
            *last -= overshoot;
        } else {
            *sizes.last_mut().expect("m_c >= 1") += total - assigned;
        }

        let mut off = 0;
        for (j, &client) in members.iter().enumerate() {
            let take = sizes[j];
            client_indices[client] = (c, pool[off..off + take].to_vec());
            assignment[client] = c;
            off += take;
        }
        debug_assert_eq!(off, pool.len(), "cluster pool fully assigned");
    }

    build_partition(data, spec, client_indices, assignment, unassigned)
}

/// Stratified train/test split and bookkeeping shared by both partitioners.
fn build_partition(
    data: &Dataset,
    spec: &PartitionSpec,
    client_indices: Vec<(usize, Vec<usize>)>,
    assignment: Vec<usize>,
    unassigned: Vec<usize>,
) -> Result<Partition> {
    let mut manifests = Vec::with_capacity(client_indices.len());
    let mut splits = Vec::with_capacity(client_indices.len());
    for (client_id, (cluster, indices)) in client_indices.into_iter().enumerate() {
        let (train_idx, test_idx) = stratified_split(data, &indices, spec.test_fraction);
        manifests.push(ClientManifest {
            client_id,
            cluster,
            train_indices: train_idx.clone(),
            test_indices: test_idx.clone(),
        });
        splits.push((train_idx, test_idx));
    }

    let total_train: usize = splits.iter().map(|(t, _)| t.len()).sum();
    if total_train == 0 {
        return Err(Error::Partition("partition produced no training samples".into()));
    }
    let clients = splits
        .into_iter()
        .enumerate()
        .map(|(client_id, (train_idx, test_idx))| ClientDataset {
            client_id,
            train: data.subset(&train_idx),
            test: data.subset(&test_idx),
            p: train_idx.len() as f64 / total_train as f64,
        })
        .collect();

    Ok(Partition {
        clients,
        ground_truth: GroundTruthClusters { assignment },
        manifest: PartitionManifest {
            clients: manifests,
            unassigned,
        },
    })
}

/// Splits a client's samples into train/test with the test set drawn
/// per-label proportionally, so both splits share one label distribution.
fn stratified_split(data: &Dataset, indices: &[usize], test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for &i in indices {
        by_label[data.label(i)].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in by_label {
        if group.is_empty() {
            continue;
        }
        let t = ((group.len() as f64) * test_fraction + 0.5).floor() as usize;
        let t = t.min(group.len().saturating_sub(1));
        let cut = group.len() - t;
        train.extend_from_slice(&group[..cut]);
        test.extend_from_slice(&group[cut..]);
    }
    if train.is_empty() && !test.is_empty() {
        train.push(test.pop().expect("non-empty"));
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
