//! Cross-module integration: the relatedness pipeline with trained encoders,
//! the PCA baseline, dynamic re-clustering, and bound evaluators fed from
//! simulated runs.

use flt_core::analysis::{
    adjusted_rand_index, estimate_smoothness, spectral_gap_norm, stepsize_window, theorem2_rhs,
    Theorem2Inputs,
};
use flt_core::data::{
    gen_gaussian_mixture, partition_pathological, ClientDataset, Dataset, GaussianMixtureSpec,
    PartitionMode, PartitionSpec,
};
use flt_core::federation::{
    row_normalize, run_federation, DriftEvent, DynamicRecluster, FederationConfig, Method,
};
use flt_core::linalg::euclidean;
use flt_core::nn::{self, EncoderHandle, Mode};
use flt_core::relatedness::{
    client_signature, run_fcr, FcrBaseline, FcrConfig, FcrMode, UmapParams,
};

fn blob_partition(m: usize, c: usize, seed: u64) -> flt_core::data::Partition {
    let classes = c * 2;
    let spec = GaussianMixtureSpec {
        dims: 12,
        means: flt_core::data::axis_aligned_means(classes, 12, 20.0),
        stds: vec![1.0; classes],
        samples_per_cluster: 120,
    };
    let data = gen_gaussian_mixture(&spec, seed).unwrap();
    let pspec = PartitionSpec {
        mode: PartitionMode::Pathological,
        m,
        c,
        labels_per_cluster: 2,
        alpha: 1.0,
        delta: 0.0,
        test_fraction: 0.2,
        seed,
    };
    partition_pathological(&data, &pspec, 0).unwrap()
}

fn default_fcr(seed: u64) -> FcrConfig {
    FcrConfig {
        k: 4,
        gamma: 1.0,
        umap: UmapParams {
            n_neighbors: 8,
            target_dim: 2,
            min_dist: 0.1,
            epochs: 150,
            seed: 0,
        },
        num_clusters: None,
        seed,
        ..Default::default()
    }
}

#[test]
fn fcr_recovers_clusters_with_trained_dense_autoencoder() {
    let part = blob_partition(12, 3, 11);
    // server-side pretraining on the pooled source data
    let pooled = {
        let mut all = Dataset::empty(vec![12], 6);
        for c in &part.clients {
            for i in 0..c.train.len() {
                all.push_flat(c.train.feature(i), c.train.label(i)).unwrap();
            }
        }
        all
    };
    let mut ae = nn::dense_ae(12, 10, 4, 5).unwrap();
    ae.set_mode(Mode::Train);
    nn::finetune_autoencoder(&mut ae, &pooled, 10, 16, 0.01, 21).unwrap();
    let enc = EncoderHandle::from_autoencoder(ae, nn::DENSE_AE_ENCODER_LAYERS).unwrap();

    let graph = run_fcr(&part.clients, &enc, &default_fcr(31)).unwrap();
    let ari = adjusted_rand_index(
        graph.clusters.as_ref().unwrap(),
        &part.ground_truth.assignment,
    )
    .unwrap();
    assert!(ari >= 0.9, "AE-encoded recovery ARI {ari}");
}

#[test]
fn trained_autoencoder_keeps_blobs_separated_in_latent_space() {
    // two distant blobs; latent centroid distance must dominate the spread
    let spec = GaussianMixtureSpec {
        dims: 10,
        means: vec![vec![0.0; 10], {
            let mut m = vec![0.0; 10];
            m[0] = 20.0;
            m
        }],
        stds: vec![1.0; 2],
        samples_per_cluster: 150,
    };
    let data = gen_gaussian_mixture(&spec, 3).unwrap();
    let mut ae = nn::dense_ae(10, 8, 3, 9).unwrap();
    ae.set_mode(Mode::Train);
    nn::finetune_autoencoder(&mut ae, &data, 15, 16, 0.01, 13).unwrap();
    let enc = EncoderHandle::from_autoencoder(ae, nn::DENSE_AE_ENCODER_LAYERS).unwrap();
    let z = enc.encode(&data).unwrap();

    let centroid = |label: usize| -> Vec<f64> {
        let rows: Vec<&Vec<f64>> = (0..data.len())
            .filter(|&i| data.label(i) == label)
            .map(|i| &z[i])
            .collect();
        let mut c = vec![0.0; 3];
        for r in &rows {
            for (ci, v) in c.iter_mut().zip(r.iter()) {
                *ci += v;
            }
        }
        c.iter().map(|v| v / rows.len() as f64).collect()
    };
    let (c0, c1) = (centroid(0), centroid(1));
    let inter = euclidean(&c0, &c1);
    let spread = (0..data.len())
        .map(|i| {
            let c = if data.label(i) == 0 { &c0 } else { &c1 };
            euclidean(&z[i], c)
        })
        .fold(0.0_f64, f64::max);
    assert!(
        inter > 3.0 * spread,
        "latent separation {inter} vs max spread {spread}"
    );
}

#[test]
fn fine_tune_mode_runs_and_recovers() {
    let part = blob_partition(8, 2, 17);
    let ae = nn::dense_ae(12, 10, 4, 23).unwrap();
    let enc = EncoderHandle::from_autoencoder(ae, nn::DENSE_AE_ENCODER_LAYERS).unwrap();
    let mut cfg = default_fcr(19);
    cfg.mode = FcrMode::FineTune;
    cfg.finetune_epochs = 5;
    let graph = run_fcr(&part.clients, &enc, &cfg).unwrap();
    let ari = adjusted_rand_index(
        graph.clusters.as_ref().unwrap(),
        &part.ground_truth.assignment,
    )
    .unwrap();
    assert!(ari >= 0.9, "fine-tune recovery ARI {ari}");
}

#[test]
fn pca_baseline_recovers_separable_clusters() {
    let part = blob_partition(12, 3, 29);
    let mut cfg = default_fcr(37);
    cfg.baseline = FcrBaseline::Pca;
    cfg.num_clusters = Some(3);
    let graph = run_fcr(&part.clients, &EncoderHandle::identity(12), &cfg).unwrap();
    let ari = adjusted_rand_index(
        graph.clusters.as_ref().unwrap(),
        &part.ground_truth.assignment,
    )
    .unwrap();
    assert_eq!(ari, 1.0, "PCA baseline should separate distant blobs");
}

#[test]
fn relabeling_clients_relabels_clusters_consistently() {
    let part = blob_partition(10, 5, 41);
    let enc = EncoderHandle::identity(12);
    let cfg = default_fcr(43);
    let graph = run_fcr(&part.clients, &enc, &cfg).unwrap();

    // reverse the client order (fresh ids, same data)
    let reversed: Vec<ClientDataset> = part
        .clients
        .iter()
        .rev()
        .enumerate()
        .map(|(new_id, c)| ClientDataset {
            client_id: new_id,
            train: c.train.clone(),
            test: c.test.clone(),
            p: c.p,
        })
        .collect();
    let graph_rev = run_fcr(&reversed, &enc, &cfg).unwrap();

    // cluster outcome is the same partition of the same underlying clients
    let m = part.clients.len();
    let a = graph.clusters.unwrap();
    let b = graph_rev.clusters.unwrap();
    let b_unreversed: Vec<usize> = (0..m).map(|i| b[m - 1 - i]).collect();
    assert_eq!(
        adjusted_rand_index(&a, &b_unreversed).unwrap(),
        1.0,
        "cluster structure must be invariant to client relabeling"
    );
}

#[test]
fn umap_seed_changes_embedding_but_not_clusters() {
    let part = blob_partition(10, 5, 47);
    let enc = EncoderHandle::identity(12);
    let g1 = run_fcr(&part.clients, &enc, &default_fcr(1)).unwrap();
    let g2 = run_fcr(&part.clients, &enc, &default_fcr(2)).unwrap();
    assert_ne!(g1.a, g2.a, "different seeds lay out differently");
    assert_eq!(
        adjusted_rand_index(&g1.clusters.unwrap(), &g2.clusters.unwrap()).unwrap(),
        1.0
    );
}

#[test]
fn signature_payload_matches_k_times_e() {
    // k = 5 centroids of dimension 128 -> 640 transmitted values
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0; 128]).collect();
    let client = ClientDataset {
        client_id: 3,
        train: Dataset::from_rows(rows, vec![0; 40], 1).unwrap(),
        test: Dataset::empty(vec![128], 1),
        p: 1.0,
    };
    let sig = client_signature(&EncoderHandle::identity(128), &client, 5, 0).unwrap();
    assert_eq!(sig.payload_len(), 640);
}

#[test]
fn dynamic_recluster_fires_on_drift_flags() {
    let part = blob_partition(8, 2, 53);
    let enc = EncoderHandle::identity(12);
    let fcr_cfg = default_fcr(59);
    let graph = run_fcr(&part.clients, &enc, &fcr_cfg).unwrap();
    let before = adjusted_rand_index(
        graph.clusters.as_ref().unwrap(),
        &part.ground_truth.assignment,
    )
    .unwrap();
    assert_eq!(before, 1.0);

    let template = nn::mlp(&[12], 16, 4, 0.0, 61).unwrap();
    let cfg = FederationConfig {
        method: Method::FltClustered,
        rounds: 6,
        rho: 0.5,
        local_epochs: 1,
        batch_size: 10,
        lr: 0.02,
        ..Default::default()
    };
    // swap the datasets of one client from each cluster at round 3;
    // lambda = 1 so two raised flags exceed it and trigger re-clustering
    let dynamic = DynamicRecluster {
        lambda: 1,
        tau: 0,
        encoder: enc.clone(),
        fcr: fcr_cfg.clone(),
        drift: vec![DriftEvent {
            round: 3,
            rotate_clients: vec![0, 4],
        }],
    };
    let outcome = run_federation(&cfg, &part.clients, Some(&graph), &template, Some(dynamic), 67)
        .unwrap();
    assert_eq!(outcome.reclustered_at, vec![3], "re-clustering at the drift round");

    // the rebuilt graph reflects the swap: client 0 now groups with
    // cluster 1's members, client 4 with cluster 0's
    let new_clusters = outcome.final_graph.unwrap().clusters.unwrap();
    let mut expected = part.ground_truth.assignment.clone();
    expected.swap(0, 4);
    assert_eq!(
        adjusted_rand_index(&new_clusters, &expected).unwrap(),
        1.0,
        "rebuilt clusters {new_clusters:?} vs expected {expected:?}"
    );
}

#[test]
fn periodic_recluster_fires_every_tau_rounds() {
    let part = blob_partition(8, 2, 71);
    let enc = EncoderHandle::identity(12);
    let fcr_cfg = default_fcr(73);
    let graph = run_fcr(&part.clients, &enc, &fcr_cfg).unwrap();
    let template = nn::mlp(&[12], 16, 4, 0.0, 79).unwrap();
    let cfg = FederationConfig {
        method: Method::FltFull,
        rounds: 7,
        rho: 0.5,
        local_epochs: 1,
        batch_size: 10,
        lr: 0.02,
        ..Default::default()
    };
    let dynamic = DynamicRecluster {
        lambda: usize::MAX,
        tau: 3,
        encoder: enc,
        fcr: fcr_cfg,
        drift: vec![],
    };
    let outcome = run_federation(&cfg, &part.clients, Some(&graph), &template, Some(dynamic), 83)
        .unwrap();
    // 1-based round numbers 3 and 6 are multiples of tau = 3
    assert_eq!(outcome.reclustered_at, vec![2, 5]);
}

#[test]
fn theorem2_positive_and_finite_inside_window() {
    let adj = vec![
        vec![1.0, 1.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![0.0, 1.0, 1.0],
    ];
    let p = vec![0.3, 0.4, 0.3];
    let a_bar = row_normalize(&adj, &p);
    let norm = spectral_gap_norm(&a_bar);
    let l_w = 1.7;
    let (_, eta_max) = stepsize_window(l_w, norm);
    for i in 1..20 {
        let eta = eta_max * i as f64 / 20.0;
        let r = theorem2_rhs(&Theorem2Inputs {
            eta,
            l_w,
            gap_norm: norm,
            rounds: 10,
            num_clients: 3,
            f_first: 5.0,
            f_last: 1.0,
            phi: 0.0,
            psi: 0.0,
        });
        assert!(!r.vacuous, "eta {eta} inside the window");
        assert!(r.value.is_finite() && r.value > 0.0);
    }
}

#[test]
fn smoothness_estimate_close_to_linear_model_hessian() {
    // linear model + MSE: loss = mean over n of (w x_b - y_b)^2, whose
    // Hessian is (2/n) X^T X; the gradient map is globally Lipschitz with
    // constant = its largest eigenvalue
    let rows = vec![
        vec![1.0, 0.0],
        vec![0.0, 2.0],
        vec![1.0, 1.0],
        vec![2.0, -1.0],
    ];
    let labels = vec![0, 1, 0, 1];
    let data = Dataset::from_rows(rows.clone(), labels, 2).unwrap();

    // single dense layer, CE replaced by the estimator's own objective:
    // use the model wrapper (cross-entropy) only for smoke, then check the
    // quadratic case analytically via the generic estimator
    let template = nn::mlp(&[2], 3, 2, 0.0, 5).unwrap();
    let smoke = estimate_smoothness(&template, &data, 5, 7).unwrap();
    assert!(smoke.is_finite() && smoke > 0.0);

    // analytic check on the pure least-squares gradient map
    let n = rows.len() as f64;
    let grad = |w: &[f64]| -> Vec<f64> {
        // d/dw of (1/n) sum (w.x)^2 = (2/n) sum (w.x) x
        let mut g = vec![0.0; 2];
        for x in &rows {
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += 2.0 * dot * xi / n;
            }
        }
        g
    };
    // (2/n) X^T X for the fixed rows above
    let xtx = [
        [
            rows.iter().map(|r| r[0] * r[0]).sum::<f64>(),
            rows.iter().map(|r| r[0] * r[1]).sum::<f64>(),
        ],
        [
            rows.iter().map(|r| r[1] * r[0]).sum::<f64>(),
            rows.iter().map(|r| r[1] * r[1]).sum::<f64>(),
        ],
    ];
    let (a, b, c, d) = (
        2.0 * xtx[0][0] / n,
        2.0 * xtx[0][1] / n,
        2.0 * xtx[1][0] / n,
        2.0 * xtx[1][1] / n,
    );
    let tr = a + d;
    let det = a * d - b * c;
    let top_eig = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
    let est = flt_core::analysis::estimate_smoothness_of(grad, 2, 200, 3.0, 11);
    assert!(
        (est - top_eig).abs() / top_eig < 0.05,
        "estimate {est} vs eigenvalue {top_eig}"
    );
}

#[test]
fn small_cnn_trains_one_step() {
    let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 4) as f64 / 4.0; 64]).collect();
    let data = Dataset::from_rows(rows, (0..8).map(|i| i % 2).collect(), 2)
        .unwrap()
        .reshaped(vec![1, 8, 8])
        .unwrap();
    let mut cnn = nn::small_cnn(1, 8, 8, 2, 3).unwrap();
    cnn.train_local(&data, 1, 4, 0.01, 9).unwrap();
    let all: Vec<usize> = (0..data.len()).collect();
    let (batch, _) = data.batch(&all);
    let out = cnn.forward(&batch).unwrap();
    assert!(out.all_finite());
}
