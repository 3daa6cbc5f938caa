//! Metrics, clustering scores, convergence-bound evaluators, and
//! communication-cost accounting.

pub mod bounds;

pub use bounds::{
    estimate_smoothness, estimate_smoothness_of, q_function, q_inverse, spectral_gap_norm,
    stepsize_window, theorem1_bound, theorem2_elaborate, theorem2_rhs, BoundReport,
    Theorem1Inputs, Theorem2Inputs,
};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::federation::ParamMatrix;
use crate::nn::Model;

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("accuracy on empty dataset".into()));
    }
    let mut correct = 0usize;
    let chunk = 512;
    let mut idx = 0;
    while idx < data.len() {
        let hi = (idx + chunk).min(data.len());
        let indices: Vec<usize> = (idx..hi).collect();
        let (batch, labels) = data.batch(&indices);
        let out = model.forward(&batch)?;
        for (bi, &label) in labels.iter().enumerate() {
            let row = out.row(bi);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if pred == label {
                correct += 1;
            }
        }
        idx = hi;
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub mean: f64,
    /// Standard error of the mean: population std over sqrt(M).
    pub stderr: f64,
    /// Population variance across clients (the fairness measure).
    pub variance: f64,
}

/// Mean, standard error, and population variance of per-client accuracies.
pub fn accuracy_stats(values: &[f64]) -> Result<AccuracyStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("accuracy_stats on empty list".into()));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    Ok(AccuracyStats {
        mean,
        stderr: variance.sqrt() / m.sqrt(),
        variance,
    })
}

/// Squared Frobenius norm of the round-to-round parameter change.
pub fn optimality_gap(w_t: &ParamMatrix, w_prev: &ParamMatrix) -> Result<f64> {
    w_t.gap(w_prev)
}

/// Adjusted Rand index between two flat clusterings of the same items.
pub fn adjusted_rand_index(assignment: &[usize], ground_truth: &[usize]) -> Result<f64> {
    if assignment.len() != ground_truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} vs {} items",
            assignment.len(),
            ground_truth.len()
        )));
    }
    let n = assignment.len();
    if n == 0 {
        return Err(Error::InvalidArgument("ARI on empty clusterings".into()));
    }
    let ka = assignment.iter().max().map_or(0, |&m| m + 1);
    let kb = ground_truth.iter().max().map_or(0, |&m| m + 1);
    let mut contingency = vec![vec![0u64; kb]; ka];
    for (&a, &b) in assignment.iter().zip(ground_truth) {
        contingency[a][b] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x as f64) * (x as f64 - 1.0) / 2.0 };
    let sum_ij: f64 = contingency
        .iter()
        .flat_map(|row| row.iter())
        .map(|&v| choose2(v))
        .sum();
    let a_sums: f64 = contingency
        .iter()
        .map(|row| choose2(row.iter().sum::<u64>()))
        .sum();
    let b_sums: f64 = (0..kb)
        .map(|j| choose2(contingency.iter().map(|row| row[j]).sum::<u64>()))
        .sum();
    let total = choose2(n as u64);
    let expected = a_sums * b_sums / total;
    let max_index = 0.5 * (a_sums + b_sums);
    if (max_index - expected).abs() < 1e-30 {
        // both partitions trivial; identical by convention
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / (max_index - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMethod {
    Flt,
    FedSem,
    Ifca,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CommParams {
    pub m: u64,
    /// Encoder parameter count (one-off broadcast).
    pub w_enc: u64,
    /// Local model parameter count.
    pub w_local: u64,
    /// Signature centroids per client.
    pub k: u64,
    /// Latent dimension.
    pub e: u64,
    pub rho: f64,
    pub t: u64,
    /// Cluster count (IFCA only).
    pub c: u64,
}

/// Communication complexity in parameter-count units (multiply by 8 for a
/// 64-bit-real byte view).
pub fn comm_cost(method: CommMethod, p: &CommParams) -> u64 {
    let per_round = p.rho * (p.m * p.w_local * p.t) as f64;
    let units = match method {
        CommMethod::Flt => (p.m * p.w_enc + p.k * p.m * p.e) as f64 + 2.0 * per_round,
        CommMethod::FedSem => 2.0 * per_round,
        CommMethod::Ifca => per_round * (p.c + 1) as f64,
    };
    units.round() as u64
}

/// Byte view of [`comm_cost`] at 64-bit reals.
pub fn comm_cost_bytes(method: CommMethod, p: &CommParams) -> u64 {
    comm_cost(method, p) * 8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_hand_case() {
        let s = accuracy_stats(&[0.8, 0.6]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.variance - 0.01).abs() < 1e-12);
        let equal = accuracy_stats(&[0.5; 7]).unwrap();
        assert_eq!(equal.variance, 0.0);
        assert!(accuracy_stats(&[]).is_err());
    }

    #[test]
    fn gap_cases() {
        let a = ParamMatrix { dim: 1, columns: vec![vec![1.0]] };
        let b = ParamMatrix { dim: 1, columns: vec![vec![3.0]] };
        assert_eq!(optimality_gap(&a, &a).unwrap(), 0.0);
        assert_eq!(optimality_gap(&b, &a).unwrap(), 4.0);
        let c = ParamMatrix { dim: 2, columns: vec![vec![1.0, 1.0], vec![1.0, 1.0]] };
        let z = ParamMatrix { dim: 2, columns: vec![vec![0.0, 0.0], vec![0.0, 0.0]] };
        assert_eq!(optimality_gap(&c, &z).unwrap(), 4.0);
        let short = ParamMatrix { dim: 1, columns: vec![vec![0.0]] };
        assert!(optimality_gap(&c, &short).is_err());
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        // label-permutation invariance
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // hand-computed from the 2x2 contingency table
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((ari - (-0.5)).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn comm_cost_published_example() {
        let p = CommParams {
            m: 100,
            w_enc: 51_577,
            w_local: 169_462,
            k: 5,
            e: 128,
            rho: 0.2,
            t: 100,
            c: 3,
        };
        assert_eq!(comm_cost(CommMethod::Flt, &p), 683_069_700);
        // one-off overhead only at T = 0
        let p0 = CommParams { t: 0, ..p };
        assert_eq!(comm_cost(CommMethod::Flt, &p0), 5_157_700 + 64_000);
        // IFCA / FedSEM ratio is (C + 1) / 2
        for c in [2u64, 5, 9] {
            let pc = CommParams { c, ..p };
            let ratio = comm_cost(CommMethod::Ifca, &pc) as f64
                / comm_cost(CommMethod::FedSem, &pc) as f64;
            assert!((ratio - (c + 1) as f64 / 2.0).abs() < 1e-12);
        }
    }
}
