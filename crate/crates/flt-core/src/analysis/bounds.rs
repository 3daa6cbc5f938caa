//! Evaluators for the clustering-error bound and the optimality-gap
//! convergence bound, plus the admissible step-size window and an empirical
//! smoothness estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::nn::{LossSpec, Model};
use crate::rng;

/// Standard normal tail probability Q(x) = P(Z > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on (0, 1), by bisection on the monotone tail.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::InvalidArgument(format!("q_inverse needs p in (0,1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // Q is decreasing in x
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inputs for the clustering-error bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem1Inputs {
    /// `label_counts[m][l]` = number of samples with label l at client m.
    pub label_counts: Vec<Vec<f64>>,
    /// Per-sample classification error of the encoder, in (0, 1).
    pub p_err_cae: f64,
    /// Latent dimension e.
    pub latent_dim: usize,
}

/// Upper bound on the total clustering error:
/// `sum_m sum_l sum_i exp(-(n_m^l Q^{-1}(P_err))^2 / 2)`.
pub fn theorem1_bound(inputs: &Theorem1Inputs) -> Result<f64> {
    if !(0.0 < inputs.p_err_cae && inputs.p_err_cae < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_err_cae must be in (0,1), got {}",
            inputs.p_err_cae
        )));
    }
    let q_inv = q_inverse(inputs.p_err_cae)?;
    let mut total = 0.0;
    for client in &inputs.label_counts {
        for &n in client {
            if n < 0.0 {
                return Err(Error::InvalidArgument("negative label count".into()));
            }
            let z = n * q_inv;
            total += inputs.latent_dim as f64 * (-z * z / 2.0).exp();
        }
    }
    Ok(total)
}

/// Spectral norm of `I - A_bar`, the graph term in the convergence bound.
pub fn spectral_gap_norm(a_bar: &[Vec<f64>]) -> f64 {
    let m = a_bar.len();
    let mut flat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            flat[i * m + j] = if i == j { 1.0 - a_bar[i][j] } else { -a_bar[i][j] };
        }
    }
    spectral_norm(&flat, m)
}

/// Inputs for the optimality-gap bound. `phi` and `psi` are the
/// heterogeneity constants of the compactness assumption; they are carried
/// for completeness but do not enter the final bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem2Inputs {
    pub eta: f64,
    pub l_w: f64,
    /// Spectral norm of `I - A_bar` (see [`spectral_gap_norm`]).
    pub gap_norm: f64,
    pub rounds: usize,
    pub num_clients: usize,
    /// F(W^1): objective at the initial parameter matrix.
    pub f_first: f64,
    /// F(W^T): objective at the final parameter matrix.
    pub f_last: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub psi: f64,
}

/// A bound evaluation: the value and whether the denominator was positive.
/// A vacuous bound (denominator <= 0) carries no information.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub denominator: f64,
    pub vacuous: bool,
}

fn denominator(eta: f64, l_w: f64, gap_norm: f64) -> f64 {
    1.0 / (2.0 * eta) - l_w / 2.0 - (eta / 2.0) * l_w * l_w * gap_norm * gap_norm
}

/// Right-hand side of the optimality-gap bound:
/// `(F(W^1) - F(W^T)) / (T M (1/(2 eta) - L_W/2 - (eta/2) L_W^2 ||I - A_bar||^2))`.
pub fn theorem2_rhs(inputs: &Theorem2Inputs) -> BoundReport {
    let denom = denominator(inputs.eta, inputs.l_w, inputs.gap_norm);
    let scale = (inputs.rounds * inputs.num_clients) as f64;
    BoundReport {
        value: (inputs.f_first - inputs.f_last) / (scale * denom),
        denominator: denom,
        vacuous: denom <= 0.0,
    }
}

/// Admissible step sizes `(0, 2 / (L_W + L_W sqrt(1 + 4 ||I - A_bar||^2)))`;
/// the bound denominator is positive exactly on this window.
pub fn stepsize_window(l_w: f64, gap_norm: f64) -> (f64, f64) {
    (
        0.0,
        2.0 / (l_w + l_w * (1.0 + 4.0 * gap_norm * gap_norm).sqrt()),
    )
}

/// Extra inputs for the E-epoch elaborate bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElaborateInputs {
    /// ||W^{1,0} - W^{1,*}||^2
    pub first_round_dist_sq: f64,
    /// ||W^{t,0} - W^{t,*}||^2
    pub last_round_dist_sq: f64,
    /// F(W^{1,*}) - F(W^{T,*})
    pub optimal_drop: f64,
    /// Local epochs E.
    pub epochs: usize,
}

/// The elaborate E-epoch bound:
/// `(||W^{1,0}-W^{1,*}||^2 + ||W^{t,0}-W^{t,*}||^2 + 2 eta E (F(W^{1,*}) - F(W^{T,*})))
///  / (2 eta E T M (1/(2 eta) - L_W/2 - (eta/2) L_W^2 ||I - A_bar||^2))`.
pub fn theorem2_elaborate(inputs: &Theorem2Inputs, extra: &ElaborateInputs) -> BoundReport {
    let denom = denominator(inputs.eta, inputs.l_w, inputs.gap_norm);
    let e = extra.epochs.max(1) as f64;
    let numerator = extra.first_round_dist_sq
        + extra.last_round_dist_sq
        + 2.0 * inputs.eta * e * extra.optimal_drop;
    let scale = 2.0 * inputs.eta * e * (inputs.rounds * inputs.num_clients) as f64;
    BoundReport {
        value: numerator / (scale * denom),
        denominator: denom,
        vacuous: denom <= 0.0,
    }
}

/// Empirical lower estimate of the gradient-Lipschitz constant of an
/// arbitrary gradient map: max over sampled pairs of
/// `||g(w1) - g(w2)|| / ||w1 - w2||`.
pub fn estimate_smoothness_of<F>(mut grad: F, dim: usize, trials: usize, scale: f64, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut r = rng::stream(seed, &[0x5100]);
    let mut best = 0.0_f64;
    for _ in 0..trials.max(1) {
        let w1: Vec<f64> = (0..dim).map(|_| r.random_range(-scale..scale)).collect();
        let w2: Vec<f64> = (0..dim).map(|_| r.random_range(-scale..scale)).collect();
        let g1 = grad(&w1);
        let g2 = grad(&w2);
        let num: f64 = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = w1
            .iter()
            .zip(&w2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if den > 1e-12 {
            best = best.max(num / den);
        }
    }
    best
}

/// Smoothness estimate for a model's full-batch cross-entropy objective on
/// `data`, sampling parameter pairs around the template scale.
pub fn estimate_smoothness(
    template: &Model,
    data: &Dataset,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("estimate_smoothness needs data".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let (batch, labels) = data.batch(&indices);
    let dim = template.param_count();
    let mut worst: Result<()> = Ok(());
    let value = estimate_smoothness_of(
        |w| {
            let mut m = template.clone();
            m.set_mode(crate::nn::Mode::Eval);
            if m.unflatten_params(w).is_err() {
                return vec![0.0; dim];
            }
            match m.loss_and_grad(&batch, LossSpec::CrossEntropy { labels: &labels }) {
                Ok((_, g)) => g,
                Err(e) => {
                    worst = Err(e);
                    vec![0.0; dim]
                }
            }
        },
        dim,
        trials,
        1.0,
        seed,
    );
    worst?;
    Ok(value)
}

/// JSON bound report: inputs echoed next to the evaluated output.
pub fn bound_report_json<I: serde::Serialize>(inputs: &I, report: &BoundReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "inputs": inputs,
        "output": report,
    }))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_symmetry_and_round_trip() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        for p in [0.01, 0.1, 0.3] {
            let x = q_inverse(p).unwrap();
            assert!((q_function(x) - p).abs() < 1e-9, "p = {p}");
        }
        // standard normal tail: Q(1.6449) ~ 0.05
        assert!((q_function(1.6449) - 0.05).abs() < 1e-4);
        assert!(q_inverse(0.0).is_err());
        assert!(q_inverse(1.0).is_err());
    }

    #[test]
    fn theorem1_half_error_gives_mle() {
        let inputs = Theorem1Inputs {
            label_counts: vec![vec![3.0, 7.0], vec![2.0, 0.0], vec![5.0, 5.0]],
            p_err_cae: 0.5,
            latent_dim: 4,
        };
        // Q^{-1}(0.5) = 0 so every term is 1: M * L * e
        assert_eq!(theorem1_bound(&inputs).unwrap(), (3 * 2 * 4) as f64);
    }

    #[test]
    fn theorem1_single_term_matches_scalar() {
        // one client, one label, e = 1, n = 2, Q^{-1}(P) = 1
        let p = q_function(1.0);
        let inputs = Theorem1Inputs {
            label_counts: vec![vec![2.0]],
            p_err_cae: p,
            latent_dim: 1,
        };
        let v = theorem1_bound(&inputs).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn theorem1_monotone_decreasing_in_counts() {
        let mk = |n: f64| Theorem1Inputs {
            label_counts: vec![vec![n, 4.0]],
            p_err_cae: 0.2,
            latent_dim: 8,
        };
        for n in [0.0, 1.0, 2.0, 5.0, 10.0] {
            let lo = theorem1_bound(&mk(n)).unwrap();
            let hi = theorem1_bound(&mk(n + 1.0)).unwrap();
            assert!(hi < lo, "bound must strictly decrease at n = {n}");
        }
    }

    #[test]
    fn theorem2_identity_graph_arithmetic() {
        // A_bar = I: norm 0; eta 0.1, L_W 1, dF 10, T 10, M 1 -> 10/(10*4.5)
        let inputs = Theorem2Inputs {
            eta: 0.1,
            l_w: 1.0,
            gap_norm: 0.0,
            rounds: 10,
            num_clients: 1,
            f_first: 10.0,
            f_last: 0.0,
            phi: 0.0,
            psi: 0.0,
        };
        let r = theorem2_rhs(&inputs);
        assert!(!r.vacuous);
        assert!((r.value - 10.0 / (10.0 * 4.5)).abs() < 1e-12);
    }

    #[test]
    fn stepsize_window_identity() {
        let (lo, hi) = stepsize_window(1.0, 0.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuous_flag_above_window() {
        let gap = 1.0;
        let (_, eta_max) = stepsize_window(2.0, gap);
        let inside = Theorem2Inputs {
            eta: 0.95 * eta_max,
            l_w: 2.0,
            gap_norm: gap,
            rounds: 5,
            num_clients: 3,
            f_first: 1.0,
            f_last: 0.0,
            phi: 0.0,
            psi: 0.0,
        };
        assert!(!theorem2_rhs(&inside).vacuous);
        let outside = Theorem2Inputs {
            eta: 1.05 * eta_max,
            ..inside
        };
        assert!(theorem2_rhs(&outside).vacuous);
    }

    #[test]
    fn elaborate_bound_arithmetic_and_vacuous_propagation() {
        let base = Theorem2Inputs {
            eta: 0.1,
            l_w: 1.0,
            gap_norm: 0.0,
            rounds: 10,
            num_clients: 2,
            f_first: 0.0,
            f_last: 0.0,
            phi: 0.0,
            psi: 0.0,
        };
        let extra = ElaborateInputs {
            first_round_dist_sq: 3.0,
            last_round_dist_sq: 1.0,
            optimal_drop: 5.0,
            epochs: 4,
        };
        // numerator: 3 + 1 + 2*0.1*4*5 = 8; denom term: 1/(0.2) - 0.5 = 4.5
        // scale: 2*0.1*4*10*2 = 16
        let r = theorem2_elaborate(&base, &extra);
        assert!(!r.vacuous);
        assert!((r.value - 8.0 / (16.0 * 4.5)).abs() < 1e-12);

        let wide = Theorem2Inputs { eta: 5.0, ..base };
        assert!(theorem2_elaborate(&wide, &extra).vacuous);
    }

    #[test]
    fn bound_report_json_echoes_inputs() {
        let inputs = Theorem1Inputs {
            label_counts: vec![vec![1.0]],
            p_err_cae: 0.3,
            latent_dim: 2,
        };
        let report = BoundReport {
            value: theorem1_bound(&inputs).unwrap(),
            denominator: f64::NAN,
            vacuous: false,
        };
        let text = bound_report_json(&inputs, &report).unwrap();
        assert!(text.contains("label_counts"));
        assert!(text.contains("output"));
    }

    #[test]
    fn smoothness_exact_for_quadratic() {
        // gradient of 0.5 * lambda ||w||^2 is lambda w; ratio is exactly lambda
        let lambda = 2.5;
        let est = estimate_smoothness_of(
            |w| w.iter().map(|&v| lambda * v).collect(),
            6,
            10,
            1.0,
            3,
        );
        assert!((est - lambda).abs() < 1e-9);
    }

    #[test]
    fn smoothness_non_decreasing_in_trials() {
        let grad = |w: &[f64]| -> Vec<f64> { w.iter().map(|&v| v.tanh()).collect() };
        let mut prev = 0.0;
        for trials in [1, 2, 4, 8, 16] {
            let est = estimate_smoothness_of(grad, 4, trials, 2.0, 9);
            assert!(est >= prev - 1e-15);
            prev = est;
        }
    }
}
