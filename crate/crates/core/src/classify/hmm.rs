//! Per-class Gaussian hidden Markov models: 3 states, one diagonal Gaussian
//! per state, trained with Baum-Welch on multiple observation sequences and
//! compared through length-normalized forward log-likelihoods.

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::acquisition::OperatorClass;

pub const N_STATES: usize = 3;
pub const VAR_FLOOR: f64 = 1e-6;
const MAX_ITERS: usize = 200;
const LL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub dims: usize,
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal variances, floored at [`VAR_FLOOR`].
    pub variances: Vec<Vec<f64>>,
    /// Training log-likelihood per iteration.
    pub ll_history: Vec<f64>,
}

fn log_gauss_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut ll = 0.0;
    for d in 0..x.len() {
        let v = var[d].max(VAR_FLOOR);
        let diff = x[d] - mean[d];
        ll += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
    }
    ll
}

/// Scaled forward pass; returns (alpha, per-step scales, total log-likelihood).
fn forward_scaled(hmm: &GaussianHmm, seq: &[Vec<f64>]) -> (Vec<[f64; N_STATES]>, Vec<f64>, f64) {
    let t_len = seq.len();
    let mut alpha = vec![[0.0; N_STATES]; t_len];
    let mut scales = vec![0.0; t_len];
    let emis = |t: usize, s: usize| log_gauss_diag(&seq[t], &hmm.means[s], &hmm.variances[s]).exp();

    let mut sum = 0.0;
    for s in 0..N_STATES {
        alpha[0][s] = hmm.initial[s] * emis(0, s);
        sum += alpha[0][s];
    }
    let sum = sum.max(f64::MIN_POSITIVE);
    scales[0] = sum;
    for s in 0..N_STATES {
        alpha[0][s] /= sum;
    }
    for t in 1..t_len {
        let mut sum = 0.0;
        for s in 0..N_STATES {
            let mut a = 0.0;
            for q in 0..N_STATES {
                a += alpha[t - 1][q] * hmm.transition[q][s];
            }
            alpha[t][s] = a * emis(t, s);
            sum += alpha[t][s];
        }
        let sum = sum.max(f64::MIN_POSITIVE);
        scales[t] = sum;
        for s in 0..N_STATES {
            alpha[t][s] /= sum;
        }
    }
    let ll = scales.iter().map(|c| c.ln()).sum();
    (alpha, scales, ll)
}

fn backward_scaled(hmm: &GaussianHmm, seq: &[Vec<f64>], scales: &[f64]) -> Vec<[f64; N_STATES]> {
    let t_len = seq.len();
    let mut beta = vec![[0.0; N_STATES]; t_len];
    let emis = |t: usize, s: usize| log_gauss_diag(&seq[t], &hmm.means[s], &hmm.variances[s]).exp();
    for s in 0..N_STATES {
        beta[t_len - 1][s] = 1.0 / scales[t_len - 1];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..N_STATES {
            let mut b = 0.0;
            for q in 0..N_STATES {
                b += hmm.transition[s][q] * emis(t + 1, q) * beta[t + 1][q];
            }
            beta[t][s] = b / scales[t];
        }
    }
    beta
}

/// Forward log-likelihood of a sequence under the model.
pub fn log_likelihood(hmm: &GaussianHmm, seq: &[Vec<f64>]) -> f64 {
    forward_scaled(hmm, seq).2
}

/// Deterministic initialization: per-state means at spaced quantiles of the
/// pooled observations, pooled variance, mildly sticky transitions.
fn init_model(sequences: &[Vec<Vec<f64>>], dims: usize) -> GaussianHmm {
    let mut pooled: Vec<&Vec<f64>> = sequences.iter().flatten().collect();
    let n = pooled.len();
    let mut means = vec![vec![0.0; dims]; N_STATES];
    let mut pooled_mean = vec![0.0; dims];
    for obs in &pooled {
        for d in 0..dims {
            pooled_mean[d] += obs[d] / n as f64;
        }
    }
    let mut pooled_var = vec![0.0; dims];
    for obs in &pooled {
        for d in 0..dims {
            pooled_var[d] += (obs[d] - pooled_mean[d]).powi(2) / n as f64;
        }
    }
    for d in 0..dims {
        pooled_var[d] = pooled_var[d].max(VAR_FLOOR);
    }
    // sort pooled observations by first dimension; pick spaced quantiles
    pooled.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    for s in 0..N_STATES {
        let idx = ((s + 1) * n) / (N_STATES + 1);
        means[s] = pooled[idx.min(n - 1)].clone();
    }
    let mut transition = vec![vec![0.1; N_STATES]; N_STATES];
    for (s, row) in transition.iter_mut().enumerate() {
        row[s] = 0.8;
    }
    GaussianHmm {
        dims,
        initial: vec![1.0 / N_STATES as f64; N_STATES],
        transition,
        means,
        variances: vec![pooled_var; N_STATES],
        ll_history: Vec::new(),
    }
}

/// Baum-Welch over multiple sequences until the total log-likelihood
/// improves by less than `1e-6` or 200 iterations.
pub fn train_hmm(sequences: &[Vec<Vec<f64>>]) -> Result<GaussianHmm, ClassifyError> {
    if sequences.len() < 2 || sequences.iter().any(|s| s.len() < 3) {
        return Err(ClassifyError::EmptyClass);
    }
    let dims = sequences[0][0].len();
    let mut hmm = init_model(sequences, dims);
    let mut prev_ll = f64::NEG_INFINITY;
    let mut reseeded = false;

    for _iter in 0..MAX_ITERS {
        let mut init_acc = vec![0.0; N_STATES];
        let mut trans_num = vec![vec![0.0; N_STATES]; N_STATES];
        let mut trans_den = vec![0.0; N_STATES];
        let mut mean_num = vec![vec![0.0; dims]; N_STATES];
        let mut var_num = vec![vec![0.0; dims]; N_STATES];
        let mut gamma_sum = vec![0.0; N_STATES];
        let mut total_ll = 0.0;

        for seq in sequences {
            let (alpha, scales, ll) = forward_scaled(&hmm, seq);
            let beta = backward_scaled(&hmm, seq, &scales);
            total_ll += ll;
            let t_len = seq.len();
            let emis =
                |t: usize, s: usize| log_gauss_diag(&seq[t], &hmm.means[s], &hmm.variances[s]).exp();

            // gamma_t(s) = alpha_t(s) beta_t(s) c_t  (scaled quantities)
            let gamma = |t: usize, s: usize| alpha[t][s] * beta[t][s] * scales[t];
            for s in 0..N_STATES {
                init_acc[s] += gamma(0, s);
            }
            for t in 0..t_len {
                for s in 0..N_STATES {
                    let g = gamma(t, s);
                    gamma_sum[s] += g;
                    for d in 0..dims {
                        mean_num[s][d] += g * seq[t][d];
                        var_num[s][d] += g * (seq[t][d] - hmm.means[s][d]).powi(2);
                    }
                    if t + 1 < t_len {
                        trans_den[s] += g;
                        for q in 0..N_STATES {
                            trans_num[s][q] += alpha[t][s]
                                * hmm.transition[s][q]
                                * emis(t + 1, q)
                                * beta[t + 1][q];
                        }
                    }
                }
            }
        }

        hmm.ll_history.push(total_ll);
        // EM guarantee, allowing for round-off; a re-seeded state restarts it
        if !reseeded {
            assert!(
                total_ll + 1e-9 * total_ll.abs().max(1.0) >= prev_ll,
                "log-likelihood decreased: {prev_ll} -> {total_ll}"
            );
        }
        if total_ll - prev_ll < LL_TOL && prev_ll.is_finite() && !reseeded {
            break;
        }
        prev_ll = total_ll;
        reseeded = false;

        // M-step
        let init_total: f64 = init_acc.iter().sum();
        for s in 0..N_STATES {
            if gamma_sum[s] < 1e-8 {
                // re-seed a starved state deterministically and keep going
                let donor = (0..N_STATES).max_by(|&a, &b| gamma_sum[a].partial_cmp(&gamma_sum[b]).unwrap()).unwrap();
                hmm.means[s] = hmm.means[donor].iter().map(|m| m + 0.1 * (s as f64 + 1.0)).collect();
                reseeded = true;
                continue;
            }
            hmm.initial[s] = (init_acc[s] / init_total).max(1e-12);
            for d in 0..dims {
                hmm.means[s][d] = mean_num[s][d] / gamma_sum[s];
                hmm.variances[s][d] = (var_num[s][d] / gamma_sum[s]).max(VAR_FLOOR);
            }
            if trans_den[s] > 1e-12 {
                for q in 0..N_STATES {
                    hmm.transition[s][q] = (trans_num[s][q] / trans_den[s]).max(1e-12);
                }
            }
            let row_sum: f64 = hmm.transition[s].iter().sum();
            for q in 0..N_STATES {
                hmm.transition[s][q] /= row_sum;
            }
        }
        let init_sum: f64 = hmm.initial.iter().sum();
        for s in 0..N_STATES {
            hmm.initial[s] /= init_sum;
        }
    }
    Ok(hmm)
}

/// Argmax over classes of the length-normalized forward log-likelihood;
/// ties go to expert.
pub fn predict_hmm(
    expert: &GaussianHmm,
    novice: &GaussianHmm,
    seq: &[Vec<f64>],
) -> OperatorClass {
    let le = log_likelihood(expert, seq) / seq.len() as f64;
    let ln = log_likelihood(novice, seq) / seq.len() as f64;
    if ln > le {
        OperatorClass::Novice
    } else {
        OperatorClass::Expert
    }
}
