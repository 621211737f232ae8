//! Radial-basis-function kernel SVM trained with a deterministic SMO solver.
//!
//! Labels are +1 for expert and -1 for novice. Features are standardized
//! per dimension with statistics from the training set only; zero-variance
//! dimensions are dropped. Per-class box constraints implement inverse
//! class-frequency weighting.

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::acquisition::OperatorClass;

/// SVM hyperparameters. `gamma` of `None` uses 1/(d * mean variance) of the
/// standardized training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    pub c: f64,
    pub gamma: Option<f64>,
    /// Weight box constraints inversely to class frequency.
    pub balance_classes: bool,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper { c: 1.0, gamma: None, balance_classes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Retained training points (support vectors), standardized.
    pub support: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    /// Standardization over the kept dimensions, in original feature order.
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Indices of input dimensions kept (zero-variance ones are dropped).
    pub kept_dims: Vec<usize>,
    /// Dual objective at the solution, for diagnostics.
    pub dual_objective: f64,
}

const KKT_TOL: f64 = 1e-6;
const ALPHA_EPS: f64 = 1e-12;
const MAX_PASSES: usize = 20_000;

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub(crate) fn label_sign(class: OperatorClass) -> f64 {
    match class {
        OperatorClass::Expert => 1.0,
        OperatorClass::Novice => -1.0,
    }
}

/// Deterministic SMO on the dual problem. Returns (alpha, bias).
fn smo(
    kernel: &[Vec<f64>],
    y: &[f64],
    c_box: &[f64],
) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    let mut b = 0.0f64;

    let decision = |alpha: &[f64], b: f64, k: usize| -> f64 {
        let mut f = -b;
        for i in 0..n {
            if alpha[i] > 0.0 {
                f += alpha[i] * y[i] * kernel[i][k];
            }
        }
        f
    };

    for _pass in 0..MAX_PASSES {
        let errors: Vec<f64> = (0..n).map(|k| decision(&alpha, b, k) - y[k]).collect();
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = decision(&alpha, b, i) - y[i];
            let r_i = e_i * y[i];
            if !((r_i < -KKT_TOL && alpha[i] < c_box[i] - ALPHA_EPS)
                || (r_i > KKT_TOL && alpha[i] > ALPHA_EPS))
            {
                continue;
            }
            // candidate partners ordered by |E_i - E_j|, ties by index
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &bj| {
                (errors[bj] - e_i)
                    .abs()
                    .partial_cmp(&(errors[a] - e_i).abs())
                    .unwrap()
                    .then(a.cmp(&bj))
            });
            for j in order {
                if try_step(kernel, y, c_box, &mut alpha, &mut b, i, j, e_i) {
                    changed += 1;
                    break;
                }
            }
        }
        if changed == 0 {
            break;
        }
    }
    (alpha, b)
}

#[allow(clippy::too_many_arguments)]
fn try_step(
    kernel: &[Vec<f64>],
    y: &[f64],
    c_box: &[f64],
    alpha: &mut [f64],
    b: &mut f64,
    i: usize,
    j: usize,
    e_i: f64,
) -> bool {
    let n = y.len();
    let decision = |alpha: &[f64], b: f64, k: usize| -> f64 {
        let mut f = -b;
        for t in 0..n {
            if alpha[t] > 0.0 {
                f += alpha[t] * y[t] * kernel[t][k];
            }
        }
        f
    };
    let e_j = decision(alpha, *b, j) - y[j];
    let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
    let (lo, hi) = if (y[i] - y[j]).abs() > 0.5 {
        ((a_j_old - a_i_old).max(0.0), (c_box[j]).min(c_box[i] + a_j_old - a_i_old))
    } else {
        ((a_i_old + a_j_old - c_box[i]).max(0.0), (c_box[j]).min(a_i_old + a_j_old))
    };
    if hi - lo < ALPHA_EPS {
        return false;
    }
    let eta = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
    if eta <= 1e-12 {
        return false;
    }
    let mut a_j = a_j_old + y[j] * (e_i - e_j) / eta;
    a_j = a_j.clamp(lo, hi);
    if (a_j - a_j_old).abs() < ALPHA_EPS {
        return false;
    }
    let a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j);
    alpha[i] = a_i;
    alpha[j] = a_j;

    let b1 = *b
        + e_i
        + y[i] * (a_i - a_i_old) * kernel[i][i]
        + y[j] * (a_j - a_j_old) * kernel[i][j];
    let b2 = *b
        + e_j
        + y[i] * (a_i - a_i_old) * kernel[i][j]
        + y[j] * (a_j - a_j_old) * kernel[j][j];
    *b = if a_i > ALPHA_EPS && a_i < c_box[i] - ALPHA_EPS {
        b1
    } else if a_j > ALPHA_EPS && a_j < c_box[j] - ALPHA_EPS {
        b2
    } else {
        (b1 + b2) / 2.0
    };
    true
}

/// Dual objective at `alpha`.
pub(crate) fn dual_objective(kernel: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut obj: f64 = alpha.iter().sum();
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
        }
    }
    obj
}

/// Train on raw (unstandardized) feature rows with class labels.
pub fn train_svm(
    rows: &[(Vec<f64>, OperatorClass)],
    hyper: &SvmHyper,
) -> Result<SvmModel, ClassifyError> {
    let n = rows.len();
    let n_expert = rows.iter().filter(|(_, c)| *c == OperatorClass::Expert).count();
    if n_expert == 0 || n_expert == n {
        return Err(ClassifyError::SingleClass);
    }
    let dims = rows[0].0.len();

    // standardization, dropping zero-variance dimensions
    let mut means = vec![0.0; dims];
    let mut vars = vec![0.0; dims];
    for (x, _) in rows {
        for (d, v) in x.iter().enumerate() {
            means[d] += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    for (x, _) in rows {
        for (d, v) in x.iter().enumerate() {
            vars[d] += (v - means[d]) * (v - means[d]);
        }
    }
    for v in &mut vars {
        *v /= n as f64;
    }
    let kept_dims: Vec<usize> = (0..dims).filter(|&d| vars[d] > 1e-12).collect();
    if kept_dims.is_empty() {
        return Err(ClassifyError::DegenerateFeature);
    }
    if kept_dims.len() < dims {
        eprintln!(
            "warning: dropping {} zero-variance feature dimension(s)",
            dims - kept_dims.len()
        );
    }
    let kept_means: Vec<f64> = kept_dims.iter().map(|&d| means[d]).collect();
    let kept_scales: Vec<f64> = kept_dims.iter().map(|&d| vars[d].sqrt()).collect();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|(row, _)| {
            kept_dims
                .iter()
                .enumerate()
                .map(|(k, &d)| (row[d] - kept_means[k]) / kept_scales[k])
                .collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|(_, c)| label_sign(*c)).collect();

    let gamma = hyper.gamma.unwrap_or_else(|| {
        let d = kept_dims.len() as f64;
        let mean_var: f64 = (0..kept_dims.len())
            .map(|k| {
                let m: f64 = x.iter().map(|r| r[k]).sum::<f64>() / n as f64;
                x.iter().map(|r| (r[k] - m) * (r[k] - m)).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / d;
        1.0 / (d * mean_var.max(1e-12))
    });

    let c_box: Vec<f64> = if hyper.balance_classes {
        let n_novice = n - n_expert;
        rows.iter()
            .map(|(_, c)| {
                let n_c = if *c == OperatorClass::Expert { n_expert } else { n_novice };
                hyper.c * n as f64 / (2.0 * n_c as f64)
            })
            .collect()
    } else {
        vec![hyper.c; n]
    };

    let kernel: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| rbf(&x[i], &x[j], gamma)).collect()).collect();
    let (alpha, bias) = smo(&kernel, &y, &c_box);
    let obj = dual_objective(&kernel, &y, &alpha);

    let mut support = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        if alpha[i] > ALPHA_EPS {
            support.push(x[i].clone());
            coefficients.push(alpha[i] * y[i]);
        }
    }
    Ok(SvmModel {
        support,
        coefficients,
        bias,
        gamma,
        means: kept_means,
        scales: kept_scales,
        kept_dims,
        dual_objective: obj,
    })
}

/// Decision value for a raw feature row.
pub fn decision_value(model: &SvmModel, features: &[f64]) -> f64 {
    let x: Vec<f64> = model
        .kept_dims
        .iter()
        .enumerate()
        .map(|(k, &d)| (features[d] - model.means[k]) / model.scales[k])
        .collect();
    let mut f = -model.bias;
    for (sv, coef) in model.support.iter().zip(&model.coefficients) {
        f += coef * rbf(sv, &x, model.gamma);
    }
    f
}

/// Predicted class and margin. Decision values within 1e-12 of zero break
/// the tie toward expert.
pub fn predict_svm(model: &SvmModel, features: &[f64]) -> (OperatorClass, f64) {
    let f = decision_value(model, features);
    let class = if f < -1e-12 { OperatorClass::Novice } else { OperatorClass::Expert };
    (class, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rows_from(points: &[(f64, OperatorClass)]) -> Vec<(Vec<f64>, OperatorClass)> {
        points.iter().map(|(x, c)| (vec![*x], *c)).collect()
    }

    #[test]
    fn separable_clusters_reach_perfect_training_accuracy() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push((i as f64 * 0.1, OperatorClass::Novice));
            pts.push((10.0 + i as f64 * 0.1, OperatorClass::Expert));
        }
        let rows = rows_from(&pts);
        let model = train_svm(&rows, &SvmHyper::default()).unwrap();
        for (x, c) in &rows {
            assert_eq!(predict_svm(&model, x).0, *c);
        }
    }

    #[test]
    fn inseparable_data_does_not_crash() {
        let rows = vec![
            (vec![1.0, 2.0], OperatorClass::Expert),
            (vec![1.0, 2.0], OperatorClass::Novice),
            (vec![1.0, 2.0], OperatorClass::Expert),
            (vec![1.0, 2.0], OperatorClass::Novice),
        ];
        // all features identical => zero variance => DegenerateFeature
        assert!(matches!(train_svm(&rows, &SvmHyper::default()), Err(ClassifyError::DegenerateFeature)));

        // identical points plus one informative dim with opposite labels
        let rows = vec![
            (vec![0.0], OperatorClass::Expert),
            (vec![0.0001], OperatorClass::Novice),
            (vec![1.0], OperatorClass::Expert),
            (vec![1.0001], OperatorClass::Novice),
        ];
        let model = train_svm(&rows, &SvmHyper::default()).unwrap();
        for (x, _) in &rows {
            assert!(decision_value(&model, x).is_finite());
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let rows = vec![(vec![1.0], OperatorClass::Expert), (vec![2.0], OperatorClass::Expert)];
        assert!(matches!(train_svm(&rows, &SvmHyper::default()), Err(ClassifyError::SingleClass)));
    }

    #[test]
    fn support_vectors_predict_their_own_label_when_separable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(Vec<f64>, OperatorClass)> = (0..16)
            .map(|i| {
                let c = if i % 2 == 0 { OperatorClass::Expert } else { OperatorClass::Novice };
                let center = if i % 2 == 0 { 5.0 } else { -5.0 };
                (
                    vec![center + rng.gen_range(-0.5..0.5), center + rng.gen_range(-0.5..0.5)],
                    c,
                )
            })
            .collect();
        let model = train_svm(&rows, &SvmHyper::default()).unwrap();
        for (x, c) in &rows {
            assert_eq!(predict_svm(&model, x).0, *c);
        }
    }

    #[test]
    fn decision_matches_naive_kernel_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<(Vec<f64>, OperatorClass)> = (0..14)
            .map(|i| {
                let c = if i < 7 { OperatorClass::Expert } else { OperatorClass::Novice };
                (
                    vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                    c,
                )
            })
            .collect();
        let model = train_svm(&rows, &SvmHyper::default()).unwrap();
        for _ in 0..20 {
            let q = vec![
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let xstd: Vec<f64> = model
                .kept_dims
                .iter()
                .enumerate()
                .map(|(k, &d)| (q[d] - model.means[k]) / model.scales[k])
                .collect();
            let mut want = -model.bias;
            for (sv, coef) in model.support.iter().zip(&model.coefficients) {
                let d2: f64 = sv.iter().zip(&xstd).map(|(a, b)| (a - b) * (a - b)).sum();
                want += coef * (-model.gamma * d2).exp();
            }
            assert_eq!(decision_value(&model, &q), want);
        }
    }

    // Independent reference: exhaustive pair coordinate ascent on the dual,
    // iterating over all (i, j) pairs until no improvement above 1e-12.
    fn reference_dual(kernel: &[Vec<f64>], y: &[f64], c_box: &[f64]) -> f64 {
        let n = y.len();
        let mut alpha = vec![0.0f64; n];
        loop {
            let before = dual_objective(kernel, y, &alpha);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let eta = kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j];
                    if eta <= 1e-12 {
                        continue;
                    }
                    // gradient of the dual wrt alpha_j along the feasible line
                    let g_i: f64 = 1.0
                        - y[i]
                            * (0..n).map(|t| alpha[t] * y[t] * kernel[t][i]).sum::<f64>();
                    let g_j: f64 = 1.0
                        - y[j]
                            * (0..n).map(|t| alpha[t] * y[t] * kernel[t][j]).sum::<f64>();
                    let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
                    let (lo, hi) = if (y[i] - y[j]).abs() > 0.5 {
                        ((a_j_old - a_i_old).max(0.0), c_box[j].min(c_box[i] + a_j_old - a_i_old))
                    } else {
                        ((a_i_old + a_j_old - c_box[i]).max(0.0), c_box[j].min(a_i_old + a_j_old))
                    };
                    if hi - lo < 1e-15 {
                        continue;
                    }
                    let delta = y[j] * (g_j * y[j] - g_i * y[i]) / eta;
                    let a_j = (a_j_old + delta).clamp(lo, hi);
                    alpha[j] = a_j;
                    alpha[i] = a_i_old + y[i] * y[j] * (a_j_old - a_j);
                }
            }
            let after = dual_objective(kernel, y, &alpha);
            if after - before < 1e-12 {
                return after;
            }
        }
    }

    #[test]
    fn dual_objective_close_to_reference_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..10 {
            let n = rng.gen_range(6..20);
            let rows: Vec<(Vec<f64>, OperatorClass)> = (0..n)
                .map(|i| {
                    let c = if i % 2 == 0 { OperatorClass::Expert } else { OperatorClass::Novice };
                    let shift = if i % 2 == 0 { 1.0 } else { -1.0 };
                    (
                        vec![shift + rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                        c,
                    )
                })
                .collect();
            let model = train_svm(&rows, &SvmHyper::default()).unwrap();

            // rebuild the same standardized problem for the reference
            let x: Vec<Vec<f64>> = rows
                .iter()
                .map(|(row, _)| {
                    model
                        .kept_dims
                        .iter()
                        .enumerate()
                        .map(|(k, &d)| (row[d] - model.means[k]) / model.scales[k])
                        .collect()
                })
                .collect();
            let y: Vec<f64> = rows.iter().map(|(_, c)| label_sign(*c)).collect();
            let n_e = rows.iter().filter(|(_, c)| *c == OperatorClass::Expert).count();
            let c_box: Vec<f64> = rows
                .iter()
                .map(|(_, c)| {
                    let n_c = if *c == OperatorClass::Expert { n_e } else { n - n_e };
                    n as f64 / (2.0 * n_c as f64)
                })
                .collect();
            let kernel: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| rbf(&x[i], &x[j], model.gamma)).collect())
                .collect();
            let reference = reference_dual(&kernel, &y, &c_box);
            assert!(
                (model.dual_objective - reference).abs() < 1e-4,
                "trial {trial}: smo {} vs reference {}",
                model.dual_objective,
                reference
            );
        }
    }

    #[test]
    fn labels_invariant_under_positive_affine_feature_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<(Vec<f64>, OperatorClass)> = (0..20)
            .map(|i| {
                let c = if i % 2 == 0 { OperatorClass::Expert } else { OperatorClass::Novice };
                let shift = if i % 2 == 0 { 0.8 } else { -0.8 };
                (
                    vec![shift + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    c,
                )
            })
            .collect();
        let test: Vec<Vec<f64>> = (0..15)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();

        let model_a = train_svm(&rows, &SvmHyper::default()).unwrap();
        let labels_a: Vec<OperatorClass> =
            test.iter().map(|x| predict_svm(&model_a, x).0).collect();

        let (scale, offset) = (37.5, -12.0);
        let rescale = |v: &[f64]| vec![v[0] * scale + offset, v[1]];
        let rows_b: Vec<(Vec<f64>, OperatorClass)> =
            rows.iter().map(|(x, c)| (rescale(x), *c)).collect();
        let model_b = train_svm(&rows_b, &SvmHyper::default()).unwrap();
        let labels_b: Vec<OperatorClass> =
            test.iter().map(|x| predict_svm(&model_b, &rescale(x)).0).collect();
        assert_eq!(labels_a, labels_b);
    }
}
