//! Skill classification: kernel SVM, Gaussian-HMM baseline, the
//! leave-one-trial-out / leave-one-user-out cross-validation harness, and
//! micro/macro accuracy metrics.

pub mod hmm;
pub mod svm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::OperatorClass;
use crate::features::FeatureVector;

pub use hmm::{predict_hmm, train_hmm, GaussianHmm};
pub use svm::{predict_svm, train_svm, SvmHyper, SvmModel};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("all feature dimensions have zero variance")]
    DegenerateFeature,
    #[error("a class has no usable training sequences")]
    EmptyClass,
    #[error("not enough folds: {0}")]
    InsufficientFolds(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("row {0} has no stroke sequence; the HMM baseline needs bundles, not just features.csv")]
    MissingSequence(String),
}

/// One labeled row: a trial (or the portion of a multi-operator trial
/// performed by one operator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub trial_id: String,
    pub operator_id: String,
    pub label: OperatorClass,
    pub features: FeatureVector,
    /// Per-stroke observations (curvature, duration, hull-area increment)
    /// in stroke order, for the HMM baseline.
    #[serde(default)]
    pub sequence: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

/// Which feature components feed the classifier (the four columns of the
/// results tables).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    OnlyScc,
    OnlySdc,
    OnlyCr,
    Overall,
}

impl FeatureSubset {
    pub const ALL: [FeatureSubset; 4] =
        [FeatureSubset::OnlyScc, FeatureSubset::OnlySdc, FeatureSubset::OnlyCr, FeatureSubset::Overall];

    pub fn extract(&self, v: &FeatureVector) -> Vec<f64> {
        match self {
            FeatureSubset::OnlyScc => vec![v.scc],
            FeatureSubset::OnlySdc => vec![v.sdc],
            FeatureSubset::OnlyCr => vec![v.cr],
            FeatureSubset::Overall => vec![v.scc, v.sdc, v.cr],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSubset::OnlyScc => "only_scc",
            FeatureSubset::OnlySdc => "only_sdc",
            FeatureSubset::OnlyCr => "only_cr",
            FeatureSubset::Overall => "overall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvScheme {
    /// Leave-one-trial-out.
    To,
    /// Leave-one-user-out.
    Uo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Hmm,
}

/// Confusion counts indexed `[predicted][actual]` over (expert, novice).
/// Counts are real-valued so rate matrices can be scored directly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// counts[p][a]: p, a in {0 = expert, 1 = novice}
    pub counts: [[f64; 2]; 2],
}

fn class_index(c: OperatorClass) -> usize {
    match c {
        OperatorClass::Expert => 0,
        OperatorClass::Novice => 1,
    }
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: OperatorClass, actual: OperatorClass) {
        self.counts[class_index(predicted)][class_index(actual)] += 1.0;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    /// Build directly from counts or per-class rates:
    /// rows are predicted (E, N), columns actual (E, N).
    pub fn from_counts(counts: [[f64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }
}

/// Micro accuracy (fraction correct) and macro accuracy (mean of the two
/// per-class true-positive rates), both in percent.
pub fn metrics(cm: &ConfusionMatrix) -> Result<(f64, f64), ClassifyError> {
    let total = cm.total();
    if total <= 0.0 {
        return Err(ClassifyError::EmptyMatrix);
    }
    let micro = 100.0 * (cm.counts[0][0] + cm.counts[1][1]) / total;
    let actual_e = cm.counts[0][0] + cm.counts[1][0];
    let actual_n = cm.counts[0][1] + cm.counts[1][1];
    if actual_e <= 0.0 || actual_n <= 0.0 {
        return Err(ClassifyError::EmptyMatrix);
    }
    let tpr_e = cm.counts[0][0] / actual_e;
    let tpr_n = cm.counts[1][1] / actual_n;
    // when counts are percentages the TPRs already are rates
    let macro_avg = 100.0 * (tpr_e + tpr_n) / 2.0;
    Ok((micro, macro_avg))
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub trial_id: String,
    pub operator_id: String,
    pub actual: OperatorClass,
    pub predicted: OperatorClass,
    /// SVM decision value; absent for the HMM baseline.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub scheme: CvScheme,
    pub classifier: ClassifierKind,
    pub subset: FeatureSubset,
    pub confusion: ConfusionMatrix,
    pub micro: f64,
    pub macro_avg: f64,
    pub predictions: Vec<FoldPrediction>,
}

/// Fold keys in deterministic order: trial rows for TO, operators for UO.
fn fold_keys(ds: &Dataset, scheme: CvScheme) -> Vec<String> {
    let mut keys: BTreeSet<String> = BTreeSet::new();
    for row in &ds.rows {
        match scheme {
            CvScheme::To => {
                keys.insert(format!("{}\u{1f}{}", row.trial_id, row.operator_id));
            }
            CvScheme::Uo => {
                keys.insert(row.operator_id.clone());
            }
        }
    }
    keys.into_iter().collect()
}

fn row_key(row: &DatasetRow, scheme: CvScheme) -> String {
    match scheme {
        CvScheme::To => format!("{}\u{1f}{}", row.trial_id, row.operator_id),
        CvScheme::Uo => row.operator_id.clone(),
    }
}

/// Run cross-validation, training from scratch inside each fold.
pub fn cross_validate(
    ds: &Dataset,
    scheme: CvScheme,
    classifier: ClassifierKind,
    subset: FeatureSubset,
    hyper: &SvmHyper,
) -> Result<CvResult, ClassifyError> {
    let keys = fold_keys(ds, scheme);
    if keys.len() < 2 {
        return Err(ClassifyError::InsufficientFolds(format!(
            "{} fold key(s); need at least 2",
            keys.len()
        )));
    }
    let mut confusion = ConfusionMatrix::default();
    let mut predictions = Vec::new();
    for key in &keys {
        let train_rows: Vec<&DatasetRow> =
            ds.rows.iter().filter(|r| &row_key(r, scheme) != key).collect();
        let test_rows: Vec<&DatasetRow> =
            ds.rows.iter().filter(|r| &row_key(r, scheme) == key).collect();
        debug_assert!(test_rows.iter().all(|t| !train_rows
            .iter()
            .any(|r| r.trial_id == t.trial_id && r.operator_id == t.operator_id)));

        match classifier {
            ClassifierKind::Svm => {
                let train_data: Vec<(Vec<f64>, OperatorClass)> = train_rows
                    .iter()
                    .map(|r| (subset.extract(&r.features), r.label))
                    .collect();
                let model = train_svm(&train_data, hyper)?;
                for row in &test_rows {
                    let (pred, margin) = predict_svm(&model, &subset.extract(&row.features));
                    confusion.record(pred, row.label);
                    predictions.push(FoldPrediction {
                        trial_id: row.trial_id.clone(),
                        operator_id: row.operator_id.clone(),
                        actual: row.label,
                        predicted: pred,
                        margin: Some(margin),
                    });
                }
            }
            ClassifierKind::Hmm => {
                let seqs_of = |class: OperatorClass| -> Result<Vec<Vec<Vec<f64>>>, ClassifyError> {
                    train_rows
                        .iter()
                        .filter(|r| r.label == class)
                        .map(|r| {
                            r.sequence
                                .clone()
                                .ok_or_else(|| ClassifyError::MissingSequence(r.trial_id.clone()))
                        })
                        .collect()
                };
                let expert = train_hmm(&seqs_of(OperatorClass::Expert)?)?;
                let novice = train_hmm(&seqs_of(OperatorClass::Novice)?)?;
                for row in &test_rows {
                    let seq = row
                        .sequence
                        .as_ref()
                        .ok_or_else(|| ClassifyError::MissingSequence(row.trial_id.clone()))?;
                    let pred = predict_hmm(&expert, &novice, seq);
                    confusion.record(pred, row.label);
                    predictions.push(FoldPrediction {
                        trial_id: row.trial_id.clone(),
                        operator_id: row.operator_id.clone(),
                        actual: row.label,
                        predicted: pred,
                        margin: None,
                    });
                }
            }
        }
    }
    let (micro, macro_avg) = metrics(&confusion)?;
    Ok(CvResult { scheme, classifier, subset, confusion, micro, macro_avg, predictions })
}
