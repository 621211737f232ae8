//! End-to-end trial processing: calibration, registration, head-frame
//! resolution, sub-trial segmentation, and feature extraction, plus the
//! conversion of processed trials into a classification dataset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    orient_normal, pivot_calibration, register_nose, tip_trajectory, validate_annotations,
    AcquisitionError, Annotation, OperatorClass, Registration, SubTrial, Tip, TipCalibration,
    Trial,
};
use crate::classify::{ClassifyError, Dataset, DatasetRow, SvmHyper};
use crate::features::{subtrial_features, trial_features, FeatureConfig, FeatureError, FeatureVector, SubTrialOutcome};
use crate::geometry::Vec3;
use crate::headcomp::{
    compensate, estimate_plane_track, to_head_frame, HeadCompError, HeadModel,
};
use crate::strokes::{Stroke, StrokeConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    HeadComp(#[from] HeadCompError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("no usable data: {0}")]
    Empty(String),
}

/// How to obtain a head-fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadModeChoice {
    /// Require the reference head sensor stream.
    Sensor,
    /// Always use the 1-DoF rotating-plane estimator.
    Estimate,
    /// Sensor when a head stream is present, estimator otherwise.
    #[default]
    Auto,
}

/// Tunable parameters of the whole pipeline; every field has a default so a
/// config file may specify only what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub head_mode: HeadModeChoice,
    /// Trailing window of the plane estimator, seconds.
    pub head_window: f64,
    /// Estimator search bracket half-width, degrees.
    pub head_bracket_deg: f64,
    /// Estimator termination tolerance, degrees.
    pub head_tolerance_deg: f64,
    /// Stroke-detection overrides; unset fields use the rate-derived defaults.
    pub smooth_window: Option<usize>,
    pub min_duration: Option<f64>,
    pub max_duration: Option<f64>,
    pub min_length: Option<f64>,
    pub max_center_distance: Option<f64>,
    pub min_prominence: Option<f64>,
    /// Median-filter window for the consistency features (odd).
    pub consistency_window: usize,
    pub svm: SvmHyper,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            head_mode: HeadModeChoice::Auto,
            head_window: 2.0,
            head_bracket_deg: 15.0,
            head_tolerance_deg: 0.01,
            smooth_window: None,
            min_duration: None,
            max_duration: None,
            min_length: None,
            max_center_distance: None,
            min_prominence: None,
            consistency_window: 5,
            svm: SvmHyper::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn stroke_config(&self, rate: f64) -> StrokeConfig {
        let mut c = StrokeConfig::default_for_rate(rate);
        if let Some(v) = self.smooth_window {
            c.smooth_window = v.max(1);
        }
        if let Some(v) = self.min_duration {
            c.min_duration = v;
        }
        if let Some(v) = self.max_duration {
            c.max_duration = v;
        }
        if let Some(v) = self.min_length {
            c.min_length = v;
        }
        if let Some(v) = self.max_center_distance {
            c.max_center_distance = v;
        }
        if let Some(v) = self.min_prominence {
            c.min_prominence = v;
        }
        c
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig { consistency_window: self.consistency_window }
    }
}

/// One processed in-use annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrialReport {
    pub operator_id: String,
    pub operator_class: OperatorClass,
    pub tip: Tip,
    pub t_start: f64,
    pub t_end: f64,
    pub outcome: SubTrialOutcome,
}

/// Per-operator aggregate over that operator's sub-trials of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSummary {
    pub operator_id: String,
    pub operator_class: OperatorClass,
    /// `None` when every sub-trial fell under the stroke-count floor.
    pub features: Option<FeatureVector>,
    pub n_subtrials: usize,
    pub n_excluded: usize,
    /// Per-stroke observations (curvature, duration, hull-area increment)
    /// concatenated over the included sub-trials in time order.
    pub sequence: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadFrameUsed {
    Sensor,
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_id: String,
    pub calibration_a: Option<TipCalibration>,
    pub calibration_b: Option<TipCalibration>,
    pub registration: Registration,
    pub head_frame: HeadFrameUsed,
    pub subtrials: Vec<SubTrialReport>,
    pub operators: Vec<OperatorSummary>,
}

/// The calibration stored with the trial, or one recomputed from its pivot
/// interval.
pub fn resolve_calibration(trial: &Trial, tip: Tip) -> Result<Option<TipCalibration>, PipelineError> {
    let (stored, interval) = match tip {
        Tip::TipA => (&trial.calibration_a, &trial.pivot_interval_a),
        Tip::TipB => (&trial.calibration_b, &trial.pivot_interval_b),
    };
    if let Some(c) = stored {
        return Ok(Some(*c));
    }
    if let Some(iv) = interval {
        let poses: Vec<_> = trial
            .cottle_stream
            .slice(iv.t_start, iv.t_end)
            .iter()
            .map(|s| s.pose)
            .collect();
        return Ok(Some(pivot_calibration(&poses)?));
    }
    Ok(None)
}

fn slice_traj(traj: &[(f64, Vec3)], t0: f64, t1: f64) -> Vec<(f64, Vec3)> {
    traj.iter().filter(|(t, _)| *t >= t0 && *t <= t1).copied().collect()
}

/// Observation rows for one sub-trial's strokes: curvature, duration, and the
/// hull-area increment the stroke contributed.
fn stroke_sequence(strokes: &[Stroke]) -> Result<Vec<Vec<f64>>, PipelineError> {
    let graph = crate::features::build_search_graph(strokes).map_err(FeatureError::from)?;
    let mut rows = Vec::with_capacity(strokes.len());
    for (i, s) in strokes.iter().enumerate() {
        let increment = match i {
            0 | 1 => 0.0,
            2 => graph.hull_areas[0],
            _ => graph.hull_areas[i - 2] - graph.hull_areas[i - 3],
        };
        let curvature =
            crate::strokes::stroke_curvature(s).map_err(FeatureError::from)?;
        rows.push(vec![curvature, s.duration, increment]);
    }
    Ok(rows)
}

/// Run the full single-trial pipeline.
pub fn process_trial(trial: &Trial, cfg: &PipelineConfig) -> Result<TrialResult, PipelineError> {
    validate_annotations(&trial.annotations, trial.registration_interval)?;
    let mut in_use: Vec<&Annotation> =
        trial.annotations.iter().filter(|a| a.cottle_in_use).collect();
    in_use.sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).unwrap());
    if in_use.is_empty() {
        return Err(PipelineError::Empty("no in-use annotation".into()));
    }

    let cal_a = resolve_calibration(trial, Tip::TipA)?;
    let cal_b = resolve_calibration(trial, Tip::TipB)?;
    let cal_of = |tip: Tip| -> Result<&TipCalibration, PipelineError> {
        match tip {
            Tip::TipA => cal_a.as_ref(),
            Tip::TipB => cal_b.as_ref(),
        }
        .ok_or_else(|| PipelineError::Empty(format!("no calibration for {tip:?}")))
    };

    // registration is performed with tip A
    let reg_cal = cal_of(Tip::TipA)?;
    let raw_a = tip_trajectory(&trial.cottle_stream, reg_cal);

    let use_sensor = match cfg.head_mode {
        HeadModeChoice::Sensor => {
            if trial.head_stream.is_none() {
                return Err(PipelineError::Empty("head sensor stream required but absent".into()));
            }
            true
        }
        HeadModeChoice::Estimate => false,
        HeadModeChoice::Auto => trial.head_stream.is_some(),
    };

    // trajectory per tip in the frame registration will live in
    let base_traj = |tip: Tip| -> Result<Vec<(f64, Vec3)>, PipelineError> {
        let raw = tip_trajectory(&trial.cottle_stream, cal_of(tip)?);
        if use_sensor {
            Ok(to_head_frame(&raw, trial.head_stream.as_ref().unwrap())?)
        } else {
            Ok(raw)
        }
    };

    let reg_traj = if use_sensor {
        to_head_frame(&raw_a, trial.head_stream.as_ref().unwrap())?
    } else {
        raw_a
    };
    let reg_points: Vec<Vec3> = slice_traj(
        &reg_traj,
        trial.registration_interval.t_start,
        trial.registration_interval.t_end,
    )
    .iter()
    .map(|(_, p)| *p)
    .collect();
    if reg_points.len() < 3 {
        return Err(PipelineError::Empty("registration interval holds fewer than 3 samples".into()));
    }
    let mut registration = trial.registration.unwrap_or(register_nose(&reg_points)?);

    // per-annotation head-frame tip trajectories
    let mut sub_trajs: Vec<Vec<(f64, Vec3)>> = Vec::with_capacity(in_use.len());
    for a in &in_use {
        let traj = slice_traj(&base_traj(a.active_tip)?, a.t_start, a.t_end);
        let traj = if use_sensor {
            traj
        } else {
            let (axis_point, axis_direction) = trial
                .head_axis_override
                .unwrap_or((registration.nose_center, registration.basis.u));
            let model = HeadModel {
                window: cfg.head_window,
                bracket: cfg.head_bracket_deg.to_radians(),
                tolerance: cfg.head_tolerance_deg.to_radians(),
                ..HeadModel::estimated(axis_point, axis_direction)
            };
            let track = estimate_plane_track(&traj, &registration.plane, &model)?;
            compensate(&traj, &track)
        };
        sub_trajs.push(traj);
    }

    let probe: Vec<Vec3> = sub_trajs.iter().flatten().map(|(_, p)| *p).collect();
    orient_normal(&mut registration, &probe);

    let rate = trial.cottle_stream.nominal_rate;
    let stroke_cfg = cfg.stroke_config(rate);
    let feature_cfg = cfg.feature_config();
    let mut reports = Vec::with_capacity(in_use.len());
    for (a, traj) in in_use.iter().zip(sub_trajs) {
        let sub = SubTrial {
            trial_id: trial.id.clone(),
            operator_id: a.operator_id.clone(),
            operator_class: a.operator_class,
            tip_trajectory: traj,
        };
        let outcome = subtrial_features(
            &sub,
            &registration.plane,
            &registration.basis,
            registration.nose_center,
            &stroke_cfg,
            &feature_cfg,
        )?;
        reports.push(SubTrialReport {
            operator_id: a.operator_id.clone(),
            operator_class: a.operator_class,
            tip: a.active_tip,
            t_start: a.t_start,
            t_end: a.t_end,
            outcome,
        });
    }

    // group by operator, preserving first-appearance order
    let mut operators: Vec<OperatorSummary> = Vec::new();
    for r in &reports {
        if !operators.iter().any(|o| o.operator_id == r.operator_id) {
            operators.push(OperatorSummary {
                operator_id: r.operator_id.clone(),
                operator_class: r.operator_class,
                features: None,
                n_subtrials: 0,
                n_excluded: 0,
                sequence: Vec::new(),
            });
        }
        let o = operators.iter_mut().find(|o| o.operator_id == r.operator_id).unwrap();
        o.n_subtrials += 1;
        match &r.outcome {
            SubTrialOutcome::Excluded { .. } => o.n_excluded += 1,
            SubTrialOutcome::Features { strokes, .. } => {
                o.sequence.extend(stroke_sequence(strokes)?);
            }
        }
    }
    for o in operators.iter_mut() {
        let vectors: Vec<FeatureVector> = reports
            .iter()
            .filter(|r| r.operator_id == o.operator_id)
            .filter_map(|r| match &r.outcome {
                SubTrialOutcome::Features { vector, .. } => Some(*vector),
                SubTrialOutcome::Excluded { .. } => None,
            })
            .collect();
        if !vectors.is_empty() {
            o.features = Some(trial_features(&vectors)?);
        }
    }

    Ok(TrialResult {
        trial_id: trial.id.clone(),
        calibration_a: cal_a,
        calibration_b: cal_b,
        registration,
        head_frame: if use_sensor { HeadFrameUsed::Sensor } else { HeadFrameUsed::Estimated },
        subtrials: reports,
        operators,
    })
}

/// Collect processed trials into a classification dataset: one row per
/// (trial, operator) pair that produced a feature vector.
pub fn dataset_from_results(results: &[TrialResult]) -> Dataset {
    let mut rows = Vec::new();
    for r in results {
        for o in &r.operators {
            if let Some(features) = o.features {
                rows.push(DatasetRow {
                    trial_id: r.trial_id.clone(),
                    operator_id: o.operator_id.clone(),
                    label: o.operator_class,
                    features,
                    sequence: Some(o.sequence.clone()),
                });
            }
        }
    }
    Dataset { rows }
}
