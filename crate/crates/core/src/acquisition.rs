//! Trial data model, bundle file ingestion, pivot calibration of the tool
//! tips, and nose registration producing the initial septal plane.
//!
//! A trial bundle is a directory with `cottle.csv`, optional `head.csv`
//! (header `t,px,py,pz,qw,qx,qy,qz`, seconds/mm, scalar-first quaternions)
//! and `meta.json` carrying the trial id, nominal rate, annotations, tip
//! calibrations and intervals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pca3, GeometryError, Plane, PlaneBasis, RigidTransform, UnitQuaternion, Vec3};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("parse error in {file}: {message}")]
    Parse { file: String, message: String },
    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },
    #[error("non-monotone timestamp at row {row} of {file}")]
    Order { file: String, row: usize },
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("pivot motion too degenerate to determine the tip offset (smallest singular value {sigma_min:.2e})")]
    DegenerateMotion { sigma_min: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped 6-DoF sensor reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub pose: RigidTransform,
}

/// Ordered pose samples from one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseStream {
    pub samples: Vec<PoseSample>,
    pub nominal_rate: f64,
}

impl PoseStream {
    /// Samples with `t` inside `[t0, t1]`.
    pub fn slice(&self, t0: f64, t1: f64) -> Vec<PoseSample> {
        self.samples.iter().filter(|s| s.t >= t0 && s.t <= t1).copied().collect()
    }
}

/// Result of pivot calibration: the tool-tip offset in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipCalibration {
    pub tip_offset: Vec3,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorClass {
    Expert,
    Novice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tip {
    TipA,
    TipB,
}

/// A manually annotated interval of the trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub t_start: f64,
    pub t_end: f64,
    pub operator_id: String,
    pub operator_class: OperatorClass,
    pub active_tip: Tip,
    pub cottle_in_use: bool,
}

/// Optional pivot-motion interval for one tip, used by `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t_start: f64,
    pub t_end: f64,
}

/// Stored nose-registration result (plane + in-plane basis + center).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub plane: Plane,
    pub basis: PlaneBasis,
    pub nose_center: Vec3,
}

/// One recorded case: pose streams plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: String,
    pub cottle_stream: PoseStream,
    pub head_stream: Option<PoseStream>,
    pub annotations: Vec<Annotation>,
    pub calibration_a: Option<TipCalibration>,
    pub calibration_b: Option<TipCalibration>,
    pub registration_interval: Interval,
    pub pivot_interval_a: Option<Interval>,
    pub pivot_interval_b: Option<Interval>,
    pub registration: Option<Registration>,
    /// Optional override of the 1-DoF head rotation axis (point, direction).
    pub head_axis_override: Option<(Vec3, Vec3)>,
}

/// One continuous instance of tool use by a single operator, in head frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrial {
    pub trial_id: String,
    pub operator_id: String,
    pub operator_class: OperatorClass,
    pub tip_trajectory: Vec<(f64, Vec3)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaCalibration {
    offset: [f64; 3],
    #[serde(default)]
    residual_rms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaJson {
    id: String,
    nominal_rate: f64,
    registration_interval: [f64; 2],
    annotations: Vec<MetaAnnotation>,
    #[serde(default)]
    calibrations: BTreeMap<String, MetaCalibration>,
    #[serde(default)]
    pivot_intervals: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    registration: Option<Registration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_axis_override: Option<MetaAxis>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaAxis {
    pub point: [f64; 3],
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaAnnotation {
    t_start: f64,
    t_end: f64,
    operator_id: String,
    operator_class: OperatorClass,
    active_tip: Tip,
    cottle_in_use: bool,
}

fn parse_pose_csv(path: &Path, nominal_rate: f64) -> Result<PoseStream, AcquisitionError> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| AcquisitionError::Parse {
        file: file.clone(),
        message: e.to_string(),
    })?;
    {
        let headers = rdr.headers().map_err(|e| AcquisitionError::Parse {
            file: file.clone(),
            message: e.to_string(),
        })?;
        let expected = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];
        for col in expected {
            if !headers.iter().any(|h| h == col) {
                return Err(AcquisitionError::Schema {
                    file,
                    message: format!("missing column `{col}`"),
                });
            }
        }
    }
    let mut samples = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AcquisitionError::Parse {
            file: file.clone(),
            message: e.to_string(),
        })?;
        let mut vals = [0.0f64; 8];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = rec
                .get(i)
                .ok_or_else(|| AcquisitionError::Parse {
                    file: file.clone(),
                    message: format!("row {row}: too few fields"),
                })?
                .trim()
                .parse()
                .map_err(|e| AcquisitionError::Parse {
                    file: file.clone(),
                    message: format!("row {row}, field {i}: {e}"),
                })?;
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(AcquisitionError::Parse {
                file: file.clone(),
                message: format!("row {row}: non-finite value"),
            });
        }
        if vals[0] <= prev_t {
            return Err(AcquisitionError::Order { file, row });
        }
        prev_t = vals[0];
        samples.push(PoseSample {
            t: vals[0],
            pose: RigidTransform::new(
                UnitQuaternion::new(vals[4], vals[5], vals[6], vals[7]),
                Vec3::new(vals[1], vals[2], vals[3]),
            ),
        });
    }
    Ok(PoseStream { samples, nominal_rate })
}

/// Serialize a pose stream as a canonical CSV body (9 decimal places, LF).
pub fn pose_stream_to_csv(stream: &PoseStream) -> String {
    let mut out = String::from("t,px,py,pz,qw,qx,qy,qz\n");
    for s in &stream.samples {
        let p = s.pose.translation;
        let q = s.pose.rotation;
        writeln!(
            out,
            "{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t, p.x, p.y, p.z, q.w, q.x, q.y, q.z
        )
        .unwrap();
    }
    out
}

pub fn validate_annotations(
    annotations: &[Annotation],
    reg: Interval,
) -> Result<(), AcquisitionError> {
    let mut sorted: Vec<&Annotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).unwrap());
    for a in &sorted {
        if a.t_start >= a.t_end {
            return Err(AcquisitionError::Annotation(format!(
                "interval ({}, {}) is empty or inverted",
                a.t_start, a.t_end
            )));
        }
        if a.cottle_in_use && a.t_start < reg.t_end {
            return Err(AcquisitionError::Annotation(format!(
                "in-use interval starting at {} precedes the registration interval",
                a.t_start
            )));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].t_start < pair[0].t_end {
            return Err(AcquisitionError::Annotation(format!(
                "intervals overlap near t={}",
                pair[1].t_start
            )));
        }
    }
    Ok(())
}

/// Read and validate a trial bundle directory.
pub fn parse_trial(dir: &Path) -> Result<Trial, AcquisitionError> {
    let meta_path = dir.join("meta.json");
    let meta_file = meta_path.display().to_string();
    let meta_text = std::fs::read_to_string(&meta_path)?;
    let meta: MetaJson = serde_json::from_str(&meta_text).map_err(|e| AcquisitionError::Schema {
        file: meta_file,
        message: e.to_string(),
    })?;

    let cottle_stream = parse_pose_csv(&dir.join("cottle.csv"), meta.nominal_rate)?;
    let head_path = dir.join("head.csv");
    let head_stream = if head_path.exists() {
        Some(parse_pose_csv(&head_path, meta.nominal_rate)?)
    } else {
        None
    };

    let annotations: Vec<Annotation> = meta
        .annotations
        .iter()
        .map(|a| Annotation {
            t_start: a.t_start,
            t_end: a.t_end,
            operator_id: a.operator_id.clone(),
            operator_class: a.operator_class,
            active_tip: a.active_tip,
            cottle_in_use: a.cottle_in_use,
        })
        .collect();
    let registration_interval =
        Interval { t_start: meta.registration_interval[0], t_end: meta.registration_interval[1] };
    validate_annotations(&annotations, registration_interval)?;

    let cal = |key: &str| {
        meta.calibrations.get(key).map(|c| TipCalibration {
            tip_offset: Vec3::new(c.offset[0], c.offset[1], c.offset[2]),
            residual_rms: c.residual_rms,
        })
    };
    let piv = |key: &str| {
        meta.pivot_intervals.get(key).map(|iv| Interval { t_start: iv[0], t_end: iv[1] })
    };

    Ok(Trial {
        id: meta.id,
        cottle_stream,
        head_stream,
        annotations,
        calibration_a: cal("tip_a"),
        calibration_b: cal("tip_b"),
        registration_interval,
        pivot_interval_a: piv("tip_a"),
        pivot_interval_b: piv("tip_b"),
        registration: meta.registration,
        head_axis_override: meta.head_axis_override.map(|a| {
            (
                Vec3::new(a.point[0], a.point[1], a.point[2]),
                Vec3::new(a.direction[0], a.direction[1], a.direction[2]),
            )
        }),
    })
}

/// Write a trial bundle. Numbers are serialized with 9 decimal places so
/// parse/write round trips are byte-identical for canonical bundles.
pub fn write_trial(trial: &Trial, dir: &Path) -> Result<(), AcquisitionError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("cottle.csv"), pose_stream_to_csv(&trial.cottle_stream))?;
    if let Some(head) = &trial.head_stream {
        std::fs::write(dir.join("head.csv"), pose_stream_to_csv(head))?;
    }
    let mut calibrations = BTreeMap::new();
    let mut push_cal = |key: &str, c: &Option<TipCalibration>| {
        if let Some(c) = c {
            calibrations.insert(
                key.to_string(),
                MetaCalibration {
                    offset: [c.tip_offset.x, c.tip_offset.y, c.tip_offset.z],
                    residual_rms: c.residual_rms,
                },
            );
        }
    };
    push_cal("tip_a", &trial.calibration_a);
    push_cal("tip_b", &trial.calibration_b);
    let mut pivot_intervals = BTreeMap::new();
    if let Some(iv) = trial.pivot_interval_a {
        pivot_intervals.insert("tip_a".to_string(), [iv.t_start, iv.t_end]);
    }
    if let Some(iv) = trial.pivot_interval_b {
        pivot_intervals.insert("tip_b".to_string(), [iv.t_start, iv.t_end]);
    }
    let meta = MetaJson {
        id: trial.id.clone(),
        nominal_rate: trial.cottle_stream.nominal_rate,
        registration_interval: [trial.registration_interval.t_start, trial.registration_interval.t_end],
        annotations: trial
            .annotations
            .iter()
            .map(|a| MetaAnnotation {
                t_start: a.t_start,
                t_end: a.t_end,
                operator_id: a.operator_id.clone(),
                operator_class: a.operator_class,
                active_tip: a.active_tip,
                cottle_in_use: a.cottle_in_use,
            })
            .collect(),
        calibrations,
        pivot_intervals,
        registration: trial.registration,
        head_axis_override: trial.head_axis_override.map(|(p, d)| MetaAxis {
            point: [p.x, p.y, p.z],
            direction: [d.x, d.y, d.z],
        }),
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    std::fs::write(dir.join("meta.json"), text)?;
    Ok(())
}

/// Least-squares pivot calibration: solve the stacked system
/// `[R_i | -I] [tip; pivot] = -p_i` for the tip offset and pivot point.
pub fn pivot_calibration(poses: &[RigidTransform]) -> Result<TipCalibration, AcquisitionError> {
    if poses.len() < 3 {
        return Err(AcquisitionError::DegenerateMotion { sigma_min: 0.0 });
    }
    let n = poses.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 6);
    let mut b = DVector::<f64>::zeros(3 * n);
    for (i, pose) in poses.iter().enumerate() {
        let r = pose.rotation;
        let cols = [
            r.rotate(Vec3::new(1.0, 0.0, 0.0)),
            r.rotate(Vec3::new(0.0, 1.0, 0.0)),
            r.rotate(Vec3::new(0.0, 0.0, 1.0)),
        ];
        for (j, c) in cols.iter().enumerate() {
            a[(3 * i, j)] = c.x;
            a[(3 * i + 1, j)] = c.y;
            a[(3 * i + 2, j)] = c.z;
        }
        for k in 0..3 {
            a[(3 * i + k, 3 + k)] = -1.0;
        }
        b[3 * i] = -pose.translation.x;
        b[3 * i + 1] = -pose.translation.y;
        b[3 * i + 2] = -pose.translation.z;
    }
    let svd = a.clone().svd(true, true);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if sigma_min <= 1e-6 {
        return Err(AcquisitionError::DegenerateMotion { sigma_min });
    }
    let x = svd.solve(&b, 0.0).expect("svd solve");
    let residual = (&a * &x - &b).norm_squared();
    Ok(TipCalibration {
        tip_offset: Vec3::new(x[0], x[1], x[2]),
        residual_rms: (residual / (3 * n) as f64).sqrt(),
    })
}

/// Tip position per sample: `R * tip_offset + p`.
pub fn tip_trajectory(stream: &PoseStream, cal: &TipCalibration) -> Vec<(f64, Vec3)> {
    stream.samples.iter().map(|s| (s.t, s.pose.apply(cal.tip_offset))).collect()
}

/// Estimate the initial septal plane from the nose-registration trace:
/// the plane through the centroid spanned by the first and third principal
/// components, with normal PC1 x PC3 and in-plane basis (PC1, PC3).
pub fn register_nose(tip_points: &[Vec3]) -> Result<Registration, AcquisitionError> {
    let (centroid, comps, _vars) = pca3(tip_points)?;
    let normal = comps[0].cross(comps[2]).normalized();
    Ok(Registration {
        plane: Plane { point: centroid, normal },
        basis: PlaneBasis { u: comps[0], v: comps[2] },
        nose_center: centroid,
    })
}

/// Flip the plane normal (if needed) so the majority of `probe_points` sit at
/// nonnegative signed distance; ties keep the current orientation. Makes
/// off-plane brushing excursions a positive direction.
pub fn orient_normal(reg: &mut Registration, probe_points: &[Vec3]) {
    let positive = probe_points
        .iter()
        .filter(|p| crate::geometry::point_plane_distance(**p, &reg.plane) > 0.0)
        .count();
    if 2 * positive < probe_points.len() {
        reg.plane.normal = -reg.plane.normal;
    }
}

/// Split a head-frame trajectory into sub-trials: one per in-use annotation
/// interval, carrying that operator's identity and class.
pub fn segment_subtrials(
    trial: &Trial,
    head_frame_trajectory: &[(f64, Vec3)],
) -> Result<Vec<SubTrial>, AcquisitionError> {
    validate_annotations(&trial.annotations, trial.registration_interval)?;
    let mut annos: Vec<&Annotation> = trial.annotations.iter().filter(|a| a.cottle_in_use).collect();
    annos.sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).unwrap());
    let mut out = Vec::new();
    for a in annos {
        let traj: Vec<(f64, Vec3)> = head_frame_trajectory
            .iter()
            .filter(|(t, _)| *t >= a.t_start && *t <= a.t_end)
            .copied()
            .collect();
        out.push(SubTrial {
            trial_id: trial.id.clone(),
            operator_id: a.operator_id.clone(),
            operator_class: a.operator_class,
            tip_trajectory: traj,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-6 { Vec3::new(1.0, 0.0, 0.0) } else { axis };
        UnitQuaternion::from_axis_angle(axis, rng.gen_range(0.2..2.8))
    }

    fn pivot_poses(
        offset: Vec3,
        pivot: Vec3,
        n: usize,
        noise: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<RigidTransform> {
        (0..n)
            .map(|_| {
                let r = random_rotation(rng);
                let noise_v = Vec3::new(
                    gauss(rng) * noise,
                    gauss(rng) * noise,
                    gauss(rng) * noise,
                );
                RigidTransform::new(r, pivot - r.rotate(offset) + noise_v)
            })
            .collect()
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn pivot_recovers_known_offset_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let offset = Vec3::new(12.0, -3.0, 90.0);
        let pivot = Vec3::new(100.0, 50.0, -20.0);
        let poses = pivot_poses(offset, pivot, 50, 0.0, &mut rng);
        let cal = pivot_calibration(&poses).unwrap();
        assert!((cal.tip_offset - offset).norm() < 1e-6, "offset error {}", (cal.tip_offset - offset).norm());
        assert!(cal.residual_rms < 1e-9);
    }

    #[test]
    fn pivot_with_noise_close_and_residual_tracks_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let offset = Vec3::new(12.0, -3.0, 90.0);
        let poses = pivot_poses(offset, Vec3::new(10.0, 0.0, 5.0), 50, 0.2, &mut rng);
        let cal = pivot_calibration(&poses).unwrap();
        assert!((cal.tip_offset - offset).norm() < 0.5);
        assert!(cal.residual_rms > 0.1 && cal.residual_rms < 0.3, "rms {}", cal.residual_rms);
    }

    #[test]
    fn pivot_identical_rotations_is_degenerate() {
        let poses: Vec<RigidTransform> = (0..10)
            .map(|i| RigidTransform::new(UnitQuaternion::IDENTITY, Vec3::new(i as f64, 0.0, 0.0)))
            .collect();
        assert!(matches!(
            pivot_calibration(&poses),
            Err(AcquisitionError::DegenerateMotion { .. })
        ));
    }

    #[test]
    fn tip_trajectory_basic_and_commutes_with_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<PoseSample> = (0..20)
            .map(|i| PoseSample {
                t: i as f64 * 0.025,
                pose: RigidTransform::new(
                    random_rotation(&mut rng),
                    Vec3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), 0.0),
                ),
            })
            .collect();
        let stream = PoseStream { samples: samples.clone(), nominal_rate: 40.0 };

        let zero = TipCalibration { tip_offset: Vec3::ZERO, residual_rms: 0.0 };
        for ((_, p), s) in tip_trajectory(&stream, &zero).iter().zip(&samples) {
            assert!((*p - s.pose.translation).norm() < 1e-12);
        }

        let cal = TipCalibration { tip_offset: Vec3::new(1.0, -2.0, 3.0), residual_rms: 0.0 };
        let world = RigidTransform::new(random_rotation(&mut rng), Vec3::new(7.0, -4.0, 2.0));
        let moved = PoseStream {
            samples: samples
                .iter()
                .map(|s| PoseSample { t: s.t, pose: world.compose(&s.pose) })
                .collect(),
            nominal_rate: 40.0,
        };
        let tip_then_move: Vec<Vec3> =
            tip_trajectory(&stream, &cal).iter().map(|(_, p)| world.apply(*p)).collect();
        let move_then_tip: Vec<Vec3> =
            tip_trajectory(&moved, &cal).iter().map(|(_, p)| *p).collect();
        for (a, b) in tip_then_move.iter().zip(&move_then_tip) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn identity_rotation_offset_shifts_positions() {
        let stream = PoseStream {
            samples: (0..5)
                .map(|i| PoseSample {
                    t: i as f64,
                    pose: RigidTransform::new(UnitQuaternion::IDENTITY, Vec3::new(i as f64, 2.0, 3.0)),
                })
                .collect(),
            nominal_rate: 1.0,
        };
        let cal = TipCalibration { tip_offset: Vec3::new(1.0, 0.0, 0.0), residual_rms: 0.0 };
        for (i, (_, p)) in tip_trajectory(&stream, &cal).iter().enumerate() {
            assert_eq!(*p, Vec3::new(i as f64 + 1.0, 2.0, 3.0));
        }
    }

    /// Nose-perimeter-like trace: dominant extent along x (PC1), medium
    /// across the septum along y (PC2), small depth along z (PC3). The
    /// registered plane is then x-z with normal along y.
    fn perimeter_trace(n: usize, z_noise: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n)
            .map(|i| {
                let s = i as f64 / n as f64 * std::f64::consts::TAU;
                Vec3::new(
                    40.0 * s.sin(),
                    8.0 * (2.0 * s).cos(),
                    3.0 * s.cos() + gauss(rng) * z_noise,
                )
            })
            .collect()
    }

    #[test]
    fn register_nose_recovers_constructed_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = perimeter_trace(400, 0.1, &mut rng);
        let reg = register_nose(&pts).unwrap();
        // plane spanned by PC1 (x) and PC3 (z) => normal along y
        let angle = reg.plane.normal.dot(Vec3::new(0.0, 1.0, 0.0)).abs().clamp(-1.0, 1.0).acos();
        assert!(angle < 0.5_f64.to_radians(), "normal off by {} rad", angle);
        assert!(reg.nose_center.norm() < 1.5);
    }

    #[test]
    fn register_nose_stable_under_subsampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = perimeter_trace(600, 0.1, &mut rng);
        let full = register_nose(&pts).unwrap();
        let half: Vec<Vec3> = pts.iter().step_by(2).copied().collect();
        let sub = register_nose(&half).unwrap();
        let angle = full.plane.normal.dot(sub.plane.normal).abs().clamp(-1.0, 1.0).acos();
        assert!(angle < 0.5_f64.to_radians());
    }

    #[test]
    fn register_nose_collinear_fails() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(register_nose(&pts).is_err());
    }

    #[test]
    fn orient_normal_flips_toward_majority() {
        let mut reg = Registration {
            plane: Plane::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)),
            basis: PlaneBasis { u: Vec3::new(1.0, 0.0, 0.0), v: Vec3::new(0.0, 1.0, 0.0) },
            nose_center: Vec3::ZERO,
        };
        let below: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, -2.0)).collect();
        orient_normal(&mut reg, &below);
        assert_eq!(reg.plane.normal, Vec3::new(0.0, 0.0, -1.0));
    }

    fn demo_trial() -> Trial {
        let samples: Vec<PoseSample> = (0..40)
            .map(|i| PoseSample {
                t: i as f64 * 0.25,
                pose: RigidTransform::new(
                    UnitQuaternion::new(1.0, 0.01 * i as f64, 0.0, 0.0),
                    Vec3::new(i as f64, -0.5 * i as f64, 3.0),
                ),
            })
            .collect();
        Trial {
            id: "demo".into(),
            cottle_stream: PoseStream { samples, nominal_rate: 4.0 },
            head_stream: None,
            annotations: vec![
                Annotation {
                    t_start: 2.0,
                    t_end: 5.0,
                    operator_id: "surgeon_a".into(),
                    operator_class: OperatorClass::Expert,
                    active_tip: Tip::TipA,
                    cottle_in_use: true,
                },
                Annotation {
                    t_start: 6.0,
                    t_end: 9.0,
                    operator_id: "surgeon_b".into(),
                    operator_class: OperatorClass::Novice,
                    active_tip: Tip::TipA,
                    cottle_in_use: true,
                },
            ],
            calibration_a: Some(TipCalibration { tip_offset: Vec3::new(1.0, 2.0, 3.0), residual_rms: 0.0 }),
            calibration_b: None,
            registration_interval: Interval { t_start: 0.0, t_end: 1.5 },
            pivot_interval_a: None,
            pivot_interval_b: None,
            registration: None,
            head_axis_override: None,
        }
    }

    #[test]
    fn bundle_round_trip_is_byte_identical() {
        let trial = demo_trial();
        let dir = tempfile::tempdir().unwrap();
        write_trial(&trial, dir.path()).unwrap();
        let parsed = parse_trial(dir.path()).unwrap();
        assert_eq!(parsed.id, trial.id);
        assert_eq!(parsed.annotations, trial.annotations);
        assert_eq!(parsed.calibration_a, trial.calibration_a);

        let csv_before = std::fs::read(dir.path().join("cottle.csv")).unwrap();
        let meta_before = std::fs::read(dir.path().join("meta.json")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_trial(&parsed, dir2.path()).unwrap();
        assert_eq!(csv_before, std::fs::read(dir2.path().join("cottle.csv")).unwrap());
        assert_eq!(meta_before, std::fs::read(dir2.path().join("meta.json")).unwrap());
    }

    #[test]
    fn decreasing_timestamp_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut trial = demo_trial();
        write_trial(&trial, dir.path()).unwrap();
        // corrupt one timestamp
        trial.cottle_stream.samples[5].t = 0.0;
        std::fs::write(
            dir.path().join("cottle.csv"),
            pose_stream_to_csv(&trial.cottle_stream),
        )
        .unwrap();
        match parse_trial(dir.path()) {
            Err(AcquisitionError::Order { row, .. }) => assert_eq!(row, 5),
            other => panic!("expected Order error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_annotations_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut trial = demo_trial();
        trial.annotations[1].t_start = 4.0;
        write_trial(&trial, dir.path()).unwrap();
        assert!(matches!(parse_trial(dir.path()), Err(AcquisitionError::Annotation(_))));
    }

    #[test]
    fn subtrials_partition_in_use_samples() {
        let trial = demo_trial();
        let traj: Vec<(f64, Vec3)> = trial
            .cottle_stream
            .samples
            .iter()
            .map(|s| (s.t, s.pose.translation))
            .collect();
        let subs = segment_subtrials(&trial, &traj).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].operator_class, OperatorClass::Expert);
        assert_eq!(subs[1].operator_class, OperatorClass::Novice);
        // every in-use sample appears exactly once, gap samples in none
        let mut seen = 0;
        for (t, _) in &traj {
            let n_in = trial
                .annotations
                .iter()
                .filter(|a| a.cottle_in_use && *t >= a.t_start && *t <= a.t_end)
                .count();
            let n_assigned = subs
                .iter()
                .filter(|s| s.tip_trajectory.iter().any(|(ts, _)| ts == t))
                .count();
            assert_eq!(n_in, n_assigned);
            seen += n_assigned;
        }
        assert!(seen > 0);
    }
}
