//! Head-motion compensation: express the tool-tip trajectory in a head-fixed
//! frame, either through the reference head sensor or through a 1-DoF
//! rotating-plane estimator fitted to recent tip motion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::PoseStream;
use crate::geometry::{point_plane_distance, Plane, UnitQuaternion, Vec3};

#[derive(Debug, Error)]
pub enum HeadCompError {
    #[error("no head pose within {max_gap} s of cottle sample at t={t}")]
    Coverage { t: f64, max_gap: f64 },
    #[error("fewer than {needed} samples available for plane estimation (got {got})")]
    InsufficientData { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    ReferenceSensor,
    Estimated1Dof,
}

/// Configuration of the 1-DoF rotating-plane estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub mode: HeadMode,
    /// Rotation axis: a point it passes through and its unit direction.
    pub axis_point: Vec3,
    pub axis_direction: Vec3,
    /// Trailing fit window, seconds.
    pub window: f64,
    /// Half-width of the theta search bracket around the previous estimate, radians.
    pub bracket: f64,
    /// Golden-section termination tolerance, radians.
    pub tolerance: f64,
    /// Hard bound on |theta|: neck rotation is physically limited, radians.
    pub max_rotation: f64,
    /// Bound on |dtheta/dt|: the head moves slowly compared to the tool,
    /// radians per second.
    pub max_rate: f64,
}

impl HeadModel {
    pub fn estimated(axis_point: Vec3, axis_direction: Vec3) -> Self {
        HeadModel {
            mode: HeadMode::Estimated1Dof,
            axis_point,
            axis_direction: axis_direction.normalized(),
            window: 2.0,
            bracket: 15.0_f64.to_radians(),
            tolerance: 0.01_f64.to_radians(),
            max_rotation: 20.0_f64.to_radians(),
            max_rate: 10.0_f64.to_radians(),
        }
    }
}

/// Per-frame estimated septal plane and its rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTrack {
    pub axis_point: Vec3,
    pub axis_direction: Vec3,
    pub frames: Vec<(f64, Plane, f64)>,
}

const MAX_HEAD_GAP: f64 = 0.5;
const MIN_WINDOW_SAMPLES: usize = 10;

/// Rotate `p` about the axis by `theta`.
fn rotate_about_axis(p: Vec3, axis_point: Vec3, axis_direction: Vec3, theta: f64) -> Vec3 {
    let q = UnitQuaternion::from_axis_angle(axis_direction, theta);
    axis_point + q.rotate(p - axis_point)
}

/// The initial plane rotated by `theta` about the axis.
pub fn rotate_plane(plane: &Plane, axis_point: Vec3, axis_direction: Vec3, theta: f64) -> Plane {
    let q = UnitQuaternion::from_axis_angle(axis_direction, theta);
    Plane {
        point: axis_point + q.rotate(plane.point - axis_point),
        normal: q.rotate(plane.normal),
    }
}

/// Re-express tip points in the head sensor's frame, interpolating the head
/// pose at each tip timestamp (lerp position, slerp orientation).
pub fn to_head_frame(
    cottle_tips: &[(f64, Vec3)],
    head_stream: &PoseStream,
) -> Result<Vec<(f64, Vec3)>, HeadCompError> {
    let samples = &head_stream.samples;
    let mut out = Vec::with_capacity(cottle_tips.len());
    let mut hi = 0usize;
    for &(t, p) in cottle_tips {
        while hi + 1 < samples.len() && samples[hi + 1].t <= t {
            hi += 1;
        }
        let pose = if samples.is_empty() {
            return Err(HeadCompError::Coverage { t, max_gap: MAX_HEAD_GAP });
        } else if hi + 1 >= samples.len() || samples[hi].t > t {
            // before the first or after the last head sample
            let nearest = &samples[hi.min(samples.len() - 1)];
            if (nearest.t - t).abs() > MAX_HEAD_GAP {
                return Err(HeadCompError::Coverage { t, max_gap: MAX_HEAD_GAP });
            }
            nearest.pose
        } else {
            let (a, b) = (&samples[hi], &samples[hi + 1]);
            if t - a.t > MAX_HEAD_GAP && b.t - t > MAX_HEAD_GAP {
                return Err(HeadCompError::Coverage { t, max_gap: MAX_HEAD_GAP });
            }
            let frac = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
            crate::geometry::RigidTransform::new(
                a.pose.rotation.slerp(b.pose.rotation, frac),
                a.pose.translation + (b.pose.translation - a.pose.translation) * frac,
            )
        };
        out.push((t, pose.inverse().apply(p)));
    }
    Ok(out)
}

fn window_residual(
    window_pts: &[Vec3],
    initial_plane: &Plane,
    model: &HeadModel,
    theta: f64,
) -> f64 {
    let plane = rotate_plane(initial_plane, model.axis_point, model.axis_direction, theta);
    window_pts.iter().map(|p| point_plane_distance(*p, &plane).powi(2)).sum()
}

/// Golden-section minimization of a unimodal 1-D function on [lo, hi].
fn golden_section(lo: f64, hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Per-frame fit of the rotated initial plane to the trailing tip window.
/// Theta continuity is kept by searching only within the bracket around the
/// previous frame's estimate; the previous theta is retained whenever it
/// already beats the bracketed optimum.
pub fn estimate_plane_track(
    tips: &[(f64, Vec3)],
    initial_plane: &Plane,
    model: &HeadModel,
) -> Result<PlaneTrack, HeadCompError> {
    if tips.len() < MIN_WINDOW_SAMPLES {
        return Err(HeadCompError::InsufficientData { needed: MIN_WINDOW_SAMPLES, got: tips.len() });
    }
    let mut frames = Vec::with_capacity(tips.len());
    let mut prev_theta = 0.0;
    let mut prev_t: Option<f64> = None;
    let mut lo = 0usize;
    let mut first_valid: Option<usize> = None;
    for (i, &(t, _)) in tips.iter().enumerate() {
        while tips[lo].0 < t - model.window {
            lo += 1;
        }
        let mut window_pts: Vec<Vec3> = tips[lo..=i].iter().map(|&(_, p)| p).collect();
        let theta = if window_pts.len() < MIN_WINDOW_SAMPLES {
            // warm-up: hold the last estimate, backfilled once available
            prev_theta
        } else {
            // fit only the points nearest the current plane estimate: the
            // tool contacts the septum there, while lifted excursions say
            // nothing about the head and would drag theta off
            let keep = (window_pts.len() * 3 / 10).max(MIN_WINDOW_SAMPLES).min(window_pts.len());
            let prev_plane =
                rotate_plane(initial_plane, model.axis_point, model.axis_direction, prev_theta);
            window_pts.sort_by(|a, b| {
                let da = point_plane_distance(*a, &prev_plane).abs();
                let db = point_plane_distance(*b, &prev_plane).abs();
                da.partial_cmp(&db).unwrap()
            });
            window_pts.truncate(keep);
            let f = |th: f64| window_residual(&window_pts, initial_plane, model, th);
            let lo_th = (prev_theta - model.bracket).max(-model.max_rotation);
            let hi_th = (prev_theta + model.bracket).min(model.max_rotation);
            let candidate = if lo_th < hi_th {
                golden_section(lo_th, hi_th, model.tolerance, f)
            } else {
                prev_theta
            };
            let best = if f(candidate) <= f(prev_theta) { candidate } else { prev_theta };
            // the head cannot jump: rate-limit theta toward the optimum
            let max_step = model.max_rate * prev_t.map_or(f64::INFINITY, |pt| (t - pt).max(0.0));
            prev_theta + (best - prev_theta).clamp(-max_step, max_step)
        };
        if first_valid.is_none() && window_pts.len() >= MIN_WINDOW_SAMPLES {
            first_valid = Some(i);
        }
        prev_theta = theta;
        prev_t = Some(t);
        frames.push((t, rotate_plane(initial_plane, model.axis_point, model.axis_direction, theta), theta));
    }
    // backfill warm-up frames with the first valid estimate
    if let Some(fv) = first_valid {
        let theta = frames[fv].2;
        let plane = frames[fv].1;
        for frame in frames.iter_mut().take(fv) {
            frame.1 = plane;
            frame.2 = theta;
        }
    }
    Ok(PlaneTrack { axis_point: model.axis_point, axis_direction: model.axis_direction, frames })
}

/// Undo the tracked rotation: each point is rotated by `-theta(t)` about the
/// axis, so every per-frame plane maps back onto the initial plane.
pub fn compensate(tips: &[(f64, Vec3)], track: &PlaneTrack) -> Vec<(f64, Vec3)> {
    let mut fi = 0usize;
    tips.iter()
        .map(|&(t, p)| {
            while fi + 1 < track.frames.len() && track.frames[fi + 1].0 <= t {
                fi += 1;
            }
            let theta = track.frames[fi].2;
            (t, rotate_about_axis(p, track.axis_point, track.axis_direction, -theta))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::PoseSample;
    use crate::geometry::RigidTransform;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn test_plane() -> Plane {
        Plane::new(Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0))
    }

    fn test_model() -> HeadModel {
        HeadModel::estimated(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0))
    }

    fn in_plane_points(n: usize, rate: f64, noise: f64, theta_of_t: impl Fn(f64) -> f64, rng: &mut ChaCha8Rng) -> Vec<(f64, Vec3)> {
        let model = test_model();
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let base = Vec3::new(rng.gen_range(-30.0..30.0), 0.0, rng.gen_range(5.0..40.0));
                let p = rotate_about_axis(base, model.axis_point, model.axis_direction, theta_of_t(t));
                let nvec = Vec3::new(gauss(rng), gauss(rng), gauss(rng)) * noise;
                (t, p + nvec)
            })
            .collect()
    }

    #[test]
    fn head_frame_identity_and_constant_transform() {
        let tips: Vec<(f64, Vec3)> =
            (0..10).map(|i| (i as f64 * 0.1, Vec3::new(i as f64, 1.0, 2.0))).collect();
        let ident = PoseStream {
            samples: (0..12)
                .map(|i| PoseSample { t: i as f64 * 0.1, pose: RigidTransform::IDENTITY })
                .collect(),
            nominal_rate: 10.0,
        };
        let out = to_head_frame(&tips, &ident).unwrap();
        for ((_, a), (_, b)) in out.iter().zip(&tips) {
            assert!((*a - *b).norm() < 1e-12);
        }

        let t = RigidTransform::new(
            UnitQuaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.7),
            Vec3::new(5.0, -2.0, 1.0),
        );
        let constant = PoseStream {
            samples: (0..12).map(|i| PoseSample { t: i as f64 * 0.1, pose: t }).collect(),
            nominal_rate: 10.0,
        };
        let out = to_head_frame(&tips, &constant).unwrap();
        let tinv = t.inverse();
        for ((_, a), (_, b)) in out.iter().zip(&tips) {
            assert!((*a - tinv.apply(*b)).norm() < 1e-9);
        }
    }

    #[test]
    fn tool_rigidly_attached_to_head_becomes_static() {
        let fixed = Vec3::new(10.0, 4.0, -3.0);
        let mut head_samples = Vec::new();
        let mut tips = Vec::new();
        for i in 0..200 {
            let t = i as f64 * 0.025;
            let q = UnitQuaternion::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.5 * (0.8 * t).sin());
            let pose = RigidTransform::new(q, Vec3::new(2.0 * t.sin(), 0.5 * t, 0.0));
            head_samples.push(PoseSample { t, pose });
            tips.push((t, pose.apply(fixed)));
        }
        let out =
            to_head_frame(&tips, &PoseStream { samples: head_samples, nominal_rate: 40.0 }).unwrap();
        for (_, p) in out {
            assert!((p - fixed).norm() < 1e-6);
        }
    }

    #[test]
    fn coverage_gap_is_an_error() {
        let tips = vec![(5.0, Vec3::ZERO)];
        let head = PoseStream {
            samples: vec![PoseSample { t: 0.0, pose: RigidTransform::IDENTITY }],
            nominal_rate: 1.0,
        };
        assert!(matches!(to_head_frame(&tips, &head), Err(HeadCompError::Coverage { .. })));
    }

    #[test]
    fn static_points_give_theta_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tips = in_plane_points(400, 40.0, 0.3, |_| 0.0, &mut rng);
        let track = estimate_plane_track(&tips, &test_plane(), &test_model()).unwrap();
        for (_, _, theta) in &track.frames {
            assert!(theta.abs() < 0.5_f64.to_radians(), "theta {}", theta.to_degrees());
        }
    }

    #[test]
    fn constant_rotation_is_recovered_after_one_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let target = 10.0_f64.to_radians();
        let tips = in_plane_points(400, 40.0, 0.1, |_| target, &mut rng);
        let track = estimate_plane_track(&tips, &test_plane(), &test_model()).unwrap();
        // after one full 2 s window (80 samples at 40 Hz)
        for (t, _, theta) in track.frames.iter().filter(|(t, _, _)| *t > 2.0) {
            assert!(
                (theta - target).abs() < 0.5_f64.to_radians(),
                "t={t} theta {}",
                theta.to_degrees()
            );
        }
    }

    #[test]
    fn sinusoidal_rotation_tracked_within_claimed_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let amp = 8.0_f64.to_radians();
        let freq = 0.05;
        let theta_of_t = move |t: f64| amp * (std::f64::consts::TAU * freq * t).sin();
        let tips = in_plane_points(2400, 40.0, 1.0, theta_of_t, &mut rng);
        let track = estimate_plane_track(&tips, &test_plane(), &test_model()).unwrap();
        let mut ang_err = 0.0;
        let mut n = 0.0;
        for (t, plane, _) in &track.frames {
            if *t < 2.0 {
                continue;
            }
            let truth = rotate_plane(&test_plane(), Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), theta_of_t(*t));
            ang_err += plane.normal.dot(truth.normal).abs().clamp(-1.0, 1.0).acos();
            n += 1.0;
        }
        let mean = (ang_err / n).to_degrees();
        assert!(mean <= 3.4, "mean angular error {mean} deg");
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let tips = vec![(0.0, Vec3::ZERO); 5];
        assert!(matches!(
            estimate_plane_track(&tips, &test_plane(), &test_model()),
            Err(HeadCompError::InsufficientData { .. })
        ));
    }

    #[test]
    fn compensate_inverts_exact_track() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = test_model();
        let plane = test_plane();
        let base: Vec<(f64, Vec3)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.025;
                (t, Vec3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-5.0..5.0), rng.gen_range(5.0..30.0)))
            })
            .collect();
        let theta_of_t = |t: f64| 0.2 * (1.3 * t).sin();
        let rotated: Vec<(f64, Vec3)> = base
            .iter()
            .map(|&(t, p)| (t, rotate_about_axis(p, model.axis_point, model.axis_direction, theta_of_t(t))))
            .collect();
        let exact_track = PlaneTrack {
            axis_point: model.axis_point,
            axis_direction: model.axis_direction,
            frames: base
                .iter()
                .map(|&(t, _)| {
                    let th = theta_of_t(t);
                    (t, rotate_plane(&plane, model.axis_point, model.axis_direction, th), th)
                })
                .collect(),
        };
        let back = compensate(&rotated, &exact_track);
        for ((_, a), (_, b)) in back.iter().zip(&base) {
            assert!((*a - *b).norm() < 1e-9);
        }
        // signed distances to the per-frame plane before == to initial plane after
        for (i, &(t, p)) in rotated.iter().enumerate() {
            let before = point_plane_distance(p, &exact_track.frames[i].1);
            let after = point_plane_distance(back[i].1, &plane);
            assert!((before - after).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn compensate_with_zero_and_constant_theta() {
        let plane = test_plane();
        let model = test_model();
        let tips: Vec<(f64, Vec3)> =
            (0..20).map(|i| (i as f64 * 0.1, Vec3::new(i as f64, 2.0, 3.0))).collect();
        let zero_track = PlaneTrack {
            axis_point: model.axis_point,
            axis_direction: model.axis_direction,
            frames: tips.iter().map(|&(t, _)| (t, plane, 0.0)).collect(),
        };
        for ((_, a), (_, b)) in compensate(&tips, &zero_track).iter().zip(&tips) {
            assert!((*a - *b).norm() < 1e-12);
        }
        let theta = 10.0_f64.to_radians();
        let const_track = PlaneTrack {
            axis_point: model.axis_point,
            axis_direction: model.axis_direction,
            frames: tips
                .iter()
                .map(|&(t, _)| (t, rotate_plane(&plane, model.axis_point, model.axis_direction, theta), theta))
                .collect(),
        };
        for ((_, a), (_, b)) in compensate(&tips, &const_track).iter().zip(&tips) {
            let want = rotate_about_axis(*b, model.axis_point, model.axis_direction, -theta);
            assert!((*a - want).norm() < 1e-9);
        }
    }
}
