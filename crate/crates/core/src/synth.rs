//! Deterministic, seeded generator of synthetic septoplasty-like trials with
//! known ground truth: pivot segments for both tips, a nose-registration
//! trace, and a stroke sequence whose curvatures, durations and coverage
//! pattern are controlled by a skill profile.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    Annotation, Interval, OperatorClass, PoseSample, PoseStream, Tip, TipCalibration, Trial,
};
use crate::geometry::{Plane, PlaneBasis, Point2, RigidTransform, UnitQuaternion, Vec3};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    BadProfile(String),
}

/// Knobs that shape a synthetic surgeon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    /// Target stroke curvature (path length / chord), >= 1.
    pub curvature_mean: f64,
    /// Relative stroke-to-stroke curvature jitter (drives SCC).
    pub curvature_local_jitter: f64,
    /// Mean stroke duration, seconds.
    pub duration_mean: f64,
    /// Relative stroke-to-stroke duration jitter (drives SDC).
    pub duration_local_jitter: f64,
    /// Hull-area gain per non-revisit stroke, mm² (drives CR).
    pub coverage_step: f64,
    /// Probability a stroke restarts at an already-covered spot.
    pub revisit_prob: f64,
    /// Off-plane excursion height, mm.
    pub stroke_amplitude: f64,
    /// Isotropic position noise, mm.
    pub noise_sigma: f64,
}

impl SkillProfile {
    pub fn expert_default() -> Self {
        SkillProfile {
            curvature_mean: 1.25,
            curvature_local_jitter: 0.02,
            duration_mean: 0.5,
            duration_local_jitter: 0.05,
            coverage_step: 8.0,
            revisit_prob: 0.05,
            stroke_amplitude: 15.0,
            noise_sigma: 0.3,
        }
    }

    pub fn novice_default() -> Self {
        SkillProfile {
            curvature_mean: 1.35,
            curvature_local_jitter: 0.12,
            duration_mean: 0.55,
            duration_local_jitter: 0.30,
            coverage_step: 3.0,
            revisit_prob: 0.35,
            stroke_amplitude: 12.0,
            noise_sigma: 0.3,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.revisit_prob) {
            return Err(SynthError::BadProfile(format!("revisit_prob {}", self.revisit_prob)));
        }
        let nonneg = [
            self.curvature_local_jitter,
            self.duration_local_jitter,
            self.coverage_step,
            self.stroke_amplitude,
            self.noise_sigma,
        ];
        if nonneg.iter().any(|v| *v < 0.0) || self.curvature_mean < 1.0 || self.duration_mean <= 0.0 {
            return Err(SynthError::BadProfile("negative or out-of-range parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadMotion {
    None,
    Sinusoid { amp_deg: f64, freq_hz: f64 },
}

/// Trial shape parameters independent of skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub trial_id: String,
    pub operator_id: String,
    pub operator_class: OperatorClass,
    pub rate: f64,
    pub n_strokes: usize,
}

impl GeneratorConfig {
    pub fn new(trial_id: &str, operator_id: &str, operator_class: OperatorClass) -> Self {
        GeneratorConfig {
            trial_id: trial_id.into(),
            operator_id: operator_id.into(),
            operator_class,
            rate: 40.0,
            n_strokes: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeTruth {
    pub start_t: f64,
    pub end_t: f64,
    pub duration: f64,
    pub curvature: f64,
}

/// Everything the generator knows that the pipeline must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub plane: Plane,
    pub basis: PlaneBasis,
    pub nose_center: Vec3,
    pub tip_offset_a: Vec3,
    pub tip_offset_b: Vec3,
    pub strokes: Vec<StrokeTruth>,
    pub stroke_starts_2d: Vec<Point2>,
    /// `hull_areas[i - 3]` is the area after the first `i` strokes.
    pub hull_areas: Vec<f64>,
    /// Head rotation angle per sample time, radians (empty when static).
    pub head_theta: Vec<(f64, f64)>,
}

const TIP_OFFSET_A: Vec3 = Vec3 { x: 12.0, y: -3.0, z: 90.0 };
const TIP_OFFSET_B: Vec3 = Vec3 { x: -10.0, y: 4.0, z: -88.0 };

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Continuous rise-path position at phase `tau` in [0, 1]. The in-plane
/// bulge uses sin⁴, which is flat to third order at both ends, so smoothing
/// near the stroke boundaries barely displaces the apparent start point.
fn rise_point(base: Vec3, brush: Vec3, normal: Vec3, amp: f64, bulge_dir: Vec3, bulge: f64, tau: f64) -> Vec3 {
    let s = (std::f64::consts::PI * tau).sin();
    base + brush * tau
        + normal * (amp * 0.5 * (1.0 - (std::f64::consts::PI * tau).cos()))
        + bulge_dir * (bulge * s * s * s * s)
}

/// Curvature (arc length over chord) of the continuous rise path.
fn rise_curvature(brush: Vec3, normal: Vec3, amp: f64, bulge_dir: Vec3, bulge: f64) -> f64 {
    const STEPS: usize = 1000;
    let p0 = rise_point(Vec3::ZERO, brush, normal, amp, bulge_dir, bulge, 0.0);
    let p1 = rise_point(Vec3::ZERO, brush, normal, amp, bulge_dir, bulge, 1.0);
    let chord = (p1 - p0).norm();
    let mut length = 0.0;
    let mut prev = p0;
    for i in 1..=STEPS {
        let p = rise_point(Vec3::ZERO, brush, normal, amp, bulge_dir, bulge, i as f64 / STEPS as f64);
        length += (p - prev).norm();
        prev = p;
    }
    length / chord
}

/// Bisect the in-plane bulge so the rise path hits the target curvature.
fn solve_bulge(brush: Vec3, normal: Vec3, amp: f64, bulge_dir: Vec3, target: f64) -> (f64, f64) {
    let c0 = rise_curvature(brush, normal, amp, bulge_dir, 0.0);
    if target <= c0 {
        return (0.0, c0);
    }
    let mut lo = 0.0;
    let mut hi = brush.norm().max(amp);
    while rise_curvature(brush, normal, amp, bulge_dir, hi) < target {
        hi *= 2.0;
        if hi > 1e4 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rise_curvature(brush, normal, amp, bulge_dir, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    (b, rise_curvature(brush, normal, amp, bulge_dir, b))
}

/// Stroke start points on a circle with uniform angular step, so every
/// stroke (start, brush toward the next start, vertical fall) is an exact
/// rotated copy of its neighbours. The radius is solved so that the median
/// hull-area increment of the revisit-free arc equals `coverage_step`;
/// revisits repeat an earlier arc point and contribute zero increment.
///
/// Returns `n + 1` points: the `n` starts plus the landing target of the
/// final stroke.
fn circle_starts(
    n: usize,
    coverage_step: f64,
    revisit_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    // revisit pattern first, so the arc layout is independent of it
    let revisit: Vec<bool> = (0..=n).map(|k| k >= 3 && k < n && rng.gen::<f64>() < revisit_prob).collect();
    let n_arc = revisit.iter().filter(|r| !**r).count();
    let arc_total: f64 = 4.2;
    let d_theta = arc_total / (n_arc.max(2) as f64 - 1.0);
    let arc = |i: usize| -> Point2 {
        let th = i as f64 * d_theta;
        [th.cos(), th.sin()]
    };

    // unit-radius increments of the revisit-free arc fix the scale
    let unit_areas: Vec<f64> =
        (3..=n_arc.max(4)).map(|i| {
            let pts: Vec<Point2> = (0..i).map(arc).collect();
            crate::geometry::convex_hull_area(&pts)
        }).collect();
    let unit_increments: Vec<f64> =
        unit_areas.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let m1 = crate::geometry::median(&unit_increments).max(1e-9);
    let radius = (coverage_step.max(1e-9) / m1).sqrt();

    let mut out: Vec<Point2> = Vec::with_capacity(n + 1);
    let mut arc_index = 0usize;
    let mut visited: Vec<usize> = Vec::new();
    for k in 0..=n {
        if revisit[k] && visited.len() > 1 {
            // any earlier arc point except the one we are standing on
            let last = *visited.last().unwrap();
            let candidates: Vec<usize> = visited.iter().copied().filter(|i| *i != last).collect();
            let i = candidates[rng.gen_range(0..candidates.len())];
            let p = arc(i);
            out.push([radius * p[0], radius * p[1]]);
            visited.push(i);
        } else {
            let p = arc(arc_index);
            out.push([radius * p[0], radius * p[1]]);
            visited.push(arc_index);
            arc_index += 1;
        }
    }
    out
}

struct Segment {
    t0: f64,
    t1: f64,
    kind: SegmentKind,
}

enum SegmentKind {
    /// Linear interpolation between two tip points.
    Glide(Vec3, Vec3),
    /// Pivot motion: tip of `offset` pinned at a point, random rotations.
    Pivot { pivot: Vec3, offset: Vec3, salt: u64 },
    /// Nose perimeter trace.
    Registration,
    /// Raised-cosine fall from a peak point down to the next start.
    Fall { from: Vec3, to: Vec3, amp: f64 },
    /// One stroke rise with a known shape.
    Rise { base: Vec3, brush: Vec3, amp: f64, bulge_dir: Vec3, bulge: f64 },
}

/// Generate one trial plus its ground truth.
pub fn generate_trial(
    profile: &SkillProfile,
    head_motion: HeadMotion,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(Trial, SynthTruth), SynthError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = cfg.rate;
    let dt = 1.0 / rate;

    // head-frame geometry: septal plane y = 0, u = x (vertical), v = z (depth)
    let normal = Vec3::new(0.0, 1.0, 0.0);
    let u = Vec3::new(1.0, 0.0, 0.0);
    let v = Vec3::new(0.0, 0.0, 1.0);
    let plane = Plane::new(Vec3::ZERO, normal);
    let in_plane = |p: Point2| u * p[0] + v * p[1];

    // stroke plan
    let n = cfg.n_strokes;
    let snap = |d: f64| ((d * rate).round().max(3.0)) / rate;
    let rises: Vec<f64> = (0..n)
        .map(|_| {
            snap(profile.duration_mean * (1.0 + profile.duration_local_jitter * rng.gen_range(-1.0..1.0)))
        })
        .collect();
    let falls: Vec<f64> = (0..n)
        .map(|k| snap(0.5 * (rises[k] + *rises.get(k + 1).unwrap_or(&rises[k]))))
        .collect();
    // n starts plus the landing target of the final stroke
    let starts_ext = circle_starts(n, profile.coverage_step, profile.revisit_prob, &mut rng);
    let starts_2d: Vec<Point2> = starts_ext[..n].to_vec();
    let hull_areas: Vec<f64> =
        (3..=n).map(|i| crate::geometry::convex_hull_area(&starts_2d[..i])).collect();

    let bulge_dir_of = |brush: Vec3| normal.cross(brush.normalized());
    let targets: Vec<f64> = (0..n)
        .map(|_| {
            (profile.curvature_mean
                * (1.0 + profile.curvature_local_jitter * rng.gen_range(-1.0..1.0)))
            .max(1.0)
        })
        .collect();

    // timeline
    let pivot_a = Interval { t_start: 0.25, t_end: 3.25 };
    let pivot_b = Interval { t_start: 3.75, t_end: 6.75 };
    // the sample landing exactly on a segment boundary belongs to the next
    // segment, so the annotated intervals stop half a sample short of it
    let pivot_a_ann = Interval { t_start: pivot_a.t_start, t_end: pivot_a.t_end - 0.5 * dt };
    let pivot_b_ann = Interval { t_start: pivot_b.t_start, t_end: pivot_b.t_end - 0.5 * dt };
    let registration_interval = Interval { t_start: 7.25, t_end: 12.25 };
    let lead_in = rises[0];
    // quarter-sample phase offset: keeps smoothed extrema strictly closest to
    // one sample even though an even smoothing window shifts them by half a
    // sample, so ties never break on floating-point noise
    let phase = 0.25 * dt;
    let stroke_begin = 12.75 + phase + lead_in;

    let reg_point = |t: f64| -> Vec3 {
        let s = (t - registration_interval.t_start)
            / (registration_interval.t_end - registration_interval.t_start)
            * std::f64::consts::TAU;
        Vec3::new(40.0 * s.sin(), 8.0 * (2.0 * s).cos(), 3.0 * s.cos())
    };

    let mut segments: Vec<Segment> = Vec::new();
    let pivot_point_a = Vec3::new(150.0, 80.0, 20.0);
    let pivot_point_b = Vec3::new(140.0, 70.0, -30.0);
    segments.push(Segment {
        t0: 0.0,
        t1: pivot_a.t_start,
        kind: SegmentKind::Glide(pivot_point_a, pivot_point_a),
    });
    segments.push(Segment {
        t0: pivot_a.t_start,
        t1: pivot_a.t_end,
        kind: SegmentKind::Pivot { pivot: pivot_point_a, offset: TIP_OFFSET_A, salt: 101 },
    });
    segments.push(Segment {
        t0: pivot_a.t_end,
        t1: pivot_b.t_start,
        kind: SegmentKind::Glide(pivot_point_a, pivot_point_b),
    });
    segments.push(Segment {
        t0: pivot_b.t_start,
        t1: pivot_b.t_end,
        kind: SegmentKind::Pivot { pivot: pivot_point_b, offset: TIP_OFFSET_B, salt: 202 },
    });
    segments.push(Segment {
        t0: pivot_b.t_end,
        t1: registration_interval.t_start,
        kind: SegmentKind::Glide(pivot_point_b, reg_point(registration_interval.t_start)),
    });
    segments.push(Segment {
        t0: registration_interval.t_start,
        t1: registration_interval.t_end,
        kind: SegmentKind::Registration,
    });

    // lead-in: a standard vertical fall onto the first start, so the first
    // stroke's left context is congruent with every other minimum
    let first_base = in_plane(starts_ext[0]);
    segments.push(Segment {
        t0: registration_interval.t_end,
        t1: 12.75 + phase,
        kind: SegmentKind::Glide(reg_point(registration_interval.t_end), first_base + normal * profile.stroke_amplitude),
    });
    segments.push(Segment {
        t0: 12.75 + phase,
        t1: stroke_begin,
        kind: SegmentKind::Fall {
            from: first_base + normal * profile.stroke_amplitude,
            to: first_base,
            amp: profile.stroke_amplitude,
        },
    });

    let mut stroke_truths = Vec::with_capacity(n);
    let mut t_cursor = stroke_begin;
    for k in 0..n {
        let base = in_plane(starts_ext[k]);
        // each stroke brushes toward the next start and falls vertically onto
        // it; with equal durations every stroke is a rotated copy
        let brush = in_plane(starts_ext[k + 1]) - base;
        let bdir = bulge_dir_of(brush);
        let (bulge, achieved) = solve_bulge(brush, normal, profile.stroke_amplitude, bdir, targets[k]);
        let start_t = t_cursor;
        let end_t = t_cursor + rises[k];
        segments.push(Segment {
            t0: start_t,
            t1: end_t,
            kind: SegmentKind::Rise {
                base,
                brush,
                amp: profile.stroke_amplitude,
                bulge_dir: bdir,
                bulge,
            },
        });
        stroke_truths.push(StrokeTruth {
            start_t,
            end_t,
            duration: rises[k],
            curvature: achieved,
        });
        let peak = rise_point(base, brush, normal, profile.stroke_amplitude, bdir, bulge, 1.0);
        let next_base = in_plane(starts_ext[k + 1]);
        segments.push(Segment {
            t0: end_t,
            t1: end_t + falls[k],
            kind: SegmentKind::Fall { from: peak, to: next_base, amp: profile.stroke_amplitude },
        });
        t_cursor = end_t + falls[k];
    }
    let t_end = t_cursor + 0.5;
    segments.push(Segment {
        t0: t_cursor,
        t1: t_end,
        kind: SegmentKind::Glide(in_plane(starts_ext[n]), in_plane(starts_ext[n])),
    });

    // head rotation angle (about the u axis through the origin)
    let theta_of = |t: f64| -> f64 {
        match head_motion {
            HeadMotion::None => 0.0,
            HeadMotion::Sinusoid { amp_deg, freq_hz } => {
                if t < stroke_begin {
                    0.0
                } else {
                    amp_deg.to_radians()
                        * (std::f64::consts::TAU * freq_hz * (t - stroke_begin)).sin()
                }
            }
        }
    };

    // sample the whole timeline
    let n_samples = (t_end * rate).floor() as usize;
    let mut cottle = Vec::with_capacity(n_samples);
    let mut head = Vec::with_capacity(n_samples);
    let mut head_theta = Vec::new();
    let mut seg_idx = 0usize;
    for i in 0..n_samples {
        let t = i as f64 * dt;
        while seg_idx + 1 < segments.len() && t >= segments[seg_idx].t1 {
            seg_idx += 1;
        }
        let seg = &segments[seg_idx];
        let tau = ((t - seg.t0) / (seg.t1 - seg.t0)).clamp(0.0, 1.0);
        let (tip_head, rotation, pinned_offset) = match &seg.kind {
            SegmentKind::Glide(a, b) => (*a + (*b - *a) * tau, None, None),
            SegmentKind::Pivot { pivot, offset, salt } => {
                let mut prng = ChaCha8Rng::seed_from_u64(seed ^ (salt.wrapping_mul(0x9e37).wrapping_add(i as u64)));
                let axis = Vec3::new(
                    prng.gen_range(-1.0..1.0),
                    prng.gen_range(-1.0..1.0),
                    prng.gen_range(-1.0..1.0),
                );
                let axis = if axis.norm() < 1e-6 { Vec3::new(0.0, 0.0, 1.0) } else { axis };
                let q = UnitQuaternion::from_axis_angle(axis, prng.gen_range(0.3..2.6));
                (*pivot, Some(q), Some(*offset))
            }
            SegmentKind::Registration => (reg_point(t), None, None),
            SegmentKind::Fall { from, to, amp } => {
                let height = amp * 0.5 * (1.0 + (std::f64::consts::PI * tau).cos());
                let flat_from = *from - normal * normal.dot(*from - plane.point);
                let flat = flat_from + (*to - flat_from) * tau;
                (flat + normal * height, None, None)
            }
            SegmentKind::Rise { base, brush, amp, bulge_dir, bulge } => {
                (rise_point(*base, *brush, normal, *amp, *bulge_dir, *bulge, tau), None, None)
            }
        };
        // head rotation moves the anatomy (and the tool following it)
        let theta = theta_of(t);
        let head_q = UnitQuaternion::from_axis_angle(u, theta);
        let tip_world = head_q.rotate(tip_head);
        if !matches!(head_motion, HeadMotion::None) {
            head_theta.push((t, theta));
        }

        let rotation = rotation.unwrap_or_else(|| {
            UnitQuaternion::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.35 * (0.9 * t).sin())
        });
        let active_offset = pinned_offset.unwrap_or(TIP_OFFSET_A);
        let noise = Vec3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * profile.noise_sigma;
        let translation = tip_world - rotation.rotate(active_offset) + noise;
        cottle.push(PoseSample { t, pose: RigidTransform::new(rotation, translation) });
        head.push(PoseSample { t, pose: RigidTransform::new(head_q, Vec3::ZERO) });
    }

    let annotations = vec![Annotation {
        t_start: 12.75 - 0.1,
        t_end,
        operator_id: cfg.operator_id.clone(),
        operator_class: cfg.operator_class,
        active_tip: Tip::TipA,
        cottle_in_use: true,
    }];

    let trial = Trial {
        id: cfg.trial_id.clone(),
        cottle_stream: PoseStream { samples: cottle, nominal_rate: rate },
        head_stream: Some(PoseStream { samples: head, nominal_rate: rate }),
        annotations,
        calibration_a: Some(TipCalibration { tip_offset: TIP_OFFSET_A, residual_rms: 0.0 }),
        calibration_b: Some(TipCalibration { tip_offset: TIP_OFFSET_B, residual_rms: 0.0 }),
        registration_interval,
        pivot_interval_a: Some(pivot_a_ann),
        pivot_interval_b: Some(pivot_b_ann),
        registration: None,
        head_axis_override: None,
    };
    let truth = SynthTruth {
        plane,
        basis: PlaneBasis { u, v },
        nose_center: Vec3::ZERO,
        tip_offset_a: TIP_OFFSET_A,
        tip_offset_b: TIP_OFFSET_B,
        strokes: stroke_truths,
        stroke_starts_2d: starts_2d,
        hull_areas,
        head_theta,
    };
    Ok((trial, truth))
}

/// Shape of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub n_experts: usize,
    pub n_novices: usize,
    pub trials_per_surgeon: usize,
    /// Overrides `trials_per_surgeon` with an exact cohort size; the
    /// remainder after even division goes to the earliest surgeons.
    pub total_trials: Option<usize>,
    pub expert_profile: SkillProfile,
    pub novice_profile: SkillProfile,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        DatasetPlan {
            n_experts: 4,
            n_novices: 4,
            trials_per_surgeon: 6,
            total_trials: None,
            expert_profile: SkillProfile::expert_default(),
            novice_profile: SkillProfile::novice_default(),
        }
    }
}

/// One trial of a planned cohort, ready to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrial {
    pub cfg: GeneratorConfig,
    pub profile: SkillProfile,
    pub seed: u64,
}

/// Enumerate the cohort deterministically: surgeon identities, their
/// perturbed profiles, and per-trial seeds.
pub fn plan_cohort(plan: &DatasetPlan, seed: u64) -> Vec<PlannedTrial> {
    let n_surgeons = plan.n_experts + plan.n_novices;
    let counts: Vec<usize> = match plan.total_trials {
        None => vec![plan.trials_per_surgeon; n_surgeons],
        Some(total) => {
            let base = total / n_surgeons.max(1);
            let rem = total % n_surgeons.max(1);
            (0..n_surgeons).map(|i| base + usize::from(i < rem)).collect()
        }
    };
    let mut out = Vec::new();
    let classes = [
        (OperatorClass::Expert, plan.n_experts, &plan.expert_profile, "expert"),
        (OperatorClass::Novice, plan.n_novices, &plan.novice_profile, "novice"),
    ];
    let mut surgeon_index = 0usize;
    for (class, count, base_profile, tag) in classes {
        for s in 0..count {
            let surgeon_id = format!("{tag}_{}", s + 1);
            let surgeon_seed = seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((if class == OperatorClass::Expert { 0 } else { 1 << 32 }) + s as u64);
            let mut srng = ChaCha8Rng::seed_from_u64(surgeon_seed);
            let profile = perturb_profile(base_profile, 0.10, &mut srng);
            for k in 0..counts[surgeon_index] {
                let trial_id = format!("{surgeon_id}_t{}", k + 1);
                let mut cfg = GeneratorConfig::new(&trial_id, &surgeon_id, class);
                cfg.rate = 40.0;
                out.push(PlannedTrial {
                    cfg,
                    profile,
                    seed: surgeon_seed.wrapping_add(1000 + k as u64),
                });
            }
            surgeon_index += 1;
        }
    }
    out
}

/// Multiply each profile field by an independent factor in 1 +- `spread`,
/// giving each synthetic surgeon a stable personal style.
fn perturb_profile(p: &SkillProfile, spread: f64, rng: &mut ChaCha8Rng) -> SkillProfile {
    let mut f = || 1.0 + spread * rng.gen_range(-1.0..1.0_f64);
    SkillProfile {
        curvature_mean: 1.0 + (p.curvature_mean - 1.0) * f(),
        curvature_local_jitter: p.curvature_local_jitter * f(),
        duration_mean: p.duration_mean * f(),
        duration_local_jitter: p.duration_local_jitter * f(),
        coverage_step: p.coverage_step * f(),
        revisit_prob: (p.revisit_prob * f()).clamp(0.0, 1.0),
        stroke_amplitude: p.stroke_amplitude * f(),
        noise_sigma: p.noise_sigma,
    }
}

/// Generate a full cohort and push every trial through the processing
/// pipeline, yielding a labelled classification dataset. Deterministic in
/// `seed`.
pub fn generate_dataset(
    plan: &DatasetPlan,
    seed: u64,
) -> Result<crate::classify::Dataset, crate::pipeline::PipelineError> {
    let pipeline_cfg = crate::pipeline::PipelineConfig::default();
    let mut results = Vec::new();
    for pt in plan_cohort(plan, seed) {
        let (trial, _) = generate_trial(&pt.profile, HeadMotion::None, &pt.cfg, pt.seed)
            .expect("perturbed profile stays valid");
        results.push(crate::pipeline::process_trial(&trial, &pipeline_cfg)?);
    }
    Ok(crate::pipeline::dataset_from_results(&results))
}
