//! Stroke segmentation: a stroke runs from a local minimum of the
//! tip-to-plane distance to the closest following local maximum, subject to
//! duration, length, center-distance and prominence gates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    moving_average, point_plane_distance, project_to_plane, Plane, PlaneBasis, Point2, Vec3,
};

#[derive(Debug, Error)]
pub enum StrokeError {
    #[error("stroke chord shorter than 1e-6 mm; curvature undefined")]
    ZeroChord,
}

/// Gates and smoothing applied during stroke detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeConfig {
    pub smooth_window: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_length: f64,
    pub max_center_distance: f64,
    pub min_prominence: f64,
}

impl StrokeConfig {
    /// Defaults at a given sampling rate; the smoothing window spans 0.25 s.
    pub fn default_for_rate(rate: f64) -> Self {
        StrokeConfig {
            smooth_window: ((0.25 * rate).round() as usize).max(3),
            min_duration: 0.15,
            max_duration: 3.0,
            min_length: 3.0,
            max_center_distance: 80.0,
            min_prominence: 1.0,
        }
    }
}

/// One detected brushing motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub start_idx: usize,
    pub end_idx: usize,
    pub start_t: f64,
    pub end_t: f64,
    pub duration: f64,
    /// Smoothed tip positions over the stroke.
    pub path: Vec<Vec3>,
    pub path_length: f64,
    pub chord_length: f64,
    /// Smoothed start position projected onto the septal plane.
    pub start_point_2d: Point2,
    /// Largest tip-to-plane distance within the stroke.
    pub peak_distance: f64,
}

/// Unsigned tip-to-plane distance per sample, after smoothing the positions
/// with a centered moving average.
pub fn distance_signal(
    tips: &[(f64, Vec3)],
    plane: &Plane,
    smooth_window: usize,
) -> Vec<(f64, f64)> {
    let positions: Vec<Vec3> = tips.iter().map(|&(_, p)| p).collect();
    let smoothed = moving_average(&positions, smooth_window).expect("window >= 1");
    tips.iter()
        .zip(&smoothed)
        .map(|(&(t, _), &p)| (t, point_plane_distance(p, plane).abs()))
        .collect()
}

/// Indices of strict local minima and maxima of `v`; plateaus contribute
/// their first sample.
fn local_extrema(v: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = v.len();
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    let mut i = 1;
    while i + 1 <= n.saturating_sub(1) {
        if v[i] == v[i - 1] {
            i += 1;
            continue;
        }
        // find the end of any plateau starting at i
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        if j + 1 < n {
            if v[i] < v[i - 1] && v[i] < v[j + 1] {
                minima.push(i);
            } else if v[i] > v[i - 1] && v[i] > v[j + 1] {
                maxima.push(i);
            }
        }
        i = j + 1;
    }
    (minima, maxima)
}

fn polyline_length(path: &[Vec3]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Detect strokes in a head-frame trajectory.
pub fn detect_strokes(
    tips: &[(f64, Vec3)],
    plane: &Plane,
    basis: &PlaneBasis,
    nose_center: Vec3,
    cfg: &StrokeConfig,
) -> Vec<Stroke> {
    if tips.len() < 2 * cfg.smooth_window {
        return Vec::new();
    }
    let positions: Vec<Vec3> = tips.iter().map(|&(_, p)| p).collect();
    let smoothed = moving_average(&positions, cfg.smooth_window).expect("window >= 1");
    let dist: Vec<f64> =
        smoothed.iter().map(|&p| point_plane_distance(p, plane).abs()).collect();
    let (minima, maxima) = local_extrema(&dist);

    let mut strokes = Vec::new();
    let mut max_cursor = 0usize;
    let mut last_end = 0usize;
    for &start in &minima {
        if start < last_end {
            continue;
        }
        while max_cursor < maxima.len() && maxima[max_cursor] <= start {
            max_cursor += 1;
        }
        let Some(&end) = maxima.get(max_cursor) else { break };

        let (start_t, end_t) = (tips[start].0, tips[end].0);
        let duration = end_t - start_t;
        if duration < cfg.min_duration || duration > cfg.max_duration {
            continue;
        }
        let path = &smoothed[start..=end];
        let path_length = polyline_length(path);
        if path_length < cfg.min_length {
            continue;
        }
        if (smoothed[start] - nose_center).norm() > cfg.max_center_distance
            || (smoothed[end] - nose_center).norm() > cfg.max_center_distance
        {
            continue;
        }
        let seg = &dist[start..=end];
        let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < cfg.min_prominence {
            continue;
        }
        let start_point_2d = project_to_plane(smoothed[start], plane, basis)
            .expect("registration basis is orthonormal");
        strokes.push(Stroke {
            start_idx: start,
            end_idx: end,
            start_t,
            end_t,
            duration,
            path: path.to_vec(),
            path_length,
            chord_length: (smoothed[end] - smoothed[start]).norm(),
            start_point_2d,
            peak_distance: hi,
        });
        last_end = end;
    }
    strokes
}

/// Curvature of a stroke: trajectory length over start-to-end distance.
pub fn stroke_curvature(s: &Stroke) -> Result<f64, StrokeError> {
    if s.chord_length < 1e-6 {
        return Err(StrokeError::ZeroChord);
    }
    Ok(s.path_length / s.chord_length)
}
