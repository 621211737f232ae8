//! The three skill features and their supporting structures: stroke
//! curvature consistency (SCC), stroke duration consistency (SDC), the
//! search graph of plane-projected stroke starts, and the coverage rate (CR)
//! derived from its per-prefix convex-hull areas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::SubTrial;
use crate::geometry::{convex_hull_area, median, median_filter, Point2, Vec3};
use crate::strokes::{detect_strokes, stroke_curvature, Stroke, StrokeConfig};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("need at least {needed} strokes, got {got}")]
    TooFewStrokes { needed: usize, got: usize },
    #[error("every sub-trial was excluded (fewer than {0} strokes each)")]
    AllExcluded(usize),
    #[error(transparent)]
    Stroke(#[from] crate::strokes::StrokeError),
}

/// Minimum strokes per sub-trial for a feature vector to count.
pub const MIN_STROKES: usize = 7;

/// Ordered stroke-start vertices with per-prefix convex-hull areas.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGraph {
    pub vertices: Vec<Point2>,
    /// Stroke path length per vertex (rendered as vertex size in reports).
    pub lengths: Vec<f64>,
    /// `hull_areas[i - 3]` is the hull area of the first `i` vertices.
    pub hull_areas: Vec<f64>,
}

/// The classifier input for one sub-trial or trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub scc: f64,
    pub sdc: f64,
    pub cr: f64,
    pub n_strokes: usize,
}

/// Outcome of per-sub-trial feature extraction; too few strokes is a normal
/// result, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum SubTrialOutcome {
    Features { vector: FeatureVector, strokes: Vec<Stroke> },
    Excluded { n_strokes: usize, strokes: Vec<Stroke> },
}

/// Local-consistency statistic shared by SCC and SDC: the median squared
/// deviation of `values` from its median-filtered version.
fn consistency(values: &[f64], window: usize) -> Result<f64, FeatureError> {
    if values.len() < 3 {
        return Err(FeatureError::TooFewStrokes { needed: 3, got: values.len() });
    }
    let smoothed = median_filter(values, window).expect("odd window");
    let sq: Vec<f64> = values.iter().zip(&smoothed).map(|(v, s)| (v - s) * (v - s)).collect();
    Ok(median(&sq))
}

/// Stroke curvature consistency (unitless squared).
pub fn scc(curvatures: &[f64], window: usize) -> Result<f64, FeatureError> {
    consistency(curvatures, window)
}

/// Stroke duration consistency (seconds squared).
pub fn sdc(durations: &[f64], window: usize) -> Result<f64, FeatureError> {
    consistency(durations, window)
}

/// Build the search graph from strokes in order.
pub fn build_search_graph(strokes: &[Stroke]) -> Result<SearchGraph, FeatureError> {
    if strokes.len() < 3 {
        return Err(FeatureError::TooFewStrokes { needed: 3, got: strokes.len() });
    }
    let vertices: Vec<Point2> = strokes.iter().map(|s| s.start_point_2d).collect();
    let lengths: Vec<f64> = strokes.iter().map(|s| s.path_length).collect();
    let hull_areas: Vec<f64> =
        (3..=vertices.len()).map(|i| convex_hull_area(&vertices[..i])).collect();
    Ok(SearchGraph { vertices, lengths, hull_areas })
}

/// Coverage rate: median per-stroke increment of the hull area, mm²/stroke.
pub fn coverage_rate(graph: &SearchGraph) -> Result<f64, FeatureError> {
    if graph.vertices.len() < 4 {
        return Err(FeatureError::TooFewStrokes { needed: 4, got: graph.vertices.len() });
    }
    let increments: Vec<f64> =
        graph.hull_areas.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    Ok(median(&increments))
}

/// Parameters of the feature stage beyond stroke detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Median-filter window for SCC and SDC (odd).
    pub consistency_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { consistency_window: 5 }
    }
}

/// Detect strokes in one sub-trial and compute its feature vector; returns
/// `Excluded` when fewer than [`MIN_STROKES`] strokes were found.
pub fn subtrial_features(
    sub: &SubTrial,
    plane: &crate::geometry::Plane,
    basis: &crate::geometry::PlaneBasis,
    nose_center: Vec3,
    stroke_cfg: &StrokeConfig,
    feature_cfg: &FeatureConfig,
) -> Result<SubTrialOutcome, FeatureError> {
    let strokes = detect_strokes(&sub.tip_trajectory, plane, basis, nose_center, stroke_cfg);
    if strokes.len() < MIN_STROKES {
        return Ok(SubTrialOutcome::Excluded { n_strokes: strokes.len(), strokes });
    }
    let curvatures: Vec<f64> =
        strokes.iter().map(stroke_curvature).collect::<Result<_, _>>()?;
    let durations: Vec<f64> = strokes.iter().map(|s| s.duration).collect();
    let graph = build_search_graph(&strokes)?;
    let vector = FeatureVector {
        scc: scc(&curvatures, feature_cfg.consistency_window)?,
        sdc: sdc(&durations, feature_cfg.consistency_window)?,
        cr: coverage_rate(&graph)?,
        n_strokes: strokes.len(),
    };
    Ok(SubTrialOutcome::Features { vector, strokes })
}

/// Trial-level vector: component-wise median of the sub-trial vectors,
/// stroke counts summed.
pub fn trial_features(subvectors: &[FeatureVector]) -> Result<FeatureVector, FeatureError> {
    if subvectors.is_empty() {
        return Err(FeatureError::AllExcluded(MIN_STROKES));
    }
    let col = |f: fn(&FeatureVector) -> f64| -> f64 {
        median(&subvectors.iter().map(f).collect::<Vec<_>>())
    };
    Ok(FeatureVector {
        scc: col(|v| v.scc),
        sdc: col(|v| v.sdc),
        cr: col(|v| v.cr),
        n_strokes: subvectors.iter().map(|v| v.n_strokes).sum(),
    })
}
