//! Command implementations behind the CLI binary: each returns a typed error
//! that maps onto the documented exit codes (0 success, 2 input/schema,
//! 3 empty result, 4 numeric failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    parse_trial, pivot_calibration, register_nose, tip_trajectory, write_trial, AcquisitionError,
    OperatorClass, Tip,
};
use crate::classify::{
    cross_validate, ClassifierKind, ClassifyError, CvResult, CvScheme, Dataset, DatasetRow,
    FeatureSubset,
};
use crate::features::{FeatureVector, SubTrialOutcome};
use crate::geometry::Point2;
use crate::headcomp::{to_head_frame, HeadCompError};
use crate::pipeline::{process_trial, HeadModeChoice, PipelineConfig, PipelineError};
use crate::strokes::Stroke;
use crate::synth::{generate_trial, plan_cohort, DatasetPlan, HeadMotion, SynthError, SynthTruth};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty result: {0}")]
    Empty(String),
}

/// Map an error to the documented process exit code.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) | CliError::Io(_) | CliError::Synth(_) => 2,
        CliError::Empty(_) => 3,
        CliError::Acquisition(e) => exit_code_acquisition(e),
        CliError::Classify(e) => exit_code_classify(e),
        CliError::Pipeline(e) => match e {
            PipelineError::Acquisition(a) => exit_code_acquisition(a),
            PipelineError::HeadComp(h) => match h {
                HeadCompError::Coverage { .. } => 2,
                HeadCompError::InsufficientData { .. } => 3,
            },
            PipelineError::Feature(f) => match f {
                crate::features::FeatureError::AllExcluded(_)
                | crate::features::FeatureError::TooFewStrokes { .. } => 3,
                crate::features::FeatureError::Stroke(_) => 4,
            },
            PipelineError::Classify(c) => exit_code_classify(c),
            PipelineError::Empty(_) => 3,
        },
    }
}

fn exit_code_acquisition(e: &AcquisitionError) -> i32 {
    match e {
        AcquisitionError::DegenerateMotion { .. } | AcquisitionError::Geometry(_) => 4,
        _ => 2,
    }
}

fn exit_code_classify(e: &ClassifyError) -> i32 {
    match e {
        ClassifyError::DegenerateFeature => 4,
        ClassifyError::EmptyMatrix => 3,
        _ => 2,
    }
}

/// Load a pipeline config, or defaults when no file is given.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Recompute pivot calibrations from the annotated pivot intervals and write
/// them back into the bundle. Idempotent.
pub fn cmd_calibrate(bundle: &Path) -> Result<(), CliError> {
    let mut trial = parse_trial(bundle)?;
    if trial.pivot_interval_a.is_none() && trial.pivot_interval_b.is_none() {
        return Err(CliError::Acquisition(AcquisitionError::Schema {
            file: "meta.json".into(),
            message: "no pivot interval annotated for either tip".into(),
        }));
    }
    for (interval, slot) in [
        (trial.pivot_interval_a, 0usize),
        (trial.pivot_interval_b, 1usize),
    ] {
        if let Some(iv) = interval {
            let poses: Vec<_> = trial
                .cottle_stream
                .slice(iv.t_start, iv.t_end)
                .iter()
                .map(|s| s.pose)
                .collect();
            let cal = pivot_calibration(&poses)?;
            if slot == 0 {
                trial.calibration_a = Some(cal);
            } else {
                trial.calibration_b = Some(cal);
            }
        }
    }
    write_trial(&trial, bundle)?;
    Ok(())
}

/// Estimate the initial septal plane from the registration interval and store
/// it in the bundle.
pub fn cmd_register(bundle: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut trial = parse_trial(bundle)?;
    let cal = crate::pipeline::resolve_calibration(&trial, Tip::TipA)?
        .ok_or_else(|| CliError::Acquisition(AcquisitionError::Schema {
            file: "meta.json".into(),
            message: "tip A is not calibrated".into(),
        }))?;
    let raw = tip_trajectory(&trial.cottle_stream, &cal);
    let use_sensor = match cfg.head_mode {
        HeadModeChoice::Sensor => true,
        HeadModeChoice::Estimate => false,
        HeadModeChoice::Auto => trial.head_stream.is_some(),
    };
    let traj = if use_sensor {
        let hs = trial.head_stream.as_ref().ok_or_else(|| {
            CliError::Pipeline(PipelineError::Empty("head sensor stream required but absent".into()))
        })?;
        to_head_frame(&raw, hs).map_err(PipelineError::from)?
    } else {
        raw
    };
    let pts: Vec<crate::geometry::Vec3> = traj
        .iter()
        .filter(|(t, _)| {
            *t >= trial.registration_interval.t_start && *t <= trial.registration_interval.t_end
        })
        .map(|(_, p)| *p)
        .collect();
    if pts.len() < 3 {
        return Err(CliError::Empty("registration interval holds fewer than 3 samples".into()));
    }
    trial.registration = Some(register_nose(&pts)?);
    write_trial(&trial, bundle)?;
    Ok(())
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn class_str(c: OperatorClass) -> &'static str {
    match c {
        OperatorClass::Expert => "expert",
        OperatorClass::Novice => "novice",
    }
}

/// Process bundles and write `features.csv` (one row per trial and operator)
/// plus `strokes.csv` (one row per detected stroke, exclusions included).
pub fn cmd_features(
    bundles: &[PathBuf],
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut features = String::from(
        "trial_id,operator_id,operator_class,scc,sdc,cr,n_strokes,n_subtrials,n_excluded\n",
    );
    let mut strokes_csv = String::from(
        "trial_id,operator_id,subtrial,stroke,start_t,end_t,duration,curvature,path_length,chord_length,start_u,start_v,peak_distance\n",
    );
    let mut n_rows = 0usize;
    for bundle in bundles {
        let trial = parse_trial(bundle)?;
        let res = process_trial(&trial, cfg)?;
        for o in &res.operators {
            if let Some(f) = o.features {
                writeln!(
                    features,
                    "{},{},{},{},{},{},{},{},{}",
                    csv_escape(&res.trial_id),
                    csv_escape(&o.operator_id),
                    class_str(o.operator_class),
                    f.scc,
                    f.sdc,
                    f.cr,
                    f.n_strokes,
                    o.n_subtrials,
                    o.n_excluded
                )
                .unwrap();
                n_rows += 1;
            } else {
                eprintln!(
                    "warning: {} / {}: every sub-trial fell under the stroke-count floor; no feature row",
                    res.trial_id, o.operator_id
                );
            }
        }
        for (si, sub) in res.subtrials.iter().enumerate() {
            let strokes: &[Stroke] = match &sub.outcome {
                SubTrialOutcome::Features { strokes, .. } => strokes,
                SubTrialOutcome::Excluded { strokes, .. } => strokes,
            };
            for (ki, s) in strokes.iter().enumerate() {
                let curvature = crate::strokes::stroke_curvature(s)
                    .map_err(|e| CliError::Pipeline(crate::features::FeatureError::from(e).into()))?;
                writeln!(
                    strokes_csv,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    csv_escape(&res.trial_id),
                    csv_escape(&sub.operator_id),
                    si,
                    ki,
                    s.start_t,
                    s.end_t,
                    s.duration,
                    curvature,
                    s.path_length,
                    s.chord_length,
                    s.start_point_2d[0],
                    s.start_point_2d[1],
                    s.peak_distance
                )
                .unwrap();
            }
        }
    }
    if n_rows == 0 {
        return Err(CliError::Empty(
            "no trial produced a feature vector (all sub-trials excluded)".into(),
        ));
    }
    let fpath = out_dir.join("features.csv");
    let spath = out_dir.join("strokes.csv");
    std::fs::write(&fpath, features)?;
    std::fs::write(&spath, strokes_csv)?;
    Ok((fpath, spath))
}

/// Parse a `features.csv` produced by [`cmd_features`] back into a dataset
/// (without per-stroke sequences).
pub fn parse_features_csv(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("trial_id,operator_id,operator_class,scc,sdc,cr,n_strokes") {
        return Err(CliError::Acquisition(AcquisitionError::Schema {
            file: "features.csv".into(),
            message: format!("unexpected header: {header}"),
        }));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 7 {
            return Err(CliError::Acquisition(AcquisitionError::Schema {
                file: "features.csv".into(),
                message: format!("row {}: expected 9 fields, got {}", i + 2, parts.len()),
            }));
        }
        let label = match parts[2] {
            "expert" => OperatorClass::Expert,
            "novice" => OperatorClass::Novice,
            other => {
                return Err(CliError::Acquisition(AcquisitionError::Schema {
                    file: "features.csv".into(),
                    message: format!("row {}: unknown class {other:?}", i + 2),
                }))
            }
        };
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse().map_err(|_| {
                CliError::Acquisition(AcquisitionError::Schema {
                    file: "features.csv".into(),
                    message: format!("row {}: bad number {s:?}", i + 2),
                })
            })
        };
        rows.push(DatasetRow {
            trial_id: parts[0].to_string(),
            operator_id: parts[1].to_string(),
            label,
            features: FeatureVector {
                scc: num(parts[3])?,
                sdc: num(parts[4])?,
                cr: num(parts[5])?,
                n_strokes: num(parts[6])? as usize,
            },
            sequence: None,
        });
    }
    Ok(Dataset { rows })
}

/// One column of the report: a feature subset's cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub subset: FeatureSubset,
    pub confusion_counts: [[f64; 2]; 2],
    /// Columns normalized per actual class, in percent.
    pub confusion_percent: [[f64; 2]; 2],
    pub micro: f64,
    pub macro_avg: f64,
    pub predictions: Vec<crate::classify::FoldPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scheme: CvScheme,
    pub classifier: ClassifierKind,
    pub hyper: crate::classify::SvmHyper,
    pub seed: u64,
    pub n_rows: usize,
    pub columns: Vec<ReportColumn>,
}

fn column_from(cv: &CvResult) -> ReportColumn {
    let c = cv.confusion.counts;
    let mut percent = [[0.0; 2]; 2];
    for actual in 0..2 {
        let total = c[0][actual] + c[1][actual];
        if total > 0.0 {
            for predicted in 0..2 {
                percent[predicted][actual] = 100.0 * c[predicted][actual] / total;
            }
        }
    }
    ReportColumn {
        subset: cv.subset,
        confusion_counts: c,
        confusion_percent: percent,
        micro: cv.micro,
        macro_avg: cv.macro_avg,
        predictions: cv.predictions.clone(),
    }
}

/// Run cross-validation and write `report.json`. For the SVM the four
/// feature-subset columns are produced; the sequence-based HMM has a single
/// column.
pub fn cmd_classify(
    ds: &Dataset,
    scheme: CvScheme,
    classifier: ClassifierKind,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<Report, CliError> {
    if ds.rows.is_empty() {
        return Err(CliError::Empty("dataset has no rows".into()));
    }
    if classifier == ClassifierKind::Hmm && ds.rows.iter().any(|r| r.sequence.is_none()) {
        return Err(CliError::Config(
            "the HMM classifier needs per-stroke sequences; classify from bundles, not features.csv"
                .into(),
        ));
    }
    let subsets: &[FeatureSubset] = match classifier {
        ClassifierKind::Svm => &FeatureSubset::ALL,
        ClassifierKind::Hmm => &[FeatureSubset::Overall],
    };
    let mut columns = Vec::new();
    for subset in subsets {
        let cv = cross_validate(ds, scheme, classifier, *subset, &cfg.svm)?;
        columns.push(column_from(&cv));
    }
    let report = Report {
        scheme,
        classifier,
        hyper: cfg.svm,
        seed: cfg.seed,
        n_rows: ds.rows.len(),
        columns,
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(format!("serializing report: {e}")))?;
    text.push('\n');
    std::fs::write(out, text)?;
    Ok(report)
}

/// Generate a cohort of synthetic bundles, each with its `truth.json`.
pub fn cmd_simulate(
    plan: &DatasetPlan,
    head_motion: HeadMotion,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();
    for pt in plan_cohort(plan, seed) {
        let (trial, truth) = generate_trial(&pt.profile, head_motion, &pt.cfg, pt.seed)?;
        let dir = out_dir.join(&trial.id);
        std::fs::create_dir_all(&dir)?;
        write_trial(&trial, &dir)?;
        write_truth(&truth, &dir)?;
        out.push(dir);
    }
    Ok(out)
}

pub fn write_truth(truth: &SynthTruth, dir: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(truth)
        .map_err(|e| CliError::Config(format!("serializing truth: {e}")))?;
    text.push('\n');
    std::fs::write(dir.join("truth.json"), text)?;
    Ok(())
}

pub fn read_truth(dir: &Path) -> Result<SynthTruth, CliError> {
    let text = std::fs::read_to_string(dir.join("truth.json"))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("truth.json: {e}")))
}

/// Per-operator strokes of a processed trial in time order, exclusions
/// included.
fn operator_strokes(res: &crate::pipeline::TrialResult, operator_id: &str) -> Vec<Stroke> {
    let mut out = Vec::new();
    for sub in &res.subtrials {
        if sub.operator_id != operator_id {
            continue;
        }
        match &sub.outcome {
            SubTrialOutcome::Features { strokes, .. } => out.extend(strokes.iter().cloned()),
            SubTrialOutcome::Excluded { strokes, .. } => out.extend(strokes.iter().cloned()),
        }
    }
    out
}

/// Render the search graph and the cumulative covered-area curve for every
/// operator of a bundle.
pub fn cmd_report(bundle: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let trial = parse_trial(bundle)?;
    let res = process_trial(&trial, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut any = false;
    for o in &res.operators {
        let strokes = operator_strokes(&res, &o.operator_id);
        if strokes.len() < 3 {
            eprintln!(
                "warning: {} / {}: {} strokes; a search graph needs at least 3",
                res.trial_id,
                o.operator_id,
                strokes.len()
            );
            continue;
        }
        any = true;
        let graph = crate::features::build_search_graph(&strokes)
            .map_err(PipelineError::from)?;
        let stem = format!("{}_{}", res.trial_id, o.operator_id);

        let svg = search_graph_svg(&graph);
        let p1 = out_dir.join(format!("{stem}_search_graph.svg"));
        std::fs::write(&p1, svg)?;
        written.push(p1);

        let mut csv = String::from("stroke_index,cumulative_area\n");
        for (i, a) in graph.hull_areas.iter().enumerate() {
            writeln!(csv, "{},{}", i + 3, a).unwrap();
        }
        let p2 = out_dir.join(format!("{stem}_cumulative_area.csv"));
        std::fs::write(&p2, csv)?;
        written.push(p2);

        let p3 = out_dir.join(format!("{stem}_cumulative_area.svg"));
        std::fs::write(&p3, cumulative_area_svg(&graph.hull_areas))?;
        written.push(p3);
    }
    if !any {
        return Err(CliError::Empty("no operator had enough strokes for a search graph".into()));
    }
    Ok(written)
}

/// Blue-to-red ramp over [0, 1].
fn ramp(t: f64) -> String {
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("rgb({r},0,{b})")
}

/// The Type II search graph: time-ordered vertices sized by stroke length,
/// connected in order, with the convex hull outlined.
pub fn search_graph_svg(graph: &crate::features::SearchGraph) -> String {
    let vs = &graph.vertices;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in vs {
        min_x = min_x.min(v[0]);
        max_x = max_x.max(v[0]);
        min_y = min_y.min(v[1]);
        max_y = max_y.max(v[1]);
    }
    let margin = 0.1 * ((max_x - min_x).max(max_y - min_y)).max(1.0);
    let (x0, y0) = (min_x - margin, min_y - margin);
    let (w, h) = (max_x - min_x + 2.0 * margin, max_y - min_y + 2.0 * margin);
    let scale = 400.0 / w.max(h);
    let px = |p: Point2| -> (f64, f64) { ((p[0] - x0) * scale, (h - (p[1] - y0)) * scale) };

    let max_len = graph.lengths.iter().cloned().fold(f64::MIN, f64::max).max(1e-9);
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.3} {:.3}\">",
        w * scale, h * scale, w * scale, h * scale
    )
    .unwrap();
    // hull outline
    let hull = crate::geometry::convex_hull(vs);
    if hull.len() >= 2 {
        let pts: Vec<String> = hull
            .iter()
            .map(|p| {
                let (x, y) = px(*p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        writeln!(
            s,
            "  <polygon points=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>",
            pts.join(" ")
        )
        .unwrap();
    }
    // time-ordered path
    let pts: Vec<String> = vs
        .iter()
        .map(|p| {
            let (x, y) = px(*p);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(
        s,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>",
        pts.join(" ")
    )
    .unwrap();
    // vertices, colored by time, sized by stroke length
    let denom = (vs.len().max(2) - 1) as f64;
    for (i, p) in vs.iter().enumerate() {
        let (x, y) = px(*p);
        let r = 2.0 + 6.0 * graph.lengths[i] / max_len;
        writeln!(
            s,
            "  <circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{r:.3}\" fill=\"{}\"/>",
            ramp(i as f64 / denom)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Cumulative covered area AC(i) against stroke index.
pub fn cumulative_area_svg(hull_areas: &[f64]) -> String {
    let (w, h, ml, mb) = (420.0, 300.0, 40.0, 30.0);
    let max_a = hull_areas.iter().cloned().fold(f64::MIN, f64::max).max(1e-9);
    let n = hull_areas.len();
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    )
    .unwrap();
    writeln!(
        s,
        "  <line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        h - mb,
        w - 10.0,
        h - mb
    )
    .unwrap();
    writeln!(s, "  <line x1=\"{ml}\" y1=\"10\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>", h - mb)
        .unwrap();
    let pts: Vec<String> = hull_areas
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let x = ml + (w - ml - 10.0) * (i as f64 / (n.max(2) - 1) as f64);
            let y = (h - mb) - (h - mb - 10.0) * (a / max_a);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(
        s,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
        pts.join(" ")
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SkillProfile;
    use tempfile::tempdir;

    fn simulate_one(dir: &Path, seed: u64) -> PathBuf {
        let plan = DatasetPlan {
            n_experts: 1,
            n_novices: 0,
            trials_per_surgeon: 1,
            ..DatasetPlan::default()
        };
        cmd_simulate(&plan, HeadMotion::None, seed, dir).unwrap().remove(0)
    }

    #[test]
    fn calibrate_recovers_truth_offsets_within_half_mm() {
        let tmp = tempdir().unwrap();
        let bundle = simulate_one(tmp.path(), 3);
        // wipe stored calibrations so the command has to recompute them
        let mut trial = parse_trial(&bundle).unwrap();
        trial.calibration_a = None;
        trial.calibration_b = None;
        write_trial(&trial, &bundle).unwrap();
        cmd_calibrate(&bundle).unwrap();
        let trial = parse_trial(&bundle).unwrap();
        let truth = read_truth(&bundle).unwrap();
        let ea = (trial.calibration_a.unwrap().tip_offset - truth.tip_offset_a).norm();
        let eb = (trial.calibration_b.unwrap().tip_offset - truth.tip_offset_b).norm();
        assert!(ea < 0.5 && eb < 0.5, "offset errors {ea} {eb}");
    }

    #[test]
    fn calibrate_without_pivot_intervals_is_schema_error() {
        let tmp = tempdir().unwrap();
        let bundle = simulate_one(tmp.path(), 4);
        let mut trial = parse_trial(&bundle).unwrap();
        trial.pivot_interval_a = None;
        trial.pivot_interval_b = None;
        write_trial(&trial, &bundle).unwrap();
        let err = cmd_calibrate(&bundle).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn features_command_is_byte_identical_across_runs() {
        let tmp = tempdir().unwrap();
        let bundle = simulate_one(tmp.path(), 5);
        let cfg = PipelineConfig::default();
        let out1 = tmp.path().join("o1");
        let out2 = tmp.path().join("o2");
        let (f1, s1) = cmd_features(&[bundle.clone()], &cfg, &out1).unwrap();
        let (f2, s2) = cmd_features(&[bundle], &cfg, &out2).unwrap();
        assert_eq!(std::fs::read(f1).unwrap(), std::fs::read(f2).unwrap());
        assert_eq!(std::fs::read(s1).unwrap(), std::fs::read(s2).unwrap());
    }

    #[test]
    fn features_csv_round_trips_into_a_dataset() {
        let tmp = tempdir().unwrap();
        let bundle = simulate_one(tmp.path(), 6);
        let cfg = PipelineConfig::default();
        let (fpath, _) = cmd_features(&[bundle], &cfg, tmp.path()).unwrap();
        let ds = parse_features_csv(&fpath).unwrap();
        assert_eq!(ds.rows.len(), 1);
        assert_eq!(ds.rows[0].label, OperatorClass::Expert);
        assert!(ds.rows[0].features.cr > 0.0);
    }

    #[test]
    fn classify_report_has_four_svm_columns_and_is_deterministic() {
        let tmp = tempdir().unwrap();
        let plan = DatasetPlan {
            n_experts: 2,
            n_novices: 2,
            trials_per_surgeon: 2,
            ..DatasetPlan::default()
        };
        let ds = crate::synth::generate_dataset(&plan, 11).unwrap();
        let cfg = PipelineConfig::default();
        let out1 = tmp.path().join("r1.json");
        let out2 = tmp.path().join("r2.json");
        let report =
            cmd_classify(&ds, CvScheme::To, ClassifierKind::Svm, &cfg, &out1).unwrap();
        cmd_classify(&ds, CvScheme::To, ClassifierKind::Svm, &cfg, &out2).unwrap();
        assert_eq!(report.columns.len(), 4);
        assert_eq!(std::fs::read(out1).unwrap(), std::fs::read(out2).unwrap());
    }

    #[test]
    fn hmm_from_features_csv_is_rejected() {
        let tmp = tempdir().unwrap();
        let ds = Dataset {
            rows: vec![DatasetRow {
                trial_id: "t".into(),
                operator_id: "o".into(),
                label: OperatorClass::Expert,
                features: FeatureVector { scc: 0.0, sdc: 0.0, cr: 1.0, n_strokes: 8 },
                sequence: None,
            }],
        };
        let err = cmd_classify(
            &ds,
            CvScheme::To,
            ClassifierKind::Hmm,
            &PipelineConfig::default(),
            &tmp.path().join("r.json"),
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn simulate_is_deterministic_on_disk() {
        let tmp = tempdir().unwrap();
        let a = simulate_one(&tmp.path().join("a"), 9);
        let b = simulate_one(&tmp.path().join("b"), 9);
        for name in ["cottle.csv", "head.csv", "meta.json", "truth.json"] {
            assert_eq!(
                std::fs::read(a.join(name)).unwrap(),
                std::fs::read(b.join(name)).unwrap(),
                "{name} differs"
            );
        }
    }

    #[test]
    fn report_emits_wellformed_svg_and_area_curve() {
        let tmp = tempdir().unwrap();
        let bundle = simulate_one(tmp.path(), 12);
        let files = cmd_report(&bundle, &PipelineConfig::default(), &tmp.path().join("rep")).unwrap();
        assert_eq!(files.len(), 3);
        for f in &files {
            let text = std::fs::read_to_string(f).unwrap();
            if f.extension().unwrap() == "svg" {
                assert!(text.starts_with("<svg"));
                assert!(text.trim_end().ends_with("</svg>"));
                // crude well-formedness: every opened tag closes or self-closes
                let opens = text.matches('<').count();
                let closes = text.matches('>').count();
                assert_eq!(opens, closes);
            } else {
                assert!(text.starts_with("stroke_index,cumulative_area\n"));
                let areas: Vec<f64> = text
                    .lines()
                    .skip(1)
                    .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
                    .collect();
                assert!(areas.windows(2).all(|w| w[1] >= w[0] - 1e-12), "AC not monotone");
            }
        }
    }

    #[test]
    fn unit_square_area_curve_matches_hand_computation() {
        // four stroke starts on the unit square: AC(3) = 0.5, AC(4) = 1.0
        let graph = crate::features::SearchGraph {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            lengths: vec![1.0; 4],
            hull_areas: vec![0.5, 1.0],
        };
        let svg = search_graph_svg(&graph);
        assert!(svg.contains("<polygon"));
        let curve = cumulative_area_svg(&graph.hull_areas);
        assert!(curve.contains("<polyline"));
    }

    #[test]
    fn config_file_overrides_defaults() {
        let tmp = tempdir().unwrap();
        let p = tmp.path().join("cfg.json");
        std::fs::write(&p, "{\"min_prominence\": 2.5, \"seed\": 7}\n").unwrap();
        let cfg = load_config(Some(&p)).unwrap();
        assert_eq!(cfg.min_prominence, Some(2.5));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.consistency_window, 5);
        let bad = tmp.path().join("bad.json");
        std::fs::write(&bad, "{nope}").unwrap();
        assert_eq!(exit_code(&load_config(Some(&bad)).unwrap_err()), 2);
    }

    #[test]
    fn degenerate_pivot_maps_to_numeric_exit_code() {
        let err = CliError::Acquisition(AcquisitionError::DegenerateMotion { sigma_min: 0.0 });
        assert_eq!(exit_code(&err), 4);
        let err = CliError::Empty("x".into());
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn noiseless_features_match_truth_within_1e6() {
        let tmp = tempdir().unwrap();
        let plan = DatasetPlan {
            n_experts: 1,
            n_novices: 0,
            trials_per_surgeon: 1,
            expert_profile: SkillProfile {
                noise_sigma: 0.0,
                curvature_local_jitter: 0.0,
                duration_local_jitter: 0.0,
                revisit_prob: 0.0,
                ..SkillProfile::expert_default()
            },
            ..DatasetPlan::default()
        };
        // no surgeon perturbation of the things we zeroed matters: jitters
        // are multiplicative, so zero stays zero
        let bundle = cmd_simulate(&plan, HeadMotion::None, 2, tmp.path()).unwrap().remove(0);
        let (fpath, _) = cmd_features(&[bundle], &PipelineConfig::default(), tmp.path()).unwrap();
        let ds = parse_features_csv(&fpath).unwrap();
        let f = ds.rows[0].features;
        assert!(f.scc < 1e-6, "scc {}", f.scc);
        assert!(f.sdc < 1e-6, "sdc {}", f.sdc);
    }
}
