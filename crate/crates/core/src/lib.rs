//! Tool-motion analysis for septoplasty-style surgical trials: calibration
//! and registration of a tracked instrument, head-motion compensation,
//! stroke segmentation, motion features, and expert/novice classification.

pub mod acquisition;
pub mod classify;
pub mod commands;
pub mod features;
pub mod geometry;
pub mod headcomp;
pub mod pipeline;
pub mod strokes;
pub mod synth;
