//! Command-line front end for the tool-motion skill-assessment pipeline.
//!
//! Exit codes: 0 success, 2 input/schema/config error, 3 empty result,
//! 4 numeric failure. Every command is deterministic given its inputs,
//! configuration, and seed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use toolmotion::classify::{ClassifierKind, CvScheme};
use toolmotion::commands::{
    cmd_calibrate, cmd_classify, cmd_features, cmd_register, cmd_report, cmd_simulate, exit_code,
    load_config, parse_features_csv, CliError,
};
use toolmotion::pipeline::{dataset_from_results, process_trial, HeadModeChoice, PipelineConfig};
use toolmotion::synth::{DatasetPlan, HeadMotion, SkillProfile};

#[derive(Parser)]
#[command(
    name = "toolmotion",
    about = "Surgical tool-motion analysis: calibration, registration, stroke features, skill classification",
    version
)]
struct Cli {
    /// JSON pipeline configuration; flags override file values, file values
    /// override defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Head-frame handling override
    #[arg(long, global = true, value_enum)]
    head_mode: Option<HeadModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadModeArg {
    /// Use the head sensor stream (error if absent)
    Sensor,
    /// Estimate head motion from the tool trajectory
    Estimate,
    /// Sensor when present, estimate otherwise
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Leave one (trial, operator) out
    To,
    /// Leave one operator out
    Uo,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    /// RBF support vector machine on summary features
    Svm,
    /// Gaussian hidden Markov model on per-stroke sequences
    Hmm,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute pivot calibrations from the annotated intervals and store
    /// them in the bundle
    Calibrate {
        /// Trial bundle directory
        bundle: PathBuf,
    },
    /// Estimate the initial septal plane from the registration interval and
    /// store it in the bundle
    Register {
        /// Trial bundle directory
        bundle: PathBuf,
    },
    /// Segment strokes and write features.csv and strokes.csv
    Features {
        /// Trial bundle directories
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross-validate a classifier and write report.json
    Classify {
        /// Trial bundle directories (required for the HMM)
        #[arg(long, num_args = 1.., conflicts_with = "features")]
        bundles: Vec<PathBuf>,
        /// Previously exported features.csv
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "to")]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value = "svm")]
        classifier: ClassifierArg,
        /// Output report path
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Generate a synthetic cohort of trial bundles with ground truth
    Simulate {
        /// Output directory
        #[arg(long, default_value = "cohort")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        experts: usize,
        #[arg(long, default_value_t = 4)]
        novices: usize,
        #[arg(long, default_value_t = 6)]
        trials_per_surgeon: usize,
        /// Cap the total number of trials (split evenly across surgeons)
        #[arg(long)]
        total_trials: Option<usize>,
        /// Sinusoidal head-rotation amplitude in degrees (0 = static head)
        #[arg(long, default_value_t = 0.0)]
        head_amp_deg: f64,
        /// Sinusoidal head-rotation frequency in Hz
        #[arg(long, default_value_t = 0.1)]
        head_freq_hz: f64,
        /// JSON skill-profile override for experts
        #[arg(long)]
        expert_profile: Option<PathBuf>,
        /// JSON skill-profile override for novices
        #[arg(long)]
        novice_profile: Option<PathBuf>,
    },
    /// Render the search graph and cumulative-area curve for a bundle
    Report {
        /// Trial bundle directory
        bundle: PathBuf,
        /// Output directory
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn load_profile(path: &PathBuf) -> Result<SkillProfile, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg: PipelineConfig = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.head_mode {
        cfg.head_mode = match mode {
            HeadModeArg::Sensor => HeadModeChoice::Sensor,
            HeadModeArg::Estimate => HeadModeChoice::Estimate,
            HeadModeArg::Auto => HeadModeChoice::Auto,
        };
    }

    match cli.command {
        Command::Calibrate { bundle } => {
            cmd_calibrate(&bundle)?;
            println!("calibrated {}", bundle.display());
        }
        Command::Register { bundle } => {
            cmd_register(&bundle, &cfg)?;
            println!("registered {}", bundle.display());
        }
        Command::Features { bundles, out } => {
            let (fpath, spath) = cmd_features(&bundles, &cfg, &out)?;
            println!("wrote {}", fpath.display());
            println!("wrote {}", spath.display());
        }
        Command::Classify { bundles, features, scheme, classifier, out } => {
            let scheme = match scheme {
                SchemeArg::To => CvScheme::To,
                SchemeArg::Uo => CvScheme::Uo,
            };
            let classifier = match classifier {
                ClassifierArg::Svm => ClassifierKind::Svm,
                ClassifierArg::Hmm => ClassifierKind::Hmm,
            };
            let ds = if let Some(fpath) = features {
                parse_features_csv(&fpath)?
            } else if !bundles.is_empty() {
                let mut results = Vec::new();
                for b in &bundles {
                    let trial = toolmotion::acquisition::parse_trial(b)?;
                    results.push(process_trial(&trial, &cfg)?);
                }
                dataset_from_results(&results)
            } else {
                return Err(CliError::Config(
                    "classify needs --bundles or --features".into(),
                ));
            };
            let report = cmd_classify(&ds, scheme, classifier, &cfg, &out)?;
            for col in &report.columns {
                println!(
                    "{:<10} micro {:6.2}%  macro {:6.2}%",
                    col.subset.name(),
                    col.micro,
                    col.macro_avg
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Simulate {
            out,
            experts,
            novices,
            trials_per_surgeon,
            total_trials,
            head_amp_deg,
            head_freq_hz,
            expert_profile,
            novice_profile,
        } => {
            let mut plan = DatasetPlan {
                n_experts: experts,
                n_novices: novices,
                trials_per_surgeon,
                total_trials,
                ..DatasetPlan::default()
            };
            if let Some(p) = expert_profile {
                plan.expert_profile = load_profile(&p)?;
            }
            if let Some(p) = novice_profile {
                plan.novice_profile = load_profile(&p)?;
            }
            let head = if head_amp_deg > 0.0 {
                HeadMotion::Sinusoid { amp_deg: head_amp_deg, freq_hz: head_freq_hz }
            } else {
                HeadMotion::None
            };
            let dirs = cmd_simulate(&plan, head, cfg.seed, &out)?;
            println!("wrote {} bundles under {}", dirs.len(), out.display());
        }
        Command::Report { bundle, out } => {
            let files = cmd_report(&bundle, &cfg, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
