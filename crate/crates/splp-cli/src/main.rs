//! Command-line pipeline around the splp library: synthetic fixture
//! generation, pairwise training, solving, evaluation, the exhaustive
//! oracle, and the solver benchmark table.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "splp", version, about = "Subset partition and labeling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Single,
    Multi,
}

impl ModeArg {
    pub fn to_mode(self) -> splp::model::Mode {
        match self {
            ModeArg::Single => splp::model::Mode::SinglePerson,
            ModeArg::Multi => splp::model::Mode::MultiPerson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum UnaryNormArg {
    Softmax,
    Sigmoid,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AppearanceArg {
    None,
    Full,
    Scalar,
}

#[derive(Args)]
pub struct NoiseArgs {
    /// Location noise per axis, pixels.
    #[arg(long, default_value_t = 4.0)]
    pub loc_sigma: f64,
    /// Log-scale noise fraction.
    #[arg(long, default_value_t = 0.1)]
    pub scale_sigma: f64,
    /// Sharpness of the correct-class unary probability.
    #[arg(long, default_value_t = 8.0)]
    pub concentration: f64,
    /// Expected clutter candidates per image.
    #[arg(long, default_value_t = 5.0)]
    pub clutter_rate: f64,
    /// Probability a visible part produces no candidate.
    #[arg(long, default_value_t = 0.1)]
    pub miss_rate: f64,
    /// Expected candidates per visible part (>= 1).
    #[arg(long, default_value_t = 1.5)]
    pub dup_mean: f64,
    /// Unary score normalization.
    #[arg(long, value_enum, default_value_t = UnaryNormArg::Softmax)]
    pub unary_norm: UnaryNormArg,
}

#[derive(Args)]
pub struct SolverArgs {
    /// Relative optimality gap at which the search stops.
    #[arg(long, default_value_t = 0.01)]
    pub gap: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_nodes: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 900.0)]
    pub max_seconds: f64,
    /// Also separate at fractional points.
    #[arg(long)]
    pub fractional_separation: bool,
    /// Install uniqueness/suppression rows up front.
    #[arg(long)]
    pub preinstall: bool,
    /// Tie-break seed recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus of synthetic scenes with ground truth.
    Synth {
        /// Output directory for scene/gt fixtures and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        persons_min: usize,
        #[arg(long, default_value_t = 5)]
        persons_max: usize,
        /// Part classes: 14 (full skeleton) or 8 (reduced).
        #[arg(long, default_value_t = 14)]
        classes: usize,
        #[arg(long, default_value_t = 640.0)]
        image_width: f64,
        #[arg(long, default_value_t = 480.0)]
        image_height: f64,
        /// Person head size in pixels.
        #[arg(long, default_value_t = 40.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.1)]
        occlusion_rate: f64,
        /// Minimum person separation in scales.
        #[arg(long, default_value_t = 3.0)]
        min_separation: f64,
        /// Representative subset size per scene.
        #[arg(long, default_value_t = splp::detections::DEFAULT_SUBSET_SIZE)]
        subset: usize,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Train the pairwise model from generated scenes.
    Train {
        /// Directory holding scene_*.json fixtures (with provenance).
        #[arg(long)]
        scenes: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Gaussian prior std of the logistic weights.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 16)]
        s_bins: usize,
        #[arg(long, default_value_t = 16.0)]
        s_max: f64,
        #[arg(long, default_value_t = 16)]
        r_bins: usize,
        #[arg(long, value_enum, default_value_t = AppearanceArg::None)]
        appearance: AppearanceArg,
    },
    /// Solve one scene against a trained model.
    Solve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Multi)]
        mode: ModeArg,
        /// Output pose file.
        #[arg(long)]
        poses: PathBuf,
        /// Optional solver report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional line-delimited solve log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Evaluate predicted poses against ground truth.
    Eval {
        /// Directory holding poses_*.json predictions.
        #[arg(long)]
        pred: PathBuf,
        /// Directory holding gt_*.json ground truth.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Multi)]
        mode: ModeArg,
        /// Optional JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        pck_threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        pckh_threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        pcp_threshold: f64,
    },
    /// Brute-force a small instance and cross-check the solver.
    Oracle {
        /// Raw instance JSON (alpha/beta/mode).
        #[arg(long, conflicts_with_all = ["scene", "model"])]
        instance: Option<PathBuf>,
        /// Scene fixture (requires --model).
        #[arg(long, requires = "model")]
        scene: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Multi)]
        mode: ModeArg,
    },
    /// Time the solver at an operating point and record the table.
    Bench {
        #[arg(long, default_value_t = 100)]
        detections: usize,
        #[arg(long, default_value_t = 14)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        gap: f64,
        #[arg(long, default_value_t = 600.0)]
        max_seconds: f64,
        /// Optional JSON output of the timing table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Synth {
            out,
            scenes,
            seed,
            persons_min,
            persons_max,
            classes,
            image_width,
            image_height,
            scale,
            occlusion_rate,
            min_separation,
            subset,
            noise,
        } => commands::synth(commands::SynthOptions {
            out,
            scenes,
            seed,
            persons_min,
            persons_max,
            classes,
            image_width,
            image_height,
            scale,
            occlusion_rate,
            min_separation,
            subset,
            noise,
        }),
        Command::Train {
            scenes,
            out,
            sigma,
            s_bins,
            s_max,
            r_bins,
            appearance,
        } => commands::train(&scenes, &out, sigma, s_bins, s_max, r_bins, appearance),
        Command::Solve {
            scene,
            model,
            mode,
            poses,
            report,
            log,
            solver,
        } => commands::solve(&scene, &model, mode, &poses, report.as_deref(), log.as_deref(), &solver),
        Command::Eval {
            pred,
            gt,
            mode,
            out,
            pck_threshold,
            pckh_threshold,
            pcp_threshold,
        } => commands::eval(
            &pred,
            &gt,
            mode,
            out.as_deref(),
            pck_threshold,
            pckh_threshold,
            pcp_threshold,
        ),
        Command::Oracle {
            instance,
            scene,
            model,
            mode,
        } => commands::oracle(instance.as_deref(), scene.as_deref(), model.as_deref(), mode),
        Command::Bench {
            detections,
            classes,
            seed,
            gap,
            max_seconds,
            out,
        } => commands::bench(detections, classes, seed, gap, max_seconds, out.as_deref()),
    }
}
