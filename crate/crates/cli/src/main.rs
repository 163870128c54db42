mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use photoba::ba::FusionMode;

/// Photometric bundle adjustment for RGB-D and LiDAR trajectories.
#[derive(Debug, Parser)]
#[command(name = "photoba", version)]
struct Cli {
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "PHOTOBA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refine a dataset's trajectory; writes trajectory_refined.txt, report.txt and report.json.
    Refine(RefineArgs),
    /// ATE RMSE of an estimated trajectory against a reference.
    Evaluate(EvaluateArgs),
    /// Render a synthetic dataset.
    Synth(SynthArgs),
    /// Convergence-basin sweep of a frame aligned against itself or a neighbour.
    Selfalign(SelfalignArgs),
    /// Print the match graph built from a dataset's initial guesses.
    GraphDump(GraphDumpArgs),
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Covisibility: maximum relative rotation, degrees.
    #[arg(long)]
    max_angle_deg: Option<f64>,
    /// Covisibility: maximum relative translation, meters.
    #[arg(long)]
    max_translation: Option<f64>,
    /// Covisibility: minimum overlap ratio on the coarsest level.
    #[arg(long)]
    min_overlap: Option<f64>,
    /// Drop the edges between consecutive frames.
    #[arg(long)]
    no_sequential: bool,
    /// Pyramid scales, coarsest first (e.g. 0.125,0.25,0.5).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Iteration caps per level, coarsest first.
    #[arg(long, value_delimiter = ',')]
    iterations: Option<Vec<usize>>,
    #[arg(long)]
    huber_delta: Option<f64>,
    /// Information weights: intensity, depth, normal.
    #[arg(long, value_delimiter = ',', num_args = 1, value_names = ["I,D,N"])]
    omega: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative error decrease that ends a level.
    #[arg(long)]
    termination: Option<f64>,
    /// Occlusion depth tolerance at full resolution, meters.
    #[arg(long)]
    occlusion_tolerance: Option<f64>,
    /// Evaluate every n-th pixel.
    #[arg(long)]
    pixel_stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FusionArg {
    Coupled,
    Consecutive,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Coupled => FusionMode::Coupled,
            FusionArg::Consecutive => FusionMode::Consecutive,
        }
    }
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Dataset manifest (manifest.toml).
    manifest: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
    /// Use only the n finest pyramid levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Fusion scheme when the dataset has two sensors.
    #[arg(long, value_enum, default_value = "consecutive")]
    fusion: FusionArg,
    /// Refine with one sensor of a two-sensor dataset.
    #[arg(long)]
    sensor: Option<String>,
    /// Also write the match graphs here.
    #[arg(long)]
    graph_dump: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    estimate: PathBuf,
    reference: PathBuf,
    /// Largest timestamp difference of an associated pair, seconds.
    #[arg(long, default_value_t = photoba::eval::DEFAULT_MAX_DT)]
    max_dt: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    BoxRoom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SensorSet {
    Both,
    Rgbd,
    Lidar,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Scene specification (TOML).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Number of poses of the built-in trajectory.
    #[arg(long, requires = "builtin")]
    poses: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    sensors: SensorSet,
    /// Perturbation of the written pose guesses: translation sigma, meters.
    #[arg(long)]
    sigma_t: Option<f64>,
    /// Perturbation: rotation sigma, degrees.
    #[arg(long)]
    sigma_r_deg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the effective scene spec to the dataset directory.
    #[arg(long)]
    write_spec: bool,
}

#[derive(Debug, Args)]
struct SelfalignArgs {
    manifest: PathBuf,
    /// Grid file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Trajectory row of the source frame.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Trajectory row of the target frame; the source itself when unset.
    #[arg(long)]
    target: Option<usize>,
    /// Samples per grid axis.
    #[arg(long, default_value_t = 5)]
    grid: usize,
    /// Largest translation perturbation, meters.
    #[arg(long, default_value_t = 0.3)]
    max_translation: f64,
    /// Largest rotation perturbation, radians.
    #[arg(long, default_value_t = 0.3)]
    max_rotation: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Mean error below which a cell counts as converged.
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct GraphDumpArgs {
    manifest: PathBuf,
    /// Write here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Refine(a) => commands::refine(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Selfalign(a) => commands::selfalign(&a),
        Command::GraphDump(a) => commands::graph_dump(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
