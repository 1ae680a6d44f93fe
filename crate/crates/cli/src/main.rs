//! `radar-odom`: odometry, evaluation, synthetic data and visualization.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use radar_odom::Mode;

#[derive(Debug, Parser)]
#[command(
    name = "radar-odom",
    version,
    about = "2D radar odometry for automotive and scanning radars",
    after_help = "Environment: RADAR_ODOM_THREADS caps the worker threads (0 or unset = one per core)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a trajectory from a directory of scans.
    Odom(OdomArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic scan sequence with ground truth.
    Synth(SynthArgs),
    /// Export threshold rasters, ND maps or cost surfaces.
    Viz(VizArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Automotive,
    Scanning,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Automotive => Mode::Automotive,
            ModeArg::Scanning => Mode::Scanning,
        }
    }
}

#[derive(Debug, Args)]
struct OdomArgs {
    /// Radar type; may be omitted when the config file sets `mode`.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Pipeline config file (`key = value`; lengths in m, angles in deg).
    /// Built-in defaults for the mode are used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory of scans (`.prs` polar or `.csv` point files, or a `scans/`
    /// subdirectory holding them), processed in file-name order.
    #[arg(long, value_name = "DIR")]
    input_dir: PathBuf,
    /// Output trajectory CSV (timestamp_s, x_m, y_m, theta_rad).
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Per-frame JSON-lines log [default: the output path with extension `.jsonl`].
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    /// Segment errors over 100..800 m [% and deg/m].
    Kitti,
    /// Segment errors over 1 m [% and deg/m].
    PerMeter,
    /// Errors between consecutive relative motions [m/frame and deg/frame].
    PerFrame,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Estimated trajectory CSV (timestamp_s, x_m, y_m, theta_rad).
    #[arg(long, value_name = "FILE")]
    estimate: PathBuf,
    /// Ground-truth trajectory CSV (timestamp_s, x_m, y_m, theta_rad).
    #[arg(long, value_name = "FILE")]
    ground_truth: PathBuf,
    #[arg(long, value_enum, default_value = "kitti")]
    metric: Metric,
    /// Thin the estimate to about this rate before evaluating [Hz].
    #[arg(long, value_name = "HZ")]
    downsample_hz: Option<f64>,
    /// Largest timestamp difference for pairing poses [s].
    #[arg(long, value_name = "SECONDS", default_value_t = radar_odom::eval::DEFAULT_TIME_TOLERANCE)]
    tolerance: f64,
    /// Interpolate ground truth at estimate timestamps instead of nearest-timestamp pairing.
    #[arg(long)]
    interpolate: bool,
    /// Also write the report as CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// World file: `point x y refl`, `wall x1 y1 x2 y2 refl`, `mover x y vx vy refl` (m, m/s, refl in [0, 1]).
    #[arg(long, value_name = "FILE")]
    world: PathBuf,
    /// Trajectory CSV (timestamp_s, x_m, y_m, theta_rad); one scan per row.
    #[arg(long, value_name = "FILE")]
    trajectory: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// `none`, `default`, or a noise file of `key = value` overrides (sigmas in m, deg, m/s).
    #[arg(long, value_name = "none|default|FILE", default_value = "default")]
    noise: String,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives `scans/`, `labels/` and `ground_truth.csv`.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LatticeKind {
    /// x [m] against theta [deg].
    XTheta,
    /// x [m] against y [m].
    #[value(name = "x-y")]
    XY,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scan", "ndt_map", "cost_surface"])))]
struct VizArgs {
    /// Polar scan (`.prs`) to rasterize once per threshold (PGM, one pixel per bin).
    #[arg(long, value_name = "FILE")]
    scan: Option<PathBuf>,
    /// Scan (`.prs` or `.csv`) whose ND map is rendered as PGM.
    #[arg(long, value_name = "FILE")]
    ndt_map: Option<PathBuf>,
    /// Reference scan (`.prs` or `.csv`) for a cost-surface CSV.
    #[arg(long, value_name = "FILE")]
    cost_surface: Option<PathBuf>,
    /// Scan matched against the cost-surface reference [default: the reference itself].
    #[arg(long, value_name = "FILE", requires = "cost_surface")]
    against: Option<PathBuf>,
    /// Power thresholds in [0, 1], comma separated. With several values
    /// `--scan` writes one raster per threshold, named `<out stem>_thr<value>.pgm`.
    #[arg(long, value_delimiter = ',', default_value = "0.333")]
    threshold: Vec<f64>,
    /// NDT cell size [m].
    #[arg(long, value_name = "METERS", default_value_t = 3.75)]
    grid_size: f64,
    /// Power shift s [default: 0.333 for polar scans, 0 for point scans].
    #[arg(long)]
    shift: Option<f64>,
    /// ND map raster resolution [m/pixel].
    #[arg(long, value_name = "METERS", default_value_t = 0.25)]
    resolution: f64,
    #[arg(long, value_enum, default_value = "x-theta")]
    lattice: LatticeKind,
    /// x axis of the lattice as `lo:hi:count` [m].
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true, default_value = "-5:5:41")]
    x: String,
    /// y axis of the lattice as `lo:hi:count` [m].
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true, default_value = "-5:5:41")]
    y: String,
    /// theta axis of the lattice as `lo:hi:count` [deg].
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true, default_value = "-10:10:41")]
    theta: String,
    /// Output file (PGM or CSV).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = std::panic::catch_unwind(|| {
        commands::configure_threads()?;
        match cli.command {
            Command::Odom(a) => commands::odom(a),
            Command::Eval(a) => commands::eval(a),
            Command::Synth(a) => commands::synth(a),
            Command::Viz(a) => commands::viz(a),
        }
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(2),
    }
}
