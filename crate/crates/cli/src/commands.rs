use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use radar_odom::eval::{self, AlignOptions};
use radar_odom::ingest::{
    load_point_scan, load_polar_scan, load_scan_dir, load_trajectory, save_sequence, save_trajectory,
    synthesize_scene, NoiseSpec, SynthOptions, WorldSpec,
};
use radar_odom::ndt::build_ndt_map_from_points;
use radar_odom::pipeline::{downsample_indices, run_odometry};
use radar_odom::preprocess::{threshold_polar, PreprocessConfig};
use radar_odom::viz::{self, Lattice};
use radar_odom::{Error, Mode, NdtConfig, PipelineConfig, Scan, Submap, Trajectory, Vec2, WeightedPoint};

use crate::{EvalArgs, LatticeKind, Metric, OdomArgs, SynthArgs, VizArgs};

pub const THREADS_ENV: &str = "RADAR_ODOM_THREADS";

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::MotionCountMismatch { .. }) | Failure::Internal(_) => 2,
            Failure::Core(_) | Failure::Usage(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| {
        Failure::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("{THREADS_ENV}: expected a thread count, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    Ok(())
}

pub fn odom(a: OdomArgs) -> Result<()> {
    let mode = a.mode.map(Mode::from);
    let cfg = match (&a.config, mode) {
        (Some(path), _) => PipelineConfig::load(path, mode)?,
        (None, Some(mode)) => PipelineConfig::for_mode(mode),
        (None, None) => return Err(Failure::Usage("--mode is required when no --config is given".into())),
    };
    let scans = load_scan_dir(&a.input_dir)?;
    let out = run_odometry(&scans, &cfg)?;
    if out.trajectory.len() != scans.len() && cfg.downsample_hz.is_none() {
        return Err(Failure::Internal(format!(
            "{} poses for {} scans",
            out.trajectory.len(),
            scans.len()
        )));
    }
    save_trajectory(&out.trajectory, &a.output)?;
    let log = a.log.unwrap_or_else(|| a.output.with_extension("jsonl"));
    write_file(&log, &out.log_jsonl())?;
    eprintln!(
        "{} frames, {} grid escalations, {} shift halvings, {} motion-prior fallbacks",
        out.stats.frames, out.stats.escalations, out.stats.shift_halvings, out.stats.fallbacks
    );
    Ok(())
}

fn thin(traj: Trajectory, hz: f64) -> Result<Trajectory> {
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(Failure::Usage(format!("--downsample-hz must be positive, got {hz}")));
    }
    let keep = downsample_indices(&traj.stamps, hz);
    Ok(Trajectory::from_parts(
        keep.iter().map(|&i| traj.stamps[i]).collect(),
        keep.iter().map(|&i| traj.poses[i]).collect(),
    ))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut estimate = load_trajectory(&a.estimate)?;
    let ground_truth = load_trajectory(&a.ground_truth)?;
    if let Some(hz) = a.downsample_hz {
        estimate = thin(estimate, hz)?;
    }
    if !(a.tolerance >= 0.0) {
        return Err(Failure::Usage(format!("--tolerance must be non-negative, got {}", a.tolerance)));
    }
    let opts = AlignOptions {
        tolerance: a.tolerance,
        interpolate: a.interpolate,
    };
    let (text, csv) = match a.metric {
        Metric::Kitti => {
            let report = eval::kitti_errors(&estimate, &ground_truth, &opts)?;
            (report.to_table(), report.to_csv())
        }
        Metric::PerMeter => {
            let (t, r) = eval::per_meter_error(&estimate, &ground_truth, &opts)?;
            (
                format!("per-meter error: {t:.6} %, {r:.6} deg/m\n"),
                format!("translational_percent,rotational_deg_per_m\n{t},{r}\n"),
            )
        }
        Metric::PerFrame => {
            let (t, r) = eval::frame_errors(&estimate, &ground_truth, &opts)?;
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            let mut csv = String::from("frame,translation_m,rotation_deg\n");
            for (k, (t, r)) in t.iter().zip(&r).enumerate() {
                csv.push_str(&format!("{},{t},{r}\n", k + 1));
            }
            (
                format!(
                    "per-frame error over {} frames: {:.6} m/frame, {:.6} deg/frame\n",
                    t.len(),
                    mean(&t),
                    mean(&r)
                ),
                csv,
            )
        }
    };
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let world = WorldSpec::load(&a.world)?;
    let trajectory = load_trajectory(&a.trajectory)?;
    let noise = match a.noise.as_str() {
        "none" => NoiseSpec::none(),
        "default" => NoiseSpec::default(),
        path => {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            NoiseSpec::parse(&text, path)?
        }
    };
    let seq = synthesize_scene(&world, &trajectory, &SynthOptions::new(a.mode.into(), noise), a.seed)?;
    save_sequence(&seq, &a.out_dir)?;
    eprintln!("{} scans written to {}", seq.scans.len(), a.out_dir.display());
    Ok(())
}

fn load_scan(path: &Path) -> Result<Scan> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("prs") => Ok(Scan::Polar(load_polar_scan(path)?)),
        Some("csv") => Ok(Scan::Points(load_point_scan(path)?)),
        _ => Err(Failure::Usage(format!("{}: expected a .prs or .csv scan", path.display()))),
    }
}

fn weighted_points(scan: &Scan, threshold: f64) -> Vec<WeightedPoint> {
    match scan {
        Scan::Polar(p) => {
            let cfg = PreprocessConfig {
                threshold,
                ..PreprocessConfig::default()
            };
            Submap::from_scan(&threshold_polar(p, &cfg)).points
        }
        Scan::Points(p) => Submap::from_scan(p).points,
    }
}

fn parse_axis(flag: &str, text: &str, scale: f64) -> Result<(f64, f64, usize)> {
    let bad = || Failure::Usage(format!("--{flag}: expected `lo:hi:count`, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    Ok((lo * scale, hi * scale, n))
}

/// `<stem>_thr<value>.<ext>` beside `out`.
fn sweep_path(out: &Path, threshold: f64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("raster");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("pgm");
    out.with_file_name(format!("{stem}_thr{threshold:.3}.{ext}"))
}

pub fn viz(a: VizArgs) -> Result<()> {
    for &t in &a.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Failure::Usage(format!("--threshold values must lie in [0, 1], got {t}")));
        }
    }
    if !(a.grid_size > 0.0) || !(a.resolution > 0.0) {
        return Err(Failure::Usage("--grid-size and --resolution must be positive".into()));
    }
    let threshold = a.threshold.first().copied().unwrap_or(0.333);

    if let Some(path) = &a.scan {
        let Scan::Polar(scan) = load_scan(path)? else {
            return Err(Failure::Usage(format!("{}: --scan needs a polar (.prs) scan", path.display())));
        };
        for &t in &a.threshold {
            let out = if a.threshold.len() == 1 { a.out.clone() } else { sweep_path(&a.out, t) };
            let raster = viz::threshold_raster(&scan, t);
            write_file(&out, &raster.to_text())?;
            eprintln!("threshold {t}: {} nonzero pixels -> {}", raster.count_nonzero(), out.display());
        }
        return Ok(());
    }

    let reference_path = a.ndt_map.as_ref().or(a.cost_surface.as_ref()).expect("clap enforces a source");
    let reference = load_scan(reference_path)?;
    let (base, default_shift) = match reference {
        Scan::Polar(_) => (NdtConfig::scanning(), 0.333),
        Scan::Points(_) => (NdtConfig::automotive(), 0.0),
    };
    let shift = a.shift.unwrap_or(default_shift);
    if !(0.0..=1.0).contains(&shift) {
        return Err(Failure::Usage(format!("--shift must lie in [0, 1], got {shift}")));
    }
    let points = weighted_points(&reference, threshold);
    let cfg = NdtConfig {
        grid_size: a.grid_size,
        shift_s: shift,
        ..base
    };
    let map = build_ndt_map_from_points(&points, &cfg)?;

    if a.ndt_map.is_some() {
        let mut min = Vec2::repeat(f64::INFINITY);
        let mut max = Vec2::repeat(f64::NEG_INFINITY);
        for p in &points {
            min = min.inf(&p.position);
            max = max.sup(&p.position);
        }
        let margin = Vec2::repeat(a.grid_size);
        let raster = viz::ndt_raster(&map, min - margin, max + margin, a.resolution);
        write_file(&a.out, &raster.to_text())?;
        eprintln!("{} cells, {}x{} raster -> {}", map.cell_count(), raster.width, raster.height, a.out.display());
        return Ok(());
    }

    let current = match &a.against {
        Some(path) => weighted_points(&load_scan(path)?, threshold),
        None => points,
    };
    let lattice = match a.lattice {
        LatticeKind::XTheta => Lattice::XTheta {
            x: parse_axis("x", &a.x, 1.0)?,
            theta: parse_axis("theta", &a.theta, std::f64::consts::PI / 180.0)?,
        },
        LatticeKind::XY => Lattice::XY {
            x: parse_axis("x", &a.x, 1.0)?,
            y: parse_axis("y", &a.y, 1.0)?,
        },
    };
    let samples = viz::cost_surface(&map, &current, shift, true, &lattice);
    write_file(&a.out, &viz::cost_surface_csv(&samples, &lattice))?;
    eprintln!("{} lattice nodes -> {}", samples.len(), a.out.display());
    Ok(())
}
