//! The odometry loop for both radar kinds, its configuration and its
//! per-frame log.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::egomotion::{estimate_ego_velocity, integrate_velocity, EgoVelocityEstimate};
use crate::error::{Error, Result};
use crate::geometry::{Covariance3, Pose2};
use crate::ingest::{MeasurementAccuracy, PointScan, Scan, Trajectory};
use crate::matcher::{match_with_escalation, FailureReason, MatchConfig, MatchResult, MotionPrior};
use crate::ndt::{build_ndt_map, build_ndt_map_from_points, NdtConfig};
use crate::preprocess::{gate_and_filter_automotive, threshold_polar, PreprocessConfig};
use crate::submap::{build_submap, WeightedPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Automotive,
    Scanning,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Automotive => "automotive",
            Mode::Scanning => "scanning",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "automotive" => Ok(Mode::Automotive),
            "scanning" => Ok(Mode::Scanning),
            other => Err(Error::InvalidConfigValue {
                key: "mode".into(),
                reason: format!("expected automotive or scanning, got {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub preprocess: PreprocessConfig,
    pub ndt: NdtConfig,
    pub matching: MatchConfig,
    /// Number of scans stacked into the reference submap (automotive only).
    pub submap_n: usize,
    /// Sensor poses in the vehicle frame. Empty means one sensor at the origin.
    pub sensor_mounts: Vec<Pose2>,
    /// Drop scans to roughly this rate before processing [Hz].
    pub downsample_hz: Option<f64>,
    pub rng_seed: u64,
}

impl PipelineConfig {
    pub fn automotive() -> Self {
        Self {
            mode: Mode::Automotive,
            preprocess: PreprocessConfig::default(),
            ndt: NdtConfig::automotive(),
            matching: MatchConfig::default(),
            submap_n: 3,
            sensor_mounts: Vec::new(),
            downsample_hz: None,
            rng_seed: 0,
        }
    }

    pub fn scanning() -> Self {
        Self {
            mode: Mode::Scanning,
            ndt: NdtConfig::scanning(),
            submap_n: 1,
            ..Self::automotive()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Automotive => Self::automotive(),
            Mode::Scanning => Self::scanning(),
        }
    }

    /// Checks value ranges. Scanning mode silently forces `submap_n = 1`.
    pub fn validate(mut self) -> Result<Self> {
        let bad = |key: &str, reason: &str| Error::InvalidConfigValue {
            key: key.into(),
            reason: reason.into(),
        };
        if self.submap_n == 0 {
            return Err(bad("submap_n", "must be at least 1"));
        }
        if self.mode == Mode::Scanning {
            self.submap_n = 1;
        }
        if !(0.0..=1.0).contains(&self.preprocess.threshold) {
            return Err(bad("preprocess.threshold", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.ndt.shift_s) {
            return Err(bad("ndt.shift_s", "must be in [0, 1]"));
        }
        let positive = [
            ("ndt.grid_size", self.ndt.grid_size),
            ("ndt.cov_condition_cap", self.ndt.cov_condition_cap),
            ("preprocess.max_range_scanning", self.preprocess.max_range_scanning),
            ("preprocess.max_range_automotive", self.preprocess.max_range_automotive),
            ("preprocess.ransac_inlier_threshold", self.preprocess.ransac_inlier_threshold),
            ("match.convergence_epsilon", self.matching.convergence_epsilon),
            ("match.max_acceleration", self.matching.max_acceleration),
            ("match.grid_escalation_step", self.matching.grid_escalation_step),
            ("match.grid_ceiling", self.matching.grid_ceiling),
            ("match.low_speed_grid", self.matching.low_speed_grid),
            ("match.low_speed_threshold", self.matching.low_speed_threshold),
            ("match.max_translation_step_cells", self.matching.max_translation_step_cells),
            ("match.max_rotation_step", self.matching.max_rotation_step),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, "must be positive"));
            }
        }
        if let Some(hz) = self.downsample_hz {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(bad("downsample_hz", "must be positive"));
            }
        }
        Ok(self)
    }

    /// Parses a flat `key = value` file. Every key written by
    /// [`PipelineConfig::to_text`] is required except `downsample_hz` and
    /// `sensor.mounts`. `mode` may be omitted when `mode_hint` is given.
    pub fn parse(text: &str, path: &Path, mode_hint: Option<Mode>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::malformed(path, format!("line {}: expected key = value", n + 1)));
            };
            let key = k.trim().to_string();
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidConfigValue {
                    key,
                    reason: "given more than once".into(),
                });
            }
        }
        for key in entries.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::UnknownConfigKey(key.clone()));
            }
        }
        let mut e = Entries(entries);

        let mode = match (e.optional::<Mode>("mode")?, mode_hint) {
            (Some(m), Some(h)) if m != h => {
                return Err(Error::InvalidConfigValue {
                    key: "mode".into(),
                    reason: format!("file says {m} but {h} was requested"),
                })
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => return Err(Error::MissingConfigKey("mode".into())),
        };

        let scanning_range_sigma = match e.required::<String>("preprocess.scanning_range_sigma")?.as_str() {
            "resolution" => None,
            v => Some(parse_value::<f64>("preprocess.scanning_range_sigma", v)?),
        };
        let preprocess = PreprocessConfig {
            threshold: e.required("preprocess.threshold")?,
            max_range_scanning: e.required("preprocess.max_range_scanning")?,
            max_range_automotive: e.required("preprocess.max_range_automotive")?,
            ransac_inlier_threshold: e.required("preprocess.ransac_inlier_threshold")?,
            ransac_iterations: e.required("preprocess.ransac_iterations")?,
            ransac_min_inlier_fraction: e.required("preprocess.ransac_min_inlier_fraction")?,
            automotive_accuracy: MeasurementAccuracy {
                range_sigma: e.required("preprocess.automotive_range_sigma")?,
                azimuth_sigma: e.required::<f64>("preprocess.automotive_azimuth_sigma_deg")?.to_radians(),
            },
            scanning_range_sigma,
            scanning_azimuth_sigma: e.required::<f64>("preprocess.scanning_azimuth_sigma_deg")?.to_radians(),
        };
        let ndt = NdtConfig {
            grid_size: e.required("ndt.grid_size")?,
            shift_s: e.required("ndt.shift_s")?,
            min_points_per_cell: e.required("ndt.min_points_per_cell")?,
            cov_condition_cap: e.required("ndt.cov_condition_cap")?,
            probabilistic: e.required("ndt.probabilistic")?,
        };
        let matching = MatchConfig {
            max_newton_iterations: e.required("match.max_newton_iterations")?,
            convergence_epsilon: e.required("match.convergence_epsilon")?,
            max_step_halvings: e.required("match.max_step_halvings")?,
            max_acceleration: e.required("match.max_acceleration")?,
            grid_escalation_step: e.required("match.grid_escalation_step")?,
            grid_ceiling: e.required("match.grid_ceiling")?,
            shift_halvings_max: e.required("match.shift_halvings_max")?,
            low_speed_grid: e.required("match.low_speed_grid")?,
            low_speed_threshold: e.required("match.low_speed_threshold")?,
            uncertainty_weighting: e.required("match.uncertainty_weighting")?,
            max_translation_step_cells: e.required("match.max_translation_step_cells")?,
            max_rotation_step: e.required("match.max_rotation_step")?,
        };
        let sensor_mounts = match e.optional::<String>("sensor.mounts")? {
            Some(text) => parse_mounts(&text)?,
            None => Vec::new(),
        };
        PipelineConfig {
            mode,
            preprocess,
            ndt,
            matching,
            submap_n: e.required("submap_n")?,
            sensor_mounts,
            downsample_hz: e.optional("downsample_hz")?,
            rng_seed: e.required("rng_seed")?,
        }
        .validate()
    }

    pub fn load(path: impl AsRef<Path>, mode_hint: Option<Mode>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, mode_hint)
    }

    /// Writes every key in the format accepted by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.preprocess;
        let m = &self.matching;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("mode", self.mode.to_string());
        kv("submap_n", self.submap_n.to_string());
        kv("rng_seed", self.rng_seed.to_string());
        if let Some(hz) = self.downsample_hz {
            kv("downsample_hz", hz.to_string());
        }
        if !self.sensor_mounts.is_empty() {
            let mounts: Vec<String> = self
                .sensor_mounts
                .iter()
                .map(|m| format!("{} {} {}", m.x, m.y, m.theta.to_degrees()))
                .collect();
            kv("sensor.mounts", mounts.join("; "));
        }
        kv("preprocess.threshold", p.threshold.to_string());
        kv("preprocess.max_range_scanning", p.max_range_scanning.to_string());
        kv("preprocess.max_range_automotive", p.max_range_automotive.to_string());
        kv("preprocess.ransac_inlier_threshold", p.ransac_inlier_threshold.to_string());
        kv("preprocess.ransac_iterations", p.ransac_iterations.to_string());
        kv("preprocess.ransac_min_inlier_fraction", p.ransac_min_inlier_fraction.to_string());
        kv("preprocess.automotive_range_sigma", p.automotive_accuracy.range_sigma.to_string());
        kv(
            "preprocess.automotive_azimuth_sigma_deg",
            p.automotive_accuracy.azimuth_sigma.to_degrees().to_string(),
        );
        kv(
            "preprocess.scanning_range_sigma",
            p.scanning_range_sigma.map_or("resolution".to_string(), |v| v.to_string()),
        );
        kv("preprocess.scanning_azimuth_sigma_deg", p.scanning_azimuth_sigma.to_degrees().to_string());
        kv("ndt.grid_size", self.ndt.grid_size.to_string());
        kv("ndt.shift_s", self.ndt.shift_s.to_string());
        kv("ndt.min_points_per_cell", self.ndt.min_points_per_cell.to_string());
        kv("ndt.cov_condition_cap", self.ndt.cov_condition_cap.to_string());
        kv("ndt.probabilistic", self.ndt.probabilistic.to_string());
        kv("match.max_newton_iterations", m.max_newton_iterations.to_string());
        kv("match.convergence_epsilon", m.convergence_epsilon.to_string());
        kv("match.max_step_halvings", m.max_step_halvings.to_string());
        kv("match.max_acceleration", m.max_acceleration.to_string());
        kv("match.grid_escalation_step", m.grid_escalation_step.to_string());
        kv("match.grid_ceiling", m.grid_ceiling.to_string());
        kv("match.shift_halvings_max", m.shift_halvings_max.to_string());
        kv("match.low_speed_grid", m.low_speed_grid.to_string());
        kv("match.low_speed_threshold", m.low_speed_threshold.to_string());
        kv("match.uncertainty_weighting", m.uncertainty_weighting.to_string());
        kv("match.max_translation_step_cells", m.max_translation_step_cells.to_string());
        kv("match.max_rotation_step", m.max_rotation_step.to_string());
        out
    }
}

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "submap_n",
    "rng_seed",
    "downsample_hz",
    "sensor.mounts",
    "preprocess.threshold",
    "preprocess.max_range_scanning",
    "preprocess.max_range_automotive",
    "preprocess.ransac_inlier_threshold",
    "preprocess.ransac_iterations",
    "preprocess.ransac_min_inlier_fraction",
    "preprocess.automotive_range_sigma",
    "preprocess.automotive_azimuth_sigma_deg",
    "preprocess.scanning_range_sigma",
    "preprocess.scanning_azimuth_sigma_deg",
    "ndt.grid_size",
    "ndt.shift_s",
    "ndt.min_points_per_cell",
    "ndt.cov_condition_cap",
    "ndt.probabilistic",
    "match.max_newton_iterations",
    "match.convergence_epsilon",
    "match.max_step_halvings",
    "match.max_acceleration",
    "match.grid_escalation_step",
    "match.grid_ceiling",
    "match.shift_halvings_max",
    "match.low_speed_grid",
    "match.low_speed_threshold",
    "match.uncertainty_weighting",
    "match.max_translation_step_cells",
    "match.max_rotation_step",
];

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.0.remove(key).map(|v| parse_value(key, &v)).transpose()
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.optional(key)?
            .ok_or_else(|| Error::MissingConfigKey(key.to_string()))
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidConfigValue {
        key: key.into(),
        reason: format!("cannot parse {v:?}"),
    })
}

/// `"x y theta_deg; x y theta_deg; ..."`
fn parse_mounts(text: &str) -> Result<Vec<Pose2>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|m| {
            let v: Vec<f64> = m
                .split_whitespace()
                .map(|f| parse_value("sensor.mounts", f))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::InvalidConfigValue {
                    key: "sensor.mounts".into(),
                    reason: format!("expected \"x y theta_deg\", got {m:?}"),
                });
            }
            Ok(Pose2::new(v[0], v[1], v[2].to_radians()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OdometryStats {
    pub frames: usize,
    /// Total grid enlargements over all frames.
    pub escalations: usize,
    pub shift_halvings: usize,
    /// Frames that fell back to the motion prediction.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryOutput {
    pub trajectory: Trajectory,
    /// One entry per scan after the first.
    pub per_frame: Vec<MatchResult>,
    pub stats: OdometryStats,
}

/// One line of the JSON-lines frame log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub frame: usize,
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grid_size_used: f64,
    pub shift_used: f64,
    pub failure_reason: FailureReason,
    pub escalations: usize,
    pub shift_halvings: usize,
}

impl FrameLog {
    pub fn new(frame: usize, timestamp: f64, r: &MatchResult) -> Self {
        Self {
            frame,
            timestamp,
            x: r.relative_pose.x,
            y: r.relative_pose.y,
            theta: r.relative_pose.theta,
            score: r.score,
            iterations: r.iterations,
            converged: r.converged,
            grid_size_used: r.grid_size_used,
            shift_used: r.shift_used,
            failure_reason: r.failure_reason,
            escalations: r.escalations,
            shift_halvings: r.shift_halvings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame log serializes")
    }
}

impl OdometryOutput {
    pub fn frame_logs(&self) -> Vec<FrameLog> {
        self.per_frame
            .iter()
            .enumerate()
            .map(|(i, r)| FrameLog::new(i + 1, self.trajectory.stamps[i + 1], r))
            .collect()
    }

    /// The frame log as JSON lines, newline terminated.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.frame_logs() {
            out.push_str(&entry.to_json());
            out.push('\n');
        }
        out
    }
}

/// Indices kept by the greedy rule: the first stamp, then every stamp at
/// least `1 / target_hz` after the last kept one. Gaps short of the period by
/// less than 1 ns count as a full period so that a stream at exactly the
/// target rate survives rounding.
pub fn downsample_indices(stamps: &[f64], target_hz: f64) -> Vec<usize> {
    let period = 1.0 / target_hz - 1e-9;
    let mut kept: Vec<usize> = Vec::new();
    for (i, &t) in stamps.iter().enumerate() {
        match kept.last() {
            Some(&j) if t - stamps[j] < period => {}
            _ => kept.push(i),
        }
    }
    kept
}

pub fn downsample(scans: Vec<Scan>, target_hz: f64) -> Vec<Scan> {
    let stamps: Vec<f64> = scans.iter().map(Scan::timestamp).collect();
    let keep = downsample_indices(&stamps, target_hz);
    let mut keep = keep.into_iter().peekable();
    scans
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| {
            if keep.peek() == Some(&i) {
                keep.next();
                Some(s)
            } else {
                None
            }
        })
        .collect()
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Constant-velocity extrapolation of a relative motion over a new interval.
fn rescale_motion(motion: &Pose2, from_dt: f64, to_dt: f64) -> Pose2 {
    Pose2::exp(&(motion.log() * (to_dt / from_dt)))
}

fn time_step(scans: &[Scan], k: usize) -> Result<f64> {
    let dt = scans[k].timestamp() - scans[k - 1].timestamp();
    if dt > 0.0 {
        Ok(dt)
    } else {
        Err(Error::NonMonotonicTime {
            path: format!("scan {k}").into(),
            timestamp: scans[k].timestamp(),
        })
    }
}

/// Runs the odometry loop over a scan sequence.
///
/// Scan `k` is matched against the map of scan `k - 1` (scanning) or of the
/// submap ending at scan `k - 1` (automotive), and `pose(k) = pose(k-1) ⊕
/// relative`. Failed matches fall back to the motion prediction.
pub fn run_odometry(scans: &[Scan], cfg: &PipelineConfig) -> Result<OdometryOutput> {
    let cfg = cfg.clone().validate()?;
    let owned;
    let scans = match cfg.downsample_hz {
        Some(hz) => {
            owned = downsample(scans.to_vec(), hz);
            &owned[..]
        }
        None => scans,
    };
    if scans.len() < 2 {
        return Err(Error::InsufficientInput(format!(
            "odometry needs at least 2 scans, got {}",
            scans.len()
        )));
    }
    let per_frame = match cfg.mode {
        Mode::Scanning => run_scanning(scans, &cfg)?,
        Mode::Automotive => run_automotive(scans, &cfg)?,
    };
    let mut trajectory = Trajectory::new();
    let mut pose = Pose2::identity();
    trajectory.push(scans[0].timestamp(), pose);
    let mut stats = OdometryStats {
        frames: scans.len(),
        ..Default::default()
    };
    for (k, r) in per_frame.iter().enumerate() {
        pose = pose.compose(&r.relative_pose);
        trajectory.push(scans[k + 1].timestamp(), pose);
        stats.escalations += r.escalations;
        stats.shift_halvings += r.shift_halvings;
        if r.failure_reason == FailureReason::MotionPrior {
            stats.fallbacks += 1;
        }
    }
    Ok(OdometryOutput {
        trajectory,
        per_frame,
        stats,
    })
}

fn wrong_kind(k: usize, mode: Mode) -> Error {
    Error::InvalidArgument(format!("scan {k} is not a {mode} radar scan"))
}

fn run_scanning(scans: &[Scan], cfg: &PipelineConfig) -> Result<Vec<MatchResult>> {
    let points: Vec<Vec<WeightedPoint>> = scans
        .iter()
        .enumerate()
        .map(|(k, s)| match s {
            Scan::Polar(p) => Ok(threshold_polar(p, &cfg.preprocess)
                .points
                .iter()
                .map(WeightedPoint::from)
                .collect()),
            Scan::Points(_) => Err(wrong_kind(k, Mode::Scanning)),
        })
        .collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(scans.len() - 1);
    let mut previous: Option<(Pose2, f64)> = None;
    for k in 1..scans.len() {
        let dt = time_step(scans, k)?;
        let predicted = previous.map(|(m, pdt)| rescale_motion(&m, pdt, dt));
        let prior = MotionPrior {
            predicted,
            prev_speed: previous.map(|(m, pdt)| m.translation_norm() / pdt),
            dt,
        };
        let reference = &points[k - 1];
        let builder = |g: f64, s: f64| {
            build_ndt_map_from_points(
                reference,
                &NdtConfig {
                    grid_size: g,
                    shift_s: s,
                    ..cfg.ndt.clone()
                },
            )
        };
        let r = match_with_escalation(
            builder,
            &points[k],
            predicted.unwrap_or_default(),
            &prior,
            cfg.ndt.grid_size,
            cfg.ndt.shift_s,
            &cfg.matching,
        );
        previous = Some((r.relative_pose, dt));
        results.push(r);
    }
    Ok(results)
}

/// Ego-velocity plus Doppler filtered, covariance annotated detections.
fn prepare_automotive(scan: &PointScan, k: usize, cfg: &PipelineConfig) -> Result<(EgoVelocityEstimate, PointScan)> {
    let pre = &cfg.preprocess;
    let ego = match estimate_ego_velocity(scan, &cfg.sensor_mounts, pre, frame_seed(cfg.rng_seed, k)) {
        Ok(e) => e,
        Err(Error::InsufficientDoppler(_)) => EgoVelocityEstimate::invalid(),
        Err(e) => return Err(e),
    };
    let mut filtered = if ego.valid {
        gate_and_filter_automotive(scan, &ego, &cfg.sensor_mounts, pre)
    } else {
        PointScan::new(
            scan.timestamp,
            scan.points
                .iter()
                .filter(|p| p.range <= pre.max_range_automotive)
                .copied()
                .collect(),
        )
    };
    filtered.assign_covariances(&pre.automotive_accuracy, &cfg.sensor_mounts);
    Ok((ego, filtered))
}

fn run_automotive(scans: &[Scan], cfg: &PipelineConfig) -> Result<Vec<MatchResult>> {
    let mut egos = Vec::with_capacity(scans.len());
    let mut filtered = Vec::with_capacity(scans.len());
    for (k, s) in scans.iter().enumerate() {
        let Scan::Points(p) = s else {
            return Err(wrong_kind(k, Mode::Automotive));
        };
        let (ego, f) = prepare_automotive(p, k, cfg)?;
        egos.push(ego);
        filtered.push(f);
    }

    let mut motions: Vec<(Pose2, Covariance3)> = Vec::with_capacity(scans.len() - 1);
    let mut results = Vec::with_capacity(scans.len() - 1);
    let mut previous: Option<(Pose2, f64)> = None;
    for k in 1..scans.len() {
        let dt = time_step(scans, k)?;
        let doppler = integrate_velocity(&egos[k - 1], dt).ok();
        let predicted = doppler
            .map(|(p, _)| p)
            .or_else(|| previous.map(|(m, pdt)| rescale_motion(&m, pdt, dt)));
        let prev_speed = if egos[k - 1].valid {
            Some(egos[k - 1].speed())
        } else {
            previous.map(|(m, pdt)| m.translation_norm() / pdt)
        };
        let prior = MotionPrior {
            predicted,
            prev_speed,
            dt,
        };

        let first = k.saturating_sub(cfg.submap_n);
        let submap = build_submap(&filtered[first..k], &motions[first..k - 1], cfg.submap_n)?;
        let builder = |g: f64, s: f64| {
            build_ndt_map(
                &submap,
                &NdtConfig {
                    grid_size: g,
                    shift_s: s,
                    ..cfg.ndt.clone()
                },
            )
        };
        let current: Vec<WeightedPoint> = filtered[k].points.iter().map(WeightedPoint::from).collect();
        let r = match_with_escalation(
            builder,
            &current,
            predicted.unwrap_or_default(),
            &prior,
            cfg.ndt.grid_size,
            cfg.ndt.shift_s,
            &cfg.matching,
        );
        let motion_cov = doppler
            .map(|(_, c)| c)
            .or_else(|| motions.last().map(|m| m.1))
            .unwrap_or_else(Covariance3::zeros);
        motions.push((r.relative_pose, motion_cov));
        previous = Some((r.relative_pose, dt));
        results.push(r);
    }
    Ok(results)
}
