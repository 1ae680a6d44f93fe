//! Scan and trajectory types, their on-disk formats, and the synthetic scene
//! generator.

pub mod convert;
mod format;
pub mod sequence;
pub mod synth;
pub mod world;

pub use format::{
    load_point_scan, load_polar_scan, load_trajectory, read_point_scan, read_polar_scan,
    read_trajectory, save_point_scan, save_polar_scan, save_trajectory, write_point_scan,
    write_polar_scan, write_trajectory, POLAR_MAGIC,
};
pub use sequence::{load_scan_dir, save_sequence};
pub use synth::{synthesize_scene, NoiseSpec, SensorSpec, SynthOptions, SyntheticSequence};
pub use world::{Landmark, WorldSpec};

use crate::geometry::{polar_covariance, Mat2, Pose2, Vec2};

/// Range/azimuth accuracy of a radar, used to derive per-point covariances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementAccuracy {
    /// 1-sigma range error [m].
    pub range_sigma: f64,
    /// 1-sigma azimuth error [rad].
    pub azimuth_sigma: f64,
}

impl MeasurementAccuracy {
    pub const fn automotive() -> Self {
        Self {
            range_sigma: 0.25,
            azimuth_sigma: 0.5 * std::f64::consts::PI / 180.0,
        }
    }

    pub fn scanning(range_resolution: f64) -> Self {
        Self {
            range_sigma: range_resolution,
            azimuth_sigma: 0.9 * std::f64::consts::PI / 180.0,
        }
    }
}

/// Dense azimuth x range power image from a scanning radar.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    pub timestamp: f64,
    pub azimuth_count: usize,
    pub range_bin_count: usize,
    /// [m / bin]
    pub range_resolution: f64,
    /// Azimuth-major powers in [0, 1].
    pub power: Vec<f32>,
}

impl PolarScan {
    pub fn zeros(timestamp: f64, azimuth_count: usize, range_bin_count: usize, range_resolution: f64) -> Self {
        Self {
            timestamp,
            azimuth_count,
            range_bin_count,
            range_resolution,
            power: vec![0.0; azimuth_count * range_bin_count],
        }
    }

    pub fn azimuth(&self, index: usize) -> f64 {
        2.0 * std::f64::consts::PI * index as f64 / self.azimuth_count as f64
    }

    /// Range of the centre of a bin.
    pub fn bin_range(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.range_resolution
    }

    pub fn get(&self, azimuth: usize, bin: usize) -> f32 {
        self.power[azimuth * self.range_bin_count + bin]
    }

    pub fn get_mut(&mut self, azimuth: usize, bin: usize) -> &mut f32 {
        &mut self.power[azimuth * self.range_bin_count + bin]
    }

    pub fn row(&self, azimuth: usize) -> &[f32] {
        let start = azimuth * self.range_bin_count;
        &self.power[start..start + self.range_bin_count]
    }
}

/// One radar detection in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub position: Vec2,
    /// Doppler radial velocity [m/s]; absent for scanning radar.
    pub radial_velocity: Option<f64>,
    /// Returned power in [0, 1]; absent for automotive radar.
    pub power: Option<f64>,
    /// Range in the sensor frame [m].
    pub range: f64,
    /// Azimuth in the sensor frame [rad].
    pub azimuth: f64,
    pub cov: Mat2,
}

impl RadarPoint {
    /// Point measured by a sensor at `mount`, with covariance from `accuracy`.
    pub fn from_polar(
        mount: &Pose2,
        range: f64,
        azimuth: f64,
        accuracy: &MeasurementAccuracy,
    ) -> Self {
        let local = Vec2::new(range * azimuth.cos(), range * azimuth.sin());
        Self {
            position: mount.transform_point(&local),
            radial_velocity: None,
            power: None,
            range,
            azimuth,
            cov: polar_covariance(
                range,
                azimuth + mount.theta,
                accuracy.range_sigma,
                accuracy.azimuth_sigma,
            ),
        }
    }
}

/// Index of the mount whose polar reconstruction `(range, azimuth)` best
/// reproduces the point's vehicle-frame position.
pub fn resolve_mount(point: &RadarPoint, mounts: &[Pose2]) -> usize {
    if mounts.len() <= 1 {
        return 0;
    }
    let local = Vec2::new(
        point.range * point.azimuth.cos(),
        point.range * point.azimuth.sin(),
    );
    mounts
        .iter()
        .enumerate()
        .map(|(i, m)| (i, (m.transform_point(&local) - point.position).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Timestamped set of detections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointScan {
    pub timestamp: f64,
    pub points: Vec<RadarPoint>,
}

impl PointScan {
    pub fn new(timestamp: f64, points: Vec<RadarPoint>) -> Self {
        Self { timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Recomputes every point covariance from its polar coordinates.
    pub fn assign_covariances(&mut self, accuracy: &MeasurementAccuracy, mounts: &[Pose2]) {
        for p in &mut self.points {
            let mount_theta = mounts.get(resolve_mount(p, mounts)).map_or(0.0, |m| m.theta);
            p.cov = polar_covariance(
                p.range,
                p.azimuth + mount_theta,
                accuracy.range_sigma,
                accuracy.azimuth_sigma,
            );
        }
    }
}

/// Either kind of radar scan.
#[derive(Debug, Clone, PartialEq)]
pub enum Scan {
    Polar(PolarScan),
    Points(PointScan),
}

impl Scan {
    pub fn timestamp(&self) -> f64 {
        match self {
            Scan::Polar(s) => s.timestamp,
            Scan::Points(s) => s.timestamp,
        }
    }
}

/// Timestamped poses, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub stamps: Vec<f64>,
    pub poses: Vec<Pose2>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(stamps: Vec<f64>, poses: Vec<Pose2>) -> Self {
        assert_eq!(stamps.len(), poses.len());
        Self { stamps, poses }
    }

    pub fn push(&mut self, stamp: f64, pose: Pose2) {
        self.stamps.push(stamp);
        self.poses.push(pose);
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn is_monotonic(&self) -> bool {
        self.stamps.windows(2).all(|w| w[1] > w[0])
    }

    /// Total travelled distance along the poses.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].translation() - w[0].translation()).norm())
            .sum()
    }

    /// Applies `g ⊕ pose` to every pose.
    pub fn transformed(&self, g: &Pose2) -> Trajectory {
        Trajectory {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| g.compose(p)).collect(),
        }
    }
}
