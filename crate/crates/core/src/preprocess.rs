//! Scan preprocessing: power thresholding of polar images and Doppler based
//! outlier rejection for automotive detections.

use crate::egomotion::{predicted_radial_velocity, EgoVelocityEstimate};
use crate::geometry::Pose2;
use crate::ingest::{resolve_mount, MeasurementAccuracy, PointScan, PolarScan, RadarPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Power threshold for scanning radar, in [0, 1].
    pub threshold: f64,
    /// [m]
    pub max_range_scanning: f64,
    /// [m]
    pub max_range_automotive: f64,
    /// [m/s]
    pub ransac_inlier_threshold: f64,
    pub ransac_iterations: usize,
    pub ransac_min_inlier_fraction: f64,
    pub automotive_accuracy: MeasurementAccuracy,
    /// Range sigma for scanning radar; `None` uses the range resolution.
    pub scanning_range_sigma: Option<f64>,
    /// [rad]
    pub scanning_azimuth_sigma: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            threshold: 0.333,
            max_range_scanning: 62.5,
            max_range_automotive: 150.0,
            ransac_inlier_threshold: 0.2,
            ransac_iterations: 200,
            ransac_min_inlier_fraction: 0.3,
            automotive_accuracy: MeasurementAccuracy::automotive(),
            scanning_range_sigma: None,
            scanning_azimuth_sigma: 0.9_f64.to_radians(),
        }
    }
}

impl PreprocessConfig {
    pub fn scanning_accuracy(&self, range_resolution: f64) -> MeasurementAccuracy {
        MeasurementAccuracy {
            range_sigma: self.scanning_range_sigma.unwrap_or(range_resolution),
            azimuth_sigma: self.scanning_azimuth_sigma,
        }
    }
}

/// Keeps every bin with power above `cfg.threshold` within
/// `cfg.max_range_scanning`, placed at the bin-centre range.
pub fn threshold_polar(scan: &PolarScan, cfg: &PreprocessConfig) -> PointScan {
    let accuracy = cfg.scanning_accuracy(scan.range_resolution);
    let origin = Pose2::identity();
    let max_bins = scan.range_bin_count.min(
        ((cfg.max_range_scanning / scan.range_resolution - 0.5).floor() + 1.0).max(0.0) as usize,
    );
    let mut points = Vec::new();
    for a in 0..scan.azimuth_count {
        let azimuth = scan.azimuth(a);
        for (b, &p) in scan.row(a)[..max_bins].iter().enumerate() {
            let power = f64::from(p);
            if power <= cfg.threshold {
                continue;
            }
            let range = scan.bin_range(b);
            if range > cfg.max_range_scanning {
                continue;
            }
            let mut point = RadarPoint::from_polar(&origin, range, azimuth, &accuracy);
            point.power = Some(power);
            points.push(point);
        }
    }
    PointScan::new(scan.timestamp, points)
}

/// Range gate plus Doppler consistency with the ego-velocity estimate.
/// Points without a radial velocity only pass the range gate.
pub fn gate_and_filter_automotive(
    scan: &PointScan,
    ego: &EgoVelocityEstimate,
    mounts: &[Pose2],
    cfg: &PreprocessConfig,
) -> PointScan {
    let identity = [Pose2::identity()];
    let mounts = if mounts.is_empty() { &identity[..] } else { mounts };
    let twist = ego.twist();
    let points = scan
        .points
        .iter()
        .filter(|p| p.range <= cfg.max_range_automotive)
        .filter(|p| match p.radial_velocity {
            Some(vr) => {
                let mount = &mounts[resolve_mount(p, mounts)];
                (vr - predicted_radial_velocity(p, mount, &twist)).abs()
                    <= cfg.ransac_inlier_threshold
            }
            None => true,
        })
        .copied()
        .collect();
    PointScan::new(scan.timestamp, points)
}
