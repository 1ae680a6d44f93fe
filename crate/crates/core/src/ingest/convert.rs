//! Converters from already-decoded dataset records to the scan types.
//!
//! Reading the raw archives (PNG radar images, `.pcd` files, the nuScenes
//! database) is left to the caller; these functions only map decoded values.
//!
//! Oxford Radar RobotCar: each row of a decoded radar PNG holds an 8 byte
//! little-endian timestamp [µs], a 2 byte azimuth encoder reading, one valid
//! byte and then 8 bit power per range bin. Power is normalized to [0, 1] by
//! dividing by 255. Rows are assumed to be evenly spaced over 360°, as the
//! polar format requires; the encoder readings are not used.
//!
//! nuScenes: the five radars are fused into one scan in the vehicle frame.
//! Sweep timestamp policy: the fused scan takes the timestamp of the first
//! sweep passed in (the reference sensor). No compensation is applied for the
//! tens of milliseconds between the sensors' sweeps.

use super::{MeasurementAccuracy, PointScan, PolarScan, RadarPoint};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Metadata bytes at the start of every Oxford radar row.
pub const OXFORD_META_BYTES: usize = 11;
/// Range resolution of the Oxford Navtech CTS350-X [m / bin].
pub const OXFORD_RANGE_RESOLUTION: f64 = 0.0438;

/// Builds a polar scan from the rows of a decoded Oxford radar image. The
/// timestamp of the first row becomes the scan timestamp [s].
pub fn oxford_polar_scan(rows: &[&[u8]], range_resolution: f64) -> Result<PolarScan> {
    let bad = |reason: String| Error::malformed("<oxford radar image>", reason);
    let first = rows.first().ok_or_else(|| bad("no rows".into()))?;
    if first.len() <= OXFORD_META_BYTES {
        return Err(bad(format!("row of {} bytes has no power bins", first.len())));
    }
    if !(range_resolution > 0.0) {
        return Err(Error::InvalidArgument(format!("range resolution {range_resolution}")));
    }
    let bins = first.len() - OXFORD_META_BYTES;
    let mut stamp = [0u8; 8];
    stamp.copy_from_slice(&first[..8]);
    let timestamp = i64::from_le_bytes(stamp) as f64 * 1e-6;
    let mut scan = PolarScan::zeros(timestamp, rows.len(), bins, range_resolution);
    for (a, row) in rows.iter().enumerate() {
        if row.len() != first.len() {
            return Err(bad(format!("row {a} has {} bytes, expected {}", row.len(), first.len())));
        }
        for (b, &v) in row[OXFORD_META_BYTES..].iter().enumerate() {
            *scan.get_mut(a, b) = v as f32 / 255.0;
        }
    }
    Ok(scan)
}

/// One nuScenes radar detection in its sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuscenesDetection {
    /// [m]
    pub x: f64,
    /// [m]
    pub y: f64,
    /// Raw (not ego-compensated) velocity [m/s].
    pub vx: f64,
    pub vy: f64,
}

/// One sweep of one radar.
#[derive(Debug, Clone, PartialEq)]
pub struct NuscenesSweep {
    /// Sensor pose in the vehicle frame.
    pub mount: Pose2,
    /// [s]
    pub timestamp: f64,
    pub detections: Vec<NuscenesDetection>,
}

/// Fuses the sweeps of several radars into one automotive point scan.
///
/// The radial velocity is the raw velocity projected on the line of sight,
/// positive away from the sensor.
pub fn fuse_nuscenes_sweeps(sweeps: &[NuscenesSweep], accuracy: &MeasurementAccuracy) -> Result<PointScan> {
    let reference = sweeps
        .first()
        .ok_or_else(|| Error::InsufficientInput("no radar sweeps".into()))?;
    let mut points = Vec::new();
    for sweep in sweeps {
        for d in &sweep.detections {
            let range = d.x.hypot(d.y);
            if range == 0.0 {
                continue;
            }
            let azimuth = d.y.atan2(d.x);
            let mut p = RadarPoint::from_polar(&sweep.mount, range, azimuth, accuracy);
            p.radial_velocity = Some((d.x * d.vx + d.y * d.vy) / range);
            points.push(p);
        }
    }
    Ok(PointScan::new(reference.timestamp, points))
}
