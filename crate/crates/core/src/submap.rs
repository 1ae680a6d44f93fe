//! Probabilistic radar submap: the latest N scans stacked into the newest
//! scan's frame, each point carrying its propagated covariance.

use crate::error::{Error, Result};
use crate::geometry::{
    compose_with_covariance, inverse_with_covariance, propagate_point_covariance, Covariance3,
    Mat2, Pose2, Vec2,
};
use crate::ingest::{PointScan, RadarPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub position: Vec2,
    /// Returned power; absent for automotive radar.
    pub power: Option<f64>,
    pub cov: Mat2,
}

impl WeightedPoint {
    pub fn new(position: Vec2, power: Option<f64>, cov: Mat2) -> Self {
        Self {
            position,
            power,
            cov,
        }
    }

    /// Raw weight before power shifting: the power, or 1 when absent.
    pub fn weight(&self) -> f64 {
        self.power.unwrap_or(1.0)
    }
}

impl From<&RadarPoint> for WeightedPoint {
    fn from(p: &RadarPoint) -> Self {
        Self::new(p.position, p.power, p.cov)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub frame_timestamp: f64,
    pub points: Vec<WeightedPoint>,
    pub scan_count: usize,
}

impl Submap {
    /// A single scan as a submap.
    pub fn from_scan(scan: &PointScan) -> Self {
        Self {
            frame_timestamp: scan.timestamp,
            points: scan.points.iter().map(WeightedPoint::from).collect(),
            scan_count: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Stacks the newest `min(n, scans.len())` scans into the newest frame.
///
/// `motions[i]` is the pose of scan `i + 1` expressed in the frame of scan
/// `i`, with its covariance. Points are returned oldest scan first.
pub fn build_submap(scans: &[PointScan], motions: &[(Pose2, Covariance3)], n: usize) -> Result<Submap> {
    let Some(newest) = scans.last() else {
        return Err(Error::InsufficientInput("submap needs at least one scan".into()));
    };
    if motions.len() + 1 != scans.len() {
        return Err(Error::MotionCountMismatch {
            scans: scans.len(),
            expected: scans.len() - 1,
            got: motions.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("submap size must be at least 1".into()));
    }
    let used = n.min(scans.len());
    let last = scans.len() - 1;

    // Transform from scan `last - k` into the newest frame, for k = 0..used.
    let mut chain = Vec::with_capacity(used);
    let mut acc = (Pose2::identity(), Covariance3::zeros());
    chain.push(acc);
    for k in 1..used {
        let (m, m_cov) = &motions[last - k];
        let (inv, inv_cov) = inverse_with_covariance(m, m_cov);
        acc = compose_with_covariance(&acc.0, &acc.1, &inv, &inv_cov);
        chain.push(acc);
    }

    let mut points = Vec::new();
    for k in (0..used).rev() {
        let (pose, pose_cov) = &chain[k];
        for p in &scans[last - k].points {
            let position = pose.transform_point(&p.position);
            let cov = propagate_point_covariance(pose, pose_cov, &p.position, &p.cov);
            points.push(WeightedPoint::new(position, p.power, cov));
        }
    }
    Ok(Submap {
        frame_timestamp: newest.timestamp,
        points,
        scan_count: used,
    })
}
