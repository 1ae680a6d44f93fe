//! Trajectory error metrics: KITTI segment errors, per-meter errors and
//! frame-by-frame errors.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::ingest::Trajectory;

/// Segment lengths of the KITTI protocol [m].
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

pub const DEFAULT_TIME_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    /// Largest timestamp difference for nearest-neighbour association [s].
    pub tolerance: f64,
    /// Interpolate ground truth at the estimate stamps instead.
    pub interpolate: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TIME_TOLERANCE,
            interpolate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentError {
    /// [m]
    pub length: f64,
    /// [%]
    pub translational_percent: f64,
    /// [deg/m]
    pub rotational_deg_per_m: f64,
    /// Number of segments averaged.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean over every evaluated segment [%].
    pub translational_error_percent: f64,
    /// [deg/m]
    pub rotational_error_deg_per_m: f64,
    /// [m/frame]
    pub per_frame_translation_m: Vec<f64>,
    /// [deg/frame]
    pub per_frame_rotation_deg: Vec<f64>,
    pub segment_table: Vec<SegmentError>,
}

impl EvalReport {
    pub fn mean_frame_translation(&self) -> f64 {
        mean(&self.per_frame_translation_m)
    }

    pub fn mean_frame_rotation(&self) -> f64 {
        mean(&self.per_frame_rotation_deg)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>10} {:>12} {:>14} {:>8}", "length_m", "trans_%", "rot_deg_per_m", "count");
        for row in &self.segment_table {
            let _ = writeln!(
                s,
                "{:>10.1} {:>12.6} {:>14.6} {:>8}",
                row.length, row.translational_percent, row.rotational_deg_per_m, row.count
            );
        }
        let _ = writeln!(
            s,
            "{:>10} {:>12.6} {:>14.6}",
            "mean", self.translational_error_percent, self.rotational_error_deg_per_m
        );
        let _ = writeln!(
            s,
            "frame errors: {:.6} m/frame, {:.6} deg/frame",
            self.mean_frame_translation(),
            self.mean_frame_rotation()
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("length_m,translational_percent,rotational_deg_per_m,count\n");
        for row in &self.segment_table {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                row.length, row.translational_percent, row.rotational_deg_per_m, row.count
            );
        }
        let _ = writeln!(
            s,
            "mean,{},{},{}",
            self.translational_error_percent,
            self.rotational_error_deg_per_m,
            self.segment_table.iter().map(|r| r.count).sum::<usize>()
        );
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn interpolate(a: &Pose2, b: &Pose2, t: f64) -> Pose2 {
    a.compose(&Pose2::exp(&(a.between(b).log() * t)))
}

/// Pairs estimate poses with ground-truth poses by timestamp.
pub fn align(estimate: &Trajectory, ground_truth: &Trajectory, opts: &AlignOptions) -> Result<(Vec<Pose2>, Vec<Pose2>)> {
    if ground_truth.is_empty() || estimate.is_empty() {
        return Err(Error::TimeAlignmentFailure("empty trajectory".into()));
    }
    let gs = &ground_truth.stamps;
    let mut est = Vec::new();
    let mut gt = Vec::new();
    for (t, pose) in estimate.stamps.iter().zip(&estimate.poses) {
        // first ground-truth stamp >= t
        let hi = gs.partition_point(|s| s < t);
        let matched = if opts.interpolate {
            if hi < gs.len() && gs[hi] == *t {
                Some(ground_truth.poses[hi])
            } else if hi > 0 && hi < gs.len() {
                let f = (t - gs[hi - 1]) / (gs[hi] - gs[hi - 1]);
                Some(interpolate(&ground_truth.poses[hi - 1], &ground_truth.poses[hi], f))
            } else {
                None
            }
        } else {
            let candidates = [hi.checked_sub(1), (hi < gs.len()).then_some(hi)];
            candidates
                .into_iter()
                .flatten()
                .min_by(|&a, &b| (gs[a] - t).abs().total_cmp(&(gs[b] - t).abs()))
                .filter(|&i| (gs[i] - t).abs() <= opts.tolerance)
                .map(|i| ground_truth.poses[i])
        };
        if let Some(g) = matched {
            est.push(*pose);
            gt.push(g);
        }
    }
    if est.len() < 2 {
        return Err(Error::TimeAlignmentFailure(format!(
            "only {} of {} estimate poses have ground truth within {} s",
            est.len(),
            estimate.len(),
            opts.tolerance
        )));
    }
    Ok((est, gt))
}

fn cumulative_distance(poses: &[Pose2]) -> Vec<f64> {
    let mut d = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    d.push(0.0);
    for w in poses.windows(2) {
        acc += (w[1].translation() - w[0].translation()).norm();
        d.push(acc);
    }
    d
}

fn relative_error(est: &[Pose2], gt: &[Pose2], i: usize, j: usize) -> Pose2 {
    let gt_rel = gt[i].between(&gt[j]);
    let est_rel = est[i].between(&est[j]);
    gt_rel.inverse().compose(&est_rel)
}

struct SegmentSums {
    table: Vec<SegmentError>,
    /// Σ ‖t‖/L and Σ |θ|/L over every segment of every length.
    translation: f64,
    rotation: f64,
    count: usize,
}

fn segment_sums(est: &[Pose2], gt: &[Pose2], lengths: &[f64]) -> SegmentSums {
    let dist = cumulative_distance(gt);
    let mut sums = SegmentSums {
        table: Vec::new(),
        translation: 0.0,
        rotation: 0.0,
        count: 0,
    };
    for &len in lengths {
        let mut t_sum = 0.0;
        let mut r_sum = 0.0;
        let mut count = 0;
        let mut j = 0;
        for i in 0..gt.len() {
            // dist is non-decreasing, so the end index only moves forward
            j = j.max(i + 1);
            while j < gt.len() && dist[j] - dist[i] < len {
                j += 1;
            }
            if j >= gt.len() {
                break;
            }
            let e = relative_error(est, gt, i, j);
            let (t, r) = (e.translation_norm() / len, e.theta.abs() / len);
            t_sum += t;
            r_sum += r;
            sums.translation += t;
            sums.rotation += r;
            count += 1;
        }
        if count > 0 {
            sums.table.push(SegmentError {
                length: len,
                translational_percent: 100.0 * t_sum / count as f64,
                rotational_deg_per_m: (r_sum / count as f64).to_degrees(),
                count,
            });
            sums.count += count;
        }
    }
    sums
}

/// Segment errors for each length over aligned pose lists. Lengths with no
/// segment are left out of the table.
pub fn segment_errors(est: &[Pose2], gt: &[Pose2], lengths: &[f64]) -> Vec<SegmentError> {
    segment_sums(est, gt, lengths).table
}

/// Per consecutive pair: (translation [m], rotation [deg]) of the error between
/// estimated and true relative motion.
pub fn frame_error_lists(est: &[Pose2], gt: &[Pose2]) -> (Vec<f64>, Vec<f64>) {
    (0..gt.len().saturating_sub(1))
        .map(|i| {
            let e = relative_error(est, gt, i, i + 1);
            (e.translation_norm(), e.theta.abs().to_degrees())
        })
        .unzip()
}

fn report(est: &[Pose2], gt: &[Pose2], lengths: &[f64]) -> Result<EvalReport> {
    let sums = segment_sums(est, gt, lengths);
    if sums.count == 0 {
        return Err(Error::NoOverlap(lengths.iter().copied().fold(f64::INFINITY, f64::min)));
    }
    let (per_frame_translation_m, per_frame_rotation_deg) = frame_error_lists(est, gt);
    Ok(EvalReport {
        translational_error_percent: 100.0 * sums.translation / sums.count as f64,
        rotational_error_deg_per_m: (sums.rotation / sums.count as f64).to_degrees(),
        per_frame_translation_m,
        per_frame_rotation_deg,
        segment_table: sums.table,
    })
}

/// KITTI segment errors over 100 m to 800 m.
pub fn kitti_errors(estimate: &Trajectory, ground_truth: &Trajectory, opts: &AlignOptions) -> Result<EvalReport> {
    let (est, gt) = align(estimate, ground_truth, opts)?;
    report(&est, &gt, &KITTI_LENGTHS)
}

/// Segment errors with a custom set of lengths.
pub fn segment_report(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    lengths: &[f64],
    opts: &AlignOptions,
) -> Result<EvalReport> {
    let (est, gt) = align(estimate, ground_truth, opts)?;
    report(&est, &gt, lengths)
}

/// Mean error over 1 m segments: (percent, deg/m).
pub fn per_meter_error(estimate: &Trajectory, ground_truth: &Trajectory, opts: &AlignOptions) -> Result<(f64, f64)> {
    let r = segment_report(estimate, ground_truth, &[1.0], opts)?;
    Ok((r.translational_error_percent, r.rotational_error_deg_per_m))
}

/// Frame-by-frame errors [m/frame] and [deg/frame].
pub fn frame_errors(estimate: &Trajectory, ground_truth: &Trajectory, opts: &AlignOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let (est, gt) = align(estimate, ground_truth, opts)?;
    Ok(frame_error_lists(&est, &gt))
}
