//! Fixtures shared by the benchmarks: a street-like world, a gently curving
//! drive through it, and rendered scan sequences.

use radar_odom::geometry::Vec3;
use radar_odom::ingest::{synthesize_scene, Landmark, NoiseSpec, SynthOptions, SyntheticSequence, WorldSpec};
use radar_odom::preprocess::{threshold_polar, PreprocessConfig};
use radar_odom::{Mode, Pose2, Scan, Submap, Trajectory, Vec2, WeightedPoint};

pub fn street_world() -> WorldSpec {
    let mut l = Vec::new();
    for &(a, b, r) in &[
        ((-30.0, 12.0), (-5.0, 12.0), 0.8),
        ((0.0, 12.0), (30.0, 13.5), 0.75),
        ((35.0, 14.0), (70.0, 14.0), 0.7),
        ((-30.0, -10.0), (10.0, -10.0), 0.85),
        ((14.0, -10.0), (14.0, -25.0), 0.8),
        ((20.0, -11.0), (60.0, -9.0), 0.7),
        ((65.0, -20.0), (66.0, 25.0), 0.9),
    ] {
        l.push(Landmark::Wall {
            start: Vec2::new(a.0, a.1),
            end: Vec2::new(b.0, b.1),
            reflectivity: r,
        });
    }
    for &(x, y) in &[(5.0, 7.0), (12.0, -5.0), (22.0, 6.5), (31.0, -4.0), (40.0, 8.0), (47.0, -6.0)] {
        l.push(Landmark::Point {
            position: Vec2::new(x, y),
            reflectivity: 0.9,
        });
    }
    l.push(Landmark::Mover {
        position: Vec2::new(10.0, 3.0),
        velocity: Vec2::new(6.0, 0.0),
        reflectivity: 0.9,
    });
    WorldSpec::new(l)
}

/// `frames` poses `dt` seconds apart at `speed` m/s with a slow weave.
pub fn drive(frames: usize, dt: f64, speed: f64) -> Trajectory {
    let mut t = Trajectory::new();
    let mut pose = Pose2::identity();
    for k in 0..frames {
        t.push(k as f64 * dt, pose);
        let omega = 0.08 * (k as f64 * 0.15).sin();
        pose = pose.compose(&Pose2::exp(&Vec3::new(speed * dt, 0.0, omega * dt)));
    }
    t
}

pub fn sequence(mode: Mode, frames: usize) -> SyntheticSequence {
    let dt = match mode {
        Mode::Automotive => 0.1,
        Mode::Scanning => 0.25,
    };
    synthesize_scene(&street_world(), &drive(frames, dt, 6.0), &SynthOptions::new(mode, NoiseSpec::default()), 7)
        .expect("fixture world is not empty")
}

/// Thresholded points of two consecutive scanning frames.
pub fn scanning_pair() -> (Vec<WeightedPoint>, Vec<WeightedPoint>) {
    let seq = sequence(Mode::Scanning, 2);
    let cfg = PreprocessConfig::default();
    let mut points = seq.scans.iter().map(|s| match s {
        Scan::Polar(p) => Submap::from_scan(&threshold_polar(p, &cfg)).points,
        Scan::Points(p) => Submap::from_scan(p).points,
    });
    let reference = points.next().expect("two frames");
    let current = points.next().expect("two frames");
    (reference, current)
}
