//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 2 5`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use radar_odom::egomotion::estimate_ego_velocity;
use radar_odom::eval::{frame_errors, kitti_errors, per_meter_error, AlignOptions, KITTI_LENGTHS};
use radar_odom::geometry::{Mat2, Pose2, Vec2, Vec3};
use radar_odom::ingest::synth::SensorSpec;
use radar_odom::ingest::{
    synthesize_scene, write_trajectory, Landmark, MeasurementAccuracy, NoiseSpec, PointScan,
    RadarPoint, SynthOptions, Trajectory, WorldSpec,
};
use radar_odom::matcher::{
    match_with_escalation, ndt_match, FailureReason, MatchConfig, MatchResult, MotionPrior,
    ScoringPoints,
};
use radar_odom::ndt::{build_ndt_map_from_points, NdtConfig, NdtMap, LAYER_COUNT};
use radar_odom::pipeline::{run_odometry, FrameLog, Mode, PipelineConfig};
use radar_odom::preprocess::PreprocessConfig;
use radar_odom::WeightedPoint;

struct Outcome {
    pass: bool,
    skipped: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        skipped: false,
        detail: detail.into(),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "gradient/Hessian correctness", c1_derivatives),
        (2, "registration recovery", c2_registration),
        (3, "ego-velocity robustness", c3_ego_velocity),
        (4, "power-shift ablation direction", c4_power_shift),
        (5, "submap ablation direction", c5_submap),
        (6, "end-to-end drift", c6_drift),
        (7, "evaluation metric oracle equivalence", c7_eval_oracle),
        (8, "escalation ladder behavior", c8_escalation),
        (9, "determinism", c9_determinism),
        (10, "real-data stretch goal", c10_real_data),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {n} [{name}]: {} ({}; {secs:.1} s)",
            match (result.skipped, result.pass) {
                (true, _) => "SKIP",
                (false, true) => "PASS",
                (false, false) => "FAIL",
            },
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------- scenes

/// Clustered blobs and short line segments with random power.
fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<WeightedPoint> {
    let mut pts = Vec::new();
    while pts.len() < n {
        let c = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let dir = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(0.5..6.0);
        for _ in 0..rng.random_range(5..30) {
            let t = rng.random_range(-0.5..0.5) * len;
            let off = Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let p = c + Vec2::new(dir.cos(), dir.sin()) * t + off;
            let sd: f64 = rng.random_range(0.02..0.3);
            pts.push(WeightedPoint::new(p, Some(rng.random_range(0.3..1.0)), Mat2::identity() * sd * sd));
        }
    }
    pts
}

/// World-frame samples of random walls and posts.
fn dense_world(rng: &mut ChaCha8Rng) -> Vec<(Vec2, f64)> {
    let mut pts = Vec::new();
    for _ in 0..6 {
        let a = Vec2::new(rng.random_range(-28.0..28.0), rng.random_range(-28.0..28.0));
        let dir = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(6.0..20.0);
        let power = rng.random_range(0.5..1.0);
        let n = (len / 0.25) as usize;
        for k in 0..=n {
            let t = k as f64 * 0.25;
            pts.push((a + Vec2::new(dir.cos(), dir.sin()) * t, power));
        }
    }
    for _ in 0..15 {
        let c = Vec2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
        let power = rng.random_range(0.5..1.0);
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            pts.push((c + Vec2::new(a.cos(), a.sin()) * 0.2, power));
        }
    }
    pts
}

/// The world seen from `pose`, cropped to `range`.
fn observe(world: &[(Vec2, f64)], pose: &Pose2, range: f64) -> Vec<WeightedPoint> {
    let inv = pose.inverse();
    world
        .iter()
        .map(|(p, w)| (inv.transform_point(p), *w))
        .filter(|(p, _)| p.norm() <= range)
        .map(|(p, w)| WeightedPoint::new(p, Some(w), Mat2::identity() * 0.05 * 0.05))
        .collect()
}

fn map_with(points: &[WeightedPoint], g: f64, s: f64) -> NdtMap {
    build_ndt_map_from_points(
        points,
        &NdtConfig {
            grid_size: g,
            shift_s: s,
            ..NdtConfig::scanning()
        },
    )
    .expect("non-empty map")
}

/// Coarse-to-fine exhaustive search of the cost over (x, y, θ). Every level
/// scans a full lattice; the finest has 0.01 m / 0.05° spacing.
fn lattice_minimum(map: &NdtMap, scoring: &ScoringPoints, centre: Pose2, half: (f64, f64)) -> Pose2 {
    let levels = [(0.2, 1.0f64), (0.04, 0.2), (0.01, 0.05)];
    let mut best = centre;
    let mut half_t = half.0;
    let mut half_r = half.1.to_radians();
    for (step_t, step_deg) in levels {
        let step_r = step_deg.to_radians();
        let nt = (half_t / step_t).round() as i64;
        let nr = (half_r / step_r).round() as i64;
        let c = best;
        let mut best_cost = f64::INFINITY;
        for i in -nt..=nt {
            for j in -nt..=nt {
                for k in -nr..=nr {
                    let p = Pose2::new(
                        c.x + i as f64 * step_t,
                        c.y + j as f64 * step_t,
                        c.theta + k as f64 * step_r,
                    );
                    let cost = -scoring.score(map, &p);
                    if cost < best_cost {
                        best_cost = cost;
                        best = p;
                    }
                }
            }
        }
        half_t = 2.0 * step_t;
        half_r = 2.0 * step_r;
    }
    best
}

fn within(a: &Pose2, b: &Pose2, t: f64, r_deg: f64) -> bool {
    (a.x - b.x).abs() <= t && (a.y - b.y).abs() <= t && (a.theta - b.theta).abs() <= r_deg.to_radians()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- 1

fn cell_signature(map: &NdtMap, scoring_pts: &[WeightedPoint], pose: &Pose2) -> Vec<(i64, i64)> {
    scoring_pts
        .iter()
        .flat_map(|p| {
            let q = pose.transform_point(&p.position);
            (0..LAYER_COUNT).map(move |l| map.cell_index(l, &q))
        })
        .collect()
}

fn apply(pose: &Pose2, d: &Vec3) -> Pose2 {
    Pose2::new(pose.x + d[0], pose.y + d[1], pose.theta + d[2])
}

fn c1_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1FF);
    let steps = [1e-6, 1e-6, 1e-7];
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut failures = 0;
    let mut skipped = 0;
    let mut cases = 0;
    while cases < 100 {
        let pts = random_scene(&mut rng, 300);
        let g = rng.random_range(2.0..5.0);
        let s = rng.random_range(0.0..0.5);
        let map = map_with(&pts, g, s);
        let pose = Pose2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1));
        // differences across a cell boundary are not derivatives
        let sig = cell_signature(&map, &pts, &pose);
        let crosses = (0..3).any(|k| {
            let mut e = Vec3::zeros();
            e[k] = steps[k];
            cell_signature(&map, &pts, &apply(&pose, &e)) != sig || cell_signature(&map, &pts, &apply(&pose, &-e)) != sig
        });
        if crosses {
            skipped += 1;
            continue;
        }
        cases += 1;
        let sp = ScoringPoints::new(&pts, s, true);
        let d = sp.derivatives(&map, &pose);
        let mut fd_g = Vec3::zeros();
        let mut fd_h = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = steps[k];
            let (plus, minus) = (apply(&pose, &e), apply(&pose, &-e));
            fd_g[k] = (sp.score(&map, &plus) - sp.score(&map, &minus)) / (2.0 * steps[k]);
            let col = (sp.derivatives(&map, &plus).gradient - sp.derivatives(&map, &minus).gradient) / (2.0 * steps[k]);
            fd_h.set_column(k, &col);
        }
        let rel_g = (d.gradient - fd_g).norm() / fd_g.norm();
        let rel_h = (d.hessian - fd_h).norm() / fd_h.norm();
        worst_g = worst_g.max(rel_g);
        worst_h = worst_h.max(rel_h);
        if !(rel_g <= 1e-4 && rel_h <= 1e-3) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("100 cases, {failures} outside tolerance, worst gradient rel {worst_g:.2e} (tol 1e-4), worst Hessian rel {worst_h:.2e} (tol 1e-3), {skipped} boundary-crossing draws skipped"),
    )
}

// ---------------------------------------------------------------- 2

fn c2_registration() -> Outcome {
    let cfg = MatchConfig::default();
    let s = 0.333;
    let mut ok = 0;
    let mut notes = Vec::new();
    for scene in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + scene);
        let world = dense_world(&mut rng);
        let truth = Pose2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-5.0f64..5.0).to_radians(),
        );
        let reference = observe(&world, &Pose2::identity(), 25.0);
        let current = observe(&world, &truth, 25.0);
        let map = map_with(&reference, 3.75, s);
        let r = ndt_match(&map, &current, Pose2::identity(), &cfg, s).expect("map not empty");
        let scoring = ScoringPoints::new(&current, s, cfg.uncertainty_weighting);
        let oracle = lattice_minimum(&map, &scoring, Pose2::identity(), (1.2, 6.0));
        let newton_ok = within(&r.relative_pose, &truth, 0.05, 0.2);
        let oracle_ok = within(&oracle, &r.relative_pose, 0.05, 0.2);
        if newton_ok && oracle_ok {
            ok += 1;
        } else {
            notes.push(format!(
                "scene {scene}: truth {:?} newton {:?} lattice {:?}",
                truth.to_vector().as_slice(),
                r.relative_pose.to_vector().as_slice(),
                oracle.to_vector().as_slice()
            ));
        }
    }
    let mut detail = format!("{ok}/20 recovered within (0.05 m, 0.05 m, 0.2 deg) and agreeing with the lattice minimum, need >= 19");
    if !notes.is_empty() {
        detail.push_str("; ");
        detail.push_str(&notes.join("; "));
    }
    outcome(ok >= 19, detail)
}

// ---------------------------------------------------------------- 3

fn c3_ego_velocity() -> Outcome {
    let cfg = PreprocessConfig::default();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let five = SensorSpec::automotive_five().mounts;
    let mut good = 0;
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
        let speed = rng.random_range(0.0..20.0);
        let heading = rng.random_range(-0.3..0.3);
        let v = Vec2::new(speed * f64::cos(heading), speed * f64::sin(heading));
        // even trials: one sensor at the origin; odd: five offset sensors
        let (mounts, omega): (Vec<Pose2>, f64) = if trial % 2 == 0 {
            (vec![Pose2::identity()], 0.0)
        } else {
            (five.clone(), rng.random_range(-0.5..0.5))
        };
        let twist = Vec3::new(v[0], v[1], omega);
        let mut points = Vec::new();
        for i in 0..150 {
            let m = rng.random_range(0..mounts.len());
            let mount = mounts[m];
            let half = if mounts.len() == 1 { std::f64::consts::PI } else { 50f64.to_radians() };
            let a = rng.random_range(-half..half);
            let r = rng.random_range(5.0..80.0);
            let mut p = RadarPoint::from_polar(&mount, r, a, &MeasurementAccuracy::automotive());
            let vr = if i % 10 < 3 {
                rng.random_range(-20.0..20.0)
            } else {
                let vs = mount.rotation().transpose()
                    * Vec2::new(twist[0] - twist[2] * mount.y, twist[1] + twist[2] * mount.x);
                -Vec2::new(a.cos(), a.sin()).dot(&vs) + noise.sample(&mut rng)
            };
            p.radial_velocity = Some(vr);
            points.push(p);
        }
        let scan = PointScan::new(0.0, points);
        let est = estimate_ego_velocity(&scan, &mounts, &cfg, trial).expect("enough points");
        let err = (est.v - v).norm();
        worst = worst.max(err);
        if est.valid && err <= 0.05 {
            good += 1;
        }
    }
    outcome(
        good >= 95,
        format!("{good}/100 trials with |v error| <= 0.05 m/s (need >= 95), worst {worst:.4} m/s"),
    )
}

// ---------------------------------------------------------------- shared sequences

fn street_world() -> WorldSpec {
    let mut l = Vec::new();
    let mut wall = |a: (f64, f64), b: (f64, f64), r: f64| {
        l.push(Landmark::Wall {
            start: Vec2::new(a.0, a.1),
            end: Vec2::new(b.0, b.1),
            reflectivity: r,
        })
    };
    wall((-30.0, 12.0), (-5.0, 12.0), 0.8);
    wall((0.0, 12.0), (30.0, 13.5), 0.75);
    wall((35.0, 14.0), (70.0, 14.0), 0.7);
    wall((-30.0, -10.0), (10.0, -10.0), 0.85);
    wall((14.0, -10.0), (14.0, -25.0), 0.8);
    wall((20.0, -11.0), (60.0, -9.0), 0.7);
    wall((65.0, -20.0), (66.0, 25.0), 0.9);
    wall((-30.0, -10.0), (-30.0, 12.0), 0.8);
    for (i, &(x, y)) in [
        (5.0, 7.0),
        (12.0, -5.0),
        (22.0, 6.5),
        (31.0, -4.0),
        (40.0, 8.0),
        (47.0, -6.0),
        (55.0, 5.0),
        (-8.0, -6.0),
        (-15.0, 6.0),
    ]
    .iter()
    .enumerate()
    {
        l.push(Landmark::Point {
            position: Vec2::new(x, y),
            reflectivity: 0.7 + 0.02 * i as f64,
        });
    }
    WorldSpec::new(l)
}

/// Gently curving drive through the street world.
fn street_drive(frames: usize, dt: f64, speed: f64) -> Trajectory {
    let mut t = Trajectory::new();
    let mut pose = Pose2::identity();
    for k in 0..frames {
        t.push(k as f64 * dt, pose);
        let omega = 0.08 * (k as f64 * 0.15).sin();
        pose = pose.compose(&Pose2::exp(&Vec3::new(speed * dt, 0.0, omega * dt)));
    }
    t
}

fn frame_translation_error(est: &Trajectory, gt: &Trajectory) -> f64 {
    let (t, _) = frame_errors(est, gt, &AlignOptions::default()).expect("aligned");
    mean(&t)
}

// ---------------------------------------------------------------- 4

fn c4_power_shift() -> Outcome {
    let traj = street_drive(24, 0.25, 6.0);
    let opts = SynthOptions::new(Mode::Scanning, NoiseSpec::default());
    let seq = synthesize_scene(&street_world(), &traj, &opts, 44).expect("synth");
    let run = |s: f64| {
        let mut cfg = PipelineConfig::scanning();
        cfg.ndt.shift_s = s;
        let out = run_odometry(&seq.scans, &cfg).expect("odometry");
        frame_translation_error(&out.trajectory, &traj)
    };
    let shifted = run(0.333);
    let unshifted = run(0.0);
    outcome(
        shifted < unshifted,
        format!("mean frame error s=0.333: {shifted:.4} m, s=0: {unshifted:.4} m"),
    )
}

// ---------------------------------------------------------------- 5

fn c5_submap() -> Outcome {
    let traj = street_drive(40, 0.1, 8.0);
    let opts = SynthOptions::new(Mode::Automotive, NoiseSpec::default());
    let seq = synthesize_scene(&street_world(), &traj, &opts, 55).expect("synth");
    let run = |n: usize, weighted: bool| {
        let mut cfg = PipelineConfig::automotive();
        cfg.submap_n = n;
        cfg.matching.uncertainty_weighting = weighted;
        cfg.ndt.probabilistic = weighted;
        let out = run_odometry(&seq.scans, &cfg).expect("odometry");
        frame_translation_error(&out.trajectory, &traj)
    };
    let n1 = run(1, true);
    let n3 = run(3, true);
    let n3_plain = run(3, false);
    outcome(
        n3 < n1 && n3 <= n3_plain,
        format!("mean frame error N=1: {n1:.4} m, N=3: {n3:.4} m, N=3 unweighted: {n3_plain:.4} m"),
    )
}

// ---------------------------------------------------------------- 6

fn ring_world() -> WorldSpec {
    let mut l = Vec::new();
    for i in 0..16 {
        let a = i as f64 * std::f64::consts::TAU / 16.0;
        let r = 32.0 + 4.0 * (3.0 * a).sin();
        l.push(Landmark::Point {
            position: Vec2::new(r * a.cos(), r * a.sin()),
            reflectivity: 0.8,
        });
    }
    for (a, b) in [
        ((-40.0, -40.0), (40.0, -40.0)),
        ((40.0, -40.0), (40.0, 10.0)),
        ((45.0, 20.0), (20.0, 45.0)),
        ((-40.0, 40.0), (10.0, 40.0)),
        ((-40.0, -40.0), (-40.0, 30.0)),
        ((-8.0, -5.0), (-3.0, 6.0)),
        ((4.0, -6.0), (8.0, 2.0)),
    ] {
        l.push(Landmark::Wall {
            start: Vec2::new(a.0, a.1),
            end: Vec2::new(b.0, b.1),
            reflectivity: 0.8,
        });
    }
    WorldSpec::new(l)
}

fn loop_trajectory(frames: usize, radius: f64, dt: f64) -> Trajectory {
    let mut t = Trajectory::new();
    for k in 0..frames {
        let a = k as f64 * std::f64::consts::TAU / frames as f64;
        t.push(
            k as f64 * dt,
            Pose2::new(radius * a.sin(), radius * (1.0 - a.cos()) - radius, a),
        );
    }
    t
}

fn c6_drift() -> Outcome {
    let traj = loop_trajectory(100, 15.0, 0.1);
    let mut opts = SynthOptions::new(Mode::Automotive, NoiseSpec::none());
    opts.sensor = SensorSpec::automotive_five();
    let seq = synthesize_scene(&ring_world(), &traj, &opts, 6).expect("synth");
    let mut cfg = PipelineConfig::automotive();
    cfg.sensor_mounts = opts.sensor.mounts.clone();
    let out = run_odometry(&seq.scans, &cfg).expect("odometry");
    let gt0 = traj.poses[0];
    let gt_end = gt0.between(traj.poses.last().unwrap());
    let est_end = *out.trajectory.poses.last().unwrap();
    let endpoint = (gt_end.translation() - est_end.translation()).norm();
    let path = traj.path_length();
    let per_frame = frame_translation_error(&out.trajectory, &traj);
    let (t, _) = frame_errors(&out.trajectory, &traj, &AlignOptions::default()).unwrap();
    let worst = t.iter().copied().fold(0.0, f64::max);
    outcome(
        endpoint <= 0.01 * path && per_frame <= 0.02,
        format!(
            "endpoint error {endpoint:.4} m over {path:.1} m ({:.3}%, limit 1%), mean frame error {per_frame:.4} m (limit 0.02), worst frame {worst:.4} m",
            100.0 * endpoint / path
        ),
    )
}

// ---------------------------------------------------------------- 7

/// Homogeneous-matrix reimplementation of the metrics with naive loops.
mod oracle {
    use super::*;

    pub fn h(p: &Pose2) -> Matrix3<f64> {
        let (s, c) = p.theta.sin_cos();
        Matrix3::new(c, -s, p.x, s, c, p.y, 0.0, 0.0, 1.0)
    }

    /// `a⁻¹ b` after moving both to `a`'s origin, which leaves the product
    /// unchanged and keeps large coordinates from cancelling.
    fn relative(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
        let mut a0 = *a;
        let mut b0 = *b;
        for r in 0..2 {
            b0[(r, 2)] -= a[(r, 2)];
            a0[(r, 2)] = 0.0;
        }
        a0.try_inverse().unwrap() * b0
    }

    fn err(gi: &Matrix3<f64>, gj: &Matrix3<f64>, ei: &Matrix3<f64>, ej: &Matrix3<f64>) -> (f64, f64) {
        let g = relative(gi, gj);
        let e = relative(ei, ej);
        let d = g.try_inverse().unwrap() * e;
        ((d[(0, 2)].powi(2) + d[(1, 2)].powi(2)).sqrt(), d[(1, 0)].atan2(d[(0, 0)]).abs())
    }

    /// Mean (percent, deg/m) over all segments of the given lengths.
    pub fn segments(est: &[Pose2], gt: &[Pose2], lengths: &[f64]) -> (f64, f64) {
        let eh: Vec<_> = est.iter().map(h).collect();
        let gh: Vec<_> = gt.iter().map(h).collect();
        let (mut ts, mut rs, mut n) = (0.0, 0.0, 0usize);
        for &len in lengths {
            for i in 0..gt.len() {
                let mut found = None;
                for j in i + 1..gt.len() {
                    // accumulated path length from the start, summed afresh
                    let upto = |m: usize| (0..m).map(|k| (gt[k + 1].translation() - gt[k].translation()).norm()).sum::<f64>();
                    if upto(j) - upto(i) >= len {
                        found = Some(j);
                        break;
                    }
                }
                if let Some(j) = found {
                    let (t, r) = err(&gh[i], &gh[j], &eh[i], &eh[j]);
                    ts += t / len;
                    rs += r / len;
                    n += 1;
                }
            }
        }
        (100.0 * ts / n as f64, (rs / n as f64).to_degrees())
    }

    pub fn frames(est: &[Pose2], gt: &[Pose2]) -> (Vec<f64>, Vec<f64>) {
        (0..gt.len() - 1)
            .map(|i| {
                let (t, r) = err(&h(&gt[i]), &h(&gt[i + 1]), &h(&est[i]), &h(&est[i + 1]));
                (t, r.to_degrees())
            })
            .unzip()
    }
}

fn c7_eval_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + case);
        let n = 500 + rng.random_range(0..100);
        let mut g = Pose2::identity();
        let mut e = Pose2::identity();
        let mut gt = Trajectory::new();
        let mut est = Trajectory::new();
        for k in 0..n {
            gt.push(k as f64 * 0.1, g);
            est.push(k as f64 * 0.1, e);
            let step = Pose2::new(rng.random_range(1.0..2.5), rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05));
            let noise = Pose2::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.003..0.003));
            g = g.compose(&step);
            e = e.compose(&step).compose(&noise);
        }
        let opts = AlignOptions::default();
        let k = kitti_errors(&est, &gt, &opts).expect("long enough");
        let (ot, or) = oracle::segments(&est.poses, &gt.poses, &KITTI_LENGTHS);
        let pm = per_meter_error(&est, &gt, &opts).unwrap();
        let (pt, pr) = oracle::segments(&est.poses, &gt.poses, &[1.0]);
        let (ft, fr) = frame_errors(&est, &gt, &opts).unwrap();
        let (oft, ofr) = oracle::frames(&est.poses, &gt.poses);
        let mut diffs = vec![
            (k.translational_error_percent - ot).abs(),
            (k.rotational_error_deg_per_m - or).abs(),
            (pm.0 - pt).abs(),
            (pm.1 - pr).abs(),
        ];
        diffs.extend(ft.iter().zip(&oft).map(|(a, b)| (a - b).abs()));
        diffs.extend(fr.iter().zip(&ofr).map(|(a, b)| (a - b).abs()));
        worst = diffs.into_iter().fold(worst, f64::max);
    }
    outcome(worst <= 1e-12, format!("10 randomized pairs, largest difference {worst:.2e} (tol 1e-12)"))
}

// ---------------------------------------------------------------- 8

fn log_line(r: &MatchResult) -> FrameLog {
    let line = FrameLog::new(1, 0.25, r).to_json();
    serde_json::from_str(&line).expect("log line parses")
}

/// Rows of posts with a 3 m period plus one cross wall. From identity the
/// base grid locks onto the post alias 3 m short of the true 2.5 m motion.
fn false_minimum_fixture() -> (Vec<WeightedPoint>, Vec<WeightedPoint>, Pose2) {
    let mut world = Vec::new();
    for row in [-5.0, 5.0] {
        for i in -8..=8 {
            let c = Vec2::new(i as f64 * 3.0, row);
            for k in 0..6 {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                world.push((c + Vec2::new(a.cos(), a.sin()) * 0.15, 0.9));
            }
        }
    }
    for k in 0..=40 {
        world.push((Vec2::new(20.0, -4.0 + k as f64 * 0.2), 0.7));
    }
    let truth = Pose2::new(2.5, 0.0, 0.0);
    (observe(&world, &Pose2::identity(), 60.0), observe(&world, &truth, 60.0), truth)
}

/// Weak static posts plus a strong target moving with the vehicle.
fn heavy_mover_fixture() -> (Vec<WeightedPoint>, Vec<WeightedPoint>, Pose2) {
    let truth = Pose2::new(2.5, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut world = Vec::new();
    for _ in 0..40 {
        let c = Vec2::new(rng.random_range(-25.0..25.0), rng.random_range(-20.0..20.0));
        if c.norm() < 6.0 {
            continue;
        }
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            world.push((c + Vec2::new(a.cos(), a.sin()) * 0.15, 0.40));
        }
    }
    // fixed in the sensor frame, so it pulls towards zero motion
    let mover: Vec<WeightedPoint> = (0..8)
        .flat_map(|i| (0..8).map(move |j| Vec2::new(3.0 + i as f64 * 0.2, 1.0 + j as f64 * 0.2)))
        .map(|p| WeightedPoint::new(p, Some(1.0), Mat2::identity() * 0.0025))
        .collect();
    let mut reference = observe(&world, &Pose2::identity(), 60.0);
    reference.extend(mover.iter().copied());
    let mut current = observe(&world, &truth, 60.0);
    current.extend(mover);
    (reference, current, truth)
}

fn c8_escalation() -> Outcome {
    let cfg = MatchConfig::default();
    let dt = 0.25;
    let s0 = 0.333;
    let mut parts = Vec::new();
    let mut pass = true;

    // false minimum
    let (reference, current, truth) = false_minimum_fixture();
    let base = map_with(&reference, 3.75, s0);
    let base_result = ndt_match(&base, &current, Pose2::identity(), &cfg, s0).unwrap();
    let scoring = ScoringPoints::new(&current, s0, true);
    let lattice = lattice_minimum(&base, &scoring, base_result.relative_pose, (0.4, 2.0));
    let implied = ((base_result.relative_pose.translation_norm() / dt - 10.0) / dt).abs();
    let prior = MotionPrior {
        predicted: Some(truth),
        prev_speed: Some(10.0),
        dt,
    };
    let r = match_with_escalation(|g, s| Ok(map_with(&reference, g, s)), &current, Pose2::identity(), &prior, 3.75, s0, &cfg);
    let log = log_line(&r);
    let ok_a = log.escalations >= 1
        && log.grid_size_used > 3.75
        && log.failure_reason == FailureReason::None
        && within(&r.relative_pose, &truth, 0.05, 0.2)
        && implied > 8.0
        && within(&lattice, &base_result.relative_pose, 0.05, 0.2);
    pass &= ok_a;
    parts.push(format!(
        "false minimum: base grid converges to x={:.3} m (lattice minimum x={:.3} m, implied {implied:.1} m/s^2), log grid {} m after {} escalations, x={:.3} m",
        base_result.relative_pose.x, lattice.x, log.grid_size_used, log.escalations, log.x
    ));

    // heavy mover
    let (reference, current, truth) = heavy_mover_fixture();
    // prediction lagging the true motion by 0.75 m
    let guess = Pose2::new(1.75, 0.0, 0.0);
    let r = match_with_escalation(|g, s| Ok(map_with(&reference, g, s)), &current, guess, &prior, 3.75, s0, &cfg);
    let log = log_line(&r);
    let ok_b = log.shift_halvings >= 1 && log.shift_used < s0 && log.failure_reason == FailureReason::None && within(&r.relative_pose, &truth, 0.05, 0.2);
    pass &= ok_b;
    parts.push(format!(
        "heavy mover: log shift {:.4} after {} halvings, grid {} m, x={:.3} m",
        log.shift_used, log.shift_halvings, log.grid_size_used, log.x
    ));

    // parked vehicle through the pipeline
    let traj = Trajectory::from_parts((0..8).map(|k| k as f64 * 0.25).collect(), vec![Pose2::identity(); 8]);
    let seq = synthesize_scene(&street_world(), &traj, &SynthOptions::new(Mode::Scanning, NoiseSpec::none()), 8).unwrap();
    let out = run_odometry(&seq.scans, &PipelineConfig::scanning()).unwrap();
    let logs: Vec<FrameLog> = out.log_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let grids: Vec<f64> = logs.iter().map(|l| l.grid_size_used).collect();
    let worst_motion = logs.iter().map(|l| l.x.hypot(l.y)).fold(0.0, f64::max);
    let ok_c = logs.iter().skip(1).all(|l| l.grid_size_used == 1.5) && worst_motion <= 1e-3;
    pass &= ok_c;
    parts.push(format!("parked: log grids {grids:?}, largest relative translation {worst_motion:.2e} m"));

    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 9

fn c9_determinism() -> Outcome {
    let traj = street_drive(15, 0.1, 8.0);
    let opts = SynthOptions::new(Mode::Automotive, NoiseSpec::default());
    let seq = synthesize_scene(&street_world(), &traj, &opts, 99).unwrap();
    let mut cfg = PipelineConfig::automotive();
    cfg.rng_seed = 1234;
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| run_odometry(&seq.scans, &cfg).unwrap());
        let mut csv = Vec::new();
        write_trajectory(&out.trajectory, &mut csv).unwrap();
        (csv, out.log_jsonl().into_bytes())
    };
    let a = render(1);
    let b = render(1);
    let c = render(4);
    let same = a == b && a == c;
    outcome(
        same,
        format!("{} trajectory bytes, {} log bytes, identical across two runs and 1 vs 4 threads: {same}", a.0.len(), a.1.len()),
    )
}

// ---------------------------------------------------------------- 10

fn c10_real_data() -> Outcome {
    Outcome {
        skipped: true,
        ..outcome(true, "non-blocking: needs real Oxford/nuScenes recordings, which are not bundled; not run")
    }
}
