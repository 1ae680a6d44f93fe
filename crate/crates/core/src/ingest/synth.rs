//! Synthetic radar scenes with ground truth.
//!
//! Static landmarks are sampled at fixed world positions (walls every
//! `SensorSpec::wall_spacing` metres), so the same physical point is seen in
//! every frame where it is visible. Body-frame velocities are the constant
//! twist that carries each ground-truth pose into the next one.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::world::{Landmark, WorldSpec};
use super::{MeasurementAccuracy, PointScan, PolarScan, RadarPoint, Scan, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Vec2, Vec3};
use crate::pipeline::Mode;

/// Noise model. Automotive fields act on detections, scanning fields on the
/// power image.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// [m]
    pub range_sigma: f64,
    /// [rad]
    pub azimuth_sigma: f64,
    /// [m/s]
    pub doppler_sigma: f64,
    /// Probability that a visible landmark sample yields a detection.
    pub detection_probability: f64,
    /// Expected number of clutter detections per scan.
    pub clutter_rate: f64,
    /// Relative 1-sigma jitter of landmark power.
    pub power_jitter: f64,
    /// Fraction of bins receiving speckle.
    pub speckle_density: f64,
    /// Speckle power is uniform in [0, speckle_max_power].
    pub speckle_max_power: f64,
    /// Probability that a strong return produces a multipath ghost.
    pub ghost_probability: f64,
    /// Ghost power relative to the source return.
    pub ghost_attenuation: f64,
    /// Minimum power of a return that can produce a ghost.
    pub ghost_min_power: f64,
    /// Probability per scan of one saturated azimuth streak.
    pub saturation_probability: f64,
    pub saturation_power: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            range_sigma: 0.1,
            azimuth_sigma: 0.25_f64.to_radians(),
            doppler_sigma: 0.1,
            detection_probability: 0.6,
            clutter_rate: 2.0,
            power_jitter: 0.05,
            speckle_density: 0.02,
            speckle_max_power: 0.5,
            ghost_probability: 0.1,
            ghost_attenuation: 0.5,
            ghost_min_power: 0.7,
            saturation_probability: 0.0,
            saturation_power: 1.0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            range_sigma: 0.0,
            azimuth_sigma: 0.0,
            doppler_sigma: 0.0,
            detection_probability: 1.0,
            clutter_rate: 0.0,
            power_jitter: 0.0,
            speckle_density: 0.0,
            speckle_max_power: 0.0,
            ghost_probability: 0.0,
            ghost_attenuation: 0.0,
            ghost_min_power: 1.0,
            saturation_probability: 0.0,
            saturation_power: 1.0,
        }
    }

    /// Parses `key = value` lines overriding [`NoiseSpec::default`].
    /// Angles are given in degrees.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut spec = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::malformed(path, format!("line {}: expected `key = value`", i + 1))
            })?;
            let key = key.trim();
            let v: f64 = value.trim().parse().map_err(|_| {
                Error::malformed(path, format!("line {}: bad number for `{key}`", i + 1))
            })?;
            match key {
                "range_sigma" => spec.range_sigma = v,
                "azimuth_sigma_deg" => spec.azimuth_sigma = v.to_radians(),
                "doppler_sigma" => spec.doppler_sigma = v,
                "detection_probability" => spec.detection_probability = v,
                "clutter_rate" => spec.clutter_rate = v,
                "power_jitter" => spec.power_jitter = v,
                "speckle_density" => spec.speckle_density = v,
                "speckle_max_power" => spec.speckle_max_power = v,
                "ghost_probability" => spec.ghost_probability = v,
                "ghost_attenuation" => spec.ghost_attenuation = v,
                "ghost_min_power" => spec.ghost_min_power = v,
                "saturation_probability" => spec.saturation_probability = v,
                "saturation_power" => spec.saturation_power = v,
                other => {
                    return Err(Error::malformed(
                        path,
                        format!("line {}: unknown noise key `{other}`", i + 1),
                    ))
                }
            }
        }
        Ok(spec)
    }
}

/// Sensor geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    /// Mounting poses in the vehicle frame. Scanning mode uses the first one.
    pub mounts: Vec<Pose2>,
    /// Full field of view of each mount [rad].
    pub field_of_view: f64,
    /// [m]
    pub max_range: f64,
    /// Minimum detectable range [m].
    pub min_range: f64,
    /// Sampling step along walls [m].
    pub wall_spacing: f64,
    pub azimuth_count: usize,
    pub range_bin_count: usize,
    /// [m / bin]
    pub range_resolution: f64,
}

impl SensorSpec {
    /// A single 360° sensor at the vehicle origin.
    pub fn automotive() -> Self {
        Self {
            mounts: vec![Pose2::identity()],
            field_of_view: 2.0 * PI,
            max_range: 100.0,
            min_range: 0.5,
            wall_spacing: 1.0,
            azimuth_count: 0,
            range_bin_count: 0,
            range_resolution: 0.0,
        }
    }

    /// Five corner/front sensors covering 360°.
    pub fn automotive_five() -> Self {
        Self {
            mounts: vec![
                Pose2::new(3.6, 0.0, 0.0),
                Pose2::new(3.4, 0.8, 75f64.to_radians()),
                Pose2::new(3.4, -0.8, -75f64.to_radians()),
                Pose2::new(-0.8, 0.8, 150f64.to_radians()),
                Pose2::new(-0.8, -0.8, -150f64.to_radians()),
            ],
            field_of_view: 100f64.to_radians(),
            ..Self::automotive()
        }
    }

    pub fn scanning() -> Self {
        Self {
            mounts: vec![Pose2::identity()],
            field_of_view: 2.0 * PI,
            max_range: 70.0,
            min_range: 1.0,
            wall_spacing: 0.1,
            azimuth_count: 400,
            range_bin_count: 280,
            range_resolution: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub mode: Mode,
    pub noise: NoiseSpec,
    pub sensor: SensorSpec,
}

impl SynthOptions {
    pub fn new(mode: Mode, noise: NoiseSpec) -> Self {
        let sensor = match mode {
            Mode::Automotive => SensorSpec::automotive(),
            Mode::Scanning => SensorSpec::scanning(),
        };
        Self {
            mode,
            noise,
            sensor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Static,
    Mover,
    Clutter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinLabel {
    Empty,
    Landmark,
    Mover,
    Speckle,
    Ghost,
    Saturation,
}

impl BinLabel {
    pub fn is_noise(self) -> bool {
        matches!(self, BinLabel::Speckle | BinLabel::Ghost | BinLabel::Saturation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameLabels {
    /// One label per detection, in scan order.
    Points(Vec<PointLabel>),
    /// One label per polar bin, azimuth-major.
    Polar(Vec<BinLabel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub scans: Vec<Scan>,
    pub ground_truth: Trajectory,
    /// True body-frame twist (v_x, v_y, ω) at every frame.
    pub velocities: Vec<Vec3>,
    pub labels: Vec<FrameLabels>,
}

impl SyntheticSequence {
    pub fn point_scans(&self) -> Vec<PointScan> {
        self.scans
            .iter()
            .filter_map(|s| match s {
                Scan::Points(p) => Some(p.clone()),
                Scan::Polar(_) => None,
            })
            .collect()
    }

    pub fn polar_scans(&self) -> Vec<PolarScan> {
        self.scans
            .iter()
            .filter_map(|s| match s {
                Scan::Polar(p) => Some(p.clone()),
                Scan::Points(_) => None,
            })
            .collect()
    }
}

struct Sample {
    world: Vec2,
    velocity: Vec2,
    reflectivity: f64,
    moving: bool,
}

fn samples_at(world: &WorldSpec, t: f64, spacing: f64) -> Vec<Sample> {
    let mut out = Vec::new();
    for l in &world.landmarks {
        match *l {
            Landmark::Point {
                position,
                reflectivity,
            } => out.push(Sample {
                world: position,
                velocity: Vec2::zeros(),
                reflectivity,
                moving: false,
            }),
            Landmark::Wall {
                start,
                end,
                reflectivity,
            } => {
                let len = (end - start).norm();
                let n = (len / spacing).floor() as usize;
                for k in 0..=n {
                    let f = if len > 0.0 { k as f64 * spacing / len } else { 0.0 };
                    out.push(Sample {
                        world: start + (end - start) * f,
                        velocity: Vec2::zeros(),
                        reflectivity,
                        moving: false,
                    });
                }
            }
            Landmark::Mover {
                position,
                velocity,
                reflectivity,
            } => out.push(Sample {
                world: position + velocity * t,
                velocity,
                reflectivity,
                moving: true,
            }),
        }
    }
    out
}

/// Body-frame twist carrying each pose into the next (the last frame repeats
/// the previous twist).
pub fn trajectory_twists(trajectory: &Trajectory) -> Vec<Vec3> {
    let n = trajectory.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n.saturating_sub(1) {
        let dt = trajectory.stamps[k + 1] - trajectory.stamps[k];
        let rel = trajectory.poses[k].between(&trajectory.poses[k + 1]);
        out.push(rel.log() / dt);
    }
    if n > 0 {
        out.push(out.last().copied().unwrap_or_else(Vec3::zeros));
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Renders one scan per trajectory pose.
pub fn synthesize_scene(
    world: &WorldSpec,
    trajectory: &Trajectory,
    options: &SynthOptions,
    seed: u64,
) -> Result<SyntheticSequence> {
    if world.landmarks.is_empty() {
        return Err(Error::EmptyWorld);
    }
    if trajectory.is_empty() {
        return Err(Error::InsufficientInput("empty trajectory".into()));
    }
    if !trajectory.is_monotonic() {
        return Err(Error::NonMonotonicTime {
            path: "<trajectory>".into(),
            timestamp: f64::NAN,
        });
    }
    if options.sensor.mounts.is_empty() {
        return Err(Error::InvalidArgument("sensor has no mounts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let velocities = trajectory_twists(trajectory);
    let mut scans = Vec::with_capacity(trajectory.len());
    let mut labels = Vec::with_capacity(trajectory.len());
    for k in 0..trajectory.len() {
        let t = trajectory.stamps[k];
        let pose = trajectory.poses[k];
        let (scan, label) = match options.mode {
            Mode::Automotive => {
                let (s, l) = render_points(world, t, &pose, &velocities[k], options, &mut rng);
                (Scan::Points(s), FrameLabels::Points(l))
            }
            Mode::Scanning => {
                let (s, l) = render_polar(world, t, &pose, options, &mut rng);
                (Scan::Polar(s), FrameLabels::Polar(l))
            }
        };
        scans.push(scan);
        labels.push(label);
    }
    Ok(SyntheticSequence {
        scans,
        ground_truth: trajectory.clone(),
        velocities,
        labels,
    })
}

fn render_points(
    world: &WorldSpec,
    t: f64,
    pose: &Pose2,
    twist: &Vec3,
    options: &SynthOptions,
    rng: &mut ChaCha8Rng,
) -> (PointScan, Vec<PointLabel>) {
    let sensor = &options.sensor;
    let noise = &options.noise;
    let accuracy = MeasurementAccuracy {
        range_sigma: noise.range_sigma,
        azimuth_sigma: noise.azimuth_sigma,
    };
    let inv_pose = pose.inverse();
    let world_to_vehicle = inv_pose.rotation();
    let mount_inverses: Vec<Pose2> = sensor.mounts.iter().map(Pose2::inverse).collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();

    for sample in samples_at(world, t, sensor.wall_spacing) {
        let local = inv_pose.transform_point(&sample.world);
        let mut best: Option<(usize, f64, f64)> = None;
        for (m, inv) in mount_inverses.iter().enumerate() {
            let s = inv.transform_point(&local);
            let r = s.norm();
            let a = s[1].atan2(s[0]);
            if r < sensor.min_range || r > sensor.max_range || a.abs() > sensor.field_of_view / 2.0 {
                continue;
            }
            if best.is_none_or(|(_, _, ba)| a.abs() < ba.abs()) {
                best = Some((m, r, a));
            }
        }
        // One draw per sample keeps the random stream independent of visibility.
        let detected = rng.random::<f64>() < noise.detection_probability;
        let Some((m, r, a)) = best else { continue };
        if !detected {
            continue;
        }
        let mount = &sensor.mounts[m];
        let v_sensor = mount.rotation().transpose()
            * Vec2::new(twist[0] - twist[2] * mount.y, twist[1] + twist[2] * mount.x);
        let v_target = mount.rotation().transpose() * (world_to_vehicle * sample.velocity);
        let u = Vec2::new(a.cos(), a.sin());
        let vr = u.dot(&(v_target - v_sensor)) + gaussian(rng, noise.doppler_sigma);
        let rn = (r + gaussian(rng, noise.range_sigma)).max(0.0);
        let an = normalize_angle(a + gaussian(rng, noise.azimuth_sigma));
        let mut p = RadarPoint::from_polar(mount, rn, an, &accuracy);
        p.radial_velocity = Some(vr);
        points.push(p);
        labels.push(if sample.moving {
            PointLabel::Mover
        } else {
            PointLabel::Static
        });
    }

    let clutter = {
        let whole = noise.clutter_rate.floor();
        whole as usize + usize::from(rng.random::<f64>() < noise.clutter_rate - whole)
    };
    for _ in 0..clutter {
        let m = rng.random_range(0..sensor.mounts.len());
        let r = rng.random_range(sensor.min_range..sensor.max_range);
        let half = sensor.field_of_view / 2.0;
        let a = if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
        let mut p = RadarPoint::from_polar(&sensor.mounts[m], r, a, &accuracy);
        p.radial_velocity = Some(rng.random_range(-20.0..20.0));
        points.push(p);
        labels.push(PointLabel::Clutter);
    }
    (PointScan::new(t, points), labels)
}

fn render_polar(
    world: &WorldSpec,
    t: f64,
    pose: &Pose2,
    options: &SynthOptions,
    rng: &mut ChaCha8Rng,
) -> (PolarScan, Vec<BinLabel>) {
    let sensor = &options.sensor;
    let noise = &options.noise;
    let az_count = sensor.azimuth_count;
    let bins = sensor.range_bin_count;
    let mut scan = PolarScan::zeros(t, az_count, bins, sensor.range_resolution);
    let mut labels = vec![BinLabel::Empty; az_count * bins];
    let to_sensor = sensor.mounts[0].inverse().compose(&pose.inverse());
    let az_step = 2.0 * PI / az_count as f64;

    for sample in samples_at(world, t, sensor.wall_spacing) {
        let s = to_sensor.transform_point(&sample.world);
        let r = s.norm();
        let jitter = 1.0 + gaussian(rng, noise.power_jitter);
        if r < sensor.min_range || r > sensor.max_range {
            continue;
        }
        let a = s[1].atan2(s[0]).rem_euclid(2.0 * PI);
        let ai = ((a / az_step).round() as usize) % az_count;
        let bi = (r / sensor.range_resolution).floor() as usize;
        if bi >= bins {
            continue;
        }
        let power = (sample.reflectivity * jitter).clamp(0.0, 1.0) as f32;
        let idx = ai * bins + bi;
        if power > scan.power[idx] {
            scan.power[idx] = power;
            labels[idx] = if sample.moving {
                BinLabel::Mover
            } else {
                BinLabel::Landmark
            };
        }
    }

    if noise.ghost_probability > 0.0 {
        let sources: Vec<(usize, usize, f32)> = (0..az_count)
            .flat_map(|a| (0..bins).map(move |b| (a, b)))
            .filter_map(|(a, b)| {
                let p = scan.get(a, b);
                (f64::from(p) >= noise.ghost_min_power && p > 0.0).then_some((a, b, p))
            })
            .collect();
        for (a, b, p) in sources {
            if rng.random::<f64>() >= noise.ghost_probability {
                continue;
            }
            let gb = 2 * b + 1;
            if gb >= bins {
                continue;
            }
            let gp = (f64::from(p) * noise.ghost_attenuation) as f32;
            let idx = a * bins + gb;
            if gp > scan.power[idx] {
                scan.power[idx] = gp;
                labels[idx] = BinLabel::Ghost;
            }
        }
    }

    if noise.speckle_density > 0.0 {
        for idx in 0..az_count * bins {
            if rng.random::<f64>() < noise.speckle_density {
                let p = (rng.random::<f64>() * noise.speckle_max_power) as f32;
                if p > scan.power[idx] {
                    scan.power[idx] = p;
                    labels[idx] = BinLabel::Speckle;
                }
            }
        }
    }

    if rng.random::<f64>() < noise.saturation_probability {
        let a = rng.random_range(0..az_count);
        for b in 0..bins {
            let idx = a * bins + b;
            scan.power[idx] = noise.saturation_power as f32;
            labels[idx] = BinLabel::Saturation;
        }
    }
    (scan, labels)
}
