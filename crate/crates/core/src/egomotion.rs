//! Instantaneous ego-velocity from Doppler radial velocities.
//!
//! For a stationary target seen by a sensor mounted at `(t_x, t_y, φ)`, the
//! measured radial velocity is `v_r = -h · (v_x, v_y, ω)` with
//! `h = (u_x, u_y, u_y t_x - u_x t_y)` and `u` the unit ray direction in the
//! vehicle frame. Moving targets and clutter violate this model and are
//! rejected by RANSAC before a least-squares refit.

use nalgebra as na;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    symmetrize3, twist_coefficient_derivatives, twist_coefficients, Covariance3, Mat2, Mat3, Pose2,
    Vec2, Vec3,
};
use crate::ingest::{resolve_mount, PointScan, RadarPoint};
use crate::preprocess::PreprocessConfig;

const MIN_SAMPLE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoVelocityEstimate {
    /// Vehicle-frame velocity [m/s].
    pub v: Vec2,
    /// Yaw rate [rad/s].
    pub omega: f64,
    /// Covariance over (v_x, v_y, ω).
    pub cov: Covariance3,
    pub inlier_count: usize,
    pub valid: bool,
    /// False when every sensor sits at the vehicle origin, in which case ω is
    /// not observable from Doppler and is reported as zero.
    pub omega_observable: bool,
}

impl EgoVelocityEstimate {
    /// Placeholder for scans without Doppler.
    pub fn invalid() -> Self {
        Self {
            v: Vec2::zeros(),
            omega: 0.0,
            cov: Mat3::zeros(),
            inlier_count: 0,
            valid: false,
            omega_observable: false,
        }
    }

    pub fn twist(&self) -> Vec3 {
        Vec3::new(self.v[0], self.v[1], self.omega)
    }

    pub fn speed(&self) -> f64 {
        self.v.norm()
    }
}

/// Radial velocity of a stationary target at `point` given vehicle motion.
pub fn predicted_radial_velocity(point: &RadarPoint, mount: &Pose2, twist: &Vec3) -> f64 {
    -measurement_row(point, mount).dot(twist)
}

fn measurement_row(point: &RadarPoint, mount: &Pose2) -> Vec3 {
    let a = point.azimuth + mount.theta;
    let (uy, ux) = a.sin_cos();
    Vec3::new(ux, uy, uy * mount.x - ux * mount.y)
}

struct Rows {
    /// `-h_i`
    a: Vec<Vec3>,
    b: Vec<f64>,
    dim: usize,
}

impl Rows {
    fn residual(&self, i: usize, x: &Vec3) -> f64 {
        self.b[i] - self.a[i].dot(x)
    }

    /// Least squares over `idx`; returns the solution and `(AᵀA)⁻¹` padded to 3x3.
    fn solve(&self, idx: &[usize]) -> Option<(Vec3, Mat3)> {
        let d = self.dim;
        let mut ata = na::DMatrix::<f64>::zeros(d, d);
        let mut atb = na::DVector::<f64>::zeros(d);
        for &i in idx {
            let row = self.a[i].rows(0, d).into_owned();
            ata += &row * row.transpose();
            atb += &row * self.b[i];
        }
        let eig = ata.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= max * 1e-10 {
            return None;
        }
        let inv = ata.try_inverse()?;
        let x = &inv * atb;
        let mut sol = Vec3::zeros();
        let mut cov = Mat3::zeros();
        for r in 0..d {
            sol[r] = x[r];
            for c in 0..d {
                cov[(r, c)] = inv[(r, c)];
            }
        }
        Some((sol, cov))
    }
}

/// RANSAC + least-squares ego-velocity.
///
/// Minimal samples of three detections are drawn `cfg.ransac_iterations`
/// times from a generator seeded with `seed`; the largest consensus set
/// (ties keep the earliest) is refit twice. The covariance is
/// `σ̂² (AᵀA)⁻¹` with the unbiased residual variance of the inliers.
pub fn estimate_ego_velocity(
    scan: &PointScan,
    mounts: &[Pose2],
    cfg: &PreprocessConfig,
    seed: u64,
) -> Result<EgoVelocityEstimate> {
    let identity = [Pose2::identity()];
    let mounts = if mounts.is_empty() { &identity[..] } else { mounts };
    let omega_observable = mounts.iter().any(|m| m.translation_norm() > 1e-9);
    let dim = if omega_observable { 3 } else { 2 };

    let mut rows = Rows {
        a: Vec::new(),
        b: Vec::new(),
        dim,
    };
    for p in &scan.points {
        if let Some(vr) = p.radial_velocity {
            let mount = &mounts[resolve_mount(p, mounts)];
            rows.a.push(-measurement_row(p, mount));
            rows.b.push(vr);
        }
    }
    let n = rows.b.len();
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientDoppler(n));
    }

    let threshold = cfg.ransac_inlier_threshold;
    let inliers_of = |x: &Vec3| -> Vec<usize> {
        (0..n)
            .filter(|&i| rows.residual(i, x).abs() <= threshold)
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..cfg.ransac_iterations {
        let sample = rand::seq::index::sample(&mut rng, n, MIN_SAMPLE).into_vec();
        let Some((x, _)) = rows.solve(&sample) else {
            continue;
        };
        let inliers = inliers_of(&x);
        if inliers.len() > best.len() {
            best = inliers;
        }
    }
    if best.len() < dim {
        // every minimal sample was degenerate
        best = (0..n).collect();
    }

    let mut fit = rows.solve(&best);
    if let Some((x, _)) = fit {
        let refined = inliers_of(&x);
        if refined.len() >= dim {
            if let Some(f) = rows.solve(&refined) {
                best = refined;
                fit = Some(f);
            }
        }
    }
    let Some((x, inv)) = fit else {
        return Ok(EgoVelocityEstimate {
            inlier_count: 0,
            omega_observable,
            ..EgoVelocityEstimate::invalid()
        });
    };
    let rss: f64 = best.iter().map(|&i| rows.residual(i, &x).powi(2)).sum();
    let sigma2 = if best.len() > dim {
        rss / (best.len() - dim) as f64
    } else {
        0.0
    };
    let valid = best.len() as f64 >= cfg.ransac_min_inlier_fraction * n as f64;
    Ok(EgoVelocityEstimate {
        v: Vec2::new(x[0], x[1]),
        omega: x[2],
        cov: symmetrize3(&(inv * sigma2)),
        inlier_count: best.len(),
        valid,
        omega_observable,
    })
}

/// Relative pose after moving with a constant body twist for `dt` seconds,
/// with first-order covariance.
pub fn integrate_twist(twist: &Vec3, cov: &Covariance3, dt: f64) -> (Pose2, Covariance3) {
    let phi = twist[2] * dt;
    let u = Vec2::new(twist[0], twist[1]) * dt;
    let (a, b) = if twist[2].abs() < 1e-9 {
        (1.0, 0.0)
    } else {
        twist_coefficients(phi)
    };
    let (da, db) = twist_coefficient_derivatives(phi);
    let v = Mat2::new(a, -b, b, a);
    let dv = Mat2::new(da, -db, db, da);
    let t = v * u;
    let dt_domega = dv * u * dt;
    let vdt = v * dt;
    let j = Mat3::new(
        vdt[(0, 0)],
        vdt[(0, 1)],
        dt_domega[0],
        vdt[(1, 0)],
        vdt[(1, 1)],
        dt_domega[1],
        0.0,
        0.0,
        dt,
    );
    (
        Pose2::new(t[0], t[1], phi),
        symmetrize3(&(j * cov * j.transpose())),
    )
}

/// Constant-velocity integration of an ego-velocity estimate over `dt`.
pub fn integrate_velocity(est: &EgoVelocityEstimate, dt: f64) -> Result<(Pose2, Covariance3)> {
    if !est.valid {
        return Err(Error::InvalidEstimate);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(integrate_twist(&est.twist(), &est.cov, dt))
}
