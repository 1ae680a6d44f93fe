//! SE(2) poses, 2x2 Gaussians and first-order covariance propagation.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra as na;
use serde::{Deserialize, Serialize};

pub type Vec2 = na::Vector2<f64>;
pub type Vec3 = na::Vector3<f64>;
pub type Mat2 = na::Matrix2<f64>;
pub type Mat3 = na::Matrix3<f64>;

/// 3x3 covariance over (x [m], y [m], theta [rad]).
pub type Covariance3 = Mat3;

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta.rem_euclid(two_pi);
    if t > PI {
        t -= two_pi;
    }
    // rem_euclid can return exactly 2pi for tiny negative inputs.
    if t <= -PI {
        t += two_pi;
    }
    t
}

pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn symmetrize2(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize3(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Rigid transform in the plane. `theta` is always kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.theta)
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Mat2 {
        rotation(self.theta)
    }

    /// `self ⊕ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.transform_point(&other.translation());
        Pose2::new(t[0], t[1], self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Pose2::new(t[0], t[1], -self.theta)
    }

    /// Relative pose of `other` seen from `self`: `self⁻¹ ⊕ other`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        // differencing first avoids cancellation far from the origin
        let t = self.rotation().transpose() * (other.translation() - self.translation());
        Pose2::new(t[0], t[1], other.theta - self.theta)
    }

    pub fn transform_point(&self, pt: &Vec2) -> Vec2 {
        self.rotation() * pt + self.translation()
    }

    /// Exponential map of a body-frame twist (x, y, theta) integrated over unit time.
    pub fn exp(twist: &Vec3) -> Pose2 {
        let phi = twist[2];
        let (a, b) = twist_coefficients(phi);
        let v = Mat2::new(a, -b, b, a) * Vec2::new(twist[0], twist[1]);
        Pose2::new(v[0], v[1], phi)
    }

    /// Inverse of [`Pose2::exp`].
    pub fn log(&self) -> Vec3 {
        let phi = self.theta;
        let (a, b) = twist_coefficients(phi);
        let det = a * a + b * b;
        let inv = Mat2::new(a, b, -b, a) / det;
        let u = inv * self.translation();
        Vec3::new(u[0], u[1], phi)
    }

    pub fn translation_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        self.compose(&rhs)
    }
}

/// `(sin φ / φ, (1 - cos φ) / φ)` with series expansions near zero.
pub(crate) fn twist_coefficients(phi: f64) -> (f64, f64) {
    if phi.abs() < 1e-4 {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0 + p2 * p2 / 120.0, phi / 2.0 - phi * p2 / 24.0)
    } else {
        (phi.sin() / phi, (1.0 - phi.cos()) / phi)
    }
}

/// Derivatives of [`twist_coefficients`] with respect to φ.
pub(crate) fn twist_coefficient_derivatives(phi: f64) -> (f64, f64) {
    if phi.abs() < 1e-4 {
        let p2 = phi * phi;
        (-phi / 3.0 + phi * p2 / 30.0, 0.5 - p2 / 8.0)
    } else {
        let (s, c) = phi.sin_cos();
        let p2 = phi * phi;
        ((phi * c - s) / p2, (phi * s - (1.0 - c)) / p2)
    }
}

/// A 2D normal distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: Vec2,
    pub cov: Mat2,
}

impl Gaussian2 {
    pub fn new(mean: Vec2, cov: Mat2) -> Self {
        Self {
            mean,
            cov: symmetrize2(&cov),
        }
    }

    pub fn sigma_x(&self) -> f64 {
        self.cov[(0, 0)].max(0.0).sqrt()
    }

    pub fn sigma_y(&self) -> f64 {
        self.cov[(1, 1)].max(0.0).sqrt()
    }
}

/// Jacobian of `transform_point(pose, pt)` with respect to `(x, y, theta)`.
pub fn point_jacobian_wrt_pose(pose: &Pose2, pt: &Vec2) -> na::Matrix2x3<f64> {
    let (s, c) = pose.theta.sin_cos();
    na::Matrix2x3::new(
        1.0,
        0.0,
        -s * pt[0] - c * pt[1],
        0.0,
        1.0,
        c * pt[0] - s * pt[1],
    )
}

/// First-order covariance of `transform_point(pose, pt)` given uncertainty in
/// both the pose and the point.
pub fn propagate_point_covariance(
    pose: &Pose2,
    pose_cov: &Covariance3,
    pt: &Vec2,
    pt_cov: &Mat2,
) -> Mat2 {
    let r = pose.rotation();
    let j = point_jacobian_wrt_pose(pose, pt);
    symmetrize2(&(r * pt_cov * r.transpose() + j * pose_cov * j.transpose()))
}

/// Jacobians of `a ⊕ b` with respect to `a` and `b`.
pub fn compose_jacobians(a: &Pose2, b: &Pose2) -> (Mat3, Mat3) {
    let (s, c) = a.theta.sin_cos();
    let ja = Mat3::new(
        1.0,
        0.0,
        -s * b.x - c * b.y,
        0.0,
        1.0,
        c * b.x - s * b.y,
        0.0,
        0.0,
        1.0,
    );
    let jb = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    (ja, jb)
}

/// `a ⊕ b` with covariance `J_a Σ_a J_aᵀ + J_b Σ_b J_bᵀ` (independent inputs).
pub fn compose_with_covariance(
    a: &Pose2,
    a_cov: &Covariance3,
    b: &Pose2,
    b_cov: &Covariance3,
) -> (Pose2, Covariance3) {
    let (ja, jb) = compose_jacobians(a, b);
    let cov = ja * a_cov * ja.transpose() + jb * b_cov * jb.transpose();
    (a.compose(b), symmetrize3(&cov))
}

/// Jacobian of `inverse(p)` with respect to `p`.
pub fn inverse_jacobian(p: &Pose2) -> Mat3 {
    let (s, c) = p.theta.sin_cos();
    // inverse: x' = -c x - s y, y' = s x - c y, theta' = -theta
    Mat3::new(
        -c,
        -s,
        s * p.x - c * p.y,
        s,
        -c,
        c * p.x + s * p.y,
        0.0,
        0.0,
        -1.0,
    )
}

pub fn inverse_with_covariance(p: &Pose2, cov: &Covariance3) -> (Pose2, Covariance3) {
    let j = inverse_jacobian(p);
    (p.inverse(), symmetrize3(&(j * cov * j.transpose())))
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
pub fn min_eigenvalue2(m: &Mat2) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    tr / 2.0 - disc
}

/// Covariance of a polar measurement `(r, α)` mapped to Cartesian coordinates.
pub fn polar_covariance(range: f64, azimuth: f64, sigma_range: f64, sigma_azimuth: f64) -> Mat2 {
    let g = rotation(azimuth);
    let d = Mat2::new(
        sigma_range * sigma_range,
        0.0,
        0.0,
        range * range * sigma_azimuth * sigma_azimuth,
    );
    symmetrize2(&(g * d * g.transpose()))
}
