//! Weighted point-to-distribution NDT matching.
//!
//! The score of a pose `T = (x, y, θ)` is
//!
//! ```text
//! f(T) = Σᵢ Σ_layers wᵢ exp(-½ dᵢᵀ Σ⁻¹ dᵢ),   dᵢ = T xᵢ - μ_cell
//! wᵢ   = max(pᵢ - s, 0) · exp(-½ (σₓ + σᵧ))
//! ```
//!
//! and Newton's method minimises the cost `-f`. The Hessian is made positive
//! definite eigenvalue by eigenvalue and every step is backtracked until the
//! cost decreases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Mat2, Mat3, Pose2, Vec2, Vec3};
use crate::ndt::{shifted_weight, NdtMap, LAYER_COUNT};
use crate::submap::WeightedPoint;

/// Below this many points the score is evaluated serially.
const PARALLEL_MIN_POINTS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub max_newton_iterations: usize,
    /// Stop when the (x [m], y [m], θ [rad]) increment norm falls below this.
    pub convergence_epsilon: f64,
    /// Maximum number of step halvings in the line search.
    pub max_step_halvings: usize,
    /// [m/s²]
    pub max_acceleration: f64,
    /// [m]
    pub grid_escalation_step: f64,
    /// [m]
    pub grid_ceiling: f64,
    pub shift_halvings_max: usize,
    /// [m]
    pub low_speed_grid: f64,
    /// [m/s]
    pub low_speed_threshold: f64,
    /// Apply the `exp(-½(σₓ+σᵧ))` uncertainty factor to point weights.
    pub uncertainty_weighting: bool,
    /// Largest Newton translation step as a fraction of the grid size.
    pub max_translation_step_cells: f64,
    /// Largest Newton rotation step [rad].
    pub max_rotation_step: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_newton_iterations: 50,
            convergence_epsilon: 1e-4,
            max_step_halvings: 10,
            max_acceleration: 8.0,
            grid_escalation_step: 2.5,
            grid_ceiling: 12.5,
            shift_halvings_max: 2,
            low_speed_grid: 1.5,
            low_speed_threshold: 1.5 / 3.6,
            uncertainty_weighting: true,
            max_translation_step_cells: 0.5,
            max_rotation_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    MotionPrior,
    EmptyMap,
    Diverged,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::MotionPrior => "motion_prior",
            FailureReason::EmptyMap => "empty_map",
            FailureReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub relative_pose: Pose2,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grid_size_used: f64,
    pub shift_used: f64,
    pub failure_reason: FailureReason,
    /// Number of grid enlargements performed by the escalation ladder.
    pub escalations: usize,
    /// Number of times the power shift was halved.
    pub shift_halvings: usize,
}

/// Matching weight of a point: shifted power damped by its position uncertainty.
pub fn matching_weight(power: Option<f64>, s: f64, cov: &Mat2) -> f64 {
    let sx = cov[(0, 0)].max(0.0).sqrt();
    let sy = cov[(1, 1)].max(0.0).sqrt();
    shifted_weight(power, s) * (-0.5 * (sx + sy)).exp()
}

/// Points with their matching weights precomputed; zero weights dropped.
#[derive(Debug, Clone)]
pub struct ScoringPoints {
    points: Vec<(Vec2, f64)>,
}

impl ScoringPoints {
    pub fn new(points: &[WeightedPoint], s: f64, uncertainty_weighting: bool) -> Self {
        let points = points
            .iter()
            .map(|p| {
                let w = if uncertainty_weighting {
                    matching_weight(p.power, s, &p.cov)
                } else {
                    shifted_weight(p.power, s)
                };
                (p.position, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect();
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Score with its gradient and Hessian with respect to (x, y, θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreDerivatives {
    pub score: f64,
    pub gradient: Vec3,
    pub hessian: Mat3,
}

impl ScoreDerivatives {
    fn zero() -> Self {
        Self {
            score: 0.0,
            gradient: Vec3::zeros(),
            hessian: Mat3::zeros(),
        }
    }

    fn add(mut self, o: &Self) -> Self {
        self.score += o.score;
        self.gradient += o.gradient;
        self.hessian += o.hessian;
        self
    }
}

fn point_score(map: &NdtMap, q: &Vec2, w: f64) -> f64 {
    let mut s = 0.0;
    for layer in 0..LAYER_COUNT {
        if let Some(cell) = map.lookup(layer, q) {
            let d = q - cell.mean;
            s += w * (-0.5 * d.dot(&(cell.cov_inverse * d))).exp();
        }
    }
    s
}

fn point_derivatives(map: &NdtMap, x: &Vec2, w: f64, pose: &Pose2) -> ScoreDerivatives {
    let (sn, cs) = pose.theta.sin_cos();
    let q = pose.transform_point(x);
    // ∂q/∂θ and ∂²q/∂θ²
    let jt = Vec2::new(-sn * x[0] - cs * x[1], cs * x[0] - sn * x[1]);
    let ht = Vec2::new(-cs * x[0] + sn * x[1], -sn * x[0] - cs * x[1]);
    let mut out = ScoreDerivatives::zero();
    for layer in 0..LAYER_COUNT {
        let Some(cell) = map.lookup(layer, &q) else {
            continue;
        };
        let a = &cell.cov_inverse;
        let d = q - cell.mean;
        let ad = a * d;
        let e = w * (-0.5 * d.dot(&ad)).exp();
        // projections of Σ⁻¹d on the partial derivatives of d
        let p = Vec3::new(ad[0], ad[1], ad.dot(&jt));
        let aj = a * jt;
        let mut second = Mat3::new(
            a[(0, 0)],
            a[(0, 1)],
            aj[0],
            a[(1, 0)],
            a[(1, 1)],
            aj[1],
            aj[0],
            aj[1],
            jt.dot(&aj),
        );
        second[(2, 2)] += ad.dot(&ht);
        out.score += e;
        out.gradient -= p * e;
        out.hessian += (p * p.transpose() - second) * e;
    }
    out
}

impl ScoringPoints {
    pub fn score(&self, map: &NdtMap, pose: &Pose2) -> f64 {
        let eval = |&(x, w): &(Vec2, f64)| point_score(map, &pose.transform_point(&x), w);
        if self.points.len() >= PARALLEL_MIN_POINTS {
            let parts: Vec<f64> = self.points.par_iter().map(eval).collect();
            parts.iter().sum()
        } else {
            self.points.iter().map(eval).sum()
        }
    }

    pub fn derivatives(&self, map: &NdtMap, pose: &Pose2) -> ScoreDerivatives {
        let eval = |&(x, w): &(Vec2, f64)| point_derivatives(map, &x, w, pose);
        let parts: Vec<ScoreDerivatives> = if self.points.len() >= PARALLEL_MIN_POINTS {
            self.points.par_iter().map(eval).collect()
        } else {
            self.points.iter().map(eval).collect()
        };
        // fixed left-to-right reduction keeps results thread-count independent
        parts.iter().fold(ScoreDerivatives::zero(), |acc, p| acc.add(p))
    }
}

/// Weighted P2D score of `points` transformed by `pose` against `map`.
pub fn ndt_score(map: &NdtMap, points: &[WeightedPoint], pose: &Pose2, s: f64) -> f64 {
    ScoringPoints::new(points, s, true).score(map, pose)
}

pub fn ndt_score_derivatives(
    map: &NdtMap,
    points: &[WeightedPoint],
    pose: &Pose2,
    s: f64,
) -> ScoreDerivatives {
    ScoringPoints::new(points, s, true).derivatives(map, pose)
}

/// Newton increment for the cost `-f` with a positive-definite shift.
fn newton_step(d: &ScoreDerivatives) -> Vec3 {
    let h = -d.hessian;
    let g = -d.gradient;
    let eig = nalgebra::SymmetricEigen::new((h + h.transpose()) * 0.5);
    let lmax = eig.eigenvalues.abs().max();
    let floor = (1e-6 * lmax).max(1e-12);
    // eigenvalue-wise positive definite modification: negative curvature is
    // mirrored, near-singular directions get a small floor
    let mut step = Vec3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        let lambda = eig.eigenvalues[i].abs().max(floor);
        step -= v * (v.dot(&g) / lambda);
    }
    step
}

fn clamp_step(step: Vec3, grid: f64, cfg: &MatchConfig) -> Vec3 {
    let t = step.xy().norm();
    let max_t = cfg.max_translation_step_cells * grid;
    let mut scale: f64 = 1.0;
    if t > max_t {
        scale = scale.min(max_t / t);
    }
    if step[2].abs() > cfg.max_rotation_step {
        scale = scale.min(cfg.max_rotation_step / step[2].abs());
    }
    step * scale
}

fn apply(pose: &Pose2, step: &Vec3) -> Pose2 {
    Pose2::new(pose.x + step[0], pose.y + step[1], normalize_angle(pose.theta + step[2]))
}

/// Newton's method on `-f` from `initial_guess`.
pub fn ndt_match(
    map: &NdtMap,
    points: &[WeightedPoint],
    initial_guess: Pose2,
    cfg: &MatchConfig,
    s: f64,
) -> Result<MatchResult> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let scoring = ScoringPoints::new(points, s, cfg.uncertainty_weighting);
    Ok(newton(map, &scoring, initial_guess, cfg, s))
}

pub(crate) fn newton(
    map: &NdtMap,
    scoring: &ScoringPoints,
    initial_guess: Pose2,
    cfg: &MatchConfig,
    s: f64,
) -> MatchResult {
    let mut pose = initial_guess;
    let mut converged = false;
    let mut iterations = 0;
    let mut score = scoring.score(map, &pose);
    while iterations < cfg.max_newton_iterations {
        iterations += 1;
        let d = scoring.derivatives(map, &pose);
        let step = clamp_step(newton_step(&d), map.grid_size, cfg);
        if step.norm() < cfg.convergence_epsilon {
            converged = true;
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_step_halvings {
            let candidate = apply(&pose, &(step * alpha));
            let cand_score = scoring.score(map, &candidate);
            if cand_score > score {
                accepted = Some((candidate, cand_score));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((p, sc)) => {
                pose = p;
                score = sc;
                if (step * alpha).norm() < cfg.convergence_epsilon {
                    converged = true;
                    break;
                }
            }
            None => {
                // no decrease even for a tiny step: stationary up to round-off
                converged = (step * alpha).norm() < cfg.convergence_epsilon;
                break;
            }
        }
    }
    // a pose without any overlap is not a registration
    if !(score > 0.0) {
        converged = false;
    }
    let failure_reason = if converged {
        FailureReason::None
    } else {
        FailureReason::Diverged
    };
    MatchResult {
        relative_pose: pose,
        score,
        iterations,
        converged,
        grid_size_used: map.grid_size,
        shift_used: s,
        failure_reason,
        escalations: 0,
        shift_halvings: 0,
    }
}

/// Motion information used to detect matching failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionPrior {
    /// Constant-velocity (or Doppler) prediction of the relative pose.
    pub predicted: Option<Pose2>,
    /// Speed estimated for the previous interval [m/s]; `None` disables the
    /// acceleration test.
    pub prev_speed: Option<f64>,
    /// Time between the two scans [s].
    pub dt: f64,
}

impl MotionPrior {
    /// Whether a relative pose respects the acceleration bound.
    pub fn is_plausible(&self, relative: &Pose2, max_acceleration: f64) -> bool {
        match self.prev_speed {
            Some(v) => {
                let speed = relative.translation_norm() / self.dt;
                ((speed - v) / self.dt).abs() <= max_acceleration
            }
            None => true,
        }
    }
}

/// Runs NDT matching, enlarging the grid by `grid_escalation_step` on each
/// failure. Once the next grid would exceed `grid_ceiling`, the grid is reset
/// to its base value and the power shift halved, up to `shift_halvings_max`
/// times. If every rung fails, the motion prediction is returned with
/// `FailureReason::MotionPrior`.
///
/// `build_map(grid_size, shift)` must return the reference map for those
/// parameters.
pub fn match_with_escalation<F>(
    mut build_map: F,
    points: &[WeightedPoint],
    initial_guess: Pose2,
    prior: &MotionPrior,
    base_grid: f64,
    s0: f64,
    cfg: &MatchConfig,
) -> MatchResult
where
    F: FnMut(f64, f64) -> Result<NdtMap>,
{
    let base = match prior.prev_speed {
        Some(v) if v < cfg.low_speed_threshold => cfg.low_speed_grid,
        _ => base_grid,
    };
    let mut grid = base;
    let mut s = s0;
    let mut escalations = 0;
    let mut halvings = 0;
    let mut last_score = 0.0;
    let mut iterations = 0;
    loop {
        let attempt = match build_map(grid, s) {
            Ok(map) => {
                let scoring = ScoringPoints::new(points, s, cfg.uncertainty_weighting);
                Some(newton(&map, &scoring, initial_guess, cfg, s))
            }
            Err(_) => None,
        };
        if let Some(r) = attempt {
            last_score = r.score;
            iterations += r.iterations;
            if r.converged && prior.is_plausible(&r.relative_pose, cfg.max_acceleration) {
                return MatchResult {
                    grid_size_used: grid,
                    shift_used: s,
                    escalations,
                    shift_halvings: halvings,
                    iterations,
                    ..r
                };
            }
        }
        if grid + cfg.grid_escalation_step <= cfg.grid_ceiling + 1e-9 {
            grid += cfg.grid_escalation_step;
            escalations += 1;
        } else if halvings < cfg.shift_halvings_max && s > 0.0 {
            halvings += 1;
            s *= 0.5;
            grid = base;
        } else {
            break;
        }
    }
    MatchResult {
        relative_pose: prior.predicted.unwrap_or(initial_guess),
        score: last_score,
        iterations,
        converged: false,
        grid_size_used: grid,
        shift_used: s,
        failure_reason: FailureReason::MotionPrior,
        escalations,
        shift_halvings: halvings,
    }
}
