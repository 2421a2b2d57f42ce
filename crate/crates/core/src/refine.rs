//! Joint refinement of target positions by reprojection-error minimization.
//!
//! Stage 2 of the localization pipeline: starting from the closed-form ray
//! intersections, all target positions are refined together by minimizing
//! the stacked squared pixel reprojection error with a Levenberg-Marquardt
//! solver. The objective decomposes over targets with disjoint variables,
//! so the normal matrix is block diagonal with one 3x3 block per target;
//! each iteration therefore costs O(M N) while remaining mathematically
//! identical to the dense joint solve.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::camera::{Camera, PixelPoint, CHEIRALITY_TOL};
use crate::scene::{ObservationSet, Scene};
use crate::triangulation::{localize_linear_strict, LinearEstimate, TargetError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RefineError {
    /// A candidate position falls behind an observing camera, so its
    /// residual is undefined.
    #[error("target {target_id} lies behind camera {camera_id}")]
    BehindCamera { camera_id: u32, target_id: u32 },
    #[error("observation references camera {0} absent from the scene")]
    UnknownCamera(u32),
    #[error("got {got} positions for {expected} observed targets")]
    PositionCountMismatch { got: usize, expected: usize },
    #[error("target {target_id} is observed by only {count} camera(s); depth is unobservable")]
    InsufficientObservations { target_id: u32, count: usize },
    #[error("observation set is empty")]
    NoObservations,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Two-stage pipeline failure: Stage 1 (per-target triangulation) or
/// Stage 2 (joint refinement).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LocalizeError {
    #[error("linear stage: {0}")]
    Linear(#[from] TargetError),
    #[error("refinement stage: {0}")]
    Refine(#[from] RefineError),
}

/// Levenberg-Marquardt schedule.
///
/// Damping uses the Marquardt form lambda * diag(J^T J), which keeps the
/// step scale-invariant across axes. The gradient test is primary; the
/// step and cost tests are stagnation exits that fire only after
/// [`STALL_STREAK`] consecutive qualifying accepted steps, so a healthy
/// run keeps contracting until the residual is orthogonal to the Jacobian
/// column space instead of stopping on the last few fast-shrinking steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Initial damping factor applied to diag(J^T J).
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Threshold on ||J^T eps|| (px^2/m).
    pub gradient_tol: f64,
    /// Threshold on the accepted step norm (m).
    pub step_tol: f64,
    /// Threshold on the relative cost decrease.
    pub cost_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            cost_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.max_iterations == 0 {
            return Err(RefineError::InvalidConfig("max_iterations must be positive"));
        }
        if !self.initial_damping.is_finite() || self.initial_damping <= 0.0 {
            return Err(RefineError::InvalidConfig("initial_damping must be positive"));
        }
        if !self.damping_increase.is_finite() || self.damping_increase <= 1.0 {
            return Err(RefineError::InvalidConfig("damping_increase must exceed 1"));
        }
        if !self.damping_decrease.is_finite()
            || self.damping_decrease <= 0.0
            || self.damping_decrease >= 1.0
        {
            return Err(RefineError::InvalidConfig("damping_decrease must be in (0, 1)"));
        }
        let tols = [self.gradient_tol, self.step_tol, self.cost_tol];
        if tols.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(RefineError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Consecutive accepted steps that must satisfy the step or cost
/// tolerance before the solver concludes it has stagnated.
pub const STALL_STREAK: usize = 10;

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// ||J^T eps|| fell below `gradient_tol`.
    Gradient,
    /// Accepted steps stagnated below `step_tol`.
    Step,
    /// Relative cost decrease stagnated below `cost_tol`.
    Cost,
    /// Iteration budget exhausted (or damping escalation overflowed).
    MaxIter,
}

/// Outcome of a refinement run. Positions follow the sorted target-id
/// order of the observation set that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    pub positions: Vec<Vector3<f64>>,
    /// Objective at the initial positions, px^2.
    pub initial_cost: f64,
    /// Objective at the returned positions, px^2. The solver accepts only
    /// improving steps (plus gradient-decreasing ties within the cost's
    /// floating-point resolution), so this never exceeds `initial_cost`
    /// beyond that rounding floor.
    pub final_cost: f64,
    /// Number of trial steps evaluated (accepted or rejected).
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Stacked reprojection error, ordered by (camera id, target id) with each
/// observation contributing (du, dv) in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    values: Vec<f64>,
}

impl ResidualVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared norm of the residual, i.e. the joint objective in px^2.
    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum()
    }
}

/// Full two-stage pipeline output.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    /// Sorted target ids; all position vectors below follow this order.
    pub target_ids: Vec<u32>,
    /// Stage-1 closed-form estimates (the linear baseline).
    pub linear: Vec<LinearEstimate>,
    /// Stage-2 refinement initialized at the Stage-1 positions.
    pub refinement: RefinementResult,
}

// Resolved observation: camera and the index of its target in the sorted
// target-id list.
struct ResolvedObs<'a> {
    camera: &'a Camera,
    camera_id: u32,
    target_id: u32,
    target_index: usize,
    pixel: PixelPoint,
}

fn resolve<'a>(
    scene: &'a Scene,
    observations: &ObservationSet,
    target_ids: &[u32],
) -> Result<Vec<ResolvedObs<'a>>, RefineError> {
    observations
        .iter()
        .map(|(camera_id, target_id, pixel)| {
            let camera = scene
                .camera(camera_id)
                .ok_or(RefineError::UnknownCamera(camera_id))?;
            // target_ids is sorted, so this always succeeds.
            let target_index = target_ids.binary_search(&target_id).unwrap();
            Ok(ResolvedObs {
                camera,
                camera_id,
                target_id,
                target_index,
                pixel: *pixel,
            })
        })
        .collect()
}

fn check_positions(
    observations: &ObservationSet,
    positions: &[Vector3<f64>],
) -> Result<Vec<u32>, RefineError> {
    if observations.is_empty() {
        return Err(RefineError::NoObservations);
    }
    let target_ids = observations.target_ids();
    if positions.len() != target_ids.len() {
        return Err(RefineError::PositionCountMismatch {
            got: positions.len(),
            expected: target_ids.len(),
        });
    }
    Ok(target_ids)
}

// Residual pair and, when requested, the 2x3 Jacobian block
// d(eps)/d(x_w) = -(d pi / d x_c) R^T for one observation.
fn observation_residual(
    obs: &ResolvedObs,
    position: &Vector3<f64>,
    with_jacobian: bool,
) -> Result<(Vector2<f64>, Option<Matrix2x3<f64>>), RefineError> {
    let x_c = obs.camera.pose.world_to_camera(position);
    if x_c.z <= CHEIRALITY_TOL {
        return Err(RefineError::BehindCamera {
            camera_id: obs.camera_id,
            target_id: obs.target_id,
        });
    }
    let k = &obs.camera.intrinsics;
    let inv_z = 1.0 / x_c.z;
    let residual = Vector2::new(
        obs.pixel.u - (k.fx * x_c.x * inv_z + k.u0),
        obs.pixel.v - (k.fy * x_c.y * inv_z + k.v0),
    );
    let jacobian = with_jacobian.then(|| {
        let d_pi = Matrix2x3::new(
            k.fx * inv_z,
            0.0,
            -k.fx * x_c.x * inv_z * inv_z,
            0.0,
            k.fy * inv_z,
            -k.fy * x_c.y * inv_z * inv_z,
        );
        -d_pi * obs.camera.pose.rotation().transpose()
    });
    Ok((residual, jacobian))
}

/// Stacked reprojection error of candidate `positions`.
///
/// `positions[k]` is the candidate for the k-th entry of
/// `observations.target_ids()`. Entries are ordered by (camera id,
/// target id); observation (i, j) contributes observed minus projected
/// pixel coordinates.
pub fn reprojection_residual(
    scene: &Scene,
    observations: &ObservationSet,
    positions: &[Vector3<f64>],
) -> Result<ResidualVector, RefineError> {
    let target_ids = check_positions(observations, positions)?;
    let resolved = resolve(scene, observations, &target_ids)?;
    let mut values = Vec::with_capacity(2 * resolved.len());
    for obs in &resolved {
        let (r, _) = observation_residual(obs, &positions[obs.target_index], false)?;
        values.push(r.x);
        values.push(r.y);
    }
    Ok(ResidualVector { values })
}

/// Dense Jacobian of [`reprojection_residual`] with respect to the stacked
/// positions: 2 * (observation count) rows by 3 M columns, block-sparse in
/// targets (rows of observation (i, j) are nonzero only in column block j).
pub fn residual_jacobian(
    scene: &Scene,
    observations: &ObservationSet,
    positions: &[Vector3<f64>],
) -> Result<DMatrix<f64>, RefineError> {
    let target_ids = check_positions(observations, positions)?;
    let resolved = resolve(scene, observations, &target_ids)?;
    let mut jac = DMatrix::zeros(2 * resolved.len(), 3 * target_ids.len());
    for (row, obs) in resolved.iter().enumerate() {
        let (_, block) = observation_residual(obs, &positions[obs.target_index], true)?;
        jac.view_mut((2 * row, 3 * obs.target_index), (2, 3))
            .copy_from(&block.unwrap());
    }
    Ok(jac)
}

/// Sum of squared reprojection errors of a single target at `position`,
/// over the cameras observing it. px^2.
pub fn target_reprojection_cost(
    scene: &Scene,
    observations: &ObservationSet,
    target_id: u32,
    position: &Vector3<f64>,
) -> Result<f64, RefineError> {
    let mut cost = 0.0;
    let mut seen = false;
    for (camera_id, pixel) in observations.of_target(target_id) {
        let camera = scene
            .camera(camera_id)
            .ok_or(RefineError::UnknownCamera(camera_id))?;
        let obs = ResolvedObs {
            camera,
            camera_id,
            target_id,
            target_index: 0,
            pixel: *pixel,
        };
        let (r, _) = observation_residual(&obs, position, false)?;
        cost += r.norm_squared();
        seen = true;
    }
    if seen {
        Ok(cost)
    } else {
        Err(RefineError::NoObservations)
    }
}

// One full evaluation: cost plus per-target normal-equation blocks
// H_j = sum J_ij^T J_ij and g_j = sum J_ij^T eps_ij.
struct Evaluation {
    cost: f64,
    blocks_h: Vec<Matrix3<f64>>,
    blocks_g: Vec<Vector3<f64>>,
    // Scale of the rounding noise in `cost`: each residual entry is a
    // cancellation of pixel-magnitude quantities, so the evaluated cost
    // dithers by O(eps * sum |r| * pixel_scale) rather than O(eps * cost).
    noise_scale: f64,
}

impl Evaluation {
    fn gradient_norm(&self) -> f64 {
        self.blocks_g
            .iter()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    fn cost_noise_floor(&self) -> f64 {
        32.0 * f64::EPSILON * self.noise_scale
    }
}

fn evaluate(
    resolved: &[ResolvedObs],
    positions: &[Vector3<f64>],
    target_count: usize,
) -> Result<Evaluation, RefineError> {
    let mut cost = 0.0;
    let mut blocks_h = vec![Matrix3::zeros(); target_count];
    let mut blocks_g = vec![Vector3::zeros(); target_count];
    let mut noise_scale = 0.0;
    for obs in resolved {
        let (r, j) = observation_residual(obs, &positions[obs.target_index], true)?;
        let j = j.unwrap();
        cost += r.norm_squared();
        noise_scale += r.x.abs() * (obs.pixel.u.abs() + 1.0) + r.y.abs() * (obs.pixel.v.abs() + 1.0);
        blocks_h[obs.target_index] += j.transpose() * j;
        blocks_g[obs.target_index] += j.transpose() * r;
    }
    Ok(Evaluation {
        cost,
        blocks_h,
        blocks_g,
        noise_scale,
    })
}

/// Refines `init` by Levenberg-Marquardt on the joint reprojection
/// objective.
///
/// `init[k]` seeds the k-th entry of `observations.target_ids()`. Trial
/// steps that put any target behind an observing camera are rejected and
/// the damping escalated; if the budget runs out the last accepted
/// iterate is returned with `converged = false` rather than an error.
/// Only an initial point that is itself behind a camera is a hard error.
pub fn refine_lm(
    scene: &Scene,
    observations: &ObservationSet,
    init: &[Vector3<f64>],
    config: &SolverConfig,
) -> Result<RefinementResult, RefineError> {
    config.validate()?;
    let target_ids = check_positions(observations, init)?;
    for &id in &target_ids {
        let count = observations.of_target(id).count();
        if count < 2 {
            return Err(RefineError::InsufficientObservations { target_id: id, count });
        }
    }
    let resolved = resolve(scene, observations, &target_ids)?;
    let m = target_ids.len();

    let mut positions = init.to_vec();
    let mut eval = evaluate(&resolved, &positions, m)?;
    let initial_cost = eval.cost;

    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    let mut step_streak = 0;
    let mut cost_streak = 0;
    // Once the predicted decrease drops below the floating-point
    // resolution of the cost, strict descent can no longer see genuine
    // progress: the iterate sits on a quantization plateau of the
    // evaluated objective while the analytic gradient may still exceed
    // the tolerance. In that regime acceptance switches to gradient
    // descent, bounded by the cost at which the plateau was entered
    // (plus a few ulps of headroom to cross its rounding dither).
    let mut plateau_ceiling: Option<f64> = None;
    let (converged, termination) = loop {
        let gradient_norm = eval.gradient_norm();
        if gradient_norm <= config.gradient_tol {
            break (true, Termination::Gradient);
        }
        if iterations >= config.max_iterations {
            break (false, Termination::MaxIter);
        }
        iterations += 1;

        // Marquardt step: (H_j + lambda diag(H_j)) delta_j = -g_j per target.
        let mut deltas = Vec::with_capacity(m);
        let mut solvable = true;
        for j in 0..m {
            let mut damped = eval.blocks_h[j];
            for d in 0..3 {
                damped[(d, d)] += lambda * eval.blocks_h[j][(d, d)];
            }
            match damped.cholesky() {
                Some(chol) => deltas.push(chol.solve(&(-eval.blocks_g[j]))),
                None => {
                    solvable = false;
                    break;
                }
            }
        }

        let trial_eval = if solvable {
            // Model decrease of the damped step,
            // -2 delta^T g - delta^T H delta = -delta^T g + lambda delta^T D delta.
            let predicted: f64 = deltas
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let damping: f64 =
                        (0..3).map(|a| eval.blocks_h[j][(a, a)] * d[a] * d[a]).sum();
                    -d.dot(&eval.blocks_g[j]) + lambda * damping
                })
                .sum();
            let noise_floor = eval.cost_noise_floor().max(4.0 * f64::EPSILON * eval.cost);
            let on_plateau = predicted <= noise_floor;
            if on_plateau && plateau_ceiling.is_none() {
                plateau_ceiling = Some(eval.cost + noise_floor);
            }
            let trial: Vec<Vector3<f64>> = positions
                .iter()
                .zip(&deltas)
                .map(|(p, d)| p + d)
                .collect();
            match evaluate(&resolved, &trial, m) {
                Ok(e) => {
                    let accept = if on_plateau {
                        e.cost <= plateau_ceiling.unwrap_or(eval.cost)
                            && e.gradient_norm() < gradient_norm
                    } else {
                        e.cost < eval.cost
                            || (e.cost == eval.cost && e.gradient_norm() < gradient_norm)
                    };
                    accept.then_some((trial, e))
                }
                // Cheirality violation: reject the step.
                Err(_) => None,
            }
        } else {
            None
        };

        match trial_eval {
            Some((trial, e)) => {
                let step_norm = deltas.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
                let cost_drop = eval.cost - e.cost;
                let small_drop = cost_drop <= config.cost_tol * eval.cost;
                positions = trial;
                eval = e;
                lambda = (lambda * config.damping_decrease).max(1e-12);
                step_streak = if step_norm <= config.step_tol { step_streak + 1 } else { 0 };
                cost_streak = if small_drop { cost_streak + 1 } else { 0 };
                if step_streak >= STALL_STREAK {
                    break (true, Termination::Step);
                }
                if cost_streak >= STALL_STREAK {
                    break (true, Termination::Cost);
                }
            }
            None => {
                lambda *= config.damping_increase;
                if !lambda.is_finite() {
                    break (false, Termination::MaxIter);
                }
            }
        }
    };

    Ok(RefinementResult {
        positions,
        initial_cost,
        final_cost: eval.cost,
        iterations,
        converged,
        termination,
    })
}

/// The full two-stage pipeline: closed-form triangulation per target,
/// then joint reprojection refinement initialized at the Stage-1
/// positions. Fails on the first per-target Stage-1 error.
pub fn localize(
    scene: &Scene,
    observations: &ObservationSet,
    config: &SolverConfig,
) -> Result<Localization, LocalizeError> {
    let linear = localize_linear_strict(scene, observations)?;
    let target_ids: Vec<u32> = linear.iter().map(|(id, _)| *id).collect();
    let init: Vec<Vector3<f64>> = linear.iter().map(|(_, est)| est.position).collect();
    let refinement = refine_lm(scene, observations, &init, config)?;
    Ok(Localization {
        target_ids,
        linear: linear.into_iter().map(|(_, est)| est).collect(),
        refinement,
    })
}
