//! Closed-form least-squares ray triangulation.
//!
//! Each observation ray contributes the rank-2 projector A = I - d d^T onto
//! its orthogonal complement; the point minimizing the summed squared
//! point-to-ray distances solves the 3x3 normal system
//! (sum A_i) x = sum A_i c_i. This is the first stage of the two-stage
//! localization pipeline and also serves as the multi-camera linear
//! baseline (`mcvlp`).

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::camera::Ray;
use crate::scene::{ObservationSet, Scene};

/// Normal-matrix condition number past which the ray bundle is treated as
/// degenerate (all rays parallel or numerically so).
pub const DEGENERACY_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TriangulationError {
    /// A single ray cannot fix depth.
    #[error("triangulation needs at least 2 rays, got {0}")]
    InsufficientRays(usize),
    /// The normal matrix is singular: rays are parallel or numerically so.
    #[error("degenerate ray geometry (normal matrix condition {condition:.3e})")]
    DegenerateGeometry { condition: f64 },
    #[error("observation references camera {0} absent from the scene")]
    UnknownCamera(u32),
}

/// Per-target triangulation failure from [`localize_linear`].
#[derive(Debug, Clone, Error, PartialEq)]
#[error("target {target_id}: {source}")]
pub struct TargetError {
    pub target_id: u32,
    pub source: TriangulationError,
}

/// The projector pair (A, b) a ray contributes to the normal system:
/// A = I - d d^T and b = A c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayProjector {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl RayProjector {
    pub fn from_ray(ray: &Ray) -> Self {
        let d = ray.direction.into_inner();
        let a = Matrix3::identity() - d * d.transpose();
        Self { a, b: a * ray.origin }
    }
}

/// Result of the closed-form solve for one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEstimate {
    /// Estimated world position in meters.
    pub position: Vector3<f64>,
    /// Sum of squared point-to-ray distances at the solution, in m^2.
    pub residual_sq: f64,
    /// Number of rays that entered the solve.
    pub ray_count: usize,
    /// Rays whose closest-point parameter is negative at the solution,
    /// i.e. the estimate sits behind that camera. Never nonzero in valid
    /// geometry; reported rather than rejected.
    pub behind_ray_count: usize,
}

/// Perpendicular distance from `x` to the line carrying `ray`.
pub fn point_ray_distance(x: &Vector3<f64>, ray: &Ray) -> f64 {
    let offset = x - ray.origin;
    let d = ray.direction.into_inner();
    (offset - d * d.dot(&offset)).norm()
}

/// Builds the (A, b) projector pair of a ray. See [`RayProjector`].
pub fn ray_projector(ray: &Ray) -> RayProjector {
    RayProjector::from_ray(ray)
}

/// Closed-form minimizer of the summed squared distances to `rays`.
///
/// Accumulates the 3x3 normal system directly (each projector is symmetric
/// idempotent, so the stacked least-squares normal equations reduce to
/// (sum A_i) x = sum b_i) and solves it by Cholesky decomposition after a
/// condition-number guard on the symmetric eigenvalues rejects bundles
/// past [`DEGENERACY_CONDITION`].
pub fn triangulate_lls(rays: &[Ray]) -> Result<LinearEstimate, TriangulationError> {
    if rays.len() < 2 {
        return Err(TriangulationError::InsufficientRays(rays.len()));
    }
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for ray in rays {
        let p = RayProjector::from_ray(ray);
        normal += p.a;
        rhs += p.b;
    }

    let eigenvalues = normal.symmetric_eigenvalues();
    let lambda_max = eigenvalues.max();
    let lambda_min = eigenvalues.min();
    let condition = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > DEGENERACY_CONDITION {
        return Err(TriangulationError::DegenerateGeometry { condition });
    }

    // The guard leaves a symmetric positive-definite system; Cholesky
    // solves it to machine precision where an eigenvector reconstruction
    // loses digits on clustered eigenvalues.
    let position = match normal.cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => normal
            .lu()
            .solve(&rhs)
            .ok_or(TriangulationError::DegenerateGeometry { condition })?,
    };

    let residual_sq = rays
        .iter()
        .map(|r| point_ray_distance(&position, r).powi(2))
        .sum();
    let behind_ray_count = rays
        .iter()
        .filter(|r| r.direction.dot(&(position - r.origin)) < 0.0)
        .count();

    Ok(LinearEstimate {
        position,
        residual_sq,
        ray_count: rays.len(),
        behind_ray_count,
    })
}

/// Triangulates every target in `observations` independently.
///
/// Returns one `(target id, outcome)` entry per target, sorted by id;
/// failures are per target and leave the other targets untouched.
pub fn localize_linear(
    scene: &Scene,
    observations: &ObservationSet,
) -> Vec<(u32, Result<LinearEstimate, TriangulationError>)> {
    let target_ids = observations.target_ids();
    let mut rays = vec![Vec::new(); target_ids.len()];
    let mut unknown = vec![None; target_ids.len()];
    for (camera_id, target_id, pixel) in observations.iter() {
        let index = target_ids.binary_search(&target_id).unwrap();
        match scene.camera(camera_id) {
            Some(cam) => rays[index].push(cam.observation_ray(pixel)),
            None => unknown[index] = Some(camera_id),
        }
    }
    target_ids
        .into_iter()
        .zip(rays)
        .zip(unknown)
        .map(|((target_id, rays), unknown)| {
            let outcome = match unknown {
                Some(id) => Err(TriangulationError::UnknownCamera(id)),
                None => triangulate_lls(&rays),
            };
            (target_id, outcome)
        })
        .collect()
}

/// Strict variant of [`localize_linear`]: fails on the first per-target
/// error, tagged with the offending target id.
pub fn localize_linear_strict(
    scene: &Scene,
    observations: &ObservationSet,
) -> Result<Vec<(u32, LinearEstimate)>, TargetError> {
    localize_linear(scene, observations)
        .into_iter()
        .map(|(target_id, outcome)| match outcome {
            Ok(est) => Ok((target_id, est)),
            Err(source) => Err(TargetError { target_id, source }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector3;

    fn ray(origin: [f64; 3], dir: [f64; 3]) -> Ray {
        Ray::new(Vector3::from(origin), Vector3::from(dir)).unwrap()
    }

    #[test]
    fn distance_is_zero_on_the_ray() {
        let r = ray([1.0, 2.0, 3.0], [0.3, -0.4, 0.5]);
        for lambda in [0.0, 0.5, 2.0, 17.0] {
            assert_abs_diff_eq!(point_ray_distance(&r.point_at(lambda), &r), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_to_z_axis() {
        let r = ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(
            point_ray_distance(&Vector3::new(1.0, 0.0, 0.0), &r),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            point_ray_distance(&Vector3::new(1.0, 1.0, 1.0), &r),
            2.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn projector_of_axis_aligned_rays() {
        let p = ray_projector(&ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]));
        assert_abs_diff_eq!(p.a, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)), epsilon = 1e-12);

        let p = ray_projector(&ray([0.0, 2.0, 3.0], [1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(p.a, Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, 1.0)), epsilon = 1e-12);
        assert_abs_diff_eq!(p.b, Vector3::new(0.0, 2.0, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn projector_annihilates_its_direction_and_is_idempotent() {
        let r = ray([1.0, -2.0, 0.5], [0.2, 0.9, -0.4]);
        let p = ray_projector(&r);
        assert_abs_diff_eq!(p.a * r.direction.into_inner(), Vector3::zeros(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.a * p.a, p.a, epsilon = 1e-12);
        assert_abs_diff_eq!(p.a, p.a.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn intersecting_rays_triangulate_exactly() {
        let est = triangulate_lls(&[
            ray([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ray([0.0, -1.0, 0.0], [0.0, 1.0, 0.0]),
        ])
        .unwrap();
        assert_abs_diff_eq!(est.position, Vector3::zeros(), epsilon = 1e-12);
        assert_abs_diff_eq!(est.residual_sq, 0.0, epsilon = 1e-12);
        assert_eq!(est.ray_count, 2);
        assert_eq!(est.behind_ray_count, 0);
    }

    #[test]
    fn skew_rays_triangulate_to_the_midpoint_minimizer() {
        // d(x, l1)^2 = y^2 + z^2 and d(x, l2)^2 = x^2 + (z - 1)^2, so the
        // minimizer is x = y = 0, z = 1/2 with objective value 1/2.
        let est = triangulate_lls(&[
            ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            ray([0.0, 1.0, 1.0], [0.0, 1.0, 0.0]),
        ])
        .unwrap();
        assert_abs_diff_eq!(est.position, Vector3::new(0.0, 0.0, 0.5), epsilon = 1e-12);
        assert_relative_eq!(est.residual_sq, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let err = triangulate_lls(&[
            ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            ray([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, TriangulationError::DegenerateGeometry { .. }));
    }

    #[test]
    fn one_ray_is_insufficient() {
        let err = triangulate_lls(&[ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])]).unwrap_err();
        assert_eq!(err, TriangulationError::InsufficientRays(1));
    }

    #[test]
    fn solution_satisfies_the_normal_equations() {
        let rays = [
            ray([0.0, 0.0, 3.0], [0.5, 0.5, -0.2]),
            ray([8.0, 0.0, 3.0], [-0.5, 0.6, -0.2]),
            ray([0.0, 8.0, 3.0], [0.4, -0.5, -0.25]),
        ];
        let est = triangulate_lls(&rays).unwrap();
        let mut normal = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for r in &rays {
            let p = ray_projector(r);
            normal += p.a;
            rhs += p.b;
        }
        let grad_residual = normal * est.position - rhs;
        assert!(grad_residual.norm() < 1e-9 * rhs.norm());
    }

    #[test]
    fn small_perturbations_do_not_improve_the_objective() {
        let rays = [
            ray([0.0, 0.0, 3.0], [0.55, 0.5, -0.2]),
            ray([8.0, 0.0, 3.0], [-0.5, 0.62, -0.21]),
            ray([8.0, 8.0, 3.0], [-0.45, -0.5, -0.22]),
        ];
        let est = triangulate_lls(&rays).unwrap();
        let objective = |p: &Vector3<f64>| -> f64 {
            rays.iter().map(|r| point_ray_distance(p, r).powi(2)).sum()
        };
        let at_solution = objective(&est.position);
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let delta = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize()
                * 1e-3;
            assert!(objective(&(est.position + delta)) >= at_solution);
        }
    }

    #[test]
    fn underobserved_target_fails_alone() {
        use crate::camera::{Camera, CameraPose, Intrinsics};
        use crate::scene::{Aabb, ObservationSet, Scene};

        let intr = Intrinsics::centered(1500.0, 1500.0, 2080.0, 1560.0).unwrap();
        let cameras = vec![
            Camera::new(
                0,
                intr,
                CameraPose::look_at_default(Vector3::new(0.0, 0.0, 3.0), Vector3::new(4.0, 4.0, 1.5))
                    .unwrap(),
            ),
            Camera::new(
                1,
                intr,
                CameraPose::look_at_default(Vector3::new(8.0, 0.0, 3.0), Vector3::new(4.0, 4.0, 1.5))
                    .unwrap(),
            ),
        ];
        let scene = Scene::new(
            cameras,
            Aabb::new(Vector3::zeros(), Vector3::new(8.0, 8.0, 3.0)).unwrap(),
        )
        .unwrap();

        let good = Vector3::new(4.0, 4.0, 1.5);
        let lonely = Vector3::new(3.0, 3.0, 1.0);
        let mut obs = ObservationSet::new();
        for cam in scene.cameras() {
            obs.insert(cam.id, 0, cam.project(&good).unwrap());
        }
        obs.insert(0, 1, scene.cameras()[0].project(&lonely).unwrap());

        let outcomes = localize_linear(&scene, &obs);
        assert_eq!(outcomes.len(), 2);
        let solved = outcomes[0].1.as_ref().unwrap();
        assert!((solved.position - good).norm() < 1e-9);
        assert_eq!(
            outcomes[1].1.as_ref().unwrap_err(),
            &TriangulationError::InsufficientRays(1)
        );
        let strict = localize_linear_strict(&scene, &obs).unwrap_err();
        assert_eq!(strict.target_id, 1);
    }

    #[test]
    fn permutation_of_rays_does_not_move_the_solution() {
        let mut rays = vec![
            ray([0.0, 0.0, 3.0], [0.55, 0.5, -0.2]),
            ray([8.0, 0.0, 3.0], [-0.5, 0.62, -0.21]),
            ray([8.0, 8.0, 3.0], [-0.45, -0.5, -0.22]),
            ray([0.0, 8.0, 3.0], [0.5, -0.55, -0.18]),
        ];
        let a = triangulate_lls(&rays).unwrap();
        rays.reverse();
        let b = triangulate_lls(&rays).unwrap();
        rays.swap(0, 2);
        let c = triangulate_lls(&rays).unwrap();
        assert_abs_diff_eq!(a.position, b.position, epsilon = 1e-12);
        assert_abs_diff_eq!(a.position, c.position, epsilon = 1e-12);
    }
}
