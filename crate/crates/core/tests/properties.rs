//! Property tests over the geometry and triangulation invariants.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use vlp_core::camera::{Camera, CameraPose, Intrinsics, PixelPoint, Ray};
use vlp_core::triangulation::{point_ray_distance, ray_projector, triangulate_lls};

fn arb_unit() -> impl Strategy<Value = Unit<Vector3<f64>>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Unit::new_normalize(Vector3::new(x, y, z)))
}

fn arb_pose() -> impl Strategy<Value = CameraPose> {
    (arb_unit(), -3.0..3.0f64, prop::array::uniform3(-5.0..5.0f64)).prop_map(
        |(axis, angle, center)| {
            CameraPose::new(
                Rotation3::from_axis_angle(&axis, angle).into_inner(),
                Vector3::from(center),
            )
            .unwrap()
        },
    )
}

fn arb_point() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-10.0..10.0f64).prop_map(Vector3::from)
}

fn table1_intrinsics() -> Intrinsics {
    Intrinsics::centered(1500.0, 1500.0, 2080.0, 1560.0).unwrap()
}

proptest! {
    #[test]
    fn world_camera_transforms_round_trip(pose in arb_pose(), p in arb_point()) {
        let back = pose.camera_to_world(&pose.world_to_camera(&p));
        prop_assert!((back - p).amax() < 1e-12);
        let forth = pose.world_to_camera(&pose.camera_to_world(&p));
        prop_assert!((forth - p).amax() < 1e-12);
    }

    #[test]
    fn backprojected_directions_have_unit_norm(pose in arb_pose(), u in -9000.0..9000.0f64, v in -9000.0..9000.0f64) {
        let cam = Camera::new(0, table1_intrinsics(), pose);
        let d = cam.backproject_direction(&PixelPoint::new(u, v));
        prop_assert!((d.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observation_rays_pass_through_the_imaged_point(pose in arb_pose(), p in prop::array::uniform3(-2.0..2.0f64), depth in 0.5..10.0f64) {
        let cam = Camera::new(0, table1_intrinsics(), pose);
        let x_c = Vector3::new(p[0], p[1], depth);
        let x_w = pose.camera_to_world(&x_c);
        let pixel = cam.project(&x_w).unwrap();
        let ray = cam.observation_ray(&pixel);
        prop_assert!(point_ray_distance(&x_w, &ray) < 1e-9);
    }

    #[test]
    fn projection_ignores_camera_frame_scaling(p in prop::array::uniform3(-1.0..1.0f64), depth in 0.5..5.0f64, s in 0.1..10.0f64) {
        let cam = Camera::new(
            0,
            table1_intrinsics(),
            CameraPose::new(Matrix3::identity(), Vector3::zeros()).unwrap(),
        );
        let x = Vector3::new(p[0], p[1], depth);
        let a = cam.project(&x).unwrap();
        let b = cam.project(&(s * x)).unwrap();
        prop_assert!((a.u - b.u).abs() < 1e-8 && (a.v - b.v).abs() < 1e-8);
    }

    #[test]
    fn look_at_poses_are_orthonormal_and_aim_at_the_focus(
        position in arb_point(),
        focus in arb_point(),
    ) {
        prop_assume!((focus - position).norm() > 1e-2);
        let Ok(pose) = CameraPose::look_at(position, focus, Vector3::z()) else {
            // Degenerate configurations are rejected, which is itself the contract.
            return Ok(());
        };
        let r = pose.rotation();
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        let gaze = (focus - position).normalize();
        prop_assert!((pose.principal_axis() - gaze).amax() < 1e-12);
    }

    #[test]
    fn ray_projectors_are_symmetric_idempotent_rank_two(d in arb_unit(), origin in arb_point()) {
        let ray = Ray { origin, direction: d };
        let p = ray_projector(&ray);
        prop_assert!((p.a - p.a.transpose()).amax() < 1e-12);
        prop_assert!((p.a * p.a - p.a).amax() < 1e-12);
        prop_assert!((p.a * d.into_inner()).amax() < 1e-12);
        let eig = p.a.symmetric_eigenvalues();
        let mut sorted = [eig[0], eig[1], eig[2]];
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert!(sorted[0].abs() < 1e-9);
        prop_assert!((sorted[1] - 1.0).abs() < 1e-9 && (sorted[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn triangulation_is_permutation_invariant_and_recovers_generating_points(
        target in prop::array::uniform3(1.0..7.0f64),
        jitter in prop::array::uniform3(-0.4..0.4f64),
    ) {
        let target = Vector3::from(target);
        let centers = [
            Vector3::new(0.0, 0.0, 8.0 + jitter[0]),
            Vector3::new(8.0, 0.0, 8.0 + jitter[1]),
            Vector3::new(0.0, 8.0, 8.0 + jitter[2]),
            Vector3::new(8.0, 8.0, 8.0),
        ];
        let mut rays: Vec<Ray> = centers
            .iter()
            .map(|c| Ray::new(*c, target - c).unwrap())
            .collect();
        let a = triangulate_lls(&rays).unwrap();
        prop_assert!((a.position - target).norm() < 1e-9, "exactness: {:e}", (a.position - target).norm());
        rays.reverse();
        let b = triangulate_lls(&rays).unwrap();
        prop_assert!((a.position - b.position).amax() < 1e-12);
        rays.swap(0, 2);
        let c = triangulate_lls(&rays).unwrap();
        prop_assert!((a.position - c.position).amax() < 1e-12);
    }
}
