//! Pinhole camera model: coordinate transforms, forward projection, and
//! pixel back-projection to world-frame observation rays.
//!
//! Conventions: the world frame (WCS) and each camera frame (CCS) are
//! right-handed; the CCS z-axis is the principal axis, x/y align with the
//! pixel u/v axes. A [`CameraPose`] stores the CCS-to-WCS rotation together
//! with the optical center in world coordinates, so `x_w = R x_c + c`.

use nalgebra::{Matrix3, Unit, Vector3};
use thiserror::Error;

/// Points closer to the camera plane than this (in meters along the
/// principal axis) are treated as unprojectable.
pub const CHEIRALITY_TOL: f64 = 1e-9;

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    /// The point sits behind (or numerically on) the camera plane and
    /// cannot be imaged. The caller decides visibility policy.
    #[error("point is behind the camera (z_c = {z_c:.3e} m)")]
    BehindCamera { z_c: f64 },
    /// Look-at direction is parallel to the up hint; the roll about the
    /// principal axis is undefined. Supply a different up hint.
    #[error("look-at direction is parallel to the up hint")]
    DegenerateLookAt,
    /// Position and focus target coincide.
    #[error("look-at focus coincides with the camera position")]
    ZeroLookDirection,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation matrix is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("ray direction must be nonzero")]
    ZeroRayDirection,
}

/// Pinhole intrinsics plus sensor bounds.
///
/// Focal lengths and the principal point are in pixels; `width`/`height`
/// bound the sensor for visibility checks only and play no role in
/// projection itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        u0: f64,
        v0: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, GeometryError> {
        let all_finite = [fx, fy, u0, v0, width, height].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(GeometryError::InvalidIntrinsics(
                "non-finite parameter".into(),
            ));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        if !(u0 > 0.0 && u0 < width) || !(v0 > 0.0 && v0 < height) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({u0}, {v0}) must lie strictly inside the {width}x{height} sensor"
            )));
        }
        Ok(Self {
            fx,
            fy,
            u0,
            v0,
            width,
            height,
        })
    }

    /// Principal-point-centered sensor: width = 2 u0, height = 2 v0.
    pub fn centered(fx: f64, fy: f64, u0: f64, v0: f64) -> Result<Self, GeometryError> {
        Self::new(fx, fy, u0, v0, 2.0 * u0, 2.0 * v0)
    }
}

/// Camera extrinsics: CCS-to-WCS rotation and the optical center in WCS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
}

impl CameraPose {
    /// Builds a pose from an explicit rotation, rejecting matrices that are
    /// not orthonormal with determinant +1 to within [`ROTATION_TOL`].
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self, GeometryError> {
        let gram_defect = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if gram_defect > ROTATION_TOL || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self { rotation, center })
    }

    /// Constructs the pose of a camera at `position` whose principal axis
    /// points at `focus`.
    ///
    /// The rotation's third column (the z_c axis in world coordinates) is
    /// the normalized position-to-focus vector; `up_hint` fixes the roll via
    /// x_c = normalize(up_hint x z_c), y_c = z_c x x_c. Fails with
    /// [`GeometryError::DegenerateLookAt`] when the viewing direction is
    /// parallel to `up_hint`.
    pub fn look_at(
        position: Vector3<f64>,
        focus: Vector3<f64>,
        up_hint: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let gaze = focus - position;
        if gaze.norm() <= 1e-9 {
            return Err(GeometryError::ZeroLookDirection);
        }
        let z_axis = gaze.normalize();
        let up = up_hint.normalize();
        if up.dot(&z_axis).abs() >= 1.0 - 1e-9 {
            return Err(GeometryError::DegenerateLookAt);
        }
        let x_axis = up.cross(&z_axis).normalize();
        let y_axis = z_axis.cross(&x_axis);
        let rotation = Matrix3::from_columns(&[x_axis, y_axis, z_axis]);
        // Re-orthonormalization is unnecessary: the columns are built as an
        // orthonormal triad up to rounding, well inside ROTATION_TOL.
        Self::new(rotation, position)
    }

    /// [`CameraPose::look_at`] with the world z-axis as the up hint,
    /// falling back to the x-axis when the camera looks straight up or
    /// down. Roll about the principal axis does not affect observation
    /// rays; this convention just makes runs reproducible.
    pub fn look_at_default(
        position: Vector3<f64>,
        focus: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        match Self::look_at(position, focus, Vector3::z()) {
            Err(GeometryError::DegenerateLookAt) => {
                Self::look_at(position, focus, Vector3::x())
            }
            other => other,
        }
    }

    /// CCS-to-WCS rotation.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    /// Principal axis (z_c) expressed in world coordinates.
    pub fn principal_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into()
    }

    /// Maps world coordinates into this camera's frame: x_c = R^T (x_w - c).
    pub fn world_to_camera(&self, x_w: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (x_w - self.center)
    }

    /// Maps camera coordinates into the world frame: x_w = R x_c + c.
    pub fn camera_to_world(&self, x_c: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x_c + self.center
    }
}

/// A calibrated camera: intrinsics plus pose, labeled by a scene-unique id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn new(id: u32, intrinsics: Intrinsics, pose: CameraPose) -> Self {
        Self {
            id,
            intrinsics,
            pose,
        }
    }

    /// Projects a world point onto the sensor.
    ///
    /// Fails with [`GeometryError::BehindCamera`] when the point does not
    /// lie strictly in front of the camera (z_c > [`CHEIRALITY_TOL`]).
    pub fn project(&self, x_w: &Vector3<f64>) -> Result<PixelPoint, GeometryError> {
        let x_c = self.pose.world_to_camera(x_w);
        if x_c.z <= CHEIRALITY_TOL {
            return Err(GeometryError::BehindCamera { z_c: x_c.z });
        }
        let k = &self.intrinsics;
        Ok(PixelPoint {
            u: k.fx * x_c.x / x_c.z + k.u0,
            v: k.fy * x_c.y / x_c.z + k.v0,
        })
    }

    /// World-frame unit direction of the ray through pixel `p`:
    /// R * K^-1 [u; v; 1], normalized.
    pub fn backproject_direction(&self, p: &PixelPoint) -> Unit<Vector3<f64>> {
        let k = &self.intrinsics;
        let dir_c = Vector3::new((p.u - k.u0) / k.fx, (p.v - k.v0) / k.fy, 1.0);
        Unit::new_normalize(self.pose.rotation() * dir_c)
    }

    /// The observation ray of pixel `p`: origin at the optical center,
    /// direction from [`Camera::backproject_direction`].
    pub fn observation_ray(&self, p: &PixelPoint) -> Ray {
        Ray {
            origin: self.pose.center(),
            direction: self.backproject_direction(p),
        }
    }

    /// True iff the point projects strictly in front of the camera and onto
    /// the sensor rectangle [0, width] x [0, height].
    pub fn is_visible(&self, x_w: &Vector3<f64>) -> bool {
        match self.project(x_w) {
            Ok(p) => {
                p.u >= 0.0
                    && p.u <= self.intrinsics.width
                    && p.v >= 0.0
                    && p.v <= self.intrinsics.height
            }
            Err(_) => false,
        }
    }
}

/// Converts a focal length in millimeters and a pixel pitch in micrometers
/// per pixel into a focal length in pixels.
pub fn focal_px_from_mm(focal_mm: f64, pixel_pitch_um: f64) -> f64 {
    focal_mm * 1000.0 / pixel_pitch_um
}

/// A pixel coordinate. May lie outside the sensor bounds; visibility is a
/// separate check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// A world-frame half-line from a camera center through an observed pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self, GeometryError> {
        if direction.norm() <= f64::EPSILON {
            return Err(GeometryError::ZeroRayDirection);
        }
        Ok(Self {
            origin,
            direction: Unit::new_normalize(direction),
        })
    }

    /// Point at parameter `lambda` along the ray.
    pub fn point_at(&self, lambda: f64) -> Vector3<f64> {
        self.origin + lambda * self.direction.into_inner()
    }
}
