//! Scene description (cameras plus the room they observe) and the pixel
//! observation table consumed by the solvers.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use thiserror::Error;

use crate::camera::{Camera, PixelPoint};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SceneError {
    #[error("a scene needs at least two cameras, got {0}")]
    TooFewCameras(usize),
    #[error("duplicate camera id {0}")]
    DuplicateCameraId(u32),
    #[error("camera {id} center {center:?} lies outside the room")]
    CameraOutsideRoom { id: u32, center: [f64; 3] },
    #[error("room box has min > max on some axis")]
    EmptyRoom,
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self, SceneError> {
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(SceneError::EmptyRoom);
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Shrinks the box by `margin` on every face. The result may be empty.
    pub fn shrunk(&self, margin: f64) -> (Vector3<f64>, Vector3<f64>) {
        (self.min.add_scalar(margin), self.max.add_scalar(-margin))
    }
}

/// A set of calibrated cameras installed in a room.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    cameras: Vec<Camera>,
    room: Aabb,
}

impl Scene {
    pub fn new(cameras: Vec<Camera>, room: Aabb) -> Result<Self, SceneError> {
        if cameras.len() < 2 {
            return Err(SceneError::TooFewCameras(cameras.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for cam in &cameras {
            if !seen.insert(cam.id) {
                return Err(SceneError::DuplicateCameraId(cam.id));
            }
            let c = cam.pose.center();
            if !room.contains(&c, 1e-9) {
                return Err(SceneError::CameraOutsideRoom {
                    id: cam.id,
                    center: [c.x, c.y, c.z],
                });
            }
        }
        Ok(Self { cameras, room })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn camera(&self, id: u32) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn room(&self) -> &Aabb {
        &self.room
    }

    /// True iff `p` is visible to every camera in the scene.
    pub fn visible_to_all(&self, p: &Vector3<f64>) -> bool {
        self.cameras.iter().all(|c| c.is_visible(p))
    }
}

/// Pixel observations indexed by (camera id, target id).
///
/// Iteration is always in (camera, target) lexicographic order, which fixes
/// the layout of residual vectors built from the set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pixels: BTreeMap<(u32, u32), PixelPoint>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an observation; returns the previous pixel if the
    /// (camera, target) pair was already present.
    pub fn insert(&mut self, camera_id: u32, target_id: u32, pixel: PixelPoint) -> Option<PixelPoint> {
        self.pixels.insert((camera_id, target_id), pixel)
    }

    pub fn get(&self, camera_id: u32, target_id: u32) -> Option<&PixelPoint> {
        self.pixels.get(&(camera_id, target_id))
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// All observations in (camera, target) lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &PixelPoint)> {
        self.pixels.iter().map(|(&(c, t), p)| (c, t, p))
    }

    /// Sorted, deduplicated target ids present in the set.
    pub fn target_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.pixels.keys().map(|&(_, t)| t).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Observations of one target, ordered by camera id.
    pub fn of_target(&self, target_id: u32) -> impl Iterator<Item = (u32, &PixelPoint)> {
        self.pixels
            .iter()
            .filter(move |(&(_, t), _)| t == target_id)
            .map(|(&(c, _), p)| (c, p))
    }

    /// Restricts the set to the given targets.
    pub fn retain_targets(&self, keep: &[u32]) -> ObservationSet {
        ObservationSet {
            pixels: self
                .pixels
                .iter()
                .filter(|(&(_, t), _)| keep.contains(&t))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }
}
