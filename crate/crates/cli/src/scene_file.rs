//! Scene files: a TOML document describing the room and each camera.
//!
//! Each camera gives its orientation either as a `focus` point (look-at
//! construction) or an explicit row-major 3x3 `rotation`, and its focal
//! length either directly in pixels (`focal_px`) or as `focal_mm` plus
//! `pixel_pitch_um`.
//!
//! ```toml
//! [room]
//! min = [0.0, 0.0, 0.0]
//! max = [8.0, 8.0, 3.0]
//!
//! [[cameras]]
//! id = 0
//! position = [0.0, 0.0, 3.0]
//! focus = [4.0, 4.0, 1.5]
//! focal_mm = 3.36
//! pixel_pitch_um = 2.24
//! principal = [2080.0, 1560.0]
//! sensor = [4160.0, 3120.0]
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use vlp_core::camera::{focal_px_from_mm, Camera, CameraPose, Intrinsics};
use vlp_core::scene::{Aabb, Scene};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub room: RoomDoc,
    pub cameras: Vec<CameraDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub id: u32,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_pitch_um: Option<f64>,
    pub principal: [f64; 2],
    pub sensor: [f64; 2],
}

impl SceneDoc {
    /// The simulated geometry: four ceiling-corner cameras in an
    /// 8 m x 8 m x 3 m room, all focused on the room center at 1.5 m.
    pub fn table1() -> Self {
        let corner = |id: u32, x: f64, y: f64| CameraDoc {
            id,
            position: [x, y, 3.0],
            focus: Some([4.0, 4.0, 1.5]),
            rotation: None,
            focal_px: None,
            focal_mm: Some(3.36),
            pixel_pitch_um: Some(2.24),
            principal: [2080.0, 1560.0],
            sensor: [4160.0, 3120.0],
        };
        SceneDoc {
            room: RoomDoc { min: [0.0; 3], max: [8.0, 8.0, 3.0] },
            cameras: vec![
                corner(0, 0.0, 0.0),
                corner(1, 8.0, 0.0),
                corner(2, 0.0, 8.0),
                corner(3, 8.0, 8.0),
            ],
        }
    }

    /// The three-camera experimental geometry with per-camera focus
    /// points on the floor.
    pub fn table4() -> Self {
        let cam = |id: u32, position: [f64; 3], focus: [f64; 3]| CameraDoc {
            id,
            position,
            focus: Some(focus),
            rotation: None,
            focal_px: None,
            focal_mm: Some(5.0),
            pixel_pitch_um: Some(2.0),
            principal: [1296.0, 972.0],
            sensor: [2592.0, 1944.0],
        };
        SceneDoc {
            room: RoomDoc { min: [0.0; 3], max: [3.6, 3.6, 2.4] },
            cameras: vec![
                cam(0, [0.05, 0.13, 2.35], [2.0, 1.6, 0.0]),
                cam(1, [3.50, 0.09, 2.30], [1.5, 1.4, 0.0]),
                cam(2, [1.77, 3.41, 2.26], [1.8, 1.9, 0.0]),
            ],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table1" => Some(Self::table1()),
            "table4" => Some(Self::table4()),
            _ => None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene documents always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("scene file: {e}")))
    }

    /// Validates the document and builds the runtime scene.
    pub fn to_scene(&self) -> Result<Scene, CliError> {
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(index, doc)| {
                build_camera(doc).map_err(|msg| {
                    CliError::Input(format!("scene file: camera #{index} (id {}): {msg}", doc.id))
                })
            })
            .collect::<Result<Vec<Camera>, CliError>>()?;
        let room = Aabb::new(Vector3::from(self.room.min), Vector3::from(self.room.max))
            .map_err(|e| CliError::Input(format!("scene file: room: {e}")))?;
        Scene::new(cameras, room).map_err(|e| CliError::Input(format!("scene file: {e}")))
    }
}

fn build_camera(doc: &CameraDoc) -> Result<Camera, String> {
    let focal_px = match (doc.focal_px, doc.focal_mm, doc.pixel_pitch_um) {
        (Some(px), None, None) => px,
        (None, Some(mm), Some(pitch)) => {
            if pitch <= 0.0 {
                return Err(format!("pixel_pitch_um must be positive, got {pitch}"));
            }
            focal_px_from_mm(mm, pitch)
        }
        (None, Some(_), None) => return Err("focal_mm requires pixel_pitch_um".into()),
        (None, None, Some(_)) => return Err("pixel_pitch_um requires focal_mm".into()),
        (None, None, None) => {
            return Err("specify focal_px, or focal_mm with pixel_pitch_um".into())
        }
        _ => return Err("specify either focal_px or focal_mm/pixel_pitch_um, not both".into()),
    };
    let intrinsics = Intrinsics::new(
        focal_px,
        focal_px,
        doc.principal[0],
        doc.principal[1],
        doc.sensor[0],
        doc.sensor[1],
    )
    .map_err(|e| e.to_string())?;
    let position = Vector3::from(doc.position);
    let pose = match (&doc.focus, &doc.rotation) {
        (Some(focus), None) => CameraPose::look_at_default(position, Vector3::from(*focus))
            .map_err(|e| format!("focus: {e}"))?,
        (None, Some(rows)) => {
            let rotation = Matrix3::from_rows(&[
                Vector3::from(rows[0]).transpose(),
                Vector3::from(rows[1]).transpose(),
                Vector3::from(rows[2]).transpose(),
            ]);
            CameraPose::new(rotation, position).map_err(|e| format!("rotation: {e}"))?
        }
        (Some(_), Some(_)) => return Err("specify either focus or rotation, not both".into()),
        (None, None) => return Err("specify focus or rotation".into()),
    };
    Ok(Camera::new(doc.id, intrinsics, pose))
}

/// Reads and validates a scene file.
pub fn parse_scene_file(path: &std::path::Path) -> Result<Scene, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    SceneDoc::from_toml(&text)?.to_scene()
}
