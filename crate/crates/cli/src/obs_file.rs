//! Observation files: CSV with a mandatory header
//! `frame_id,camera_id,target_id,u_px,v_px`, one observed pixel per row.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use vlp_core::camera::PixelPoint;
use vlp_core::scene::{ObservationSet, Scene};

use crate::CliError;

#[derive(Debug, Deserialize)]
struct ObsRow {
    frame_id: u64,
    camera_id: u32,
    target_id: u32,
    u_px: f64,
    v_px: f64,
}

/// Observations grouped by frame, frames in ascending order.
pub type FrameObservations = BTreeMap<u64, ObservationSet>;

/// Parses an observation file and validates it against the scene.
///
/// Diagnostics carry 1-based file line numbers (the header is line 1).
pub fn parse_observations(path: &Path, scene: &Scene) -> Result<FrameObservations, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;

    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let expected = ["frame_id", "camera_id", "target_id", "u_px", "v_px"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(CliError::Input(format!(
                "{}: expected header {}, got {}",
                path.display(),
                expected.join(","),
                got.join(",")
            )));
        }
    }

    let mut frames: FrameObservations = BTreeMap::new();
    for (index, record) in reader.deserialize::<ObsRow>().enumerate() {
        let line = index + 2;
        let row = record
            .map_err(|e| CliError::Input(format!("{}:{line}: {e}", path.display())))?;
        if !(row.u_px.is_finite() && row.v_px.is_finite()) {
            return Err(CliError::Input(format!(
                "{}:{line}: non-finite pixel coordinates",
                path.display()
            )));
        }
        if scene.camera(row.camera_id).is_none() {
            return Err(CliError::Input(format!(
                "{}:{line}: camera {} is not in the scene",
                path.display(),
                row.camera_id
            )));
        }
        let previous = frames.entry(row.frame_id).or_default().insert(
            row.camera_id,
            row.target_id,
            PixelPoint::new(row.u_px, row.v_px),
        );
        if previous.is_some() {
            return Err(CliError::Input(format!(
                "{}:{line}: duplicate observation (frame {}, camera {}, target {})",
                path.display(),
                row.frame_id,
                row.camera_id,
                row.target_id
            )));
        }
    }
    if frames.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no observation rows",
            path.display()
        )));
    }
    Ok(frames)
}
