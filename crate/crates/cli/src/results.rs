//! Result files: comma-delimited text with mandatory headers. All numbers
//! are written as scientific decimals with ten significant digits so that
//! repeated runs are byte-identical and nothing is lost to formatting.

use std::path::Path;

use nalgebra::Vector3;
use vlp_core::metrics::RunMetrics;
use vlp_core::sim::{Algorithm, MonteCarloReport, SweepRow};

use crate::CliError;

pub fn format_num(x: f64) -> String {
    format!("{x:.9e}")
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn metric_rows(out: &mut String, algorithm: Algorithm, metrics: &RunMetrics) {
    let blocks = [
        ("mpe", &metrics.mpe),
        ("rmse", &metrics.rmse),
        ("std", &metrics.std),
        ("cdf50", &metrics.cdf50),
        ("cdf90", &metrics.cdf90),
    ];
    for (name, split) in blocks {
        out.push_str(&format!("{name},{algorithm},all,{}\n", format_num(split.total)));
        for (axis, value) in ["x", "y", "z"].iter().zip(split.per_axis) {
            out.push_str(&format!("{name},{algorithm},{axis},{}\n", format_num(value)));
        }
    }
}

/// Metrics file of a simulation batch: `metric,algorithm,axis,value_mm`.
/// With `emit_cdf`, the sorted raw error samples follow as `sample` rows.
pub fn write_metrics(path: &Path, report: &MonteCarloReport, emit_cdf: bool) -> Result<(), CliError> {
    let mut out = String::from("metric,algorithm,axis,value_mm\n");
    metric_rows(&mut out, Algorithm::Mcjo, &report.mcjo);
    metric_rows(&mut out, Algorithm::Mcvlp, &report.mcvlp);
    if emit_cdf {
        for (algorithm, metrics) in [
            (Algorithm::Mcjo, &report.mcjo),
            (Algorithm::Mcvlp, &report.mcvlp),
        ] {
            for sample in &metrics.error_samples {
                out.push_str(&format!("sample,{algorithm},all,{}\n", format_num(*sample)));
            }
        }
    }
    write_file(path, &out)
}

/// Sweep file: `parameter_value,camera_count,algorithm,mpe_mm`.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut out = String::from("parameter_value,camera_count,algorithm,mpe_mm\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_num(row.parameter_value),
            row.camera_count,
            row.algorithm,
            format_num(row.mpe_mm)
        ));
    }
    write_file(path, &out)
}

/// One per-target localization row. Failed targets keep empty numeric
/// fields and a non-`ok` status.
pub struct LocalizeRow {
    pub frame_id: u64,
    pub target_id: u32,
    pub algorithm: Algorithm,
    pub position: Option<Vector3<f64>>,
    pub reproj_cost_px2: Option<f64>,
    pub status: String,
}

/// Localization file:
/// `frame_id,target_id,algorithm,x_m,y_m,z_m,reproj_cost_px2,status`.
pub fn write_localize(path: &Path, rows: &[LocalizeRow]) -> Result<(), CliError> {
    let mut out = String::from("frame_id,target_id,algorithm,x_m,y_m,z_m,reproj_cost_px2,status\n");
    for row in rows {
        let coords = match &row.position {
            Some(p) => format!("{},{},{}", format_num(p.x), format_num(p.y), format_num(p.z)),
            None => ",,".to_string(),
        };
        let cost = row.reproj_cost_px2.map(format_num).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{coords},{cost},{}\n",
            row.frame_id, row.target_id, row.algorithm, row.status
        ));
    }
    write_file(path, &out)
}
