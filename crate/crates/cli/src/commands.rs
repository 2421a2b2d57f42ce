//! Subcommand implementations. Data goes to the output file only;
//! progress and failure tallies go to stderr.

use std::path::PathBuf;

use nalgebra::Vector3;
use vlp_core::refine::{refine_lm, target_reprojection_cost, SolverConfig};
use vlp_core::scene::{ObservationSet, Scene};
use vlp_core::sim::{
    run_monte_carlo, run_sweep, Algorithm, MonteCarloConfig, NoiseModel, SimError, SweepParameter,
    SweepSpec,
};
use vlp_core::triangulation::{localize_linear, TriangulationError};

use crate::obs_file::parse_observations;
use crate::results::{write_localize, write_metrics, write_sweep, LocalizeRow};
use crate::scene_file::{parse_scene_file, SceneDoc};
use crate::{CliError, LocalizeArgs, SimulateArgs, SweepArgs};

fn resolve_scene(
    preset: &Option<String>,
    scene: &Option<PathBuf>,
    default_preset: Option<&str>,
) -> Result<Scene, CliError> {
    match (preset, scene) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --preset or --scene, not both".into(),
        )),
        (Some(name), None) => SceneDoc::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset '{name}'")))?
            .to_scene(),
        (None, Some(path)) => parse_scene_file(path),
        (None, None) => match default_preset {
            Some(name) => SceneDoc::preset(name).expect("builtin preset").to_scene(),
            None => Err(CliError::Usage("give --preset or --scene".into())),
        },
    }
}

fn monte_carlo_config(
    iterations: usize,
    targets: usize,
    sigma: f64,
    seed: u64,
    margin: f64,
) -> Result<MonteCarloConfig, CliError> {
    if iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    if targets == 0 {
        return Err(CliError::Usage("--targets must be at least 1".into()));
    }
    let noise = NoiseModel::new(sigma)
        .map_err(|_| CliError::Usage(format!("--sigma must be non-negative, got {sigma}")))?;
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(CliError::Usage(format!(
            "--margin must be non-negative, got {margin}"
        )));
    }
    Ok(MonteCarloConfig {
        iterations,
        targets_per_iteration: targets,
        noise,
        seed,
        solver: SolverConfig::default(),
        sampling_margin: margin,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scene = resolve_scene(&args.preset, &args.scene, Some("table1"))?;
    let config = monte_carlo_config(args.iterations, args.targets, args.sigma, args.seed, args.margin)?;
    let report = run_monte_carlo(&config, &scene).map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!(
        "simulate: {} iterations x {} targets, sigma {} px, seed {}: {} failed iteration(s){}",
        report.iterations,
        config.targets_per_iteration,
        config.noise.sigma,
        config.seed,
        report.failures,
        if report.flagged { " [flagged: >1% failures]" } else { "" }
    );
    write_metrics(&args.out, &report, args.emit_cdf)?;
    eprintln!(
        "simulate: mcjo mpe {:.3} mm, mcvlp mpe {:.3} mm -> {}",
        report.mcjo.mpe.total,
        report.mcvlp.mpe.total,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let parameter = args.parameter.into();
    if args.values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "--values must be strictly increasing".into(),
        ));
    }
    for &count in &args.cameras {
        if !(2..=4).contains(&count) {
            return Err(CliError::Usage(format!(
                "--cameras entries must be 2, 3 or 4, got {count}"
            )));
        }
    }
    if parameter == SweepParameter::CameraCount {
        for &v in &args.values {
            if v.fract() != 0.0 || !(2.0..=4.0).contains(&v) {
                return Err(CliError::Usage(format!(
                    "camera-count sweep values must be 2, 3 or 4, got {v}"
                )));
            }
        }
    } else if parameter == SweepParameter::NoiseStd && args.values.iter().any(|&v| v < 0.0) {
        return Err(CliError::Usage("noise sweep values must be non-negative".into()));
    }

    let base = monte_carlo_config(args.iterations, args.targets, args.sigma, args.seed, args.margin)?;
    let mut spec = SweepSpec::new(parameter, args.values.clone(), base);
    spec.camera_counts = args.cameras.clone();
    let rows = run_sweep(&spec).map_err(|e| match e {
        SimError::InvalidSweepValues => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    write_sweep(&args.out, &rows)?;
    eprintln!(
        "sweep: {} point(s) x {} camera count(s) -> {} rows -> {}",
        args.values.len(),
        if parameter == SweepParameter::CameraCount { 1 } else { args.cameras.len() },
        rows.len(),
        args.out.display()
    );
    Ok(())
}

fn status_of(err: &TriangulationError) -> &'static str {
    match err {
        TriangulationError::InsufficientRays(_) => "insufficient_rays",
        TriangulationError::DegenerateGeometry { .. } => "degenerate_geometry",
        TriangulationError::UnknownCamera(_) => "unknown_camera",
    }
}

fn cost_row(
    scene: &Scene,
    obs: &ObservationSet,
    frame_id: u64,
    target_id: u32,
    algorithm: Algorithm,
    position: Vector3<f64>,
    status: &str,
) -> LocalizeRow {
    // A position behind a camera has no finite reprojection cost; keep the
    // row with an explicit status instead of failing the command.
    match target_reprojection_cost(scene, obs, target_id, &position) {
        Ok(cost) => LocalizeRow {
            frame_id,
            target_id,
            algorithm,
            position: Some(position),
            reproj_cost_px2: Some(cost),
            status: status.into(),
        },
        Err(_) => LocalizeRow {
            frame_id,
            target_id,
            algorithm,
            position: Some(position),
            reproj_cost_px2: None,
            status: "behind_camera".into(),
        },
    }
}

pub fn cmd_localize(args: &LocalizeArgs) -> Result<(), CliError> {
    let scene = resolve_scene(&args.preset, &args.scene, None)?;
    let frames = parse_observations(&args.observations, &scene)?;

    let mut rows: Vec<LocalizeRow> = Vec::new();
    let mut failed_targets = 0usize;
    for (&frame_id, obs) in &frames {
        let outcomes = localize_linear(&scene, obs);
        let solved: Vec<(u32, Vector3<f64>)> = outcomes
            .iter()
            .filter_map(|(id, r)| r.as_ref().ok().map(|est| (*id, est.position)))
            .collect();

        // Joint refinement over the targets Stage 1 could solve.
        let refined: Option<Vec<(u32, Vector3<f64>, bool)>> = if args.linear_only || solved.is_empty()
        {
            None
        } else {
            let keep: Vec<u32> = solved.iter().map(|(id, _)| *id).collect();
            let retained = obs.retain_targets(&keep);
            let init: Vec<Vector3<f64>> = solved.iter().map(|(_, p)| *p).collect();
            match refine_lm(&scene, &retained, &init, &SolverConfig::default()) {
                Ok(res) => Some(
                    keep.iter()
                        .zip(&res.positions)
                        .map(|(id, p)| (*id, *p, res.converged))
                        .collect(),
                ),
                Err(e) => {
                    eprintln!("localize: frame {frame_id}: refinement failed: {e}");
                    None
                }
            }
        };

        for (target_id, outcome) in &outcomes {
            match outcome {
                Ok(est) => {
                    if !args.linear_only {
                        match refined
                            .as_ref()
                            .and_then(|r| r.iter().find(|(id, _, _)| id == target_id))
                        {
                            Some((_, position, converged)) => rows.push(cost_row(
                                &scene,
                                obs,
                                frame_id,
                                *target_id,
                                Algorithm::Mcjo,
                                *position,
                                if *converged { "ok" } else { "not_converged" },
                            )),
                            None => {
                                failed_targets += 1;
                                rows.push(LocalizeRow {
                                    frame_id,
                                    target_id: *target_id,
                                    algorithm: Algorithm::Mcjo,
                                    position: None,
                                    reproj_cost_px2: None,
                                    status: "refine_failed".into(),
                                });
                            }
                        }
                    }
                    rows.push(cost_row(
                        &scene,
                        obs,
                        frame_id,
                        *target_id,
                        Algorithm::Mcvlp,
                        est.position,
                        "ok",
                    ));
                }
                Err(e) => {
                    failed_targets += 1;
                    for algorithm in [Algorithm::Mcjo, Algorithm::Mcvlp] {
                        if args.linear_only && algorithm == Algorithm::Mcjo {
                            continue;
                        }
                        rows.push(LocalizeRow {
                            frame_id,
                            target_id: *target_id,
                            algorithm,
                            position: None,
                            reproj_cost_px2: None,
                            status: status_of(e).into(),
                        });
                    }
                }
            }
        }
    }

    write_localize(&args.out, &rows)?;
    eprintln!(
        "localize: {} frame(s), {} row(s), {} failed target(s) -> {}",
        frames.len(),
        rows.len(),
        failed_targets,
        args.out.display()
    );
    Ok(())
}

impl From<crate::ParameterArg> for SweepParameter {
    fn from(p: crate::ParameterArg) -> Self {
        match p {
            crate::ParameterArg::Focal => SweepParameter::FocalLengthPx,
            crate::ParameterArg::Noise => SweepParameter::NoiseStd,
            crate::ParameterArg::Layout => SweepParameter::LayoutDistance,
            crate::ParameterArg::Cameras => SweepParameter::CameraCount,
        }
    }
}
