//! Passive multi-camera visible-light positioning.
//!
//! Fixed, pre-calibrated ceiling cameras observe LED point targets; this
//! crate estimates each target's world position from the synchronized
//! pixel observations in two stages:
//!
//! 1. **Linear triangulation** ([`triangulation`]): the closed-form
//!    least-squares intersection of the per-camera observation rays. This
//!    doubles as the linear multi-camera baseline (`mcvlp`).
//! 2. **Joint refinement** ([`refine`]): Levenberg-Marquardt minimization
//!    of the stacked squared pixel reprojection error over all targets,
//!    initialized at the Stage-1 estimates (`mcjo`).
//!
//! The [`sim`] module reproduces the evaluation protocol: parameterized
//! ceiling-camera scenes, uniformly sampled visible targets, Gaussian
//! pixel noise, seeded Monte Carlo batches over both algorithms, and
//! parameter sweeps; [`metrics`] summarizes the resulting error samples.

pub mod camera;
pub mod metrics;
pub mod refine;
pub mod scene;
pub mod sim;
pub mod triangulation;

pub use camera::{
    focal_px_from_mm, Camera, CameraPose, GeometryError, Intrinsics, PixelPoint, Ray,
};
pub use metrics::{compute_metrics, AxisSplit, MetricsError, RunMetrics};
pub use refine::{
    localize, refine_lm, reprojection_residual, residual_jacobian, LocalizeError, Localization,
    RefineError, RefinementResult, ResidualVector, SolverConfig, Termination,
};
pub use scene::{Aabb, ObservationSet, Scene, SceneError};
pub use sim::{
    run_monte_carlo, run_sweep, sample_targets, synthesize_observations, table1_scene,
    table4_scene, Algorithm, MonteCarloConfig, MonteCarloReport, NoiseModel, SimError, SweepParameter,
    SweepRow, SweepSpec,
};
pub use triangulation::{
    localize_linear, localize_linear_strict, point_ray_distance, ray_projector, triangulate_lls,
    LinearEstimate, RayProjector, TargetError, TriangulationError,
};
