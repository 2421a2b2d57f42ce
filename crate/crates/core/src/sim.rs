//! Monte Carlo evaluation harness: parameterized ceiling-camera scenes,
//! visible-target sampling, noisy observation synthesis, batch runs over
//! both localization stages, and parameter sweeps.
//!
//! Reproducibility contract: every iteration draws from its own RNG stream
//! derived from (master seed, iteration index), and aggregation is
//! order-independent, so results are bitwise identical for a fixed seed
//! regardless of how many threads execute the batch.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{focal_px_from_mm, Camera, CameraPose, GeometryError, Intrinsics};
use crate::metrics::{compute_metrics, MetricsError, RunMetrics};
use crate::refine::{localize, LocalizeError, SolverConfig};
use crate::scene::{Aabb, ObservationSet, Scene, SceneError};

/// Default ceiling-square side and camera height of the simulated room.
pub const DEFAULT_LAYOUT_M: f64 = 8.0;
pub const CAMERA_HEIGHT_M: f64 = 3.0;
pub const FOCUS_HEIGHT_M: f64 = 1.5;

/// Default intrinsics of the simulated cameras: 3.36 mm lens at
/// 2.24 um/px, i.e. 1500 px, with principal point (2080, 1560).
pub const DEFAULT_FOCAL_PX: f64 = 1500.0;
pub const DEFAULT_PRINCIPAL_U: f64 = 2080.0;
pub const DEFAULT_PRINCIPAL_V: f64 = 1560.0;

/// Default keep-out margin from the room faces when sampling targets.
pub const DEFAULT_SAMPLING_MARGIN_M: f64 = 0.1;

const MAX_SAMPLING_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("unsupported camera count {0}; expected 2, 3 or 4")]
    UnsupportedCameraCount(usize),
    #[error("layout distance must be positive, got {0}")]
    InvalidLayout(f64),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("target sampling exhausted after {attempts} attempts; field of view is over-constrained")]
    SamplingExhausted { attempts: usize },
    #[error("cannot synthesize observation of target {target} for camera {camera}: {source}")]
    Synthesis {
        camera: u32,
        target: u32,
        source: GeometryError,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("all {0} iterations failed")]
    AllIterationsFailed(usize),
    #[error("sweep values must be nonempty and strictly increasing")]
    InvalidSweepValues,
}

/// Zero-mean isotropic Gaussian pixel noise, `sigma` per axis in px.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self, SimError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(SimError::InvalidNoise(sigma));
        }
        Ok(Self { sigma })
    }
}

/// Batch configuration for [`run_monte_carlo`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub iterations: usize,
    /// Number of targets localized simultaneously per iteration (M).
    pub targets_per_iteration: usize,
    pub noise: NoiseModel,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Keep-out margin from the room faces when sampling targets, m.
    pub sampling_margin: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            targets_per_iteration: 3,
            noise: NoiseModel { sigma: 3.0 },
            seed: 0,
            solver: SolverConfig::default(),
            sampling_margin: DEFAULT_SAMPLING_MARGIN_M,
        }
    }
}

/// The two algorithms a batch evaluates: the full two-stage pipeline
/// (`mcjo`) and the linear-only baseline (`mcvlp`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mcjo,
    Mcvlp,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Mcjo => "mcjo",
            Algorithm::Mcvlp => "mcvlp",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of a Monte Carlo batch: one metrics block per algorithm plus
/// the failure tally.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub mcjo: RunMetrics,
    pub mcvlp: RunMetrics,
    pub iterations: usize,
    /// Iterations excluded because a solver failed or did not converge.
    /// Never retried with fresh noise, to avoid biasing the statistics.
    pub failures: usize,
    /// Set when more than 1% of iterations failed.
    pub flagged: bool,
}

/// Builds the simulated scene: `camera_count` cameras on the corners of an
/// L x L ceiling square at 3 m height, all focused on [L/2, L/2, 1.5].
///
/// Corner subsets are fixed conventions: 4 cameras use all corners in the
/// order (0,0), (L,0), (0,L), (L,L); 3 cameras drop (L,L); 2 cameras use
/// the opposite pair (0,0) and (L,L).
pub fn table1_scene(
    layout_distance_m: f64,
    camera_count: usize,
    focal_px: f64,
) -> Result<Scene, SimError> {
    if !layout_distance_m.is_finite() || layout_distance_m <= 0.0 {
        return Err(SimError::InvalidLayout(layout_distance_m));
    }
    let l = layout_distance_m;
    let corners = match camera_count {
        2 => vec![[0.0, 0.0], [l, l]],
        3 => vec![[0.0, 0.0], [l, 0.0], [0.0, l]],
        4 => vec![[0.0, 0.0], [l, 0.0], [0.0, l], [l, l]],
        n => return Err(SimError::UnsupportedCameraCount(n)),
    };
    let focus = Vector3::new(l / 2.0, l / 2.0, FOCUS_HEIGHT_M);
    let intrinsics = Intrinsics::centered(
        focal_px,
        focal_px,
        DEFAULT_PRINCIPAL_U,
        DEFAULT_PRINCIPAL_V,
    )?;
    let cameras = corners
        .iter()
        .enumerate()
        .map(|(id, &[x, y])| {
            let position = Vector3::new(x, y, CAMERA_HEIGHT_M);
            Ok(Camera::new(
                id as u32,
                intrinsics,
                CameraPose::look_at_default(position, focus)?,
            ))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let room = Aabb::new(
        Vector3::zeros(),
        Vector3::new(l, l, CAMERA_HEIGHT_M),
    )
    .expect("layout > 0 gives a nonempty room");
    Ok(Scene::new(cameras, room)?)
}

/// The three-camera experimental geometry: downward-tilted cameras with a
/// 5 mm lens at 2 um/px (2500 px) and principal point (1296, 972), each
/// aimed at its own floor focus point to widen the overlapping field of
/// view.
pub fn table4_scene() -> Scene {
    let intrinsics = Intrinsics::centered(
        focal_px_from_mm(5.0, 2.0),
        focal_px_from_mm(5.0, 2.0),
        1296.0,
        972.0,
    )
    .expect("static intrinsics");
    let placements = [
        ([0.05, 0.13, 2.35], [2.0, 1.6, 0.0]),
        ([3.50, 0.09, 2.30], [1.5, 1.4, 0.0]),
        ([1.77, 3.41, 2.26], [1.8, 1.9, 0.0]),
    ];
    let cameras = placements
        .iter()
        .enumerate()
        .map(|(id, &(pos, focus))| {
            Camera::new(
                id as u32,
                intrinsics,
                CameraPose::look_at_default(Vector3::from(pos), Vector3::from(focus))
                    .expect("static placement"),
            )
        })
        .collect();
    let room = Aabb::new(Vector3::zeros(), Vector3::new(3.6, 3.6, 2.4)).expect("static room");
    Scene::new(cameras, room).expect("static scene")
}

/// Draws `count` points uniformly from the margin-shrunk room, rejecting
/// points not visible to every camera.
pub fn sample_targets<R: Rng>(
    scene: &Scene,
    count: usize,
    margin: f64,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>, SimError> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(SimError::InvalidConfig("sampling margin must be non-negative"));
    }
    let (lo, hi) = scene.room().shrunk(margin);
    if (0..3).any(|a| lo[a] > hi[a]) {
        return Err(SimError::SamplingExhausted { attempts: 0 });
    }
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            let p = Vector3::new(
                rng.gen_range(lo.x..=hi.x),
                rng.gen_range(lo.y..=hi.y),
                rng.gen_range(lo.z..=hi.z),
            );
            if scene.visible_to_all(&p) {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => targets.push(p),
            None => {
                return Err(SimError::SamplingExhausted {
                    attempts: MAX_SAMPLING_ATTEMPTS,
                })
            }
        }
    }
    Ok(targets)
}

/// Projects every target into every camera and perturbs each pixel with
/// independent per-axis Gaussian noise. Target ids are the indices into
/// `targets`.
pub fn synthesize_observations<R: Rng>(
    scene: &Scene,
    targets: &[Vector3<f64>],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ObservationSet, SimError> {
    if !noise.sigma.is_finite() || noise.sigma < 0.0 {
        return Err(SimError::InvalidNoise(noise.sigma));
    }
    let gaussian = Normal::new(0.0, noise.sigma).map_err(|_| SimError::InvalidNoise(noise.sigma))?;
    let mut obs = ObservationSet::new();
    for cam in scene.cameras() {
        for (j, target) in targets.iter().enumerate() {
            let mut pixel = cam.project(target).map_err(|source| SimError::Synthesis {
                camera: cam.id,
                target: j as u32,
                source,
            })?;
            pixel.u += gaussian.sample(rng);
            pixel.v += gaussian.sample(rng);
            obs.insert(cam.id, j as u32, pixel);
        }
    }
    Ok(obs)
}

// Per-target error samples of one iteration, in mm.
struct IterationSamples {
    mcjo: Vec<(f64, [f64; 3])>,
    mcvlp: Vec<(f64, [f64; 3])>,
}

fn error_sample(estimate: &Vector3<f64>, truth: &Vector3<f64>) -> (f64, [f64; 3]) {
    let d = estimate - truth;
    (
        d.norm() * 1000.0,
        [d.x.abs() * 1000.0, d.y.abs() * 1000.0, d.z.abs() * 1000.0],
    )
}

fn run_iteration(
    scene: &Scene,
    config: &MonteCarloConfig,
    iteration: u64,
) -> Result<IterationSamples, ()> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(iteration);
    let targets = sample_targets(
        scene,
        config.targets_per_iteration,
        config.sampling_margin,
        &mut rng,
    )
    .map_err(|_| ())?;
    let obs = synthesize_observations(scene, &targets, &config.noise, &mut rng).map_err(|_| ())?;
    let loc = localize(scene, &obs, &config.solver).map_err(|_: LocalizeError| ())?;
    if !loc.refinement.converged {
        return Err(());
    }
    let mut samples = IterationSamples {
        mcjo: Vec::with_capacity(targets.len()),
        mcvlp: Vec::with_capacity(targets.len()),
    };
    for (k, truth) in targets.iter().enumerate() {
        samples.mcjo.push(error_sample(&loc.refinement.positions[k], truth));
        samples.mcvlp.push(error_sample(&loc.linear[k].position, truth));
    }
    Ok(samples)
}

/// Runs the Monte Carlo batch: per iteration, sample M visible targets,
/// synthesize one noisy observation set, and run both stages on it.
/// Position errors are aggregated per target across all iterations.
pub fn run_monte_carlo(
    config: &MonteCarloConfig,
    scene: &Scene,
) -> Result<MonteCarloReport, SimError> {
    if config.iterations == 0 {
        return Err(SimError::InvalidConfig("iterations must be >= 1"));
    }
    if config.targets_per_iteration == 0 {
        return Err(SimError::InvalidConfig("targets_per_iteration must be >= 1"));
    }
    config
        .solver
        .validate()
        .map_err(|_| SimError::InvalidConfig("invalid solver configuration"))?;

    let outcomes: Vec<Result<IterationSamples, ()>> = (0..config.iterations as u64)
        .into_par_iter()
        .map(|i| run_iteration(scene, config, i))
        .collect();

    let mut failures = 0;
    let mut mcjo_total = Vec::new();
    let mut mcjo_axis = Vec::new();
    let mut mcvlp_total = Vec::new();
    let mut mcvlp_axis = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(samples) => {
                for (e, a) in samples.mcjo {
                    mcjo_total.push(e);
                    mcjo_axis.push(a);
                }
                for (e, a) in samples.mcvlp {
                    mcvlp_total.push(e);
                    mcvlp_axis.push(a);
                }
            }
            Err(()) => failures += 1,
        }
    }
    if mcjo_total.is_empty() {
        return Err(SimError::AllIterationsFailed(config.iterations));
    }

    Ok(MonteCarloReport {
        mcjo: compute_metrics(&mcjo_total, &mcjo_axis)?,
        mcvlp: compute_metrics(&mcvlp_total, &mcvlp_axis)?,
        iterations: config.iterations,
        failures,
        flagged: failures * 100 > config.iterations,
    })
}

/// The scene or noise parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    FocalLengthPx,
    NoiseStd,
    LayoutDistance,
    CameraCount,
}

/// A one-dimensional parameter sweep, each point evaluated per camera
/// count and algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// Swept values, strictly increasing.
    pub values: Vec<f64>,
    /// Camera counts evaluated at each value. Ignored when the swept
    /// parameter is the camera count itself.
    pub camera_counts: Vec<usize>,
    pub base: MonteCarloConfig,
    /// Focal length used when not swept, px.
    pub base_focal_px: f64,
    /// Layout distance used when not swept, m.
    pub base_layout_m: f64,
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, values: Vec<f64>, base: MonteCarloConfig) -> Self {
        Self {
            parameter,
            values,
            camera_counts: vec![2, 3, 4],
            base,
            base_focal_px: DEFAULT_FOCAL_PX,
            base_layout_m: DEFAULT_LAYOUT_M,
        }
    }
}

/// One sweep result in long format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub parameter_value: f64,
    pub camera_count: usize,
    pub algorithm: Algorithm,
    pub mpe_mm: f64,
}

/// Runs one Monte Carlo batch per (value, camera count) pair and emits
/// long-format rows for both algorithms.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SimError> {
    if spec.values.is_empty() || spec.values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidSweepValues);
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let counts: Vec<usize> = match spec.parameter {
            SweepParameter::CameraCount => {
                if value.fract() != 0.0 {
                    return Err(SimError::InvalidSweepValues);
                }
                vec![value as usize]
            }
            _ => spec.camera_counts.clone(),
        };
        for count in counts {
            let mut config = spec.base.clone();
            let scene = match spec.parameter {
                SweepParameter::FocalLengthPx => table1_scene(spec.base_layout_m, count, value)?,
                SweepParameter::NoiseStd => {
                    config.noise = NoiseModel::new(value)?;
                    table1_scene(spec.base_layout_m, count, spec.base_focal_px)?
                }
                SweepParameter::LayoutDistance => table1_scene(value, count, spec.base_focal_px)?,
                SweepParameter::CameraCount => {
                    table1_scene(spec.base_layout_m, count, spec.base_focal_px)?
                }
            };
            let report = run_monte_carlo(&config, &scene)?;
            rows.push(SweepRow {
                parameter_value: value,
                camera_count: count,
                algorithm: Algorithm::Mcjo,
                mpe_mm: report.mcjo.mpe.total,
            });
            rows.push(SweepRow {
                parameter_value: value,
                camera_count: count,
                algorithm: Algorithm::Mcvlp,
                mpe_mm: report.mcvlp.mpe.total,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn table1_scene_matches_the_documented_layout() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        assert_eq!(scene.cameras().len(), 4);
        let cam0 = &scene.cameras()[0];
        assert_abs_diff_eq!(cam0.pose.center(), Vector3::new(0.0, 0.0, 3.0), epsilon = 1e-12);
        let expected_axis = (Vector3::new(4.0, 4.0, 1.5) - Vector3::new(0.0, 0.0, 3.0)).normalize();
        assert_abs_diff_eq!(cam0.pose.principal_axis(), expected_axis, epsilon = 1e-12);
        assert_eq!(cam0.intrinsics.width, 4160.0);
        assert_eq!(cam0.intrinsics.height, 3120.0);
    }

    #[test]
    fn table1_camera_subsets_use_documented_corners() {
        let two = table1_scene(8.0, 2, 1500.0).unwrap();
        let centers: Vec<Vector3<f64>> = two.cameras().iter().map(|c| c.pose.center()).collect();
        assert_eq!(centers[0], Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(centers[1], Vector3::new(8.0, 8.0, 3.0));

        let three = table1_scene(8.0, 3, 1500.0).unwrap();
        assert_eq!(three.cameras()[2].pose.center(), Vector3::new(0.0, 8.0, 3.0));

        assert_eq!(
            table1_scene(8.0, 5, 1500.0).unwrap_err(),
            SimError::UnsupportedCameraCount(5)
        );
    }

    #[test]
    fn focal_length_unit_conversion_matches_the_defaults() {
        assert_relative_eq!(focal_px_from_mm(3.36, 2.24), 1500.0, epsilon = 1e-9);
        assert_relative_eq!(focal_px_from_mm(5.0, 2.0), 2500.0, epsilon = 1e-12);
    }

    #[test]
    fn table4_scene_is_valid_and_sees_its_focus_points() {
        let scene = table4_scene();
        assert_eq!(scene.cameras().len(), 3);
        assert_eq!(scene.cameras()[0].intrinsics.fx, 2500.0);
        for cam in scene.cameras() {
            let p = cam
                .project(&cam.pose.camera_to_world(&Vector3::new(0.0, 0.0, 2.0)))
                .unwrap();
            assert_relative_eq!(p.u, 1296.0, epsilon = 1e-9);
        }
        // The measured floor grid lies inside the joint field of view.
        assert!(scene.visible_to_all(&Vector3::new(1.8, 1.8, 0.0)));
        assert!(scene.visible_to_all(&Vector3::new(1.8, 1.8, 0.3)));
    }

    #[test]
    fn sampled_targets_are_visible_to_all_cameras() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let targets = sample_targets(&scene, 50, 0.1, &mut rng).unwrap();
        assert_eq!(targets.len(), 50);
        for t in &targets {
            assert!(scene.visible_to_all(t));
            assert!(scene.room().contains(t, 0.0));
        }
    }

    #[test]
    fn sampling_is_deterministic_for_a_fixed_seed() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            sample_targets(&scene, 10, 0.1, &mut a).unwrap(),
            sample_targets(&scene, 10, 0.1, &mut b).unwrap()
        );
    }

    #[test]
    fn over_shrunk_room_exhausts_sampling() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = sample_targets(&scene, 1, 10.0, &mut rng).unwrap_err();
        assert!(matches!(err, SimError::SamplingExhausted { .. }));
    }

    #[test]
    fn margin_equal_to_half_extent_degenerates_that_axis() {
        // With the margin at the z half-extent, the sampling box collapses
        // to the mid-height plane: every sample has z exactly 1.5 m.
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets = sample_targets(&scene, 20, 1.5, &mut rng).unwrap();
        for t in targets {
            assert_eq!(t.z, 1.5);
            assert!(scene.visible_to_all(&t));
        }
    }

    #[test]
    fn noiseless_observations_equal_exact_projections() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let targets = vec![Vector3::new(4.0, 4.0, 1.5), Vector3::new(3.0, 5.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs =
            synthesize_observations(&scene, &targets, &NoiseModel { sigma: 0.0 }, &mut rng).unwrap();
        assert_eq!(obs.len(), 8);
        for (camera_id, target_id, pixel) in obs.iter() {
            let exact = scene
                .camera(camera_id)
                .unwrap()
                .project(&targets[target_id as usize])
                .unwrap();
            assert_eq!(pixel.u, exact.u);
            assert_eq!(pixel.v, exact.v);
        }
    }

    #[test]
    fn noise_has_the_requested_spread_and_no_cross_camera_correlation() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let target = vec![Vector3::new(4.0, 4.0, 1.5)];
        let noise = NoiseModel { sigma: 3.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut du_all = Vec::new();
        let mut du_cam0 = Vec::new();
        let mut du_cam1 = Vec::new();
        for _ in 0..2500 {
            let obs = synthesize_observations(&scene, &target, &noise, &mut rng).unwrap();
            for (camera_id, _, pixel) in obs.iter() {
                let exact = scene.camera(camera_id).unwrap().project(&target[0]).unwrap();
                let du = pixel.u - exact.u;
                du_all.push(du);
                if camera_id == 0 {
                    du_cam0.push(du);
                } else if camera_id == 1 {
                    du_cam1.push(du);
                }
            }
        }
        let n = du_all.len() as f64;
        let mean = du_all.iter().sum::<f64>() / n;
        let std = (du_all.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((2.9..=3.1).contains(&std), "empirical noise std {std}");

        let m0 = du_cam0.iter().sum::<f64>() / du_cam0.len() as f64;
        let m1 = du_cam1.iter().sum::<f64>() / du_cam1.len() as f64;
        let cov: f64 = du_cam0
            .iter()
            .zip(&du_cam1)
            .map(|(a, b)| (a - m0) * (b - m1))
            .sum::<f64>()
            / du_cam0.len() as f64;
        let s0 = (du_cam0.iter().map(|d| (d - m0).powi(2)).sum::<f64>() / du_cam0.len() as f64).sqrt();
        let s1 = (du_cam1.iter().map(|d| (d - m1).powi(2)).sum::<f64>() / du_cam1.len() as f64).sqrt();
        let corr = cov / (s0 * s1);
        assert!(corr.abs() < 0.05, "cross-camera noise correlation {corr}");
    }

    #[test]
    fn zero_noise_batches_recover_truth_for_both_algorithms() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let config = MonteCarloConfig {
            iterations: 50,
            noise: NoiseModel { sigma: 0.0 },
            seed: 11,
            ..MonteCarloConfig::default()
        };
        let report = run_monte_carlo(&config, &scene).unwrap();
        assert!(report.mcjo.mpe.total < 1e-3, "mcjo mpe {}", report.mcjo.mpe.total);
        assert!(report.mcvlp.mpe.total < 1e-3, "mcvlp mpe {}", report.mcvlp.mpe.total);
        assert_eq!(report.failures, 0);
        assert!(!report.flagged);
    }

    #[test]
    fn batches_are_bitwise_reproducible_for_a_fixed_seed() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let config = MonteCarloConfig {
            iterations: 100,
            seed: 99,
            ..MonteCarloConfig::default()
        };
        let a = run_monte_carlo(&config, &scene).unwrap();
        let b = run_monte_carlo(&config, &scene).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_beats_the_linear_baseline_on_average() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let config = MonteCarloConfig {
            iterations: 300,
            seed: 5,
            ..MonteCarloConfig::default()
        };
        let report = run_monte_carlo(&config, &scene).unwrap();
        assert!(
            report.mcjo.mpe.total < report.mcvlp.mpe.total,
            "mcjo {} vs mcvlp {}",
            report.mcjo.mpe.total,
            report.mcvlp.mpe.total
        );
    }

    #[test]
    fn metric_identities_hold_on_collected_samples() {
        let scene = table1_scene(8.0, 4, 1500.0).unwrap();
        let config = MonteCarloConfig {
            iterations: 200,
            seed: 6,
            ..MonteCarloConfig::default()
        };
        let report = run_monte_carlo(&config, &scene).unwrap();
        for metrics in [&report.mcjo, &report.mcvlp] {
            let n = metrics.error_samples.len() as f64;
            let rmse_sq = metrics.rmse.total.powi(2);
            let recomposed = metrics.mpe.total.powi(2) + metrics.std.total.powi(2) * (n - 1.0) / n;
            assert_relative_eq!(rmse_sq, recomposed, max_relative = 1e-9);
            assert!(metrics.cdf90.total >= metrics.cdf50.total);
        }
    }

    #[test]
    fn sweep_emits_long_format_rows_in_order() {
        let base = MonteCarloConfig {
            iterations: 20,
            seed: 3,
            ..MonteCarloConfig::default()
        };
        let mut spec = SweepSpec::new(SweepParameter::NoiseStd, vec![1.0, 3.0], base);
        spec.camera_counts = vec![4];
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].parameter_value, 1.0);
        assert_eq!(rows[0].algorithm, Algorithm::Mcjo);
        assert_eq!(rows[1].algorithm, Algorithm::Mcvlp);
        assert_eq!(rows[2].parameter_value, 3.0);
        assert!(rows.iter().all(|r| r.camera_count == 4));
    }

    #[test]
    fn sweep_rejects_bad_value_lists() {
        let base = MonteCarloConfig::default();
        let spec = SweepSpec::new(SweepParameter::NoiseStd, vec![], base.clone());
        assert_eq!(run_sweep(&spec).unwrap_err(), SimError::InvalidSweepValues);
        let spec = SweepSpec::new(SweepParameter::NoiseStd, vec![3.0, 1.0], base);
        assert_eq!(run_sweep(&spec).unwrap_err(), SimError::InvalidSweepValues);
    }
}
