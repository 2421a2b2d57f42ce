//! Shared fixtures for the localization benchmarks: deterministic scenes
//! with sampled visible targets and synthesized noisy observations.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vlp_core::scene::{ObservationSet, Scene};
use vlp_core::sim::{sample_targets, synthesize_observations, table1_scene, NoiseModel};

pub struct Fixture {
    pub scene: Scene,
    pub targets: Vec<Vector3<f64>>,
    pub observations: ObservationSet,
}

/// A seeded problem instance: `camera_count` ceiling cameras observing
/// `target_count` visible targets under 3 px Gaussian noise.
pub fn fixture(target_count: usize, camera_count: usize, seed: u64) -> Fixture {
    let scene = table1_scene(8.0, camera_count, 1500.0).expect("supported camera count");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = sample_targets(&scene, target_count, 0.1, &mut rng).expect("visible targets");
    let observations =
        synthesize_observations(&scene, &targets, &NoiseModel { sigma: 3.0 }, &mut rng)
            .expect("targets in front of all cameras");
    Fixture {
        scene,
        targets,
        observations,
    }
}
