#![allow(dead_code)]

use imvc::dataio::{generate_mask, generate_synthetic, MultiViewDataset, SyntheticSpec};
use imvc::numerics::Rng;
use imvc::trainer::TrainConfig;

/// K=5, V=3, N=1000, 20-wide views, half the slots removed.
pub fn fixture(seed: u64, missing_rate: f64) -> MultiViewDataset {
    let full = generate_synthetic(&SyntheticSpec::new(1000, 5, 3, 20, seed)).unwrap();
    let mask = generate_mask(1000, 3, missing_rate, &mut Rng::derived(seed, "mask")).unwrap();
    full.with_mask(mask).unwrap()
}

/// Default schedule with a latent width matched to the fixture's intrinsic
/// dimension. Wider latents let the flows collapse onto the data manifold.
pub fn fixture_config(seed: u64) -> TrainConfig {
    TrainConfig {
        latent_dim: 16,
        flow_layers: 2,
        scale_clamp: 2.0,
        seed,
        ..TrainConfig::default()
    }
}

/// A few seconds of training at most.
pub fn tiny(n: usize, views: usize, missing_rate: f64, seed: u64) -> MultiViewDataset {
    let mut spec = SyntheticSpec::new(n, 3, views, 6, seed);
    spec.latent_dim = 4;
    let full = generate_synthetic(&spec).unwrap();
    let mask = generate_mask(n, views, missing_rate, &mut Rng::derived(seed, "mask")).unwrap();
    full.with_mask(mask).unwrap()
}

pub fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        latent_dim: 4,
        flow_layers: 2,
        encoder_hidden: vec![16],
        coupling_hidden: vec![8],
        learning_rate: 1e-3,
        epochs_stage1: 3,
        epochs_stage2: 2,
        epochs_stage3: 2,
        batch_stage12: 32,
        batch_stage3: 64,
        scale_clamp: 2.0,
        seed,
        ..TrainConfig::default()
    }
}
