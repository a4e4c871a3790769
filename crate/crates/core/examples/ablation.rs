//! Shares stages 1 and 2, then branches stage 3 over the four guidance
//! settings (neighbor and prototype consistency on or off).

use imvc::dataio::{generate_mask, generate_synthetic, SyntheticSpec};
use imvc::evalmetrics::accuracy;
use imvc::numerics::Rng;
use imvc::trainer::{TrainConfig, Trainer};

fn main() -> imvc::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let full = generate_synthetic(&SyntheticSpec::new(1000, 5, 3, 20, seed))?;
    let data = full.with_mask(generate_mask(1000, 3, 0.5, &mut Rng::derived(seed, "mask"))?)?;
    let truth = data.labels().expect("labeled");
    let config = TrainConfig {
        latent_dim: 16,
        flow_layers: 2,
        scale_clamp: 2.0,
        seed,
        ..TrainConfig::default()
    };
    let mut shared = Trainer::new(&data, config)?;
    shared.run_stage1()?;
    shared.run_stage2()?;
    for (alpha, beta) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let mut branch = shared.with_guidance(alpha, beta)?;
        branch.run_stage3()?;
        let (_, labels) = branch.predict()?;
        println!("{:<9} acc {:.4}", branch.config().variant(), accuracy(&labels, truth)?);
    }
    Ok(())
}
