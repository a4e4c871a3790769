//! Save after stage 1, reload, and finish training; the resumed run lands on
//! exactly the same parameters as an uninterrupted one.

use imvc::dataio::{generate_mask, generate_synthetic, SyntheticSpec};
use imvc::numerics::Rng;
use imvc::trainer::{load_checkpoint, save_checkpoint, TrainConfig, Trainer};

fn main() -> imvc::Result<()> {
    let mut spec = SyntheticSpec::new(150, 3, 2, 8, 5);
    spec.latent_dim = 4;
    let data = generate_synthetic(&spec)?.with_mask(generate_mask(150, 2, 0.3, &mut Rng::derived(5, "mask"))?)?;
    let config = TrainConfig {
        latent_dim: 4,
        flow_layers: 2,
        encoder_hidden: vec![32],
        coupling_hidden: vec![16],
        epochs_stage1: 20,
        epochs_stage2: 5,
        epochs_stage3: 5,
        seed: 5,
        ..TrainConfig::default()
    };
    let path = std::env::temp_dir().join("imvc-demo-stage1.bin");

    let mut straight = Trainer::new(&data, config.clone())?;
    straight.run_stage1()?;
    save_checkpoint(&straight, &path)?;
    straight.run_remaining()?;

    let mut resumed = load_checkpoint(&data, &config, &path)?;
    resumed.run_remaining()?;
    println!("identical parameters after resume: {}", resumed.model() == straight.model());
    println!("identical labels after resume: {}", resumed.predict()?.1 == straight.predict()?.1);
    Ok(())
}
