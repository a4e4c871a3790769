//! Generate a labeled multi-view dataset, remove half of its view slots and
//! write it to disk in the manifest + CSV layout the CLI reads.

use imvc::dataio::{generate_mask, generate_synthetic, load_dataset_at, write_dataset, SyntheticSpec};
use imvc::numerics::Rng;

fn main() -> imvc::Result<()> {
    let spec = SyntheticSpec::new(200, 4, 3, 12, 11);
    let full = generate_synthetic(&spec)?;
    let mask = generate_mask(full.n_samples(), full.n_views(), 0.5, &mut Rng::derived(11, "mask"))?;
    let masked = full.with_mask(mask)?;
    println!(
        "{} samples, {} views, {} of {} slots missing",
        masked.n_samples(),
        masked.n_views(),
        masked.missing_count(),
        masked.n_samples() * masked.n_views()
    );
    let complete = (0..masked.n_samples()).filter(|&i| masked.is_complete_sample(i)).count();
    println!("{complete} samples keep every view");

    let dir = std::env::temp_dir().join("imvc-synth-demo");
    let manifest = write_dataset(&dir, &masked)?;
    let reloaded = load_dataset_at(&dir)?;
    assert_eq!(reloaded.mask(), masked.mask());
    println!("wrote {}", manifest.display());
    Ok(())
}
