//! Multi-view datasets: validation, masking, synthesis and CSV storage.

mod batch;
mod dataset;
mod io;
mod mask;
mod synthetic;

pub use batch::Batch;
pub use dataset::MultiViewDataset;
pub use io::{
    load_dataset, load_dataset_at, read_labels, read_mask, read_matrix, write_dataset, write_labels, write_matrix,
    Manifest, ViewEntry, MANIFEST_FILE,
};
pub use mask::generate_mask;
pub use synthetic::{generate_synthetic, SyntheticSpec};
