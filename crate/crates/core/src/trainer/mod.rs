//! Three-stage optimization: feature extraction with flow fitting, joint
//! distribution transfer, then guided recovery; plus recovery of missing
//! latents, the final clustering and checkpoints.

mod checkpoint;
mod config;
mod curves;
mod model;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use curves::write_curves;
pub use model::{
    final_clustering, mean_imputation_baseline, recover_missing, BoundModel, MultiViewModel, JointPass, LatentState,
};
pub use run::{CurveRow, StageSchedule, Trainer};
