//! Recovery guidance: pull each recovered latent towards the view latent of
//! its cross-view nearest neighbour, and align every slot's soft prototype
//! assignment with the sample's consensus cluster.

mod neighbors;
mod prototypes;

pub use neighbors::{nac_loss, resolve_neighbors, NeighborIndex, NeighborTargets};
pub use prototypes::{
    compute_prototypes, consensus_label, consensus_labels, masked_mean_assignment, merge_slots, pc_loss,
    soft_assign, soft_assign_values, EntropyMode, PrototypeSet,
};
