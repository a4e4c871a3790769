//! View-specific invertible flows: exact Gaussianization, exact inverse,
//! exact log-determinant, Gaussian fusion across views and the
//! distribution-transfer objective.

mod coupling;
mod network;
mod transfer;

pub use coupling::{CouplingLayer, Parity, ScalingLayer};
pub use network::{log_likelihood_from, FlowNetwork, FlowSpec, LN_2PI};
pub use transfer::{
    dtl_loss, flow_nll, fuse_gaussian, fuse_gaussian_partial, transfer_loss, transfer_to_view, DtlTerms,
};
