//! View-specific encoders and decoders into the shared latent space, latent
//! fusion, and the dual reconstruction loss.

mod mlp;
mod view;

pub use mlp::{Activation, Mlp, MlpSpec};
pub use view::{
    encode_batch, fuse_latents, per_instance_reconstruction, reconstruction_loss, ViewAutoencoder,
};
