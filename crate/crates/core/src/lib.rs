pub mod autoencoder;
pub mod cli;
pub mod consistency;
pub mod dataio;
pub mod error;
pub mod evalmetrics;
pub mod flow;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
