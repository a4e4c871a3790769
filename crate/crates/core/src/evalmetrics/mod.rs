//! Clustering quality scores and the shared k-means routine.

mod hungarian;
mod kmeans;
mod metrics;

pub use hungarian::hungarian;
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use metrics::{accuracy, ari, nmi, score, ClusteringScores, ContingencyTable};
