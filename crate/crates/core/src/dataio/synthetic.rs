use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Parameters of the clustered multi-view generator.
///
/// Cluster centers live in a `latent_dim` space with pairwise distance at
/// least `cluster_separation`. Each view is `tanh(A_v p + b_v)` plus
/// Gaussian noise of `view_noise_std`, with a fixed random `A_v`, `b_v` per
/// view, so views are distinct nonlinear distortions of the same points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_clusters: usize,
    pub n_views: usize,
    pub latent_dim: usize,
    pub view_dims: Vec<usize>,
    pub cluster_separation: f64,
    pub noise_std: f64,
    pub view_noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n_views` views of width `view_dim` each, other fields at defaults.
    pub fn new(n_samples: usize, n_clusters: usize, n_views: usize, view_dim: usize, seed: u64) -> Self {
        Self {
            n_samples,
            n_clusters,
            n_views,
            latent_dim: 8,
            view_dims: vec![view_dim; n_views],
            cluster_separation: 6.0,
            noise_std: 0.5,
            view_noise_std: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_samples", self.n_samples),
            ("n_clusters", self.n_clusters),
            ("n_views", self.n_views),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.n_clusters > self.n_samples {
            return Err(Error::Config(format!(
                "n_clusters {} exceeds n_samples {}",
                self.n_clusters, self.n_samples
            )));
        }
        if self.view_dims.len() != self.n_views || self.view_dims.contains(&0) {
            return Err(Error::Config(format!(
                "view_dims {:?} must list {} positive widths",
                self.view_dims, self.n_views
            )));
        }
        if !(self.cluster_separation > 0.0) {
            return Err(Error::Config("cluster_separation must be positive".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.view_noise_std >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

fn draw_centers(spec: &SyntheticSpec, rng: &mut Rng) -> Array2<f64> {
    let (k, dim, sep) = (spec.n_clusters, spec.latent_dim, spec.cluster_separation);
    let mut spread = sep;
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut attempts = 0;
        while centers.len() < k && attempts < 10_000 {
            attempts += 1;
            let c: Vec<f64> = (0..dim).map(|_| spread * rng.normal()).collect();
            let far = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= sep
            });
            if far {
                centers.push(c);
            }
        }
        if centers.len() == k {
            return Array2::from_shape_fn((k, dim), |(i, j)| centers[i][j]);
        }
        spread *= 1.5;
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let centers = draw_centers(spec, &mut rng);

    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_clusters).collect();
    rng.shuffle(&mut labels);

    let dim = spec.latent_dim;
    let points = Array2::from_shape_fn((spec.n_samples, dim), |(i, j)| {
        centers[[labels[i], j]] + spec.noise_std * rng.normal()
    });

    // Keep pre-activations O(1) so tanh bends without saturating.
    let gain = 1.5 / (spec.cluster_separation * (dim as f64).sqrt());
    let mut views = Vec::with_capacity(spec.n_views);
    for &out_dim in &spec.view_dims {
        let map = Array2::from_shape_fn((dim, out_dim), |_| gain * rng.normal());
        let bias = Array2::from_shape_fn((1, out_dim), |_| rng.uniform_range(-0.5, 0.5));
        let mut x = points.dot(&map) + &bias;
        x.mapv_inplace(f64::tanh);
        x.mapv_inplace(|val| val + spec.view_noise_std * rng.normal());
        views.push(x);
    }
    let names = (0..spec.n_views).map(|v| format!("view{v}")).collect();
    let mask = Array2::ones((spec.n_samples, spec.n_views));
    MultiViewDataset::new(views, mask, Some(labels), names)
}
