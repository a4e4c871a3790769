use ndarray::{Array2, Axis};

use super::dataset::MultiViewDataset;

/// A row subset of a dataset ready for the model: unobserved rows are zeroed
/// and the mask is stored as `f64` so it can weight losses directly.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub views: Vec<Array2<f64>>,
    pub mask: Array2<f64>,
}

impl Batch {
    pub fn gather(dataset: &MultiViewDataset, indices: &[usize]) -> Self {
        let mask = Array2::from_shape_fn((indices.len(), dataset.n_views()), |(r, v)| {
            f64::from(dataset.mask()[[indices[r], v]])
        });
        let views = (0..dataset.n_views())
            .map(|v| {
                let mut x = dataset.view(v).select(Axis(0), indices);
                for (r, mut row) in x.rows_mut().into_iter().enumerate() {
                    if mask[[r, v]] == 0.0 {
                        row.fill(0.0);
                    }
                }
                x
            })
            .collect();
        Self {
            indices: indices.to_vec(),
            views,
            mask,
        }
    }

    pub fn full(dataset: &MultiViewDataset) -> Self {
        let all: Vec<usize> = (0..dataset.n_samples()).collect();
        Self::gather(dataset, &all)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Column `v` of the mask, shape `(len, 1)`.
    pub fn mask_col(&self, v: usize) -> Array2<f64> {
        self.mask.column(v).to_owned().insert_axis(Axis(1))
    }

    /// `1 - w`, shape `(len, 1)`.
    pub fn missing_col(&self, v: usize) -> Array2<f64> {
        self.mask_col(v).mapv(|w| 1.0 - w)
    }

    /// Product of the mask over views: 1 for fully observed samples.
    pub fn complete_col(&self) -> Array2<f64> {
        self.mask.map_axis(Axis(1), |r| r.product()).insert_axis(Axis(1))
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&w| w == 1.0).count()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.len() - self.observed_count()
    }

    pub fn complete_count(&self) -> usize {
        self.complete_col().iter().filter(|&&w| w == 1.0).count()
    }
}
