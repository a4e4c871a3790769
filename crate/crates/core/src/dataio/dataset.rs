use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// `N` samples observed through `V` views, with an availability mask.
///
/// `mask[[i, v]] == 1` when sample `i` is observed in view `v`. Values stored
/// for unobserved slots are never read by the model.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    mask: Array2<u8>,
    labels: Option<Vec<usize>>,
    names: Vec<String>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<Array2<f64>>,
        mask: Array2<u8>,
        labels: Option<Vec<usize>>,
        names: Vec<String>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Validation("dataset has no views".into()));
        }
        if names.len() != views.len() {
            return Err(Error::Validation(format!(
                "{} view names for {} views",
                names.len(),
                views.len()
            )));
        }
        let n = views[0].nrows();
        for (v, x) in views.iter().enumerate().skip(1) {
            if x.nrows() != n {
                return Err(Error::Validation(format!(
                    "view `{}` has {} rows but view `{}` has {}",
                    names[v],
                    x.nrows(),
                    names[0],
                    n
                )));
            }
        }
        if mask.dim() != (n, views.len()) {
            return Err(Error::Validation(format!(
                "mask is {:?}, expected [{n}, {}]",
                mask.shape(),
                views.len()
            )));
        }
        if let Some(&bad) = mask.iter().find(|&&w| w > 1) {
            return Err(Error::Validation(format!("mask entry {bad} is not 0 or 1")));
        }
        for (i, row) in mask.rows().into_iter().enumerate() {
            if row.iter().all(|&w| w == 0) {
                return Err(Error::Validation(format!("sample {i} has no observed view")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; k];
            for &l in labels {
                seen[l] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::Validation(format!(
                    "class {missing} never occurs in labels [0, {k})"
                )));
            }
        }
        Ok(Self {
            views,
            mask,
            labels,
            names,
        })
    }

    /// A dataset with every slot observed.
    pub fn complete(views: Vec<Array2<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = views.first().map_or(0, |x| x.nrows());
        let names = (0..views.len()).map(|v| format!("view{v}")).collect();
        let mask = Array2::ones((n, views.len()));
        Self::new(views, mask, labels, names)
    }

    /// Same data under a different availability mask.
    pub fn with_mask(&self, mask: Array2<u8>) -> Result<Self> {
        Self::new(self.views.clone(), mask, self.labels.clone(), self.names.clone())
    }

    pub fn n_samples(&self) -> usize {
        self.mask.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn view_dim(&self, v: usize) -> usize {
        self.views[v].ncols()
    }

    pub fn mask(&self) -> &Array2<u8> {
        &self.mask
    }

    pub fn mask_row(&self, i: usize) -> ArrayView1<'_, u8> {
        self.mask.row(i)
    }

    pub fn observed(&self, i: usize, v: usize) -> bool {
        self.mask[[i, v]] == 1
    }

    pub fn is_complete_sample(&self, i: usize) -> bool {
        self.mask.row(i).iter().all(|&w| w == 1)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&w| w == 0).count()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
