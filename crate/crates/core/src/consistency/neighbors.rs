use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::dataio::Batch;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Snapshot of every observed instance's latent, one `(N, d)` matrix per view.
/// Rows of unobserved slots are kept for shape but never returned as
/// candidates.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    latents: Vec<Array2<f64>>,
    mask: Array2<u8>,
}

impl NeighborIndex {
    pub fn new(latents: Vec<Array2<f64>>, mask: &Array2<u8>) -> Result<Self> {
        if latents.len() != mask.ncols() {
            return Err(Error::Contract(format!(
                "{} latent views for a {}-view mask",
                latents.len(),
                mask.ncols()
            )));
        }
        let dim = latents.first().map_or(0, |z| z.ncols());
        for (v, z) in latents.iter().enumerate() {
            if z.nrows() != mask.nrows() || z.ncols() != dim {
                return Err(Error::Shape {
                    op: "neighbor_index",
                    left: vec![mask.nrows(), dim],
                    right: z.shape().to_vec(),
                });
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite latent in view {v} snapshot")));
            }
        }
        Ok(Self {
            latents,
            mask: mask.clone(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.mask.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.mask.ncols()
    }

    pub fn latent(&self, v: usize, j: usize) -> ArrayView1<'_, f64> {
        self.latents[v].row(j)
    }

    pub fn latents(&self, v: usize) -> ArrayView2<'_, f64> {
        self.latents[v].view()
    }

    fn observed(&self, j: usize, v: usize) -> bool {
        self.mask[[j, v]] == 1
    }

    /// Neighbor `n_a` for the missing slot `(i, v)` whose recovered latent is
    /// `z_tilde`.
    ///
    /// In every other observed view `v'` of sample `i`, take the nearest
    /// observed latent to `z_tilde` among samples that also observe `v` (so
    /// the neighbor has a view-`v` latent to pull towards). Among those
    /// per-view winners keep the one closest to sample `i`'s own view-`v'`
    /// latent. Ties go to the lower sample, then the lower view.
    pub fn find_cross_view_neighbor(&self, i: usize, v: usize, z_tilde: ArrayView1<'_, f64>) -> Result<Option<usize>> {
        if i >= self.n_samples() || v >= self.n_views() {
            return Err(Error::Contract(format!("slot ({i}, {v}) outside the index")));
        }
        if self.observed(i, v) {
            return Err(Error::Contract(format!("slot ({i}, {v}) is observed; only missing slots have neighbors")));
        }
        let mut best: Option<(f64, usize)> = None;
        for vp in (0..self.n_views()).filter(|&vp| vp != v && self.observed(i, vp)) {
            let mut nearest: Option<(f64, usize)> = None;
            for j in 0..self.n_samples() {
                if j == i || !self.observed(j, vp) || !self.observed(j, v) {
                    continue;
                }
                let d = squared_distance(self.latents[vp].row(j), z_tilde);
                if nearest.map_or(true, |(bd, _)| d < bd) {
                    nearest = Some((d, j));
                }
            }
            if let Some((_, j)) = nearest {
                let d = squared_distance(self.latents[vp].row(j), self.latents[vp].row(i));
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
        }
        Ok(best.map(|(_, j)| j))
    }
}

/// Resolved neighbor latents for every missing slot of the dataset.
#[derive(Clone, Debug)]
pub struct NeighborTargets {
    /// `(N, d)` per view; row `i` of view `v` is `z^v_{n_a}` for missing `(i, v)`.
    pub targets: Vec<Array2<f64>>,
    /// `neighbors[[i, v]]` is the resolved sample, if any.
    pub neighbors: Array2<Option<usize>>,
}

impl NeighborTargets {
    pub fn resolved_count(&self) -> usize {
        self.neighbors.iter().filter(|n| n.is_some()).count()
    }
}

/// Resolves neighbors for every missing slot. `recovered[v]` is `(N, d)` and
/// only its rows at missing slots are read.
pub fn resolve_neighbors(index: &NeighborIndex, recovered: &[Array2<f64>]) -> Result<NeighborTargets> {
    let (n, views) = (index.n_samples(), index.n_views());
    if recovered.len() != views {
        return Err(Error::Contract(format!("{} recovered views for a {views}-view index", recovered.len())));
    }
    let dim = index.latents[0].ncols();
    let mut targets = vec![Array2::zeros((n, dim)); views];
    let mut neighbors = Array2::from_elem((n, views), None);
    for v in 0..views {
        for i in (0..n).filter(|&i| !index.observed(i, v)) {
            if let Some(j) = index.find_cross_view_neighbor(i, v, recovered[v].row(i))? {
                targets[v].row_mut(i).assign(&index.latent(v, j));
                neighbors[[i, v]] = Some(j);
            }
        }
    }
    Ok(NeighborTargets { targets, neighbors })
}

/// Mean over the batch's missing slots of `|z_tilde - z_{n_a}|^2`; slots
/// without a resolved neighbor add zero but still count. Zero when nothing is
/// missing. Neighbor latents are constants.
pub fn nac_loss(tape: &Tape, batch: &Batch, recovered: &[Var], neighbors: &NeighborTargets) -> Result<Var> {
    let missing = batch.missing_count();
    if missing == 0 {
        return Ok(tape.scalar(0.0));
    }
    let mut total = tape.scalar(0.0);
    for (v, &zt) in recovered.iter().enumerate() {
        let weight = Array2::from_shape_fn((batch.len(), 1), |(r, _)| {
            let i = batch.indices[r];
            if batch.mask[[r, v]] == 0.0 && neighbors.neighbors[[i, v]].is_some() {
                1.0
            } else {
                0.0
            }
        });
        if weight.sum() == 0.0 {
            continue;
        }
        let target = tape.constant(neighbors.targets[v].select(ndarray::Axis(0), &batch.indices));
        let err = tape.row_sums(tape.square(tape.sub(zt, target)?));
        total = tape.add(total, tape.sum(tape.mul(err, tape.constant(weight))?))?;
    }
    Ok(tape.scale(total, 1.0 / missing as f64))
}
