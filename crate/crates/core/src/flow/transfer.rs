use ndarray::Array2;

use super::network::FlowNetwork;
use crate::dataio::Batch;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// Sum of the contributing views' Gaussianized latents divided by the square
/// root of their count, so independent standard-normal inputs give a
/// standard-normal output.
///
/// View `v` contributes to row `i` when `mask[[i, v]] == 1` and `v` is not
/// `exclude`. Rows without contributors come out as zeros; their counts are
/// returned so callers can ignore them.
pub fn fuse_gaussian_partial(
    tape: &Tape,
    h_list: &[Var],
    mask: &Array2<f64>,
    exclude: Option<usize>,
) -> Result<(Var, Vec<usize>)> {
    if h_list.len() != mask.ncols() {
        return Err(Error::Contract(format!(
            "{} Gaussianized latents for a {}-view mask",
            h_list.len(),
            mask.ncols()
        )));
    }
    let contributes = |i: usize, v: usize| Some(v) != exclude && mask[[i, v]] == 1.0;
    let counts: Vec<usize> = (0..mask.nrows())
        .map(|i| (0..mask.ncols()).filter(|&v| contributes(i, v)).count())
        .collect();
    let mut total: Option<Var> = None;
    for (v, &h) in h_list.iter().enumerate() {
        if Some(v) == exclude {
            continue;
        }
        let w = Array2::from_shape_fn((mask.nrows(), 1), |(i, _)| {
            if contributes(i, v) {
                1.0 / (counts[i] as f64).sqrt()
            } else {
                0.0
            }
        });
        let term = tape.mul(h, tape.constant(w))?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = match total {
        Some(t) => t,
        None => {
            return Err(Error::Contract("Gaussian fusion has no contributing view".into()));
        }
    };
    Ok((total, counts))
}

/// [`fuse_gaussian_partial`], failing if any row has no contributor.
pub fn fuse_gaussian(tape: &Tape, h_list: &[Var], mask: &Array2<f64>, exclude: Option<usize>) -> Result<Var> {
    let (h, counts) = fuse_gaussian_partial(tape, h_list, mask, exclude)?;
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Contract(format!("row {i} has no contributing view to fuse")));
    }
    Ok(h)
}

/// `(F^v)^{-1}` of the Gaussian fused from every other observed view.
///
/// For a fully observed row this is the cross-view prediction of its own
/// latent; for a row missing view `v` it is the recovered latent.
pub fn transfer_to_view(
    tape: &Tape,
    flow: &FlowNetwork,
    flow_vars: &[Var],
    h_list: &[Var],
    mask: &Array2<f64>,
    v: usize,
) -> Result<Var> {
    let (h, _) = fuse_gaussian_partial(tape, h_list, mask, Some(v))?;
    flow.inverse(tape, flow_vars, h)
}

/// `sum_{i complete} sum_v |transferred_i^v - z_i^v|^2 / #complete`; zero
/// when the batch has no fully observed sample.
pub fn transfer_loss(tape: &Tape, batch: &Batch, latents: &[Var], transferred: &[Var]) -> Result<Var> {
    let complete = batch.complete_count();
    if complete == 0 {
        return Ok(tape.scalar(0.0));
    }
    let c = tape.constant(batch.complete_col());
    let mut total = tape.scalar(0.0);
    for (&z, &zt) in latents.iter().zip(transferred) {
        let err = tape.row_sums(tape.square(tape.sub(zt, z)?));
        total = tape.add(total, tape.sum(tape.mul(err, c)?))?;
    }
    Ok(tape.scale(total, 1.0 / complete as f64))
}

/// The two parts of the distribution-transfer objective and their sum.
#[derive(Clone, Copy, Debug)]
pub struct DtlTerms {
    pub total: Var,
    pub transfer: Var,
    pub retention: Var,
}

/// Transfer error on fully observed samples plus, for every observed
/// instance, its reconstruction loss minus its flow log-likelihood (which
/// keeps stage-one feature extraction from being forgotten). Each part is
/// averaged over its own count.
///
/// `reconstruction[v]` is the masked per-instance reconstruction loss and
/// `log_p[v]` the per-row flow log-likelihood, both `(B, 1)`.
pub fn dtl_loss(
    tape: &Tape,
    batch: &Batch,
    latents: &[Var],
    transferred: &[Var],
    reconstruction: &[Var],
    log_p: &[Var],
) -> Result<DtlTerms> {
    let transfer = transfer_loss(tape, batch, latents, transferred)?;
    let retention = retention_loss(tape, batch, reconstruction, log_p)?;
    Ok(DtlTerms {
        total: tape.add(transfer, retention)?,
        transfer,
        retention,
    })
}

fn retention_loss(tape: &Tape, batch: &Batch, reconstruction: &[Var], log_p: &[Var]) -> Result<Var> {
    let observed = batch.observed_count();
    if observed == 0 {
        return Ok(tape.scalar(0.0));
    }
    let mut total = tape.scalar(0.0);
    for v in 0..batch.n_views() {
        let w = tape.constant(batch.mask_col(v));
        let per_row = tape.sub(reconstruction[v], tape.mul(log_p[v], w)?)?;
        total = tape.add(total, tape.sum(per_row))?;
    }
    Ok(tape.scale(total, 1.0 / observed as f64))
}

/// `-sum_{i,v} w_i^v log p(z_i^v) / #observed`.
pub fn flow_nll(tape: &Tape, batch: &Batch, log_p: &[Var]) -> Result<Var> {
    let observed = batch.observed_count();
    if observed == 0 {
        return Ok(tape.scalar(0.0));
    }
    let mut total = tape.scalar(0.0);
    for (v, &lp) in log_p.iter().enumerate() {
        let w = tape.constant(batch.mask_col(v));
        total = tape.add(total, tape.sum(tape.mul(lp, w)?))?;
    }
    Ok(tape.scale(total, -1.0 / observed as f64))
}
