use ndarray::Array2;

use super::mlp::{Activation, Mlp, MlpSpec};
use crate::dataio::Batch;
use crate::error::{Error, Result};
use crate::numerics::{Module, Param, Rng, Tape, Var};

/// Encoder/decoder pair for one view: `R^{d_v} -> R^d -> R^{d_v}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewAutoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl ViewAutoencoder {
    /// The decoder mirrors the encoder's hidden widths.
    pub fn new(
        view_dim: usize,
        latent_dim: usize,
        hidden_dims: &[usize],
        activation: Activation,
        name: &str,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut reversed = hidden_dims.to_vec();
        reversed.reverse();
        let encoder = Mlp::new(
            MlpSpec::new(view_dim, hidden_dims, latent_dim, activation),
            &format!("{name}.enc"),
            rng,
        )?;
        let decoder = Mlp::new(
            MlpSpec::new(latent_dim, &reversed, view_dim, activation),
            &format!("{name}.dec"),
            rng,
        )?;
        Self::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        let (e, d) = (encoder.spec(), decoder.spec());
        if e.output_dim != d.input_dim || e.input_dim != d.output_dim {
            return Err(Error::Config(format!(
                "encoder {}->{} does not pair with decoder {}->{}",
                e.input_dim, e.output_dim, d.input_dim, d.output_dim
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn view_dim(&self) -> usize {
        self.encoder.spec().input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec().output_dim
    }

    fn split<'v>(&self, vars: &'v [Var]) -> (&'v [Var], &'v [Var]) {
        vars.split_at(self.encoder.num_params())
    }

    pub fn encode(&self, tape: &Tape, vars: &[Var], x: Var) -> Result<Var> {
        self.encoder.forward(tape, self.split(vars).0, x)
    }

    pub fn decode(&self, tape: &Tape, vars: &[Var], z: Var) -> Result<Var> {
        self.decoder.forward(tape, self.split(vars).1, z)
    }

    pub fn encode_values(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.encoder.apply(x)
    }

    pub fn decode_values(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.decoder.apply(z)
    }
}

impl Module for ViewAutoencoder {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

/// Masked mean of per-view latents: `z_i = sum_v w_i^v z_i^v / sum_v w_i^v`.
///
/// `mask` is `(B, V)`; `latents[v]` is `(B, d)`. Unobserved latents get zero
/// weight, so neither their values nor their gradients leak in.
pub fn fuse_latents(tape: &Tape, latents: &[Var], mask: &Array2<f64>) -> Result<Var> {
    if latents.len() != mask.ncols() {
        return Err(Error::Contract(format!(
            "{} latents for a {}-view mask",
            latents.len(),
            mask.ncols()
        )));
    }
    let counts: Vec<f64> = mask.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(i) = counts.iter().position(|&c| c == 0.0) {
        return Err(Error::Contract(format!("mask row {i} has no observed view")));
    }
    let mut total: Option<Var> = None;
    for (v, &z) in latents.iter().enumerate() {
        let w = Array2::from_shape_fn((mask.nrows(), 1), |(i, _)| mask[[i, v]] / counts[i]);
        let term = tape.mul(z, tape.constant(w))?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one view"))
}

/// Per-view latents `E^v(x^v)` for a batch, shape `(B, d)` each.
pub fn encode_batch(tape: &Tape, aes: &[&ViewAutoencoder], vars: &[Vec<Var>], batch: &Batch) -> Result<Vec<Var>> {
    aes.iter()
        .zip(vars)
        .zip(&batch.views)
        .map(|((ae, vs), x)| ae.encode(tape, vs, tape.constant(x.clone())))
        .collect()
}

/// Dual reconstruction loss: each observed instance is decoded from both its
/// own latent and the fused latent,
/// `sum_{i,v} w_i^v (|x_i^v - D^v(z_i^v)|^2 + |x_i^v - D^v(z_i)|^2)`,
/// divided by the number of observed instances in the batch.
pub fn reconstruction_loss(
    tape: &Tape,
    aes: &[&ViewAutoencoder],
    vars: &[Vec<Var>],
    batch: &Batch,
    latents: &[Var],
    fused: Var,
) -> Result<Var> {
    let observed = batch.observed_count();
    if observed == 0 {
        return Ok(tape.scalar(0.0));
    }
    let per_view = per_instance_reconstruction(tape, aes, vars, batch, latents, fused)?;
    let mut total = tape.sum(per_view[0]);
    for &l in &per_view[1..] {
        total = tape.add(total, tape.sum(l))?;
    }
    Ok(tape.scale(total, 1.0 / observed as f64))
}

/// Reconstruction loss of each observed instance, `(B, 1)` per view; zero
/// on unobserved rows.
pub fn per_instance_reconstruction(
    tape: &Tape,
    aes: &[&ViewAutoencoder],
    vars: &[Vec<Var>],
    batch: &Batch,
    latents: &[Var],
    fused: Var,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(batch.n_views());
    for v in 0..batch.n_views() {
        let x = tape.constant(batch.views[v].clone());
        let w = tape.constant(batch.mask_col(v));
        let mut acc: Option<Var> = None;
        for z in [latents[v], fused] {
            let recon = aes[v].decode(tape, &vars[v], z)?;
            let err = tape.row_sums(tape.square(tape.sub(x, recon)?));
            acc = Some(match acc {
                Some(a) => tape.add(a, err)?,
                None => err,
            });
        }
        out.push(tape.mul(acc.expect("two terms"), w)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::MultiViewDataset;
    use crate::numerics::{grad_check, AdamState};
    use ndarray::array;

    fn linear_ae(we: Array2<f64>, be: Array2<f64>, wd: Array2<f64>, bd: Array2<f64>) -> ViewAutoencoder {
        ViewAutoencoder::from_parts(Mlp::linear(we, be, "e").unwrap(), Mlp::linear(wd, bd, "d").unwrap()).unwrap()
    }

    fn identity_ae(dim: usize) -> ViewAutoencoder {
        linear_ae(Array2::eye(dim), Array2::zeros((1, dim)), Array2::eye(dim), Array2::zeros((1, dim)))
    }

    fn rec_loss_value(aes: &[&ViewAutoencoder], batch: &Batch) -> f64 {
        let tape = Tape::new();
        let vars: Vec<Vec<Var>> = aes.iter().map(|a| a.bind(&tape)).collect();
        let z = encode_batch(&tape, aes, &vars, batch).unwrap();
        let fused = fuse_latents(&tape, &z, &batch.mask).unwrap();
        let loss = reconstruction_loss(&tape, aes, &vars, batch, &z, fused).unwrap();
        tape.item(loss)
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let spec = MlpSpec::new(5, &[7], 4, Activation::Relu);
        let enc = Mlp::zeros(spec, "e").unwrap();
        let dec = Mlp::zeros(MlpSpec::new(4, &[7], 5, Activation::Relu), "d").unwrap();
        let ae = ViewAutoencoder::from_parts(enc, dec).unwrap();
        let x = Array2::from_elem((3, 5), 1.7);
        assert_eq!(ae.encode_values(&x).unwrap(), Array2::<f64>::zeros((3, 4)));
        assert_eq!(ae.decode_values(&Array2::ones((2, 4))).unwrap(), Array2::<f64>::zeros((2, 5)));
    }

    #[test]
    fn identity_layers_pass_through() {
        let ae = identity_ae(3);
        let x = array![[1.0, -2.0, 0.5], [0.0, 4.0, 9.0]];
        assert_eq!(ae.encode_values(&x).unwrap(), x);
        assert_eq!(ae.decode_values(&x).unwrap(), x);
    }

    #[test]
    fn batch_rows_preserved() {
        let mut rng = Rng::new(3);
        let ae = ViewAutoencoder::new(6, 4, &[8, 5], Activation::Relu, "v0", &mut rng).unwrap();
        let z = ae.encode_values(&Array2::ones((11, 6))).unwrap();
        assert_eq!(z.dim(), (11, 4));
        assert_eq!(ae.decode_values(&z).unwrap().dim(), (11, 6));
        assert_eq!(ae.encode_values(&Array2::ones((2, 5))).unwrap_err().category(), "shape");
    }

    #[test]
    fn fusion_examples() {
        let tape = Tape::new();
        // w = (1, 0, 1), z1 = (1, 1), z3 = (3, 3)
        let z = [
            tape.constant(array![[1.0, 1.0]]),
            tape.constant(array![[100.0, -7.0]]),
            tape.constant(array![[3.0, 3.0]]),
        ];
        let fused = fuse_latents(&tape, &z, &array![[1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(*tape.value(fused), array![[2.0, 2.0]]);

        let single = fuse_latents(&tape, &z, &array![[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(*tape.value(single), array![[100.0, -7.0]]);

        let same = [tape.constant(array![[0.3, 0.6]]); 3];
        let all = fuse_latents(&tape, &same, &array![[1.0, 1.0, 1.0]]).unwrap();
        assert!((&*tape.value(all) - &array![[0.3, 0.6]]).iter().all(|d| d.abs() < 1e-15));

        assert_eq!(
            fuse_latents(&tape, &z, &array![[0.0, 0.0, 0.0]]).unwrap_err().category(),
            "contract"
        );
    }

    #[test]
    fn identity_autoencoder_reconstructs_exactly() {
        let ds = MultiViewDataset::complete(vec![array![[1.0, 2.0], [3.0, -4.0]]], None).unwrap();
        let ae = identity_ae(2);
        assert_eq!(rec_loss_value(&[&ae], &Batch::full(&ds)), 0.0);
    }

    #[test]
    fn hand_computed_two_view_fixture() {
        // E1(x) = 2x + 0.5, D1(z) = z - 1; E2(x) = -x, D2(z) = 3z; x = (1, 2).
        // z1 = 2.5, z2 = -2, fused = 0.25.
        // view 1: (1 - 1.5)^2 + (1 + 0.75)^2 = 0.25 + 3.0625
        // view 2: (2 + 6)^2 + (2 - 0.75)^2 = 64 + 1.5625
        // total 68.875 over 2 observed instances.
        let ae1 = linear_ae(array![[2.0]], array![[0.5]], array![[1.0]], array![[-1.0]]);
        let ae2 = linear_ae(array![[-1.0]], array![[0.0]], array![[3.0]], array![[0.0]]);
        let ds = MultiViewDataset::complete(vec![array![[1.0]], array![[2.0]]], None).unwrap();
        let got = rec_loss_value(&[&ae1, &ae2], &Batch::full(&ds));
        assert!((got - 34.4375).abs() < 1e-12, "{got}");
    }

    #[test]
    fn masked_instance_does_not_affect_loss() {
        let mut rng = Rng::new(5);
        let aes: Vec<ViewAutoencoder> = (0..2)
            .map(|v| ViewAutoencoder::new(3, 2, &[4], Activation::Tanh, &format!("v{v}"), &mut rng).unwrap())
            .collect();
        let refs: Vec<&ViewAutoencoder> = aes.iter().collect();
        let x0 = Array2::from_shape_fn((4, 3), |_| rng.normal());
        let x1 = Array2::from_shape_fn((4, 3), |_| rng.normal());
        let mask = array![[1, 1], [1, 0], [0, 1], [1, 1]];
        let ds = MultiViewDataset::new(vec![x0.clone(), x1.clone()], mask.clone(), None, vec!["a".into(), "b".into()])
            .unwrap();
        let base = rec_loss_value(&refs, &Batch::full(&ds));
        let mut x1p = x1;
        x1p.row_mut(1).fill(1e6);
        let ds2 = MultiViewDataset::new(vec![x0, x1p], mask, None, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(rec_loss_value(&refs, &Batch::full(&ds2)), base);
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let aes: Vec<ViewAutoencoder> = [3usize, 5]
            .iter()
            .enumerate()
            .map(|(v, &dv)| ViewAutoencoder::new(dv, 4, &[6], Activation::Tanh, &format!("v{v}"), &mut rng).unwrap())
            .collect();
        let views = vec![
            Array2::from_shape_fn((8, 3), |_| rng.uniform_range(-1.0, 1.0)),
            Array2::from_shape_fn((8, 5), |_| rng.uniform_range(-1.0, 1.0)),
        ];
        let mask = array![[1, 1], [1, 0], [0, 1], [1, 1], [1, 1], [0, 1], [1, 1], [1, 0]];
        let ds = MultiViewDataset::new(views, mask, None, vec!["a".into(), "b".into()]).unwrap();
        let batch = Batch::full(&ds);
        let point: Vec<Array2<f64>> = aes.iter().flat_map(|a| a.params()).map(|p| p.value.clone()).collect();
        let split = aes[0].num_params();
        let err = grad_check(
            |tape, vs| {
                let vars = vec![vs[..split].to_vec(), vs[split..].to_vec()];
                let refs: Vec<&ViewAutoencoder> = aes.iter().collect();
                let z = encode_batch(tape, &refs, &vars, &batch)?;
                let fused = fuse_latents(tape, &z, &batch.mask)?;
                reconstruction_loss(tape, &refs, &vars, &batch, &z, fused)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_autoencoder_learns_subspace() {
        // Rank-2 data in R^5: a linear AE with d = 2 can reconstruct it exactly.
        let mut rng = Rng::new(8);
        let basis = Array2::from_shape_fn((2, 5), |_| rng.normal());
        let coeffs = Array2::from_shape_fn((64, 2), |_| rng.normal());
        let x = coeffs.dot(&basis);
        let ds = MultiViewDataset::complete(vec![x], None).unwrap();
        let batch = Batch::full(&ds);
        let mut ae = ViewAutoencoder::new(5, 2, &[], Activation::Relu, "lin", &mut rng).unwrap();
        let initial = rec_loss_value(&[&ae], &batch);
        let mut adam = AdamState::new(0.01);
        for _ in 0..4000 {
            let tape = Tape::new();
            let vars = vec![ae.bind(&tape)];
            let z = encode_batch(&tape, &[&ae], &vars, &batch).unwrap();
            let fused = fuse_latents(&tape, &z, &batch.mask).unwrap();
            let loss = reconstruction_loss(&tape, &[&ae], &vars, &batch, &z, fused).unwrap();
            let grads = tape.backward(loss).unwrap();
            ae.zero_grad();
            ae.accumulate(&vars[0], &grads);
            adam.step(&mut ae.params_mut()).unwrap();
        }
        let fin = rec_loss_value(&[&ae], &batch);
        assert!(fin < 1e-6 * initial, "initial {initial}, final {fin}");
    }
}
