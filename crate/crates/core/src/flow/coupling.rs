use crate::autoencoder::{Activation, Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::numerics::{Module, Param, Rng, Tape, Var};

/// Which half of the input a coupling layer rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// Rewrites the first half, conditioned on the second.
    Odd,
    /// Rewrites the second half, conditioned on the first.
    Even,
}

impl Parity {
    /// Parity of the 1-based layer index `m`.
    pub fn of(m: usize) -> Self {
        if m % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

/// Affine coupling: `y = x ⊙ exp(s(c)) + t(c)` on one half, where `c` is the
/// other, untouched half.
///
/// The raw scale-net output passes through `clamp * tanh(. / clamp)` so
/// `|s| < clamp`; the log-determinant is the row sum of that clamped `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    pub index: usize,
    pub s_net: Mlp,
    pub t_net: Mlp,
    pub scale_clamp: f64,
}

impl CouplingLayer {
    pub fn new(index: usize, dim: usize, hidden: &[usize], scale_clamp: f64, name: &str, rng: &mut Rng) -> Result<Self> {
        if dim % 2 != 0 || dim == 0 {
            return Err(Error::Config(format!("coupling layers need an even latent dim, got {dim}")));
        }
        if index == 0 {
            return Err(Error::Config("coupling layer index is 1-based".into()));
        }
        if !(scale_clamp > 0.0) {
            return Err(Error::Config(format!("scale_clamp must be positive, got {scale_clamp}")));
        }
        let half = dim / 2;
        let spec = MlpSpec::new(half, hidden, half, Activation::Tanh);
        Ok(Self {
            index,
            s_net: Mlp::new(spec.clone(), &format!("{name}.s"), rng)?,
            t_net: Mlp::new(spec, &format!("{name}.t"), rng)?,
            scale_clamp,
        })
    }

    pub fn parity(&self) -> Parity {
        Parity::of(self.index)
    }

    pub fn dim(&self) -> usize {
        2 * self.s_net.spec().input_dim
    }

    fn split_vars<'v>(&self, vars: &'v [Var]) -> (&'v [Var], &'v [Var]) {
        vars.split_at(self.s_net.num_params())
    }

    /// `(transformed half, conditioning half)` in that order.
    fn halves(&self, tape: &Tape, x: Var) -> Result<(Var, Var)> {
        let half = self.dim() / 2;
        let parts = tape.split_cols(x, &[half, half])?;
        Ok(match self.parity() {
            Parity::Odd => (parts[0], parts[1]),
            Parity::Even => (parts[1], parts[0]),
        })
    }

    fn join(&self, tape: &Tape, transformed: Var, cond: Var) -> Result<Var> {
        match self.parity() {
            Parity::Odd => tape.concat_cols(&[transformed, cond]),
            Parity::Even => tape.concat_cols(&[cond, transformed]),
        }
    }

    fn scale_and_shift(&self, tape: &Tape, vars: &[Var], cond: Var) -> Result<(Var, Var)> {
        let (sv, tv) = self.split_vars(vars);
        let raw = self.s_net.forward(tape, sv, cond)?;
        let c = self.scale_clamp;
        let s = tape.scale(tape.tanh(tape.scale(raw, 1.0 / c)), c);
        let t = self.t_net.forward(tape, tv, cond)?;
        Ok((s, t))
    }

    /// Returns the output and the per-row log-determinant `(B, 1)`.
    pub fn forward(&self, tape: &Tape, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let (a, cond) = self.halves(tape, x)?;
        let (s, t) = self.scale_and_shift(tape, vars, cond)?;
        let y = tape.add(tape.mul(a, tape.exp(s))?, t)?;
        Ok((self.join(tape, y, cond)?, tape.row_sums(s)))
    }

    pub fn inverse(&self, tape: &Tape, vars: &[Var], y: Var) -> Result<Var> {
        let (b, cond) = self.halves(tape, y)?;
        let (s, t) = self.scale_and_shift(tape, vars, cond)?;
        let a = tape.mul(tape.sub(b, t)?, tape.exp(tape.neg(s)))?;
        self.join(tape, a, cond)
    }
}

impl Module for CouplingLayer {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.s_net.params();
        p.extend(self.t_net.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.s_net.params_mut();
        p.extend(self.t_net.params_mut());
        p
    }
}

/// Final elementwise rescaling `h = x ⊙ exp(s_theta)`; log-det `sum(s_theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingLayer {
    pub s_theta: Param,
}

impl ScalingLayer {
    pub fn new(dim: usize, name: &str) -> Self {
        Self {
            s_theta: Param::zeros(format!("{name}.s_theta"), (1, dim)),
        }
    }

    pub fn forward(&self, tape: &Tape, s_theta: Var, x: Var) -> Result<(Var, Var)> {
        let y = tape.mul(x, tape.exp(s_theta))?;
        Ok((y, tape.sum(s_theta)))
    }

    pub fn inverse(&self, tape: &Tape, s_theta: Var, y: Var) -> Result<Var> {
        tape.mul(y, tape.exp(tape.neg(s_theta)))
    }
}
