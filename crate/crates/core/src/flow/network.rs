use ndarray::Array2;

use super::coupling::{CouplingLayer, ScalingLayer};
use crate::error::{Error, Result};
use crate::numerics::{Module, Param, Rng, Tape, Var};

/// `ln(2π)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Shape of a view's flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub latent_dim: usize,
    pub n_layers: usize,
    pub hidden_dims: Vec<usize>,
    pub scale_clamp: f64,
}

impl FlowSpec {
    pub fn new(latent_dim: usize, n_layers: usize) -> Self {
        Self {
            latent_dim,
            n_layers,
            hidden_dims: vec![64],
            scale_clamp: 5.0,
        }
    }
}

/// `M` alternating affine couplings followed by a scaling layer; maps a
/// view's latent to a standard Gaussian with an exact log-determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    pub layers: Vec<CouplingLayer>,
    pub scaling: ScalingLayer,
    latent_dim: usize,
}

impl FlowNetwork {
    pub fn new(spec: &FlowSpec, name: &str, rng: &mut Rng) -> Result<Self> {
        if spec.latent_dim == 0 || spec.latent_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "flow latent dim must be even and positive, got {}",
                spec.latent_dim
            )));
        }
        let layers = (1..=spec.n_layers)
            .map(|m| {
                CouplingLayer::new(
                    m,
                    spec.latent_dim,
                    &spec.hidden_dims,
                    spec.scale_clamp,
                    &format!("{name}.c{m}"),
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            scaling: ScalingLayer::new(spec.latent_dim, name),
            latent_dim: spec.latent_dim,
        })
    }

    /// The identity map: every coupling net and `s_theta` zeroed.
    pub fn identity(spec: &FlowSpec, name: &str) -> Result<Self> {
        let mut flow = Self::new(spec, name, &mut Rng::new(0))?;
        for p in flow.params_mut() {
            p.value.fill(0.0);
        }
        Ok(flow)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn layer_vars<'v>(&self, vars: &'v [Var]) -> (Vec<&'v [Var]>, Var) {
        let mut rest = vars;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (head, tail) = rest.split_at(layer.num_params());
            out.push(head);
            rest = tail;
        }
        (out, rest[0])
    }

    fn check_width(&self, tape: &Tape, x: Var) -> Result<()> {
        if tape.shape(x).1 != self.latent_dim {
            return Err(Error::Shape {
                op: "flow input",
                left: tape.value(x).shape().to_vec(),
                right: vec![self.latent_dim],
            });
        }
        Ok(())
    }

    /// `h = F(z)` and `log|det dh/dz|` per row, shape `(B, 1)`.
    pub fn forward(&self, tape: &Tape, vars: &[Var], z: Var) -> Result<(Var, Var)> {
        self.check_width(tape, z)?;
        let (layer_vars, s_theta) = self.layer_vars(vars);
        let mut x = z;
        let mut logdet: Option<Var> = None;
        for (layer, lv) in self.layers.iter().zip(layer_vars) {
            let (y, ld) = layer.forward(tape, lv, x)?;
            x = y;
            logdet = Some(match logdet {
                Some(acc) => tape.add(acc, ld)?,
                None => ld,
            });
        }
        let (h, scale_ld) = self.scaling.forward(tape, s_theta, x)?;
        let rows = tape.shape(z).0;
        let logdet = match logdet {
            Some(acc) => tape.add(acc, scale_ld)?,
            None => tape.add(tape.constant(Array2::zeros((rows, 1))), scale_ld)?,
        };
        Ok((h, logdet))
    }

    /// `z = F^{-1}(h)`: undo the scaling, then the couplings from last to first.
    pub fn inverse(&self, tape: &Tape, vars: &[Var], h: Var) -> Result<Var> {
        self.check_width(tape, h)?;
        let (layer_vars, s_theta) = self.layer_vars(vars);
        let mut x = self.scaling.inverse(tape, s_theta, h)?;
        if tape.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("inverse of scaling layer".into()));
        }
        for (layer, lv) in self.layers.iter().zip(layer_vars).rev() {
            x = layer.inverse(tape, lv, x)?;
            if tape.value(x).iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("inverse of coupling layer {}", layer.index)));
            }
        }
        Ok(x)
    }

    /// `log p(z) = -(d ln 2π + |h|^2) / 2 + log|det J|` per row, `(B, 1)`.
    pub fn log_likelihood(&self, tape: &Tape, vars: &[Var], z: Var) -> Result<Var> {
        let (h, logdet) = self.forward(tape, vars, z)?;
        log_likelihood_from(tape, h, logdet, self.latent_dim)
    }

    pub fn forward_values(&self, z: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let tape = Tape::new();
        let vars = self.bind_frozen(&tape);
        let (h, ld) = self.forward(&tape, &vars, tape.constant(z.clone()))?;
        let out = (tape.value(h).clone(), tape.value(ld).clone());
        Ok(out)
    }

    pub fn inverse_values(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        let vars = self.bind_frozen(&tape);
        let z = self.inverse(&tape, &vars, tape.constant(h.clone()))?;
        let out = tape.value(z).clone();
        Ok(out)
    }

    pub fn log_likelihood_values(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        let vars = self.bind_frozen(&tape);
        let lp = self.log_likelihood(&tape, &vars, tape.constant(z.clone()))?;
        let out = tape.value(lp).clone();
        Ok(out)
    }
}

/// Standard-normal log density of `h` plus the flow's log-determinant.
pub fn log_likelihood_from(tape: &Tape, h: Var, logdet: Var, dim: usize) -> Result<Var> {
    let sq = tape.row_sums(tape.square(h));
    let base = tape.offset(tape.scale(sq, -0.5), -0.5 * dim as f64 * LN_2PI);
    tape.add(base, logdet)
}

impl Module for FlowNetwork {
    fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.layers.iter().flat_map(|l| l.params()).collect();
        p.push(&self.scaling.s_theta);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        p.push(&mut self.scaling.s_theta);
        p
    }
}
