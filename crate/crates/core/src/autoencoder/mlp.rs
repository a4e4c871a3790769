use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Module, Param, Rng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Fully connected stack: activation between layers, none on the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_dims: hidden_dims.to_vec(),
            activation,
        }
    }

    /// Widths of every layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::Config(format!("layer widths {:?} must be positive", self.widths())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    // weight, bias, weight, bias, ...
    params: Vec<Param>,
}

impl Mlp {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new(spec: MlpSpec, name: &str, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for (l, pair) in widths.windows(2).enumerate() {
            params.push(Param::uniform_fan_in(format!("{name}.w{l}"), (pair[0], pair[1]), rng));
            params.push(Param::zeros(format!("{name}.b{l}"), (1, pair[1])));
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec, name: &str) -> Result<Self> {
        let mut mlp = Self::new(spec, name, &mut Rng::new(0))?;
        for p in &mut mlp.params {
            p.value.fill(0.0);
        }
        Ok(mlp)
    }

    /// A single linear layer with the given weight and bias.
    pub fn linear(weight: Array2<f64>, bias: Array2<f64>, name: &str) -> Result<Self> {
        let (i, o) = weight.dim();
        if bias.dim() != (1, o) {
            return Err(Error::Shape {
                op: "linear",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            spec: MlpSpec::new(i, &[], o, Activation::Relu),
            params: vec![Param::new(format!("{name}.w0"), weight), Param::new(format!("{name}.b0"), bias)],
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, tape: &Tape, vars: &[Var], x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.spec.input_dim {
            return Err(Error::Shape {
                op: "mlp input",
                left: tape.value(x).shape().to_vec(),
                right: vec![self.spec.input_dim],
            });
        }
        let n_layers = vars.len() / 2;
        let mut h = x;
        for (l, wb) in vars.chunks(2).enumerate() {
            h = tape.add(tape.matmul(h, wb[0])?, wb[1])?;
            if l + 1 < n_layers {
                h = match self.spec.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok(h)
    }

    /// Forward pass outside any gradient computation.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        let vars = self.bind_frozen(&tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&tape, &vars, xv)?;
        let value = tape.value(out).clone();
        Ok(value)
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Param> {
        self.params.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.params.iter_mut().collect()
    }
}
