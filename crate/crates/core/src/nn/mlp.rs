use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => super::graph::tanh(v),
            Activation::Relu => v.max(0.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Anything the optimizer can update: an ordered list of tensors.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Dense feed-forward network. Weights are stored `in × out` so a batch of
/// row vectors multiplies on the left; biases are `1 × out` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Trainable leaves of one network on a [`Graph`], in [`Parameters`] order.
#[derive(Debug, Clone)]
pub struct MlpVars {
    vars: Vec<Var>,
}

impl MlpVars {
    /// Gradients in [`Parameters`] order; absent entries become zeros.
    pub fn collect(&self, grads: &Gradients, params: &MlpParams) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.get_or_zeros(v, t.dim()))
            .collect()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("an MLP needs at least an input and an output size"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    Ok(())
}

impl MlpParams {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array2::from_shape_fn((1, fan_out), |_| rng.random_range(-bound..bound)));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|p| Tensor::zeros((p[0], p[1]))).collect();
        let biases = layer_sizes.windows(2).map(|p| Tensor::zeros((1, p[1]))).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn from_tensors(
        layer_sizes: &[usize],
        activation: Activation,
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let n = layer_sizes.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::config(format!(
                "expected {n} weight and bias tensors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (i, pair) in layer_sizes.windows(2).enumerate() {
            if weights[i].dim() != (pair[0], pair[1]) || biases[i].dim() != (1, pair[1]) {
                return Err(Error::config(format!(
                    "layer {i}: weight {:?} / bias {:?} do not match {}→{}",
                    weights[i].dim(),
                    biases[i].dim(),
                    pair[0],
                    pair[1]
                )));
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    /// Single-sample evaluation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_size(),
                got: input.len(),
            });
        }
        let last = self.weights.len() - 1;
        let mut x = input.to_vec();
        for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z: Vec<f64> = b.row(0).to_vec();
            for (xi, wrow) in x.iter().zip(w.rows()) {
                for (zj, &wij) in z.iter_mut().zip(wrow) {
                    *zj += xi * wij;
                }
            }
            if layer != last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            x = z;
        }
        Ok(x)
    }

    /// Batch evaluation; rows of `x` are samples.
    pub fn forward_batch(&self, x: &Tensor) -> Result<Tensor> {
        if x.ncols() != self.input_size() {
            return Err(Error::Dimension {
                context: "mlp batch input",
                expected: self.input_size(),
                got: x.ncols(),
            });
        }
        let last = self.weights.len() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for layer in 1..=last {
            h.mapv_inplace(|v| self.activation.apply(v));
            h = h.dot(&self.weights[layer]) + &self.biases[layer];
        }
        Ok(h)
    }

    /// Records the network on `g`. Parameters become trainable leaves when
    /// `trainable` is set, constants otherwise.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, trainable: bool) -> Result<(Var, MlpVars)> {
        if g.value(x).ncols() != self.input_size() {
            return Err(Error::Dimension {
                context: "mlp graph input",
                expected: self.input_size(),
                got: g.value(x).ncols(),
            });
        }
        let last = self.weights.len() - 1;
        let mut vars = Vec::with_capacity(2 * self.weights.len());
        let mut h = x;
        for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (wv, bv) = if trainable {
                (g.param(w.clone()), g.param(b.clone()))
            } else {
                (g.constant(w.clone()), g.constant(b.clone()))
            };
            vars.push(wv);
            vars.push(bv);
            let z = g.matmul(h, wv)?;
            let z = g.add_row(z, bv)?;
            h = if layer == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => g.tanh(z),
                    Activation::Relu => g.relu(z),
                }
            };
        }
        Ok((h, MlpVars { vars }))
    }

    /// `self ← τ·online + (1−τ)·self`, tensor by tensor.
    pub fn blend_from(&mut self, online: &MlpParams, tau: f64) -> Result<()> {
        if online.layer_sizes != self.layer_sizes {
            return Err(Error::config("soft update between networks of different shape"));
        }
        for (t, o) in self.tensors_mut().into_iter().zip(online.tensors()) {
            t.zip_mut_with(o, |tv, &ov| *tv = tau * ov + (1.0 - tau) * *tv);
        }
        Ok(())
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

/// A bare tensor, e.g. a `1 × 1` log-temperature.
impl Parameters for Tensor {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![self]
    }
}
