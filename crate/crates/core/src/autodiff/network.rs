use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::batch::{JetBlock, SplitInput};
use super::jet::{InputJet, COMPONENTS, DX1};
use crate::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }
}

/// One affine map `z = W h + b`; `weights` is `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite Glorot limit");
        let weights = Array2::from_shape_fn((outputs, inputs), |_| dist.sample(rng));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// A fully connected network: `tanh` on every hidden layer, affine output.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
    activation: Activation,
}

impl DenseNetwork {
    /// Builds a network from explicit layers, checking that dimensions chain and
    /// that every entry is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::Dimension {
                    context: "layer bias",
                    expected: layer.outputs(),
                    got: layer.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].outputs() != layer.inputs() {
                return Err(Error::Dimension {
                    context: "consecutive layers",
                    expected: layers[i - 1].outputs(),
                    got: layer.inputs(),
                });
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(Self {
            layers,
            activation: Activation::Tanh,
        })
    }

    /// Glorot-initialised network with `widths = [input, hidden..., output]`.
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activation: Activation::Tanh,
        }
    }

    /// Same shape, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter in canonical order (per layer: weights row-major, then bias).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Plain evaluation of one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut h = Array1::from(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&h) + &layer.bias;
            if i < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        Ok(h.to_vec())
    }

    /// Value and derivatives (up to `order`, at most 3) of every output with
    /// respect to `x[coord]`, other coordinates held fixed.
    pub fn input_derivatives(&self, x: &[f64], coord: usize, order: usize) -> Result<Vec<InputJet>> {
        if !(1..=3).contains(&order) {
            return Err(Error::Contract(format!("derivative order {order} outside 1..=3")));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if coord >= x.len() {
            return Err(Error::Contract(format!(
                "coordinate {coord} out of range for input dimension {}",
                x.len()
            )));
        }
        let mut dynamic = JetBlock::zeros(COMPONENTS, 1, x.len());
        for (i, &v) in x.iter().enumerate() {
            dynamic.data_mut()[[0, i]] = v;
        }
        dynamic.data_mut()[[DX1, coord]] = 1.0;
        let statics = Array2::<f64>::zeros((1, 0));
        let input = SplitInput {
            statics: statics.view(),
            fn_of_point: &[0],
            dynamic: &dynamic,
        };
        let (out, _) = self.forward_batch(&input);
        Ok((0..self.output_dim())
            .map(|k| {
                let c = out.get(0, k);
                let mut derivs = [0.0; 3];
                derivs[..order].copy_from_slice(&c[1..=order]);
                InputJet {
                    value: c[0],
                    derivs,
                    order,
                }
            })
            .collect())
    }

    /// Adds `scale * other` to every parameter.
    pub fn axpy(&mut self, scale: f64, other: &DenseNetwork) {
        for (p, q) in self.values_mut().zip(other.values()) {
            *p += scale * q;
        }
    }
}
