//! Scalar reverse-mode tape.
//!
//! The batched jet path in [`super::batch`] is what training uses; this tape
//! differentiates arbitrary scalar losses written over [`Var`]s and serves as
//! the general-purpose [`param_gradient`].

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::network::DenseNetwork;
use super::params::{ModelParams, ParamGradient};
use crate::{Error, Result};

#[derive(Clone, Copy)]
struct Node {
    parents: [(usize, f64); 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [(usize::MAX, 0.0), (usize::MAX, 0.0)])
    }

    fn push(&self, value: f64, parents: [(usize, f64); 2]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents });
        Var {
            tape: self,
            index: nodes.len() - 1,
            value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of every recorded node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(parent, local) in &nodes[i].parents {
                if parent != usize::MAX {
                    adj[parent] += a * local;
                }
            }
        }
        adj
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn unary(self, value: f64, local: f64) -> Var<'t> {
        self.tape.push(value, [(self.index, local), (usize::MAX, 0.0)])
    }

    pub fn tanh(self) -> Var<'t> {
        let y = self.value.tanh();
        self.unary(y, 1.0 - y * y)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    pub fn exp(self) -> Var<'t> {
        let y = self.value.exp();
        self.unary(y, y)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn constant(&self, value: f64) -> Var<'t> {
        self.tape.var(value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .push(self.value + rhs.value, [(self.index, 1.0), (rhs.index, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .push(self.value - rhs.value, [(self.index, 1.0), (rhs.index, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push(
            self.value * rhs.value,
            [(self.index, rhs.value), (rhs.index, self.value)],
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.value;
        self.tape.push(
            self.value * inv,
            [(self.index, inv), (rhs.index, -self.value * inv * inv)],
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

/// One layer's parameters as tape variables.
pub struct LayerVars<'t> {
    /// `[out][in]`
    pub weights: Vec<Vec<Var<'t>>>,
    pub bias: Vec<Var<'t>>,
}

/// Every network parameter registered on a tape.
pub struct ParamVars<'t> {
    pub nets: Vec<Vec<LayerVars<'t>>>,
}

impl<'t> ParamVars<'t> {
    pub fn register(tape: &'t Tape, params: &ModelParams) -> Self {
        let nets = params
            .nets
            .iter()
            .map(|net| {
                net.layers()
                    .iter()
                    .map(|l| LayerVars {
                        weights: l
                            .weights
                            .outer_iter()
                            .map(|row| row.iter().map(|&w| tape.var(w)).collect())
                            .collect(),
                        bias: l.bias.iter().map(|&b| tape.var(b)).collect(),
                    })
                    .collect()
            })
            .collect();
        Self { nets }
    }

    /// Forward pass of network `net` on a constant input.
    pub fn forward(&self, net: usize, x: &[f64]) -> Vec<Var<'t>> {
        let layers = &self.nets[net];
        let tape = layers[0].bias[0].tape;
        let mut h: Vec<Var<'t>> = x.iter().map(|&v| tape.var(v)).collect();
        let last = layers.len() - 1;
        for (li, layer) in layers.iter().enumerate() {
            let mut z: Vec<Var<'t>> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, &b)| row.iter().zip(&h).fold(b, |acc, (&w, &hv)| acc + w * hv))
                .collect();
            if li < last {
                z = z.into_iter().map(Var::tanh).collect();
            }
            h = z;
        }
        h
    }

    /// Variables in canonical parameter order.
    fn flat(&self) -> Vec<&Var<'t>> {
        self.nets
            .iter()
            .flatten()
            .flat_map(|l| l.weights.iter().flatten().chain(l.bias.iter()))
            .collect()
    }
}

/// Gradient of an arbitrary scalar loss with respect to every parameter.
pub fn param_gradient<F>(params: &ModelParams, loss: F) -> Result<ParamGradient>
where
    F: for<'t> Fn(&ParamVars<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = ParamVars::register(&tape, params);
    let out = loss(&vars);
    if !out.value().is_finite() {
        return Err(Error::Divergence {
            iteration: None,
            loss: out.value(),
            last_finite_loss: None,
        });
    }
    let adj = tape.gradient(out);
    let mut grad = ParamGradient::zeros_like(params);
    for (g, v) in grad.values_mut().zip(vars.flat()) {
        *g = adj[v.index];
    }
    Ok(grad)
}

/// Gradient of a network-level loss for a single [`DenseNetwork`].
pub fn network_gradient<F>(net: &DenseNetwork, loss: F) -> Result<DenseNetwork>
where
    F: for<'t> Fn(&ParamVars<'t>) -> Var<'t>,
{
    let params = ModelParams::new(vec![net.clone()]);
    let mut grad = param_gradient(&params, loss)?;
    Ok(grad.nets.remove(0))
}
