//! Batched jet propagation with hand-written adjoints.
//!
//! A [`JetBlock`] stores, for `points` evaluation points and `width` neurons,
//! either values only (`comps == 1`) or full [`FieldJet`](super::FieldJet)
//! components (`comps == 5`). Rows are component-major: row `c * points + p`
//! holds component `c` of point `p`. Affine layers then act on the whole block
//! as one matrix product; only the value rows receive the bias.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::jet::{self, COMPONENTS};
use super::network::{DenseNetwork, Layer};

#[derive(Clone, Debug, PartialEq)]
pub struct JetBlock {
    comps: usize,
    points: usize,
    data: Array2<f64>,
}

impl JetBlock {
    pub fn zeros(comps: usize, points: usize, width: usize) -> Self {
        assert!(comps == 1 || comps == COMPONENTS, "comps must be 1 or {COMPONENTS}");
        Self {
            comps,
            points,
            data: Array2::zeros((comps * points, width)),
        }
    }

    pub fn from_data(comps: usize, points: usize, data: Array2<f64>) -> Self {
        assert_eq!(data.nrows(), comps * points);
        Self { comps, points, data }
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    /// Full jet of point `p`, neuron `i` (missing components read as zero).
    #[inline]
    pub fn get(&self, p: usize, i: usize) -> [f64; COMPONENTS] {
        let mut out = [0.0; COMPONENTS];
        for (c, o) in out.iter_mut().enumerate().take(self.comps) {
            *o = self.data[[c * self.points + p, i]];
        }
        out
    }

    #[inline]
    pub fn set(&mut self, p: usize, i: usize, jet: &[f64; COMPONENTS]) {
        for (c, v) in jet.iter().enumerate().take(self.comps) {
            self.data[[c * self.points + p, i]] = *v;
        }
    }

    #[inline]
    pub fn add(&mut self, p: usize, i: usize, jet: &[f64; COMPONENTS]) {
        for (c, v) in jet.iter().enumerate().take(self.comps) {
            self.data[[c * self.points + p, i]] += *v;
        }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![..self.points, ..])
    }
}

/// Input to a network's first layer: the leading `statics.ncols()` input
/// coordinates are shared by all points of one function, the remaining ones
/// vary per point and carry jets.
pub struct SplitInput<'a> {
    /// `[functions × n_static]`
    pub statics: ArrayView2<'a, f64>,
    /// Function index of every point.
    pub fn_of_point: &'a [usize],
    /// `[comps·points × n_dynamic]`
    pub dynamic: &'a JetBlock,
}

impl SplitInput<'_> {
    pub fn width(&self) -> usize {
        self.statics.ncols() + self.dynamic.width()
    }
}

/// `z = h Wᵀ (+ b on value rows)`.
pub(crate) fn affine_forward(layer: &Layer, h: &JetBlock) -> JetBlock {
    let mut z = h.data.dot(&layer.weights.t());
    let mut values = z.slice_mut(s![..h.points, ..]);
    values += &layer.bias;
    JetBlock::from_data(h.comps, h.points, z)
}

/// Accumulates parameter adjoints into `grad` and returns the input adjoint.
pub(crate) fn affine_backward(layer: &Layer, h: &JetBlock, dz: &JetBlock, grad: &mut Layer) -> JetBlock {
    general_mat_mul(1.0, &dz.data.t(), &h.data, 1.0, &mut grad.weights);
    grad.bias += &dz.values().sum_axis(Axis(0));
    JetBlock::from_data(h.comps, h.points, dz.data.dot(&layer.weights))
}

pub(crate) fn split_affine_forward(layer: &Layer, input: &SplitInput) -> JetBlock {
    let ns = input.statics.ncols();
    let dynamic = input.dynamic;
    let w_static = layer.weights.slice(s![.., ..ns]);
    let w_dynamic = layer.weights.slice(s![.., ns..]);
    let mut z = dynamic.data.dot(&w_dynamic.t());
    let mut per_function = input.statics.dot(&w_static.t());
    per_function += &layer.bias;
    for (p, &f) in input.fn_of_point.iter().enumerate() {
        let mut row = z.row_mut(p);
        row += &per_function.row(f);
    }
    JetBlock::from_data(dynamic.comps, dynamic.points, z)
}

pub(crate) fn split_affine_backward(input: &SplitInput, dz: &JetBlock, grad: &mut Layer) {
    let ns = input.statics.ncols();
    {
        let mut gw_dynamic = grad.weights.slice_mut(s![.., ns..]);
        general_mat_mul(1.0, &dz.data.t(), &input.dynamic.data, 1.0, &mut gw_dynamic);
    }
    let mut d_per_function = Array2::<f64>::zeros((input.statics.nrows(), dz.width()));
    for (p, &f) in input.fn_of_point.iter().enumerate() {
        let mut row = d_per_function.row_mut(f);
        row += &dz.data.row(p);
    }
    {
        let mut gw_static = grad.weights.slice_mut(s![.., ..ns]);
        general_mat_mul(1.0, &d_per_function.t(), &input.statics, 1.0, &mut gw_static);
    }
    grad.bias += &d_per_function.sum_axis(Axis(0));
}

pub(crate) fn tanh_forward(z: &JetBlock) -> JetBlock {
    if z.comps == 1 {
        return JetBlock::from_data(1, z.points, z.data.mapv(f64::tanh));
    }
    let mut y = JetBlock::zeros(z.comps, z.points, z.width());
    for p in 0..z.points {
        for i in 0..z.width() {
            y.set(p, i, &jet::tanh_jet(&z.get(p, i)));
        }
    }
    y
}

pub(crate) fn tanh_backward(z: &JetBlock, y: &JetBlock, dy: &JetBlock) -> JetBlock {
    if z.comps == 1 {
        let data = ndarray::Zip::from(&y.data)
            .and(&dy.data)
            .map_collect(|&y, &d| d * (1.0 - y * y));
        return JetBlock::from_data(1, z.points, data);
    }
    let mut dz = JetBlock::zeros(z.comps, z.points, z.width());
    for p in 0..z.points {
        for i in 0..z.width() {
            let y0 = y.data[[p, i]];
            dz.set(p, i, &jet::tanh_jet_backward(&z.get(p, i), y0, &dy.get(p, i)));
        }
    }
    dz
}

/// Intermediate blocks kept for the backward pass.
pub struct NetworkTrace {
    /// Pre-activations of every layer (the last one is the output).
    pre: Vec<JetBlock>,
    /// Activated hidden states.
    post: Vec<JetBlock>,
}

impl DenseNetwork {
    /// Propagates a batch of jets; returns the output block and the trace
    /// needed by [`DenseNetwork::backward_batch`].
    pub fn forward_batch(&self, input: &SplitInput) -> (JetBlock, NetworkTrace) {
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers.len());
        let mut post = Vec::with_capacity(layers.len() - 1);
        let mut z = split_affine_forward(&layers[0], input);
        for layer in &layers[1..] {
            let h = tanh_forward(&z);
            pre.push(z);
            z = affine_forward(layer, &h);
            post.push(h);
        }
        pre.push(z.clone());
        (z, NetworkTrace { pre, post })
    }

    /// Accumulates the parameter gradient of `<d_out, output>` into `grad`.
    pub fn backward_batch(&self, input: &SplitInput, trace: &NetworkTrace, d_out: &JetBlock, grad: &mut DenseNetwork) {
        let layers = self.layers();
        let grads = grad.layers_mut();
        let mut dz = d_out.clone();
        for l in (1..layers.len()).rev() {
            let dh = affine_backward(&layers[l], &trace.post[l - 1], &dz, &mut grads[l]);
            dz = tanh_backward(&trace.pre[l - 1], &trace.post[l - 1], &dh);
        }
        split_affine_backward(input, &dz, &mut grads[0]);
    }
}
