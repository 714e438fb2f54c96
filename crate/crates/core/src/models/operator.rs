//! Operator models and their straightforward point-by-point evaluation.
//!
//! Input layout. Branch: `[u(x_1..x_m), embed(x)?]`. Trunk:
//! `[extra, t, embed(x), u(x)?]` where `extra` is the sensor vector (BxTG),
//! the `(Re, Im)` Fourier pairs over `Λ` (TF, BxTF) or empty. Per-function
//! columns come first so the batched path can evaluate them once per function.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use super::fourier::{fourier_coeffs, one_period};
use super::sample::{FunctionSample, UniformGrid};
use super::variant::{VariantKind, VariantSpec};
use crate::autodiff::{DenseNetwork, ModelParams};
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

pub const BRANCH: usize = 0;
pub const TRUNK: usize = 1;
pub const ENCODER_U: usize = 2;
pub const ENCODER_V: usize = 3;

/// Network sizes shared by branch and trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden width.
    pub width: usize,
    /// Number of hidden layers (an output layer is added).
    pub depth: usize,
    /// Output width `w` of branch and trunk.
    pub latent: usize,
}

impl Architecture {
    /// Hidden width and depth per equation; the latent size equals the width.
    pub fn default_for(kind: crate::pde::PdeKind) -> Self {
        use crate::pde::PdeKind::*;
        let (width, depth) = match kind {
            Advection | Burgers => (100, 6),
            DiffusionReaction => (50, 4),
            Kdv => (128, 6),
        };
        Self {
            width,
            depth,
            latent: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.latent == 0 {
            return Err(Error::Config(format!(
                "architecture needs positive width, depth and latent size, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorModel {
    spec: VariantSpec,
    arch: Architecture,
    embedding: Embedding,
    sensor_grid: UniformGrid,
    params: ModelParams,
}

/// Branch and trunk input widths split into per-function and per-point parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputLayout {
    pub branch_static: usize,
    pub branch_dynamic: usize,
    pub trunk_static: usize,
    pub trunk_dynamic: usize,
}

impl InputLayout {
    pub fn new(spec: &VariantSpec, sensors: usize) -> Self {
        let kind = spec.kind;
        let e = spec.embedding.dim();
        Self {
            branch_static: sensors,
            branch_dynamic: if kind.branch_has_x() { e } else { 0 },
            trunk_static: if kind.trunk_has_global() {
                sensors
            } else if kind.trunk_has_fourier() {
                2 * spec.fourier_modes.len()
            } else {
                0
            },
            trunk_dynamic: 1 + e + usize::from(kind.trunk_has_local()),
        }
    }

    pub fn branch(&self) -> usize {
        self.branch_static + self.branch_dynamic
    }

    pub fn trunk(&self) -> usize {
        self.trunk_static + self.trunk_dynamic
    }
}

impl OperatorModel {
    /// Glorot-initialised model. Parameters come from the parameter stream of
    /// `seed`, random embedding draws from its embedding stream.
    pub fn new(spec: VariantSpec, arch: Architecture, sensor_grid: UniformGrid, seed: u64) -> Result<Self> {
        arch.validate()?;
        spec.embedding.validate()?;
        let layout = InputLayout::new(&spec, sensor_grid.points);
        let mut rng = stream_rng(seed, stream::PARAM_INIT);
        let hidden = vec![arch.width; arch.depth];
        let widths = |input: usize| {
            let mut w = vec![input];
            w.extend_from_slice(&hidden);
            w.push(arch.latent);
            w
        };
        let mut nets = vec![
            DenseNetwork::glorot(&widths(layout.branch()), &mut rng),
            DenseNetwork::glorot(&widths(layout.trunk()), &mut rng),
        ];
        if spec.kind.is_modified() {
            nets.push(DenseNetwork::glorot(&[layout.branch(), arch.width], &mut rng));
            nets.push(DenseNetwork::glorot(&[layout.trunk(), arch.width], &mut rng));
        }
        let embedding = Embedding::new(spec.embedding, seed);
        Self::with_params(spec, arch, embedding, sensor_grid, ModelParams::new(nets))
    }

    /// Assembles a model from explicit networks, checking every shape.
    pub fn with_params(
        spec: VariantSpec,
        arch: Architecture,
        embedding: Embedding,
        sensor_grid: UniformGrid,
        params: ModelParams,
    ) -> Result<Self> {
        let layout = InputLayout::new(&spec, sensor_grid.points);
        let expected_nets = if spec.kind.is_modified() { 4 } else { 2 };
        if params.nets.len() != expected_nets {
            return Err(Error::Dimension {
                context: "number of networks",
                expected: expected_nets,
                got: params.nets.len(),
            });
        }
        if embedding.spec() != &spec.embedding {
            return Err(Error::Config("embedding does not match the variant spec".into()));
        }
        let check = |got: usize, expected: usize, context: &'static str| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::Dimension { context, expected, got })
            }
        };
        let (branch, trunk) = (&params.nets[BRANCH], &params.nets[TRUNK]);
        check(branch.input_dim(), layout.branch(), "branch input")?;
        check(trunk.input_dim(), layout.trunk(), "trunk input")?;
        check(trunk.output_dim(), branch.output_dim(), "trunk output")?;
        if spec.kind.is_modified() {
            let (eu, ev) = (&params.nets[ENCODER_U], &params.nets[ENCODER_V]);
            check(eu.layers().len(), 1, "encoder depth")?;
            check(ev.layers().len(), 1, "encoder depth")?;
            check(eu.input_dim(), layout.branch(), "encoder U input")?;
            check(ev.input_dim(), layout.trunk(), "encoder V input")?;
            for net in [branch, trunk] {
                for layer in &net.layers()[..net.layers().len() - 1] {
                    check(layer.outputs(), eu.output_dim(), "hidden width vs encoder U")?;
                    check(layer.outputs(), ev.output_dim(), "hidden width vs encoder V")?;
                }
            }
        }
        Ok(Self {
            spec,
            arch,
            embedding,
            sensor_grid,
            params,
        })
    }

    pub fn spec(&self) -> &VariantSpec {
        &self.spec
    }

    pub fn kind(&self) -> VariantKind {
        self.spec.kind
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn sensor_grid(&self) -> UniformGrid {
        self.sensor_grid
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout::new(&self.spec, self.sensor_grid.points)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Replaces the parameters, rejecting a shape change.
    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        let same_shape = params.nets.len() == self.params.nets.len()
            && params
                .nets
                .iter()
                .zip(&self.params.nets)
                .all(|(a, b)| a.layers().iter().zip(b.layers()).all(|(x, y)| x.weights.dim() == y.weights.dim()));
        if !same_shape {
            return Err(Error::Config("parameter shapes do not match the model".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn branch(&self) -> &DenseNetwork {
        &self.params.nets[BRANCH]
    }

    pub fn trunk(&self) -> &DenseNetwork {
        &self.params.nets[TRUNK]
    }

    pub fn encoders(&self) -> Option<(&DenseNetwork, &DenseNetwork)> {
        self.spec
            .kind
            .is_modified()
            .then(|| (&self.params.nets[ENCODER_U], &self.params.nets[ENCODER_V]))
    }

    fn check_sample(&self, sample: &FunctionSample) -> Result<()> {
        if sample.sensors.len() != self.sensor_grid.points {
            return Err(Error::Dimension {
                context: "sensor count",
                expected: self.sensor_grid.points,
                got: sample.sensors.len(),
            });
        }
        Ok(())
    }

    /// Per-function trunk columns for `sensors`.
    pub fn trunk_statics(&self, sensors: &[f64]) -> Result<Vec<f64>> {
        let kind = self.spec.kind;
        if kind.trunk_has_global() {
            Ok(sensors.to_vec())
        } else if kind.trunk_has_fourier() {
            fourier_coeffs(one_period(sensors), &self.spec.fourier_modes)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn branch_input(&self, sample: &FunctionSample, x: f64) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        let mut v = sample.sensors.clone();
        if self.spec.kind.branch_has_x() {
            v.extend(self.embedding.embed(x));
        }
        Ok(v)
    }

    pub fn trunk_input(&self, sample: &FunctionSample, t: f64, x: f64) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        let mut v = self.trunk_statics(&sample.sensors)?;
        v.push(t);
        v.extend(self.embedding.embed(x));
        if self.spec.kind.trunk_has_local() {
            v.push(sample.u_at(x).0);
        }
        Ok(v)
    }

    fn evaluation_error(&self, detail: impl Into<String>) -> Error {
        Error::Evaluation {
            variant: self.spec.kind.name().to_string(),
            detail: detail.into(),
        }
    }
}

fn check_finite(model: &OperatorModel, which: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(model.evaluation_error(format!("{which} output contains NaN or infinity")))
    }
}

fn inner(b: &[f64], g: &[f64]) -> f64 {
    b.iter().zip(g).map(|(x, y)| x * y).sum()
}

/// `G(u)(t, x) = Σ_k b_k γ_k`, evaluated directly for one point.
pub fn operator_forward(model: &OperatorModel, sample: &FunctionSample, t: f64, x: f64) -> Result<f64> {
    if model.kind().is_modified() {
        return modified_forward(model, sample, t, x);
    }
    let b = model.branch().forward(&model.branch_input(sample, x)?)?;
    check_finite(model, "branch", &b)?;
    let g = model.trunk().forward(&model.trunk_input(sample, t, x)?)?;
    check_finite(model, "trunk", &g)?;
    Ok(inner(&b, &g))
}

/// Forward pass of the modified variant: every hidden state `Z` becomes
/// `(1 − Z)⊙U + Z⊙V` with `U`, `V` the encoder embeddings of the branch and
/// trunk inputs.
pub fn modified_forward(model: &OperatorModel, sample: &FunctionSample, t: f64, x: f64) -> Result<f64> {
    let (enc_u, enc_v) = model
        .encoders()
        .ok_or_else(|| Error::Contract(format!("modified_forward called on variant {}", model.kind())))?;
    let branch_in = model.branch_input(sample, x)?;
    let trunk_in = model.trunk_input(sample, t, x)?;
    let encode = |net: &DenseNetwork, input: &[f64]| -> Result<Array1<f64>> {
        Ok(Array1::from(net.forward(input)?).mapv(f64::tanh))
    };
    let u = encode(enc_u, &branch_in)?;
    let v = encode(enc_v, &trunk_in)?;
    let mixed = |net: &DenseNetwork, input: &[f64]| -> Vec<f64> {
        let layers = net.layers();
        let mut h = Array1::from(input.to_vec());
        for layer in &layers[..layers.len() - 1] {
            let z = (layer.weights.dot(&h) + &layer.bias).mapv(f64::tanh);
            h = (1.0 - &z) * &u + &z * &v;
        }
        let last = &layers[layers.len() - 1];
        (last.weights.dot(&h) + &last.bias).to_vec()
    };
    let b = mixed(model.branch(), &branch_in);
    check_finite(model, "branch", &b)?;
    let g = mixed(model.trunk(), &trunk_in);
    check_finite(model, "trunk", &g)?;
    Ok(inner(&b, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Layer;
    use crate::models::variant::EmbeddingSpec;
    use ndarray::{array, Array2};

    fn grid(m: usize) -> UniformGrid {
        UniformGrid::new(0.0, 1.0, m)
    }

    fn sample(m: usize) -> FunctionSample {
        let g = grid(m);
        let sensors = g.coords().iter().map(|x| 1.0 + 0.5 * (3.0 * x).sin()).collect();
        FunctionSample::from_sensors(sensors, g)
    }

    fn arch() -> Architecture {
        Architecture {
            width: 6,
            depth: 2,
            latent: 4,
        }
    }

    /// A one-layer network whose output is the constant `c` (zero weights).
    fn constant_net(inputs: usize, c: f64) -> DenseNetwork {
        DenseNetwork::new(vec![Layer {
            weights: Array2::zeros((1, inputs)),
            bias: array![c],
        }])
        .unwrap()
    }

    #[test]
    fn stub_inner_product() {
        let spec = VariantSpec::new(VariantKind::Vanilla, EmbeddingSpec::none(1.0), &[]).unwrap();
        let m = 5;
        let params = ModelParams::new(vec![constant_net(m, 2.0), constant_net(2, 3.0)]);
        let model = OperatorModel::with_params(
            spec.clone(),
            Architecture { width: 1, depth: 1, latent: 1 },
            Embedding::new(spec.embedding, 0),
            grid(m),
            params,
        )
        .unwrap();
        assert_eq!(operator_forward(&model, &sample(m), 0.3, 0.7).unwrap(), 6.0);
    }

    #[test]
    fn zero_branch_gives_zero_output() {
        for kind in VariantKind::ALL {
            let spec = VariantSpec::new(kind, EmbeddingSpec::deterministic(2, 1.0), &[0, 1]).unwrap();
            let mut model = OperatorModel::new(spec, arch(), grid(11), 3).unwrap();
            let last = model.params_mut().nets[BRANCH].layers_mut().last_mut().unwrap();
            last.weights.fill(0.0);
            last.bias.fill(0.0);
            for &(t, x) in &[(0.0, 0.0), (0.4, 0.6), (1.0, 1.0)] {
                assert_eq!(operator_forward(&model, &sample(11), t, x).unwrap(), 0.0, "{kind}");
            }
        }
    }

    #[test]
    fn layout_matches_variant_feature_sets() {
        let m = 101;
        for emb in [
            EmbeddingSpec::none(1.0),
            EmbeddingSpec::deterministic(4, 1.0),
            EmbeddingSpec::random(150, 1.0, 1.0),
        ] {
            let e = emb.dim();
            for kind in VariantKind::ALL {
                let spec = VariantSpec::new(kind, emb, &[0, 1, 2]).unwrap();
                let l = InputLayout::new(&spec, m);
                let (branch, trunk) = match kind {
                    VariantKind::Vanilla | VariantKind::Modified => (m, 1 + e),
                    VariantKind::Bx => (m + e, 1 + e),
                    VariantKind::TL => (m, 2 + e),
                    VariantKind::BxTL => (m + e, 2 + e),
                    VariantKind::BxTG => (m + e, 1 + e + m),
                    VariantKind::TF => (m, 1 + e + 6),
                    VariantKind::BxTF => (m + e, 1 + e + 6),
                };
                assert_eq!((l.branch(), l.trunk()), (branch, trunk), "{kind} {emb:?}");
            }
        }
    }

    #[test]
    fn tl_with_masked_local_column_equals_vanilla() {
        let m = 11;
        let emb = EmbeddingSpec::none(1.0);
        let vanilla = OperatorModel::new(VariantSpec::new(VariantKind::Vanilla, emb, &[]).unwrap(), arch(), grid(m), 8).unwrap();
        let tl_spec = VariantSpec::new(VariantKind::TL, emb, &[]).unwrap();
        // TL trunk = vanilla trunk with one extra zero column for u(x)
        let mut trunk = vanilla.trunk().clone();
        let first = &mut trunk.layers_mut()[0];
        let mut w = Array2::zeros((first.outputs(), first.inputs() + 1));
        w.slice_mut(ndarray::s![.., ..first.inputs()]).assign(&first.weights);
        first.weights = w;
        let params = ModelParams::new(vec![vanilla.branch().clone(), trunk]);
        let tl = OperatorModel::with_params(tl_spec, arch(), Embedding::new(emb, 0), grid(m), params).unwrap();
        let s = sample(m);
        for &(t, x) in &[(0.1, 0.2), (0.9, 0.55)] {
            let a = operator_forward(&vanilla, &s, t, x).unwrap();
            let b = operator_forward(&tl, &s, t, x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // with the column restored, u(x) changes the output
        let mut tl2 = tl.clone();
        tl2.params_mut().nets[TRUNK].layers_mut()[0].weights.column_mut(2).fill(0.3);
        assert_ne!(operator_forward(&tl2, &s, 0.1, 0.2).unwrap(), operator_forward(&vanilla, &s, 0.1, 0.2).unwrap());
    }

    fn modified_model(seed: u64) -> OperatorModel {
        let spec = VariantSpec::new(VariantKind::Modified, EmbeddingSpec::deterministic(2, 1.0), &[]).unwrap();
        OperatorModel::new(spec, arch(), grid(11), seed).unwrap()
    }

    #[test]
    fn modified_with_equal_encoders_reduces_to_encoder_state() {
        let mut model = modified_model(4);
        // make U and V identical constants: zero weights, equal biases
        for idx in [ENCODER_U, ENCODER_V] {
            let layer = &mut model.params_mut().nets[idx].layers_mut()[0];
            layer.weights.fill(0.0);
            layer.bias.fill(0.25);
        }
        let h = 0.25f64.tanh();
        let expect = |net: &DenseNetwork| -> Vec<f64> {
            let last = net.layers().last().unwrap();
            (0..last.outputs())
                .map(|k| last.weights.row(k).sum() * h + last.bias[k])
                .collect()
        };
        let (b, g) = (expect(model.branch()), expect(model.trunk()));
        let want: f64 = b.iter().zip(&g).map(|(x, y)| x * y).sum();
        for &(t, x) in &[(0.2, 0.3), (0.8, 0.1)] {
            let got = modified_forward(&model, &sample(11), t, x).unwrap();
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn modified_zero_encoders_leave_final_biases() {
        let mut model = modified_model(5);
        for idx in [ENCODER_U, ENCODER_V] {
            let layer = &mut model.params_mut().nets[idx].layers_mut()[0];
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        let b = &model.branch().layers().last().unwrap().bias;
        let g = &model.trunk().layers().last().unwrap().bias;
        let want = b.dot(g);
        assert_eq!(modified_forward(&model, &sample(11), 0.5, 0.5).unwrap(), want);
        assert!(matches!(
            modified_forward(
                &OperatorModel::new(
                    VariantSpec::new(VariantKind::TL, EmbeddingSpec::none(1.0), &[]).unwrap(),
                    arch(),
                    grid(11),
                    0
                )
                .unwrap(),
                &sample(11),
                0.0,
                0.0
            ),
            Err(Error::Contract(_))
        ));
    }

    /// Plain-loop re-evaluation of the modified forward pass.
    /// Returns the output and `Σ|b_k γ_k|`, the scale of its rounding error.
    fn straight_line_modified(model: &OperatorModel, s: &FunctionSample, t: f64, x: f64) -> (f64, f64) {
        fn affine(l: &Layer, h: &[f64]) -> Vec<f64> {
            (0..l.outputs())
                .map(|i| {
                    let mut acc = l.bias[i];
                    for j in 0..l.inputs() {
                        acc += l.weights[[i, j]] * h[j];
                    }
                    acc
                })
                .collect()
        }
        let (eu, ev) = model.encoders().unwrap();
        let bin = model.branch_input(s, x).unwrap();
        let tin = model.trunk_input(s, t, x).unwrap();
        let u: Vec<f64> = affine(&eu.layers()[0], &bin).iter().map(|v| v.tanh()).collect();
        let v: Vec<f64> = affine(&ev.layers()[0], &tin).iter().map(|v| v.tanh()).collect();
        let run = |net: &DenseNetwork, input: Vec<f64>| {
            let mut h = input;
            let n = net.layers().len();
            for l in &net.layers()[..n - 1] {
                let z: Vec<f64> = affine(l, &h).iter().map(|v| v.tanh()).collect();
                h = (0..z.len()).map(|i| (1.0 - z[i]) * u[i] + z[i] * v[i]).collect();
            }
            affine(&net.layers()[n - 1], &h)
        };
        let b = run(model.branch(), bin);
        let g = run(model.trunk(), tin);
        let (mut acc, mut scale) = (0.0, 0.0);
        for k in 0..b.len() {
            acc += b[k] * g[k];
            scale += (b[k] * g[k]).abs();
        }
        (acc, scale)
    }

    #[test]
    fn modified_matches_straight_line_oracle() {
        let model = modified_model(17);
        let s = sample(11);
        for &(t, x) in &[(0.0, 0.0), (0.33, 0.71), (1.0, 0.5)] {
            let a = modified_forward(&model, &s, t, x).unwrap();
            let (b, scale) = straight_line_modified(&model, &s, t, x);
            assert!((a - b).abs() <= 1e-14 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn fourier_variants_are_periodic() {
        let g = UniformGrid::new(0.0, 1.0, 101);
        let sensors: Vec<f64> = g.coords().iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
        let s = FunctionSample::from_sensors(sensors, g);
        for kind in [VariantKind::TF, VariantKind::BxTF] {
            let spec = VariantSpec::new(kind, EmbeddingSpec::deterministic(3, 1.0), &[0, 1, 2]).unwrap();
            let model = OperatorModel::new(spec, arch(), g, 2).unwrap();
            for &t in &[0.0, 0.37, 1.0] {
                let a = operator_forward(&model, &s, t, 0.0).unwrap();
                let b = operator_forward(&model, &s, t, 1.0).unwrap();
                assert!((a - b).abs() <= 1e-12, "{kind}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn branch_final_layer_is_linear() {
        for kind in VariantKind::ALL {
            let spec = VariantSpec::new(kind, EmbeddingSpec::none(1.0), &[0, 1]).unwrap();
            let model = OperatorModel::new(spec, arch(), grid(11), 6).unwrap();
            let mut scaled = model.clone();
            let last = scaled.params_mut().nets[BRANCH].layers_mut().last_mut().unwrap();
            last.weights *= 2.0;
            last.bias *= 2.0;
            let s = sample(11);
            let a = operator_forward(&model, &s, 0.4, 0.3).unwrap();
            let b = operator_forward(&scaled, &s, 0.4, 0.3).unwrap();
            assert_eq!((2.0 * a).to_bits(), b.to_bits(), "{kind}");
        }
    }

    #[test]
    fn nan_output_is_an_evaluation_error() {
        let spec = VariantSpec::new(VariantKind::Vanilla, EmbeddingSpec::none(1.0), &[]).unwrap();
        let model = OperatorModel::new(spec, arch(), grid(11), 0).unwrap();
        let mut s = sample(11);
        s.sensors[3] = f64::NAN;
        assert!(matches!(operator_forward(&model, &s, 0.1, 0.1), Err(Error::Evaluation { .. })));
        s.sensors.pop();
        assert!(matches!(operator_forward(&model, &s, 0.1, 0.1), Err(Error::Dimension { .. })));
    }
}
