//! Batched evaluation of an [`OperatorModel`] with input jets and its adjoint.
//!
//! Points are grouped by input function. Columns that depend only on the
//! function (sensors, Fourier pairs) are pushed through the first layer once
//! per function; per-point columns carry `(value, ∂x, ∂x², ∂x³, ∂t)` jets.

use ndarray::{Array2, Axis};

use super::mixed::{mixed_backward, mixed_forward, MixedTrace};
use super::operator::{OperatorModel, BRANCH, ENCODER_U, ENCODER_V, TRUNK};
use super::sample::FunctionSample;
use crate::autodiff::batch::{
    split_affine_backward, split_affine_forward, tanh_backward, tanh_forward, JetBlock, NetworkTrace, SplitInput,
};
use crate::autodiff::jet::{mul_jet, mul_jet_backward, FieldJet, COMPONENTS, DT, DX1};
use crate::autodiff::{DenseNetwork, Layer, ParamGradient};
use crate::{Error, Result};

/// Input functions prepared for one model: sensor rows and the per-function
/// trunk columns.
#[derive(Clone, Debug)]
pub struct FunctionTable {
    sensors: Array2<f64>,
    trunk_statics: Array2<f64>,
}

impl FunctionTable {
    pub fn new<'a, I>(model: &OperatorModel, sensors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let m = model.sensor_grid().points;
        let ts = model.layout().trunk_static;
        let mut rows = Vec::new();
        let mut statics = Vec::new();
        let mut count = 0;
        for s in sensors {
            if s.len() != m {
                return Err(Error::Dimension {
                    context: "sensor count",
                    expected: m,
                    got: s.len(),
                });
            }
            rows.extend_from_slice(s);
            statics.extend(model.trunk_statics(s)?);
            count += 1;
        }
        Ok(Self {
            sensors: Array2::from_shape_vec((count, m), rows).expect("row-major sensors"),
            trunk_statics: Array2::from_shape_vec((count, ts), statics).expect("row-major statics"),
        })
    }

    pub fn from_samples(model: &OperatorModel, samples: &[FunctionSample]) -> Result<Self> {
        Self::new(model, samples.iter().map(|s| s.sensors.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.sensors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sensors(&self, f: usize) -> &[f64] {
        self.sensors.row(f).to_slice().expect("contiguous row")
    }
}

/// Evaluation points with a compact index of the functions they use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointBatch {
    /// Rows of the [`FunctionTable`] touched by this batch.
    pub functions: Vec<usize>,
    /// Index into `functions` for every point.
    pub fn_of_point: Vec<usize>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl PointBatch {
    /// Builds a batch from `(table row, t, x)` triples.
    pub fn from_points<I: IntoIterator<Item = (usize, f64, f64)>>(points: I) -> Self {
        let mut batch = PointBatch::default();
        let mut local = std::collections::HashMap::new();
        for (f, t, x) in points {
            let idx = *local.entry(f).or_insert_with(|| {
                batch.functions.push(f);
                batch.functions.len() - 1
            });
            batch.fn_of_point.push(idx);
            batch.t.push(t);
            batch.x.push(x);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Table row of point `p`.
    pub fn function(&self, p: usize) -> usize {
        self.functions[self.fn_of_point[p]]
    }
}

enum NetTrace {
    Plain(NetworkTrace),
    Mixed(MixedTrace),
}

struct ModifiedParts {
    /// Encoder U pre-activation and activation, one row per function.
    u_pre: JetBlock,
    u_act: JetBlock,
    /// U broadcast to every point.
    u_points: JetBlock,
    v_pre: JetBlock,
    v: JetBlock,
}

/// Everything the adjoint pass needs.
pub struct BatchTrace {
    comps: usize,
    branch_statics: Array2<f64>,
    trunk_statics: Array2<f64>,
    branch_dynamic: JetBlock,
    trunk_dynamic: JetBlock,
    branch_per_point: bool,
    branch_out: JetBlock,
    trunk_out: JetBlock,
    branch_trace: NetTrace,
    trunk_trace: NetTrace,
    modified: Option<ModifiedParts>,
}

fn gather_rows(source: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    source.select(Axis(0), rows)
}

fn identity_map(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// `tanh(W x + b)` per function, value-only.
fn encode_static(layer: &Layer, statics: &Array2<f64>) -> (JetBlock, JetBlock) {
    let empty = JetBlock::zeros(1, statics.nrows(), 0);
    let map = identity_map(statics.nrows());
    let input = SplitInput {
        statics: statics.view(),
        fn_of_point: &map,
        dynamic: &empty,
    };
    let pre = split_affine_forward(layer, &input);
    let act = tanh_forward(&pre);
    (pre, act)
}

/// Copies per-function value rows into a per-point jet block.
fn broadcast(values: &JetBlock, fn_of_point: &[usize], comps: usize) -> JetBlock {
    let mut out = JetBlock::zeros(comps, fn_of_point.len(), values.width());
    for (p, &f) in fn_of_point.iter().enumerate() {
        out.data_mut().row_mut(p).assign(&values.data().row(f));
    }
    out
}

impl OperatorModel {
    fn dynamic_inputs(&self, table: &FunctionTable, points: &PointBatch, comps: usize) -> (JetBlock, JetBlock) {
        let layout = self.layout();
        let e = self.embedding().dim();
        let n = points.len();
        let mut emb = vec![[0.0; COMPONENTS]; e];
        let mut branch = JetBlock::zeros(comps, n, layout.branch_dynamic);
        let mut trunk = JetBlock::zeros(comps, n, layout.trunk_dynamic);
        let local = self.kind().trunk_has_local();
        let grid = self.sensor_grid();
        for p in 0..n {
            let (t, x) = (points.t[p], points.x[p]);
            let mut tj = [t, 0.0, 0.0, 0.0, 0.0];
            tj[DT] = 1.0;
            trunk.set(p, 0, &tj);
            self.embedding().embed_jets(x, &mut emb);
            for (j, jet) in emb.iter().enumerate() {
                trunk.set(p, 1 + j, jet);
                if layout.branch_dynamic > 0 {
                    branch.set(p, j, jet);
                }
            }
            if local {
                let (v, slope) = grid.interpolate(table.sensors(points.function(p)), x);
                let mut uj = [v, 0.0, 0.0, 0.0, 0.0];
                uj[DX1] = slope;
                trunk.set(p, 1 + e, &uj);
            }
        }
        (branch, trunk)
    }

    /// Output jets (`comps` = 1 for values only, 5 for full jets) for every
    /// point, shaped `[comps·points × 1]`, plus the trace for
    /// [`OperatorModel::backward_batch`].
    pub fn forward_batch(&self, table: &FunctionTable, points: &PointBatch, comps: usize) -> Result<(JetBlock, BatchTrace)> {
        assert!(comps == 1 || comps == COMPONENTS);
        let branch_statics = gather_rows(&table.sensors, &points.functions);
        let trunk_statics = gather_rows(&table.trunk_statics, &points.functions);
        let (branch_dynamic, trunk_dynamic) = self.dynamic_inputs(table, points, comps);
        let n = points.len();
        let nf = points.functions.len();

        let trunk_input = SplitInput {
            statics: trunk_statics.view(),
            fn_of_point: &points.fn_of_point,
            dynamic: &trunk_dynamic,
        };
        let branch_per_point = self.kind().branch_has_x() || self.kind().is_modified();
        let function_map = identity_map(nf);
        let per_function_dynamic = JetBlock::zeros(1, nf, 0);
        let branch_input = if branch_per_point {
            SplitInput {
                statics: branch_statics.view(),
                fn_of_point: &points.fn_of_point,
                dynamic: &branch_dynamic,
            }
        } else {
            SplitInput {
                statics: branch_statics.view(),
                fn_of_point: &function_map,
                dynamic: &per_function_dynamic,
            }
        };

        let (branch_out, branch_trace, trunk_out, trunk_trace, modified) = if self.kind().is_modified() {
            let enc_u = &self.params().nets[ENCODER_U].layers()[0];
            let enc_v = &self.params().nets[ENCODER_V].layers()[0];
            let (u_pre, u_act) = encode_static(enc_u, &branch_statics);
            let u_points = broadcast(&u_act, &points.fn_of_point, comps);
            let v_pre = split_affine_forward(enc_v, &trunk_input);
            let v = tanh_forward(&v_pre);
            let (b, bt) = mixed_forward(self.branch(), &branch_input, &u_points, &v);
            let (g, gt) = mixed_forward(self.trunk(), &trunk_input, &u_points, &v);
            let parts = ModifiedParts {
                u_pre,
                u_act,
                u_points,
                v_pre,
                v,
            };
            (b, NetTrace::Mixed(bt), g, NetTrace::Mixed(gt), Some(parts))
        } else {
            let (b, bt) = self.branch().forward_batch(&branch_input);
            let (g, gt) = self.trunk().forward_batch(&trunk_input);
            (b, NetTrace::Plain(bt), g, NetTrace::Plain(gt), None)
        };

        let mut out = JetBlock::zeros(comps, n, 1);
        if branch_per_point {
            for p in 0..n {
                let mut acc = [0.0; COMPONENTS];
                for k in 0..trunk_out.width() {
                    let prod = mul_jet(&branch_out.get(p, k), &trunk_out.get(p, k));
                    for c in 0..COMPONENTS {
                        acc[c] += prod[c];
                    }
                }
                out.set(p, 0, &acc);
            }
        } else {
            let o = out.data_mut();
            for c in 0..comps {
                for p in 0..n {
                    let r = c * n + p;
                    o[[r, 0]] = branch_out
                        .data()
                        .row(points.fn_of_point[p])
                        .dot(&trunk_out.data().row(r));
                }
            }
        }
        if let Some(bad) = out.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                variant: self.kind().name().to_string(),
                detail: format!("batched output entry {bad} is not finite"),
            });
        }
        let trace = BatchTrace {
            comps,
            branch_statics,
            trunk_statics,
            branch_dynamic,
            trunk_dynamic,
            branch_per_point,
            branch_out,
            trunk_out,
            branch_trace,
            trunk_trace,
            modified,
        };
        Ok((out, trace))
    }

    /// Accumulates into `grad` the parameter gradient of `<d_out, output>`.
    pub fn backward_batch(&self, points: &PointBatch, trace: &BatchTrace, d_out: &JetBlock, grad: &mut ParamGradient) {
        let n = points.len();
        let nf = points.functions.len();
        let comps = trace.comps;
        let latent = trace.trunk_out.width();
        let mut d_branch;
        let mut d_trunk = JetBlock::zeros(comps, n, latent);
        if trace.branch_per_point {
            d_branch = JetBlock::zeros(comps, n, latent);
            for p in 0..n {
                let dc = d_out.get(p, 0);
                for k in 0..latent {
                    let mut db = [0.0; COMPONENTS];
                    let mut dg = [0.0; COMPONENTS];
                    mul_jet_backward(&trace.branch_out.get(p, k), &trace.trunk_out.get(p, k), &dc, &mut db, &mut dg);
                    d_branch.set(p, k, &db);
                    d_trunk.set(p, k, &dg);
                }
            }
        } else {
            d_branch = JetBlock::zeros(1, nf, latent);
            let b = trace.branch_out.data();
            let g = trace.trunk_out.data();
            for c in 0..comps {
                for p in 0..n {
                    let r = c * n + p;
                    let f = points.fn_of_point[p];
                    let d = d_out.data()[[r, 0]];
                    if d == 0.0 {
                        continue;
                    }
                    d_trunk.data_mut().row_mut(r).scaled_add(d, &b.row(f));
                    d_branch.data_mut().row_mut(f).scaled_add(d, &g.row(r));
                }
            }
        }

        let trunk_input = SplitInput {
            statics: trace.trunk_statics.view(),
            fn_of_point: &points.fn_of_point,
            dynamic: &trace.trunk_dynamic,
        };
        let function_map = identity_map(nf);
        let per_function_dynamic = JetBlock::zeros(1, nf, 0);
        let branch_input = if trace.branch_per_point {
            SplitInput {
                statics: trace.branch_statics.view(),
                fn_of_point: &points.fn_of_point,
                dynamic: &trace.branch_dynamic,
            }
        } else {
            SplitInput {
                statics: trace.branch_statics.view(),
                fn_of_point: &function_map,
                dynamic: &per_function_dynamic,
            }
        };

        let (branch_grad, rest) = grad.nets.split_at_mut(TRUNK);
        let branch_grad: &mut DenseNetwork = &mut branch_grad[BRANCH];
        let (trunk_grad, encoder_grads) = rest.split_at_mut(1);
        let trunk_grad = &mut trunk_grad[0];

        match (&trace.branch_trace, &trace.trunk_trace, &trace.modified) {
            (NetTrace::Plain(bt), NetTrace::Plain(gt), None) => {
                self.branch().backward_batch(&branch_input, bt, &d_branch, branch_grad);
                self.trunk().backward_batch(&trunk_input, gt, &d_trunk, trunk_grad);
            }
            (NetTrace::Mixed(bt), NetTrace::Mixed(gt), Some(parts)) => {
                let width = parts.v.width();
                let mut du = JetBlock::zeros(comps, n, width);
                let mut dv = JetBlock::zeros(comps, n, width);
                mixed_backward(
                    self.branch(),
                    &branch_input,
                    bt,
                    &parts.u_points,
                    &parts.v,
                    &d_branch,
                    branch_grad,
                    &mut du,
                    &mut dv,
                );
                mixed_backward(
                    self.trunk(),
                    &trunk_input,
                    gt,
                    &parts.u_points,
                    &parts.v,
                    &d_trunk,
                    trunk_grad,
                    &mut du,
                    &mut dv,
                );
                let (eu_grad, ev_grad) = encoder_grads.split_at_mut(1);
                // V: per-point jets through tanh and the encoder layer.
                let dv_pre = tanh_backward(&parts.v_pre, &parts.v, &dv);
                split_affine_backward(&trunk_input, &dv_pre, &mut ev_grad[0].layers_mut()[0]);
                // U is constant in (t, x): only value rows carry parameter dependence.
                let mut du_f = JetBlock::zeros(1, nf, width);
                for (p, &f) in points.fn_of_point.iter().enumerate() {
                    du_f.data_mut().row_mut(f).scaled_add(1.0, &du.data().row(p));
                }
                let du_pre = tanh_backward(&parts.u_pre, &parts.u_act, &du_f);
                let static_input = SplitInput {
                    statics: trace.branch_statics.view(),
                    fn_of_point: &function_map,
                    dynamic: &per_function_dynamic,
                };
                split_affine_backward(&static_input, &du_pre, &mut eu_grad[0].layers_mut()[0]);
            }
            _ => unreachable!("trace kinds are built together"),
        }
    }

    /// Output values at every point, evaluated in chunks.
    pub fn predict(&self, table: &FunctionTable, points: &PointBatch) -> Result<Vec<f64>> {
        Ok(self.evaluate_chunked(table, points, 1)?.into_iter().map(|j| j.value).collect())
    }

    /// Output jets at every point, evaluated in chunks.
    pub fn predict_jets(&self, table: &FunctionTable, points: &PointBatch) -> Result<Vec<FieldJet>> {
        self.evaluate_chunked(table, points, COMPONENTS)
    }

    fn evaluate_chunked(&self, table: &FunctionTable, points: &PointBatch, comps: usize) -> Result<Vec<FieldJet>> {
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(points.len());
        let mut start = 0;
        while start < points.len() {
            let end = (start + CHUNK).min(points.len());
            let chunk = PointBatch::from_points((start..end).map(|p| (points.function(p), points.t[p], points.x[p])));
            let (block, _) = self.forward_batch(table, &chunk, comps)?;
            out.extend((0..chunk.len()).map(|p| FieldJet::from_components(block.get(p, 0))));
            start = end;
        }
        Ok(out)
    }
}

/// Reference values for `(function, t, x)` points: the pointwise path, used
/// to cross-check the batched one.
#[doc(hidden)]
pub fn pointwise_values(model: &OperatorModel, samples: &[FunctionSample], points: &PointBatch) -> Result<Vec<f64>> {
    (0..points.len())
        .map(|p| super::operator::operator_forward(model, &samples[points.function(p)], points.t[p], points.x[p]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ModelParams;
    use crate::models::operator::{operator_forward, Architecture};
    use crate::models::sample::UniformGrid;
    use crate::models::variant::{EmbeddingSpec, VariantKind, VariantSpec};

    fn samples(m: usize, count: usize) -> Vec<FunctionSample> {
        let g = UniformGrid::new(0.0, 1.0, m);
        (0..count)
            .map(|i| {
                let a = 0.3 + 0.2 * i as f64;
                let sensors = g.coords().iter().map(|x| 1.0 + a * (2.0 * std::f64::consts::PI * x).sin() + 0.1 * x).collect();
                FunctionSample::from_sensors(sensors, g)
            })
            .collect()
    }

    fn model(kind: VariantKind, emb: EmbeddingSpec, seed: u64) -> OperatorModel {
        let spec = VariantSpec::new(kind, emb, &[0, 1, 2]).unwrap();
        let arch = Architecture {
            width: 8,
            depth: 2,
            latent: 5,
        };
        OperatorModel::new(spec, arch, UniformGrid::new(0.0, 1.0, 21), seed).unwrap()
    }

    fn points() -> PointBatch {
        PointBatch::from_points([(2, 0.1, 0.25), (0, 0.7, 0.33), (2, 0.5, 0.9), (1, 0.05, 0.61)])
    }

    fn embeddings() -> [EmbeddingSpec; 3] {
        [
            EmbeddingSpec::none(1.0),
            EmbeddingSpec::deterministic(2, 1.0),
            EmbeddingSpec::random(3, 0.5, 1.0),
        ]
    }

    #[test]
    fn batched_values_match_pointwise() {
        let s = samples(21, 3);
        for emb in embeddings() {
            for kind in VariantKind::ALL {
                let m = model(kind, emb, 11);
                let table = FunctionTable::from_samples(&m, &s).unwrap();
                let pts = points();
                let batched = m.predict(&table, &pts).unwrap();
                let plain = pointwise_values(&m, &s, &pts).unwrap();
                let jets = m.predict_jets(&table, &pts).unwrap();
                for p in 0..pts.len() {
                    assert!((batched[p] - plain[p]).abs() < 1e-13, "{kind} {emb:?}");
                    assert!((jets[p].value - plain[p]).abs() < 1e-13, "{kind} {emb:?}");
                }
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let s = samples(21, 3);
        for kind in VariantKind::ALL {
            let m = model(kind, EmbeddingSpec::deterministic(2, 1.0), 5);
            let table = FunctionTable::from_samples(&m, &s).unwrap();
            let (f, t, x) = (1, 0.4, 0.37);
            let jet = m.predict_jets(&table, &PointBatch::from_points([(f, t, x)])).unwrap()[0];
            let val = |t: f64, x: f64| operator_forward(&m, &s[f], t, x).unwrap();
            // stay inside one interpolation cell so u(x) stays linear
            let rich = |d: &dyn Fn(f64) -> f64| (4.0 * d(5e-4) - d(1e-3)) / 3.0;
            let d1 = rich(&|h| (val(t, x + h) - val(t, x - h)) / (2.0 * h));
            let d2 = rich(&|h| (val(t, x + h) - 2.0 * val(t, x) + val(t, x - h)) / (h * h));
            let dt = rich(&|h| (val(t + h, x) - val(t - h, x)) / (2.0 * h));
            assert!((jet.dx[0] - d1).abs() < 1e-5 * (1.0 + d1.abs()), "{kind} d1 {} {d1}", jet.dx[0]);
            assert!((jet.dx[1] - d2).abs() < 1e-3 * (1.0 + d2.abs()), "{kind} d2 {} {d2}", jet.dx[1]);
            assert!((jet.dt - dt).abs() < 1e-5 * (1.0 + dt.abs()), "{kind} dt {} {dt}", jet.dt);
            // Richardson-extrapolated third difference
            let d3_at = |h: f64| {
                (val(t, x + 2.0 * h) - 2.0 * val(t, x + h) + 2.0 * val(t, x - h) - val(t, x - 2.0 * h)) / (2.0 * h * h * h)
            };
            let d3 = (4.0 * d3_at(2.5e-3) - d3_at(5e-3)) / 3.0;
            if !kind.trunk_has_local() {
                assert!((jet.dx[2] - d3).abs() < 1e-3 * (1.0 + d3.abs()), "{kind} d3 {} {d3}", jet.dx[2]);
            }
        }
    }

    #[test]
    fn batched_gradient_matches_finite_differences() {
        let s = samples(21, 3);
        for kind in VariantKind::ALL {
            for comps in [1, COMPONENTS] {
                let m = model(kind, EmbeddingSpec::random(2, 0.5, 1.0), 13);
                let table = FunctionTable::from_samples(&m, &s).unwrap();
                let pts = points();
                let mut d_out = JetBlock::zeros(comps, pts.len(), 1);
                for r in 0..comps * pts.len() {
                    d_out.data_mut()[[r, 0]] = 0.3 + 0.17 * r as f64 * if r % 2 == 0 { 1.0 } else { -1.0 };
                }
                let objective = |params: &ModelParams| -> f64 {
                    let mut mm = m.clone();
                    mm.set_params(params.clone()).unwrap();
                    let (out, _) = mm.forward_batch(&table, &pts, comps).unwrap();
                    (out.data() * d_out.data()).sum()
                };
                let (_, trace) = m.forward_batch(&table, &pts, comps).unwrap();
                let mut grad = ParamGradient::zeros_like(m.params());
                m.backward_batch(&pts, &trace, &d_out, &mut grad);
                let dir: Vec<f64> = (0..m.params().num_params()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
                let base = m.params().to_flat();
                let shifted = |h: f64| {
                    let mut p = m.params().clone();
                    p.set_flat(&base.iter().zip(&dir).map(|(b, d)| b + h * d).collect::<Vec<_>>());
                    objective(&p)
                };
                let h = 1e-6;
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = grad.dot_flat(&dir);
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{kind} comps {comps}: {fd} vs {an}");
            }
        }
    }
}
