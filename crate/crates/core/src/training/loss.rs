use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::weighting::{Group, WeightState, GROUPS};
use crate::autodiff::{JetBlock, ParamGradient, COMPONENTS};
use crate::models::{FunctionTable, OperatorModel, PointBatch};
use crate::pde::PdeSpec;
use crate::Result;

/// One iteration's points. `*_idx` are pool indices (used for per-point
/// weights); fresh residual points have none.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MiniBatch {
    /// `(function, t, x)`
    pub residual: Vec<(usize, f64, f64)>,
    pub residual_idx: Option<Vec<usize>>,
    /// `(function, x)`
    pub initial: Vec<(usize, f64)>,
    pub initial_idx: Vec<usize>,
    /// `(function, t)`; each entry expands to one point per boundary location.
    pub boundary: Vec<(usize, f64)>,
    pub boundary_idx: Vec<usize>,
}

/// Loss value and the per-entry squared terms (boundary entries sum their
/// locations).
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub group_losses: [f64; GROUPS],
    pub squared: [Vec<f64>; GROUPS],
}

fn u_at(table: &FunctionTable, model: &OperatorModel, f: usize, x: f64) -> f64 {
    model.sensor_grid().interpolate(table.sensors(f), x).0
}

/// `L = Σ_g λ_g · mean_i(w_i · term_i²)`; accumulates `∂L/∂θ` into `grad` when given.
pub fn composite_loss(
    model: &OperatorModel,
    table: &FunctionTable,
    spec: &PdeSpec,
    batch: &MiniBatch,
    weights: &WeightState,
    mut grad: Option<&mut ParamGradient>,
) -> Result<LossTerms> {
    let mut group_losses = [0.0; GROUPS];
    let mut squared: [Vec<f64>; GROUPS] = Default::default();
    let lambda = weights.group;

    // residual group: full jets
    if !batch.residual.is_empty() {
        let points = PointBatch::from_points(batch.residual.iter().copied());
        let (out, trace) = model.forward_batch(table, &points, COMPONENTS)?;
        let n = points.len();
        let mut d_out = JetBlock::zeros(COMPONENTS, n, 1);
        let mut acc = 0.0;
        let mut sq = Vec::with_capacity(n);
        for (p, &(f, _, x)) in batch.residual.iter().enumerate() {
            let jet = crate::autodiff::FieldJet::from_components(out.get(p, 0));
            let u = u_at(table, model, f, x);
            let r = spec.residual_from_jet(&jet, u);
            let w = weights.point_weight(Group::Residual, batch.residual_idx.as_ref().map(|idx| idx[p]));
            acc += w * r * r;
            sq.push(r * r);
            if grad.is_some() {
                let coef = lambda[Group::Residual as usize] * 2.0 * w * r / n as f64;
                let partials = spec.residual_partials(&jet, u);
                d_out.set(p, 0, &partials.map(|d| coef * d));
            }
        }
        group_losses[Group::Residual as usize] = acc / n as f64;
        squared[Group::Residual as usize] = sq;
        if let Some(g) = grad.as_deref_mut() {
            model.backward_batch(&points, &trace, &d_out, g);
        }
    }

    // initial and boundary groups share one value-only pass
    let boundary_locations = if batch.boundary.is_empty() {
        Vec::new()
    } else {
        spec.boundary_targets(0.0)?.into_iter().map(|(x, _)| x).collect::<Vec<_>>()
    };
    let mut pts = Vec::with_capacity(batch.initial.len() + batch.boundary.len() * boundary_locations.len());
    pts.extend(batch.initial.iter().map(|&(f, x)| (f, 0.0, x)));
    for &(f, t) in &batch.boundary {
        pts.extend(boundary_locations.iter().map(|&x| (f, t, x)));
    }
    if !pts.is_empty() {
        let points = PointBatch::from_points(pts.iter().copied());
        let (out, trace) = model.forward_batch(table, &points, 1)?;
        let mut d_out = JetBlock::zeros(1, points.len(), 1);
        let ni = batch.initial.len();
        let nb_points = batch.boundary.len() * boundary_locations.len();

        let mut acc = 0.0;
        let mut sq = Vec::with_capacity(ni);
        for (p, &(f, x)) in batch.initial.iter().enumerate() {
            let e = out.get(p, 0)[0] - spec.initial_target(u_at(table, model, f, x), x);
            let w = weights.point_weight(Group::Initial, Some(batch.initial_idx[p]));
            acc += w * e * e;
            sq.push(e * e);
            if grad.is_some() {
                let coef = lambda[Group::Initial as usize] * 2.0 * w * e / ni as f64;
                d_out.set(p, 0, &[coef, 0.0, 0.0, 0.0, 0.0]);
            }
        }
        if ni > 0 {
            group_losses[Group::Initial as usize] = acc / ni as f64;
        }
        squared[Group::Initial as usize] = sq;

        let mut acc = 0.0;
        let mut sq = Vec::with_capacity(batch.boundary.len());
        let mut p = ni;
        for (k, &(_, t)) in batch.boundary.iter().enumerate() {
            let targets = spec.boundary_targets(t)?;
            let w = weights.point_weight(Group::Boundary, Some(batch.boundary_idx[k]));
            let mut entry = 0.0;
            for (_, target) in targets {
                let e = out.get(p, 0)[0] - target;
                acc += w * e * e;
                entry += e * e;
                if grad.is_some() {
                    let coef = lambda[Group::Boundary as usize] * 2.0 * w * e / nb_points as f64;
                    d_out.set(p, 0, &[coef, 0.0, 0.0, 0.0, 0.0]);
                }
                p += 1;
            }
            sq.push(entry);
        }
        if nb_points > 0 {
            group_losses[Group::Boundary as usize] = acc / nb_points as f64;
        }
        squared[Group::Boundary as usize] = sq;
        if let Some(g) = grad.as_deref_mut() {
            model.backward_batch(&points, &trace, &d_out, g);
        }
    }

    let loss = (0..GROUPS).map(|g| lambda[g] * group_losses[g]).sum();
    Ok(LossTerms {
        loss,
        group_losses,
        squared,
    })
}

/// Mean squared parameter-gradient norm of per-point terms, per group, over at
/// most `subsample` points of each group of `batch`.
pub fn kernel_traces<R: Rng + ?Sized>(
    model: &OperatorModel,
    table: &FunctionTable,
    spec: &PdeSpec,
    batch: &MiniBatch,
    subsample: usize,
    rng: &mut R,
) -> Result<[f64; GROUPS]> {
    let mut traces = [0.0; GROUPS];
    let mut grad = ParamGradient::zeros_like(model.params());
    let pick = |n: usize, rng: &mut R| -> Vec<usize> {
        if n <= subsample {
            (0..n).collect()
        } else {
            let mut v = sample_indices(rng, n, subsample).into_vec();
            v.sort_unstable();
            v
        }
    };

    let chosen = pick(batch.residual.len(), rng);
    for &i in &chosen {
        let (f, t, x) = batch.residual[i];
        let points = PointBatch::from_points([(f, t, x)]);
        let (out, trace) = model.forward_batch(table, &points, COMPONENTS)?;
        let jet = crate::autodiff::FieldJet::from_components(out.get(0, 0));
        let partials = spec.residual_partials(&jet, u_at(table, model, f, x));
        let mut d_out = JetBlock::zeros(COMPONENTS, 1, 1);
        d_out.set(0, 0, &partials);
        grad.scale(0.0);
        model.backward_batch(&points, &trace, &d_out, &mut grad);
        traces[Group::Residual as usize] += grad.norm_squared();
    }
    if !chosen.is_empty() {
        traces[Group::Residual as usize] /= chosen.len() as f64;
    }

    let value_trace = |pts: Vec<(usize, f64, f64)>, grad: &mut ParamGradient| -> Result<f64> {
        if pts.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for &pt in &pts {
            let points = PointBatch::from_points([pt]);
            let (_, trace) = model.forward_batch(table, &points, 1)?;
            let mut d_out = JetBlock::zeros(1, 1, 1);
            d_out.set(0, 0, &[1.0, 0.0, 0.0, 0.0, 0.0]);
            grad.scale(0.0);
            model.backward_batch(&points, &trace, &d_out, grad);
            acc += grad.norm_squared();
        }
        Ok(acc / pts.len() as f64)
    };
    let init: Vec<_> = pick(batch.initial.len(), rng)
        .into_iter()
        .map(|i| (batch.initial[i].0, 0.0, batch.initial[i].1))
        .collect();
    traces[Group::Initial as usize] = value_trace(init, &mut grad)?;
    if !batch.boundary.is_empty() {
        let locations: Vec<f64> = spec.boundary_targets(0.0)?.into_iter().map(|(x, _)| x).collect();
        let bnd: Vec<_> = pick(batch.boundary.len(), rng)
            .into_iter()
            .flat_map(|i| {
                let (f, t) = batch.boundary[i];
                locations.iter().map(move |&x| (f, t, x)).collect::<Vec<_>>()
            })
            .collect();
        traces[Group::Boundary as usize] = value_trace(bnd, &mut grad)?;
    }
    Ok(traces)
}
