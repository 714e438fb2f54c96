//! Batched forward/backward for networks whose hidden states are mixed with
//! encoder embeddings, `h = U + Z⊙(V − U)`.

use crate::autodiff::batch::{
    affine_backward, affine_forward, split_affine_backward, split_affine_forward, tanh_backward, tanh_forward,
    JetBlock, SplitInput,
};
use crate::autodiff::jet::{mul_jet, mul_jet_backward, COMPONENTS};
use crate::autodiff::DenseNetwork;

pub(crate) struct MixedTrace {
    pre: Vec<JetBlock>,
    act: Vec<JetBlock>,
    hidden: Vec<JetBlock>,
}

fn mix(a: &JetBlock, u: &JetBlock, v: &JetBlock) -> JetBlock {
    if a.comps() == 1 {
        let d = v.data() - u.data();
        let data = u.data() + &(a.data() * &d);
        return JetBlock::from_data(1, a.points(), data);
    }
    let mut h = JetBlock::zeros(a.comps(), a.points(), a.width());
    for p in 0..a.points() {
        for i in 0..a.width() {
            let (aj, uj, vj) = (a.get(p, i), u.get(p, i), v.get(p, i));
            let d: [f64; COMPONENTS] = std::array::from_fn(|c| vj[c] - uj[c]);
            let prod = mul_jet(&aj, &d);
            h.set(p, i, &std::array::from_fn(|c| uj[c] + prod[c]));
        }
    }
    h
}

/// Returns the adjoint of the activated state and accumulates into `du`, `dv`.
fn mix_backward(a: &JetBlock, u: &JetBlock, v: &JetBlock, dh: &JetBlock, du: &mut JetBlock, dv: &mut JetBlock) -> JetBlock {
    if a.comps() == 1 {
        let d = v.data() - u.data();
        let da = dh.data() * &d;
        let dd = dh.data() * a.data();
        *du.data_mut() += &(dh.data() - &dd);
        *dv.data_mut() += &dd;
        return JetBlock::from_data(1, a.points(), da);
    }
    let mut da = JetBlock::zeros(a.comps(), a.points(), a.width());
    for p in 0..a.points() {
        for i in 0..a.width() {
            let (aj, uj, vj, dhj) = (a.get(p, i), u.get(p, i), v.get(p, i), dh.get(p, i));
            let d: [f64; COMPONENTS] = std::array::from_fn(|c| vj[c] - uj[c]);
            let mut daj = [0.0; COMPONENTS];
            let mut dd = [0.0; COMPONENTS];
            mul_jet_backward(&aj, &d, &dhj, &mut daj, &mut dd);
            da.set(p, i, &daj);
            du.add(p, i, &std::array::from_fn(|c| dhj[c] - dd[c]));
            dv.add(p, i, &dd);
        }
    }
    da
}

pub(crate) fn mixed_forward(net: &DenseNetwork, input: &SplitInput, u: &JetBlock, v: &JetBlock) -> (JetBlock, MixedTrace) {
    let layers = net.layers();
    let n = layers.len() - 1;
    let mut trace = MixedTrace {
        pre: Vec::with_capacity(n),
        act: Vec::with_capacity(n),
        hidden: Vec::with_capacity(n),
    };
    let mut z = split_affine_forward(&layers[0], input);
    for layer in &layers[1..] {
        let a = tanh_forward(&z);
        let h = mix(&a, u, v);
        trace.pre.push(z);
        z = affine_forward(layer, &h);
        trace.act.push(a);
        trace.hidden.push(h);
    }
    (z, trace)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mixed_backward(
    net: &DenseNetwork,
    input: &SplitInput,
    trace: &MixedTrace,
    u: &JetBlock,
    v: &JetBlock,
    d_out: &JetBlock,
    grad: &mut DenseNetwork,
    du: &mut JetBlock,
    dv: &mut JetBlock,
) {
    let layers = net.layers();
    let grads = grad.layers_mut();
    let mut dz = d_out.clone();
    for l in (1..layers.len()).rev() {
        let dh = affine_backward(&layers[l], &trace.hidden[l - 1], &dz, &mut grads[l]);
        let da = mix_backward(&trace.act[l - 1], u, v, &dh, du, dv);
        dz = tanh_backward(&trace.pre[l - 1], &trace.act[l - 1], &da);
    }
    split_affine_backward(input, &dz, &mut grads[0]);
}
