use std::f64::consts::PI;

use proptest::prelude::*;

use opnet_core::models::operator::BRANCH;
use opnet_core::models::{
    fourier_coeffs, operator_forward, Architecture, EmbeddingSpec, FunctionSample, OperatorModel, UniformGrid,
    VariantKind, VariantSpec,
};

fn kind() -> impl Strategy<Value = VariantKind> {
    prop::sample::select(VariantKind::ALL.to_vec())
}

fn embedding(length: f64) -> impl Strategy<Value = EmbeddingSpec> {
    prop_oneof![
        Just(EmbeddingSpec::none(length)),
        (1usize..6).prop_map(move |k| EmbeddingSpec::deterministic(k, length)),
        (1usize..40, 0.5f64..3.0).prop_map(move |(n, s)| EmbeddingSpec::random(n, s, length)),
    ]
}

fn arch() -> Architecture {
    Architecture {
        width: 8,
        depth: 2,
        latent: 6,
    }
}

fn smooth_sample(grid: UniformGrid, a: f64, b: f64) -> FunctionSample {
    let l = grid.length();
    FunctionSample::from_sensors(
        grid.coords().iter().map(|x| a * (2.0 * PI * x / l).sin() + b * (4.0 * PI * x / l).cos()).collect(),
        grid,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn input_sizes_follow_the_variant(kind in kind(), emb in embedding(1.0), m in 9usize..40, seed in 0u64..50) {
        let modes: Vec<usize> = if kind.trunk_has_fourier() { vec![0, 1, 2] } else { vec![] };
        let grid = UniformGrid::new(0.0, 1.0, m);
        let model = OperatorModel::new(VariantSpec::new(kind, emb, &modes).unwrap(), arch(), grid, seed).unwrap();
        let s = smooth_sample(grid, 1.0, 0.5);
        let e = emb.dim();
        let branch = m + if kind.branch_has_x() { e } else { 0 };
        let mut trunk = 1 + e;
        if kind.trunk_has_local() { trunk += 1; }
        if kind.trunk_has_global() { trunk += m; }
        if kind.trunk_has_fourier() { trunk += 2 * modes.len(); }
        prop_assert_eq!(model.branch_input(&s, 0.3).unwrap().len(), branch);
        prop_assert_eq!(model.trunk_input(&s, 0.1, 0.3).unwrap().len(), trunk);
    }

    #[test]
    fn fourier_variants_are_periodic(
        bx in any::<bool>(), order in 1usize..6, seed in 0u64..1000, t in 0.0f64..1.0,
        a in -2.0f64..2.0, b in -2.0f64..2.0, kdv in any::<bool>(),
    ) {
        let length = if kdv { 2.0 * PI } else { 1.0 };
        let grid = UniformGrid::new(0.0, length, if kdv { 257 } else { 101 });
        let kind = if bx { VariantKind::BxTF } else { VariantKind::TF };
        let spec = VariantSpec::new(kind, EmbeddingSpec::deterministic(order, length), &[0, 1, 2]).unwrap();
        let model = OperatorModel::new(spec, arch(), grid, seed).unwrap();
        let s = smooth_sample(grid, a, b);
        let left = operator_forward(&model, &s, t, 0.0).unwrap();
        let right = operator_forward(&model, &s, t, length).unwrap();
        prop_assert!((left - right).abs() <= 1e-12);
    }

    #[test]
    fn output_is_linear_in_the_branch_head(kind in kind(), seed in 0u64..1000, p in -4i32..4, c in -3.0f64..3.0) {
        let grid = UniformGrid::new(0.0, 1.0, 21);
        let modes: Vec<usize> = if kind.trunk_has_fourier() { vec![0, 1] } else { vec![] };
        let spec = VariantSpec::new(kind, EmbeddingSpec::deterministic(2, 1.0), &modes).unwrap();
        let model = OperatorModel::new(spec, arch(), grid, seed).unwrap();
        let s = smooth_sample(grid, 0.7, -0.2);
        let base = operator_forward(&model, &s, 0.4, 0.6).unwrap();
        let scaled = |factor: f64| {
            let mut m = model.clone();
            let head = m.params_mut().nets[BRANCH].layers_mut().last_mut().unwrap();
            head.weights.mapv_inplace(|w| w * factor);
            head.bias.mapv_inplace(|w| w * factor);
            operator_forward(&m, &s, 0.4, 0.6).unwrap()
        };
        // powers of two scale without rounding
        let two = 2f64.powi(p);
        prop_assert_eq!(scaled(two), two * base);
        prop_assert!((scaled(c) - c * base).abs() <= 1e-12 * base.abs().max(1e-300) * 4.0 + 1e-300);
    }

    #[test]
    fn fourier_synthesis_reconstructs(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 50), mean in -1.0f64..1.0) {
        // m = 100 samples of a real trigonometric polynomial without the Nyquist mode
        let m = 100;
        let u: Vec<f64> = (0..m)
            .map(|j| {
                let x = j as f64 / m as f64;
                mean + coeffs.iter().enumerate().skip(1).map(|(k, (a, b))| {
                    let w = 2.0 * PI * k as f64 * x;
                    a * w.cos() + b * w.sin()
                }).sum::<f64>()
            })
            .collect();
        let modes: Vec<usize> = (0..m / 2).collect();
        let c = fourier_coeffs(&u, &modes).unwrap();
        for (j, &uj) in u.iter().enumerate() {
            let x = j as f64 / m as f64;
            let mut v = c[0];
            for k in 1..m / 2 {
                let (re, im) = (c[2 * k], c[2 * k + 1]);
                let w = 2.0 * PI * k as f64 * x;
                v += 2.0 * (re * w.cos() - im * w.sin());
            }
            prop_assert!((v - uj).abs() <= 1e-10);
        }
        prop_assert!(fourier_coeffs(&u, &[m / 2]).is_err());
    }
}
