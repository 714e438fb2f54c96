use super::*;
use crate::models::UniformGrid;
use crate::rng::stream_rng;
use rand::Rng;

fn constant_sample(value: f64, length: f64) -> FunctionSample {
    let g = UniformGrid::new(0.0, length, 101);
    FunctionSample::from_sensors(vec![value; 101], g)
}

fn jet(value: f64, dx: [f64; 3], dt: f64) -> FieldJet {
    FieldJet { value, dx, dt }
}

#[test]
fn advection_constant_field_has_zero_residual() {
    let spec = PdeSpec::advection();
    let field = ClosureField::new(|_, _| FieldJet::constant(0.7));
    let s = constant_sample(2.3, 1.0);
    for &(t, x) in &[(0.1, 0.2), (0.9, 0.99)] {
        assert_eq!(residual(&spec, &field, &s, t, x).unwrap(), 0.0);
    }
}

#[test]
fn manufactured_solutions_vanish() {
    let mut rng = stream_rng(0, 99);
    let a = 1.7;
    let transport = ClosureField::new(move |t, x| {
        let arg = PI * (x - a * t);
        let (s, c) = arg.sin_cos();
        jet(s, [PI * c, -PI * PI * s, -PI * PI * PI * c], -a * PI * c)
    });
    let d = 0.01;
    let heat = ClosureField::new(move |t, x| {
        let e = (-d * PI * PI * t).exp();
        let (s, c) = (PI * x).sin_cos();
        jet(e * s, [e * PI * c, -e * PI * PI * s, -e * PI * PI * PI * c], -d * PI * PI * e * s)
    });
    // x/(1+t) solves inviscid Burgers and KdV (s_xx = s_xxx = 0)
    let similarity = ClosureField::new(|t, x| jet(x / (1.0 + t), [1.0 / (1.0 + t), 0.0, 0.0], -x / ((1.0 + t) * (1.0 + t))));
    let cases: [(PdeSpec, &dyn DifferentiableField, FunctionSample); 4] = [
        (PdeSpec::advection(), &transport, constant_sample(a, 1.0)),
        (PdeSpec::diffusion_reaction(d, 0.0), &heat, constant_sample(0.0, 1.0)),
        (PdeSpec::burgers(1e-3), &similarity, constant_sample(0.0, 1.0)),
        (PdeSpec::kdv(0.1), &similarity, constant_sample(0.0, 2.0 * PI)),
    ];
    for (spec, field, sample) in cases.iter() {
        for _ in 0..1000 {
            let t = rng.random_range(0.0..1.0);
            let x = rng.random_range(0.0..spec.length);
            let r = residual(spec, *field, sample, t, x).unwrap();
            assert!(r.abs() <= 1e-8, "{}: {r}", spec.kind);
        }
    }
}

#[test]
fn kdv_linear_field_residual_is_x() {
    let spec = PdeSpec::kdv(0.1);
    let field = ClosureField::new(|_, x| jet(x, [1.0, 0.0, 0.0], 0.0));
    let s = constant_sample(0.0, 2.0 * PI);
    for &x in &[0.5, 2.0, 6.0] {
        assert!((residual(&spec, &field, &s, 0.3, x).unwrap() - x).abs() < 1e-15);
    }
}

#[test]
fn insufficient_derivative_order_is_a_contract_error() {
    let spec = PdeSpec::kdv(0.1);
    let field = ClosureField::with_order(|_, _| FieldJet::constant(0.0), 2);
    let s = constant_sample(0.0, 2.0 * PI);
    assert!(matches!(residual(&spec, &field, &s, 0.3, 1.0), Err(Error::Contract(_))));
    assert!(residual(&PdeSpec::burgers(1e-2), &field, &s, 0.3, 0.5).is_ok());
}

#[test]
fn initial_terms() {
    let zero = ClosureField::new(|_, _| FieldJet::constant(0.0));
    let c = ClosureField::new(|_, _| FieldJet::constant(0.4));
    let s = constant_sample(0.0, 1.0);
    assert!((initial_term(&PdeSpec::advection(), &zero, &s, 0.5).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(initial_term(&PdeSpec::diffusion_reaction(0.01, 0.01), &c, &s, 0.3).unwrap(), 0.4);
    let g = UniformGrid::new(0.0, 1.0, 101);
    let sensors: Vec<f64> = g.coords().iter().map(|x| (2.0 * PI * x).sin()).collect();
    let sample = FunctionSample::from_sensors(sensors, g);
    let matching = ClosureField::new(|_, x| {
        let (v, slope) = g.interpolate(&sample.sensors, x);
        jet(v, [slope, 0.0, 0.0], 0.0)
    });
    for &x in &[0.0, 0.33, 1.0] {
        assert_eq!(initial_term(&PdeSpec::burgers(1e-2), &matching, &sample, x).unwrap(), 0.0);
    }
}

#[test]
fn boundary_terms() {
    let zero = ClosureField::new(|_, _| FieldJet::constant(0.0));
    let s = constant_sample(1.0, 1.0);
    let b = boundary_term(&PdeSpec::advection(), &zero, &s, 1.0).unwrap();
    assert_eq!(b.len(), 1);
    assert!((b[0] + 1.0).abs() < 1e-15);
    assert_eq!(boundary_term(&PdeSpec::diffusion_reaction(0.01, 0.01), &zero, &s, 0.5).unwrap(), vec![0.0, 0.0]);
    let inflow_field = ClosureField::new(|t, _| FieldJet::constant(inflow(t)));
    assert_eq!(boundary_term(&PdeSpec::advection(), &inflow_field, &s, 0.3).unwrap(), vec![0.0]);
    assert!(matches!(
        boundary_term(&PdeSpec::burgers(1e-2), &zero, &s, 0.5),
        Err(Error::Contract(_))
    ));
}

#[test]
fn residual_partials_match_finite_differences() {
    let j = jet(0.3, [-1.2, 0.8, 2.5], 0.6);
    for kind in PdeKind::ALL {
        let spec = PdeSpec::default_for(kind);
        let u = 0.9;
        let p = spec.residual_partials(&j, u);
        for c in 0..5 {
            let h = 1e-6;
            let mut plus = j.components();
            let mut minus = j.components();
            plus[c] += h;
            minus[c] -= h;
            let fd = (spec.residual_from_jet(&FieldJet::from_components(plus), u)
                - spec.residual_from_jet(&FieldJet::from_components(minus), u))
                / (2.0 * h);
            assert!((fd - p[c]).abs() < 1e-8, "{kind} component {c}: {fd} vs {}", p[c]);
        }
    }
}

#[test]
fn specs_validate() {
    for kind in PdeKind::ALL {
        PdeSpec::default_for(kind).validate().unwrap();
        let spec = PdeSpec::default_for(kind);
        assert_eq!(PdeSpec::from_coefficients(kind, spec.coefficient_array()), spec);
        assert_eq!(PdeKind::from_tag(kind.tag()).unwrap(), kind);
    }
    let mut bad = PdeSpec::advection();
    bad.viscosity = Some(1e-2);
    assert!(bad.validate().is_err());
    assert_eq!(PdeSpec::kdv(0.1).length, 2.0 * PI);
}

#[test]
fn collocation_defaults() {
    let adv = PdeSpec::advection();
    let b = sample_collocation(&adv, &CollocationCounts::default_for(PdeKind::Advection), 1, 3).unwrap();
    assert_eq!((b.initial.len(), b.boundary.len(), b.residual.len()), (101, 101, 2500));
    let kdv = PdeSpec::kdv(0.1);
    let b = sample_collocation(&kdv, &CollocationCounts::default_for(PdeKind::Kdv), 1, 3).unwrap();
    assert_eq!((b.initial.len(), b.boundary.len(), b.residual.len()), (257, 0, 101 * 257));
    assert!(b.residual_weights.iter().all(|&w| w == 1.0));
}

#[test]
fn collocation_is_deterministic_and_interior() {
    for kind in PdeKind::ALL {
        let spec = PdeSpec::default_for(kind);
        let counts = CollocationCounts::default_for(kind);
        let a = sample_collocation(&spec, &counts, 2, 11).unwrap();
        let b = sample_collocation(&spec, &counts, 2, 11).unwrap();
        assert_eq!(a, b);
        for &(_, t, x) in &a.residual {
            assert!(t > 0.0 && t < 1.0 && x > 0.0 && x < spec.length);
        }
        if kind != PdeKind::Kdv {
            assert_ne!(a, sample_collocation(&spec, &counts, 2, 12).unwrap());
        }
    }
}
