use proptest::prelude::*;

use opnet_core::stats::{glass_delta, mad, median, rel_l2, spearman_rho, summarize, wilcoxon_tost};

fn distinct(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n).prop_filter("distinct values", |v| {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[0] != w[1])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spearman_ignores_monotone_maps(a in distinct(3..30), seed in any::<u64>(), k in 1i32..4) {
        let n = a.len();
        let b: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 7) % 1000) as f64) + i as f64 * 1e-3).collect();
        prop_assume!(b.iter().any(|v| *v != b[0]));
        let base = spearman_rho(&a, &b).unwrap();
        let mapped: Vec<f64> = b.iter().map(|v| v.powi(2 * k - 1).atan() + 3.0 * v).collect();
        prop_assert_eq!(spearman_rho(&a, &mapped).unwrap(), base);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn rel_l2_is_homogeneous(reference in prop::collection::vec(-5.0f64..5.0, 2..50), c in 0.0f64..4.0) {
        prop_assume!(reference.iter().any(|v| v.abs() > 1e-3));
        let pred: Vec<f64> = reference.iter().map(|v| c * v).collect();
        let e = rel_l2(&pred, &reference).unwrap();
        prop_assert!((e - 100.0 * (c - 1.0).abs()).abs() <= 1e-10 * (1.0 + e));
    }

    #[test]
    fn tost_ignores_case_order(
        pairs in prop::collection::vec((0.1f64..3.0, -0.5f64..0.5), 5..40),
        margin in 0.01f64..0.5,
        rotate in 0usize..40,
    ) {
        let base: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let var: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let r = wilcoxon_tost(&var, &base, margin).unwrap();
        let mut perm: Vec<usize> = (0..pairs.len()).collect();
        perm.rotate_left(rotate % pairs.len());
        perm.reverse();
        let base2: Vec<f64> = perm.iter().map(|&i| base[i]).collect();
        let var2: Vec<f64> = perm.iter().map(|&i| var[i]).collect();
        let r2 = wilcoxon_tost(&var2, &base2, margin).unwrap();
        prop_assert_eq!(r.equivalent, r2.equivalent);
        prop_assert!((r.p_lower - r2.p_lower).abs() < 1e-12 && (r.p_upper - r2.p_upper).abs() < 1e-12);
        prop_assert_eq!(r.equivalent, r.p_lower < 0.05 && r.p_upper < 0.05);
    }

    #[test]
    fn glass_sign_follows_the_median_difference(
        pairs in prop::collection::vec((0.1f64..3.0, -0.5f64..0.5), 2..40),
    ) {
        let base: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let var: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        prop_assume!(mad(&base).unwrap() > 0.0);
        let d: Vec<f64> = var.iter().zip(&base).map(|(v, b)| v - b).collect();
        let g = glass_delta(&var, &base).unwrap();
        let m = median(&d).unwrap();
        prop_assert_eq!(g.signum() == m.signum() || (g == 0.0 && m == 0.0), true);
    }

    #[test]
    fn summary_is_ordered(values in prop::collection::vec(0.0f64..100.0, 1..80)) {
        let s = summarize(&values).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max && s.std >= 0.0);
        prop_assert_eq!(s.count, values.len());
    }
}
