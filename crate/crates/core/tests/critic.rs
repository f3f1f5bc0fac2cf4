use condtune::critic::{inv_normal_cdf, sample_midpoint, sample_uniform};
use proptest::prelude::*;

/// Standard normal CDF by composite Simpson quadrature of the density from 0.
fn normal_cdf(x: f64) -> f64 {
    let n = 4000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(0.0) + pdf(x);
    for i in 1..n {
        acc += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + acc * h / 3.0
}

fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_matches_bisection_oracle() {
    for p in [0.001, 0.01, 0.0625, 0.1875, 0.3, 0.5, 0.6, 0.8125, 0.97, 0.999] {
        let (got, want) = (inv_normal_cdf(p), bisect_quantile(p));
        assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "p={p}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn schedules_are_sorted_unique_and_in_range(t in 1usize..120, frac in 0.0f64..1.0) {
        let n = 1 + ((t - 1) as f64 * frac) as usize;
        for idx in [sample_uniform(t, n).unwrap(), sample_midpoint(t, n, (t.max(2) - 1) as f64 / 6.0).unwrap()] {
            prop_assert!(!idx.is_empty());
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < t));
        }
        prop_assert_eq!(sample_uniform(t, n).unwrap().len(), n);
    }

    #[test]
    fn p_yes_complements(a in -15.0f64..15.0, b in -15.0f64..15.0) {
        let p = condtune::critic::p_yes(a, b);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((p + condtune::critic::p_yes(b, a) - 1.0).abs() < 1e-12);
        prop_assert!(condtune::critic::vlm_loss(p, 1e-6) <= -(1e-6f64).ln());
    }
}
