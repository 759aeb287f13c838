mod common;

use convex_np::{
    evaluate, expectation, kl_divergence, penalty, supergradient, ConvexExpectation, Density,
    RandomVariable,
};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn expectation_is_bilinear(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let sp = common::space(&mut rng, n);
        let (d1, d2) = (common::density(&mut rng, &sp), common::density(&mut rng, &sp));
        let (x, y) = (common::variable(&mut rng, n, 5.0), common::variable(&mut rng, n, 5.0));
        let (a, l) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0));

        let lin = x.zip_with(&y, |u, v| a * u + v);
        let lhs = expectation(&sp, &d1, &lin).unwrap();
        let rhs = a * expectation(&sp, &d1, &x).unwrap() + expectation(&sp, &d1, &y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));

        let mix: Vec<f64> = d1.values().iter().zip(d2.values()).map(|(p, q)| l * p + (1.0 - l) * q).collect();
        let mix = Density::new(&sp, mix).unwrap();
        let lhs = expectation(&sp, &mix, &x).unwrap();
        let rhs = l * expectation(&sp, &d1, &x).unwrap() + (1.0 - l) * expectation(&sp, &d2, &x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn densities_integrate_to_one(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=8);
        let sp = common::space(&mut rng, n);
        let probs = common::sparse_probabilities(&mut rng, n);
        let d = Density::from_probabilities(&sp, &probs).unwrap();
        let one = expectation(&sp, &d, &RandomVariable::constant(n, 1.0)).unwrap();
        prop_assert!((one - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_vanishes_on_the_diagonal(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let sp = common::space(&mut rng, n);
        let q = Density::from_probabilities(&sp, &common::sparse_probabilities(&mut rng, n)).unwrap();
        let p = common::density(&mut rng, &sp);
        prop_assert!(kl_divergence(&sp, &q, &p).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&sp, &p, &p).unwrap().abs() <= 1e-10);
        prop_assert!(kl_divergence(&sp, &q, &q).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn kl_is_positive_off_the_diagonal(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(2..=6);
        let sp = common::space(&mut rng, n);
        let (q, p) = (common::density(&mut rng, &sp), common::density(&mut rng, &sp));
        let far = q.values().iter().zip(p.values()).any(|(a, b)| (a - b).abs() > 1e-3);
        prop_assume!(far);
        prop_assert!(kl_divergence(&sp, &q, &p).unwrap() > 0.0);
    }

    #[test]
    fn convex_expectation_axioms(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let sp = common::space(&mut rng, n);
        let rho = common::any_risk(&mut rng, &sp);
        let x = common::variable(&mut rng, n, 4.0);
        let y = common::variable(&mut rng, n, 4.0);
        let ev = |v: &RandomVariable| evaluate(&sp, &rho, v).unwrap();
        let (rx, ry) = (ev(&x), ev(&y));
        let scale = 1.0 + rx.abs() + ry.abs();

        let lower = x.zip_with(&y, f64::min);
        prop_assert!(ev(&lower) <= rx + 1e-10 * scale);

        let c = rng.gen_range(-10.0..10.0);
        prop_assert!((ev(&x.map(|v| v + c)) - rx - c).abs() <= 1e-10 * (scale + c.abs()));

        let l = rng.gen_range(0.0..1.0);
        let mix = x.zip_with(&y, |a, b| l * a + (1.0 - l) * b);
        prop_assert!(ev(&mix) <= l * rx + (1.0 - l) * ry + 1e-10 * scale);

        let q = Density::from_probabilities(&sp, &common::sparse_probabilities(&mut rng, n)).unwrap();
        let pen = penalty(&sp, &rho, &q).unwrap();
        if pen.is_finite() {
            prop_assert!(rx >= expectation(&sp, &q, &x).unwrap() - pen - 1e-9 * scale);
        }
    }

    #[test]
    fn supergradients_attain_the_value(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let sp = common::space(&mut rng, n);
        let rho = common::any_risk(&mut rng, &sp);
        let x = common::variable(&mut rng, n, 4.0);
        let sg = supergradient(&sp, &rho, &x).unwrap();
        let value = evaluate(&sp, &rho, &x).unwrap();
        let attained = expectation(&sp, &sg.density, &x).unwrap() - sg.penalty;
        prop_assert!((attained - value).abs() <= 1e-9 * (1.0 + value.abs()));
        let pen = penalty(&sp, &rho, &sg.density).unwrap();
        prop_assert!(pen <= sg.penalty + 1e-9 * (1.0 + sg.penalty.abs()));
    }

    #[test]
    fn entropic_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=5);
        let sp = common::space(&mut rng, n);
        let rho = common::risk(&mut rng, &sp, 0);
        let x = common::variable(&mut rng, n, 2.0);
        let err = convex_np::finite_diff_check(&sp, &rho, &x, 1e-6).unwrap();
        prop_assert!(err <= 1e-5, "finite difference error {}", err);
    }
}

#[test]
fn entropic_penalty_is_scaled_relative_entropy() {
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let sp = common::space(&mut rng, n);
        let base = common::density(&mut rng, &sp);
        let theta = rng.gen_range(0.2..3.0);
        let rho = ConvexExpectation::entropic(&sp, base.clone(), theta).unwrap();
        let q = common::density(&mut rng, &sp);
        let kl = kl_divergence(&sp, &q, &base).unwrap();
        let pen = penalty(&sp, &rho, &q).unwrap();
        assert!((pen - kl / theta).abs() <= 1e-12 * (1.0 + pen));
    }
}
