#![allow(clippy::needless_range_loop)]

mod common;

use convex_np::lp::{LinearProgram, Relation};
use convex_np::{most_powerful_test, Density, SampleSpace};
use proptest::prelude::*;
use rand::Rng;

fn lp_power(sp: &SampleSpace, p: &Density, q: &Density, level: f64) -> f64 {
    let (w, n) = (sp.weights(), sp.len());
    let mut lp = LinearProgram::new((0..n).map(|i| -w[i] * p.values()[i]).collect());
    for i in 0..n {
        lp.set_bounds(i, 0.0, 1.0);
    }
    lp.add_constraint(
        (0..n).map(|i| w[i] * q.values()[i]).collect(),
        Relation::Le,
        level,
    );
    -lp.solve().unwrap().objective
}

/// Best power over tests with values on the grid `{0, 1/steps, …, 1}`.
fn grid_power(sp: &SampleSpace, p: &Density, q: &Density, level: f64, steps: usize) -> f64 {
    let (w, n) = (sp.weights(), sp.len());
    let mut best: f64 = 0.0;
    let total = (steps + 1).pow(n as u32);
    for code in 0..total {
        let (mut rest, mut size, mut power) = (code, 0.0, 0.0);
        for i in 0..n {
            let z = (rest % (steps + 1)) as f64 / steps as f64;
            rest /= steps + 1;
            size += w[i] * q.values()[i] * z;
            power += w[i] * p.values()[i] * z;
        }
        if size <= level + 1e-12 {
            best = best.max(power);
        }
    }
    best
}

fn pair(rng: &mut impl Rng, n: usize) -> (SampleSpace, Density, Density) {
    let sp = common::space(rng, n);
    let p = Density::from_probabilities(&sp, &common::sparse_probabilities(rng, n)).unwrap();
    let q = Density::from_probabilities(&sp, &common::sparse_probabilities(rng, n)).unwrap();
    (sp, p, q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_matches_the_lp(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=6);
        let (sp, p, q) = pair(&mut rng, n);
        let level = rng.gen_range(0.0..=1.0);
        let t = most_powerful_test(&sp, &p, &q, level).unwrap();
        prop_assert!((t.power - lp_power(&sp, &p, &q, level)).abs() <= 1e-9);
        prop_assert!(t.size <= level + 1e-12);
        prop_assert!(t.test.values().iter().all(|z| (0.0..=1.0).contains(z)));
        if t.z_prime > 0.0 {
            prop_assert!((t.size - level).abs() <= 1e-12, "size {} level {}", t.size, level);
        }
    }

    #[test]
    fn power_is_nondecreasing_and_concave_in_the_level(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(2..=6);
        let (sp, p, q) = pair(&mut rng, n);
        let powers: Vec<f64> = (0..=40)
            .map(|j| most_powerful_test(&sp, &p, &q, j as f64 / 40.0).unwrap().power)
            .collect();
        for j in 1..powers.len() {
            prop_assert!(powers[j] >= powers[j - 1] - 1e-12);
        }
        for j in 1..powers.len() - 1 {
            prop_assert!(2.0 * powers[j] >= powers[j - 1] + powers[j + 1] - 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn greedy_beats_the_grid(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.gen_range(1..=3);
        let (sp, p, q) = pair(&mut rng, n);
        let level = rng.gen_range(0.0..=1.0);
        let t = most_powerful_test(&sp, &p, &q, level).unwrap();
        let g = grid_power(&sp, &p, &q, level, 200);
        prop_assert!(t.power >= g - 1e-12);
        prop_assert!(t.power - g <= 1e-2);
    }
}

#[test]
fn tied_ratios_share_one_boundary_value() {
    let sp = SampleSpace::uniform(4).unwrap();
    let p = Density::from_probabilities(&sp, &[0.4, 0.2, 0.2, 0.2]).unwrap();
    let q = Density::from_probabilities(&sp, &[0.1, 0.3, 0.3, 0.3]).unwrap();
    let t = most_powerful_test(&sp, &p, &q, 0.55).unwrap();
    let z = t.test.values();
    assert_eq!(z[0], 1.0);
    assert!((z[1] - 0.5).abs() < 1e-12 && z[1] == z[2] && z[2] == z[3]);
    assert!((t.boundary_fraction - 0.5).abs() < 1e-12);
}
