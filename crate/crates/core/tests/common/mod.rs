#![allow(dead_code)]

use convex_np::hedging::MarketSpec;
use convex_np::{
    evaluate, make_space, ConvexExpectation, Density, Generator, ProblemSpec, RandomVariable,
    SampleSpace,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Probabilities bounded away from zero.
pub fn probabilities(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Probabilities where some atoms may carry no mass.
pub fn sparse_probabilities(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.05..1.0)
                }
            })
            .collect();
        let s: f64 = raw.iter().sum();
        if s > 0.0 {
            return raw.iter().map(|v| v / s).collect();
        }
    }
}

pub fn space(rng: &mut impl Rng, n: usize) -> SampleSpace {
    make_space(&probabilities(rng, n)).unwrap()
}

pub fn density(rng: &mut impl Rng, sp: &SampleSpace) -> Density {
    Density::from_probabilities(sp, &probabilities(rng, sp.len())).unwrap()
}

/// Entropic, linear or finitely generated, chosen by `kind % 3`.
pub fn risk(rng: &mut impl Rng, sp: &SampleSpace, kind: usize) -> ConvexExpectation {
    match kind % 3 {
        0 => {
            let theta = rng.gen_range(0.3..2.5);
            ConvexExpectation::entropic(sp, density(rng, sp), theta).unwrap()
        }
        1 => ConvexExpectation::linear(sp, density(rng, sp)).unwrap(),
        _ => {
            let m = rng.gen_range(2..=3);
            let generators = (0..m)
                .map(|j| Generator {
                    density: density(rng, sp),
                    penalty: if j == 0 { 0.0 } else { rng.gen_range(0.0..0.3) },
                })
                .collect();
            ConvexExpectation::finitely_generated(sp, generators).unwrap()
        }
    }
}

pub fn any_risk(rng: &mut impl Rng, sp: &SampleSpace) -> ConvexExpectation {
    let kind = rng.gen_range(0..3);
    risk(rng, sp, kind)
}

/// A feasible instance on 2 or 3 atoms with independently drawn families and
/// `α` strictly inside `[ρ₁(K₁), ρ₁(K₂)]`.
pub fn instance(rng: &mut impl Rng) -> ProblemSpec {
    let n = rng.gen_range(2..=3);
    let sp = space(rng, n);
    let rho1 = any_risk(rng, &sp);
    let rho2 = any_risk(rng, &sp);
    let k1: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                0.0
            } else {
                rng.gen_range(0.0..0.5)
            }
        })
        .collect();
    let k2: Vec<f64> = k1.iter().map(|a| a + rng.gen_range(0.2..1.5)).collect();
    let (k1, k2) = (
        RandomVariable::new(k1).unwrap(),
        RandomVariable::new(k2).unwrap(),
    );
    let lo = evaluate(&sp, &rho1, &k1).unwrap();
    let hi = evaluate(&sp, &rho1, &k2).unwrap();
    let alpha = lo + rng.gen_range(0.1..0.9) * (hi - lo);
    ProblemSpec::new(sp, rho1, rho2, k1, k2, alpha).unwrap()
}

pub fn variable(rng: &mut impl Rng, n: usize, scale: f64) -> RandomVariable {
    RandomVariable::new((0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// One-period market with `s0` strictly inside the range of `S_T`.
pub fn market(rng: &mut impl Rng) -> MarketSpec {
    let n = rng.gen_range(2..=5);
    let sp = space(rng, n);
    let s0 = 1.0;
    let mut st: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..2.0)).collect();
    st[0] = rng.gen_range(0.3..0.95);
    st[1] = rng.gen_range(1.05..2.0);
    if n > 2 && rng.gen_bool(0.3) {
        st[2] = s0;
    }
    let claim: Vec<f64> = st
        .iter()
        .map(|s| {
            let strike = 1.0;
            if rng.gen_bool(0.5) {
                (s - strike).max(0.0)
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    let rho = ConvexExpectation::entropic(&sp, sp.base_density(), 1.0).unwrap();
    MarketSpec::new(
        sp,
        s0,
        RandomVariable::new(st).unwrap(),
        RandomVariable::new(claim).unwrap(),
        0.0,
        rho,
    )
    .unwrap()
}
