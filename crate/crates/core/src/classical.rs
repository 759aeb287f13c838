//! Classical randomized Neyman-Pearson tests between two fixed measures.
//!
//! The greedy construction fills atoms in decreasing likelihood-ratio order
//! until the size budget runs out. Atoms sharing a ratio form one group and
//! receive a single common fractional value on the marginal group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dot3, Density, RandomVariable, SampleSpace};

/// Budget left below this is treated as exhausted.
const BUDGET_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpTest {
    /// Likelihood-ratio threshold; `+∞` when only infinite-ratio atoms are tested.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub z_prime: f64,
    /// Common test value on `{G = z′·H}`.
    pub boundary_fraction: f64,
    pub test: RandomVariable,
    pub power: f64,
    pub size: f64,
}

/// Rounds to 12 significant digits so that mathematically equal ratios
/// land in the same group.
pub(crate) fn round_ratio(r: f64) -> f64 {
    if r == 0.0 || !r.is_finite() {
        return r;
    }
    let digits = 11 - r.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits);
    if scale.is_finite() && (r * scale).is_finite() {
        (r * scale).round() / scale
    } else {
        r
    }
}

/// `num / den` with `0/0 = 0` and `positive/0 = +∞`.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Groups of atom indices with equal (rounded) ratio, in decreasing ratio
/// order; atoms keep index order inside a group.
pub(crate) fn ratio_groups(ratios: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    let keys: Vec<f64> = ratios.iter().map(|&r| round_ratio(r)).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((k, members)) if *k == keys[i] => members.push(i),
            _ => groups.push((keys[i], vec![i])),
        }
    }
    groups
}

/// Most powerful test of size at most `level`: maximizes `E_p̂[Z]` subject
/// to `E_q̂[Z] ≤ level` and `0 ≤ Z ≤ 1`.
pub fn most_powerful_test(
    space: &SampleSpace,
    p_hat: &Density,
    q_hat: &Density,
    level: f64,
) -> Result<NpTest> {
    space.check_len(p_hat.len())?;
    space.check_len(q_hat.len())?;
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::LevelOutOfRange(level));
    }
    let n = space.len();
    let mu = space.weights();
    let ratios: Vec<f64> = (0..n)
        .map(|i| ratio(p_hat.values()[i], q_hat.values()[i]))
        .collect();

    let mut z = vec![0.0; n];
    let mut remaining = level;
    // If every positive-ratio group fits, the threshold drops to zero and
    // zero-ratio atoms sit on the boundary at value 0.
    let mut z_prime = 0.0;
    let mut boundary_fraction = 0.0;
    for (r, members) in ratio_groups(&ratios) {
        if r == 0.0 {
            break;
        }
        let cost: f64 = members.iter().map(|&i| mu[i] * q_hat.values()[i]).sum();
        if cost <= remaining {
            for &i in &members {
                z[i] = 1.0;
            }
            remaining -= cost;
            if remaining <= BUDGET_EPS {
                z_prime = r;
                boundary_fraction = 1.0;
                break;
            }
        } else {
            let frac = (remaining / cost).clamp(0.0, 1.0);
            for &i in &members {
                z[i] = frac;
            }
            z_prime = r;
            boundary_fraction = frac;
            break;
        }
    }
    let power = dot3(mu, p_hat.values(), &z);
    let size = dot3(mu, q_hat.values(), &z);
    Ok(NpTest {
        z_prime,
        boundary_fraction,
        test: RandomVariable(z),
        power,
        size,
    })
}

/// Tilts `(P*, Q*)` by `K₂ − K₁` onto the unit box.
///
/// Returns `(P̂, Q̂, γ′)` with `dP̂/dP* = (K₂−K₁)/E_{P*}[K₂−K₁]` (likewise for
/// `Q̂`) and `γ′ = γ / E_{Q*}[K₂−K₁]`. Atoms with `K₂ = K₁` get density 0.
pub fn tilt_reduction(
    space: &SampleSpace,
    k1: &RandomVariable,
    k2: &RandomVariable,
    p_star: &Density,
    q_star: &Density,
    gamma: f64,
) -> Result<(Density, Density, f64)> {
    for len in [k1.len(), k2.len(), p_star.len(), q_star.len()] {
        space.check_len(len)?;
    }
    let spread: Vec<f64> = k2
        .values()
        .iter()
        .zip(k1.values())
        .map(|(b, a)| (b - a).max(0.0))
        .collect();
    let mu = space.weights();
    let ep = dot3(mu, p_star.values(), &spread);
    let eq = dot3(mu, q_star.values(), &spread);
    if !(ep > 0.0) {
        return Err(Error::DegenerateBounds("E_P*[K2 - K1] = 0".into()));
    }
    if !(eq > 0.0) {
        return Err(Error::DegenerateBounds("E_Q*[K2 - K1] = 0".into()));
    }
    let tilt = |d: &Density, e: f64| {
        Density(
            d.values()
                .iter()
                .zip(&spread)
                .map(|(d, s)| d * s / e)
                .collect(),
        )
    };
    Ok((tilt(p_star, ep), tilt(q_star, eq), gamma / eq))
}

fn check_box(space: &SampleSpace, k1: &RandomVariable, k2: &RandomVariable) -> Result<()> {
    space.check_len(k1.len())?;
    space.check_len(k2.len())?;
    if k1.values().iter().zip(k2.values()).any(|(a, b)| a > b) {
        return Err(Error::InvalidSpec("k1 must not exceed k2".into()));
    }
    Ok(())
}

/// Minimizes `E_p[X]` over `{E_q[K₂ − X] ≤ b, K₁ ≤ X ≤ K₂}`.
pub fn min_cost_test(
    space: &SampleSpace,
    p: &Density,
    q: &Density,
    b: f64,
    k1: &RandomVariable,
    k2: &RandomVariable,
) -> Result<RandomVariable> {
    space.check_len(p.len())?;
    space.check_len(q.len())?;
    check_box(space, k1, k2)?;
    if b < 0.0 {
        return Err(Error::InfeasibleBudget(b));
    }
    let mu = space.weights();
    let spread: Vec<f64> = k2
        .values()
        .iter()
        .zip(k1.values())
        .map(|(b, a)| b - a)
        .collect();
    let eq = dot3(mu, q.values(), &spread);
    if b >= eq {
        return Ok(k1.clone());
    }
    let ep = dot3(mu, p.values(), &spread);
    if !(ep > 0.0) {
        // E_p[X] does not depend on X; the upper bound is always feasible.
        return Ok(k2.clone());
    }
    let (p_hat, q_hat, level) = tilt_reduction(space, k1, k2, p, q, b)?;
    let test = most_powerful_test(space, &p_hat, &q_hat, level.clamp(0.0, 1.0))?;
    Ok(RandomVariable(
        (0..space.len())
            .map(|i| k2.values()[i] - spread[i] * test.test.values()[i])
            .collect(),
    ))
}

/// Maximizes `E_gain[X]` over `{E_cost[X] ≤ budget, K₁ ≤ X ≤ K₂}`.
pub fn max_gain_test(
    space: &SampleSpace,
    gain: &Density,
    cost: &Density,
    budget: f64,
    k1: &RandomVariable,
    k2: &RandomVariable,
) -> Result<RandomVariable> {
    space.check_len(gain.len())?;
    space.check_len(cost.len())?;
    check_box(space, k1, k2)?;
    let mu = space.weights();
    let spare = budget - dot3(mu, cost.values(), k1.values());
    if spare < -1e-12 {
        return Err(Error::InfeasibleBudget(spare));
    }
    let spread: Vec<f64> = k2
        .values()
        .iter()
        .zip(k1.values())
        .map(|(b, a)| b - a)
        .collect();
    let ec = dot3(mu, cost.values(), &spread);
    if spare >= ec {
        return Ok(k2.clone());
    }
    let eg = dot3(mu, gain.values(), &spread);
    if !(eg > 0.0) {
        return Ok(k1.clone());
    }
    let (g_hat, c_hat, level) = tilt_reduction(space, k1, k2, gain, cost, spare.max(0.0))?;
    let test = most_powerful_test(space, &g_hat, &c_hat, level.clamp(0.0, 1.0))?;
    Ok(RandomVariable(
        (0..space.len())
            .map(|i| k1.values()[i] + spread[i] * test.test.values()[i])
            .collect(),
    ))
}
