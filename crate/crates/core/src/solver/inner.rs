use crate::classical::max_gain_test;
use crate::error::Result;
use crate::lp::{LinearProgram, Relation};
use crate::measure::{dot3, Density, RandomVariable};
use crate::risk::{evaluate, ConvexExpectation};

use super::{ProblemSpec, LEVEL_SLACK};

/// `min E_Q[K₂ − X]` over `{K₁ ≤ X ≤ K₂, ρ₁(X) ≤ α}` and a minimizer.
///
/// Exact for every family: a classical test for linear `ρ₁`, a linear
/// program for finitely generated `ρ₁`, and the KKT system of the
/// exponential constraint for entropic `ρ₁`.
pub fn inner_minimum(spec: &ProblemSpec, q: &Density) -> Result<(f64, RandomVariable)> {
    let sp = &spec.space;
    sp.check_len(q.len())?;
    let x = match &spec.rho1 {
        ConvexExpectation::Linear { base } => {
            max_gain_test(sp, q, base, spec.alpha, &spec.k1, &spec.k2)?
        }
        ConvexExpectation::FinitelyGenerated { generators } => {
            let n = spec.len();
            let mu = sp.weights();
            let mut lp = LinearProgram::new((0..n).map(|i| -mu[i] * q.values()[i]).collect());
            for i in 0..n {
                lp.set_bounds(i, spec.k1.values()[i], spec.k2.values()[i]);
            }
            for g in generators {
                let row = (0..n).map(|i| mu[i] * g.density.values()[i]).collect();
                lp.add_constraint(row, Relation::Le, spec.alpha + g.penalty);
            }
            let sol = lp.solve()?;
            RandomVariable(
                sol.x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.clamp(spec.k1.values()[i], spec.k2.values()[i]))
                    .collect(),
            )
        }
        ConvexExpectation::Entropic { base, theta } => entropic_inner(spec, q, base, *theta)?,
    };
    let value = dot3(sp.weights(), q.values(), spec.k2.values())
        - dot3(sp.weights(), q.values(), x.values());
    Ok((value, x))
}

/// Maximizes `E_Q[X]` over the box under `(1/θ) ln E_B[e^{θX}] ≤ α`.
///
/// Stationarity gives `X_i = (ln q_i − ln b_i − L)/θ` clipped to the box,
/// and the constraint is monotone in `L`, so `L` is found by bisection.
fn entropic_inner(
    spec: &ProblemSpec,
    q: &Density,
    base: &Density,
    theta: f64,
) -> Result<RandomVariable> {
    let sp = &spec.space;
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let (q, b) = (q.values(), base.values());
    let at = |level: f64| -> RandomVariable {
        RandomVariable(
            (0..k1.len())
                .map(|i| {
                    if b[i] == 0.0 {
                        k2[i]
                    } else if q[i] == 0.0 {
                        k1[i]
                    } else {
                        ((q[i].ln() - b[i].ln() - level) / theta).clamp(k1[i], k2[i])
                    }
                })
                .collect(),
        )
    };
    let feasible =
        |x: &RandomVariable| -> Result<bool> { Ok(evaluate(sp, &spec.rho1, x)? <= spec.alpha) };

    let free: Vec<usize> = (0..k1.len())
        .filter(|&i| b[i] > 0.0 && q[i] > 0.0)
        .collect();
    if free.is_empty() {
        return Ok(at(0.0));
    }
    let log_ratio = |i: usize| q[i].ln() - b[i].ln();
    let mut lo = free
        .iter()
        .map(|&i| log_ratio(i) - theta * k2[i])
        .fold(f64::INFINITY, f64::min);
    let mut hi = free
        .iter()
        .map(|&i| log_ratio(i) - theta * k1[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let top = at(lo - 1.0);
    if feasible(&top)? {
        return Ok(top);
    }
    let floor = at(hi + 1.0);
    if !feasible(&floor)? {
        // Only possible within the slack allowed on ρ₁(K₁) ≤ α.
        debug_assert!(evaluate(sp, &spec.rho1, &floor)? <= spec.alpha + LEVEL_SLACK);
        return Ok(floor);
    }
    hi += 1.0;
    lo -= 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(&at(mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(at(hi))
}
