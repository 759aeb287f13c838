//! Brute-force and finite-difference checks, independent of the solver.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dot3, make_space, Density, RandomVariable, SampleSpace};
use crate::risk::{evaluate, supergradient, ConvexExpectation};
use crate::solver::{inner_minimum, solve, ProblemSpec, Solution, SolverOptions, LEVEL_SLACK};

/// Largest atom count [`grid_search`] accepts.
pub const GRID_MAX_ATOMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub x: RandomVariable,
    pub value: f64,
    /// The grid value exceeds the true optimum by at most this much.
    pub error_bound: f64,
}

/// Exhaustive search over the product grid on `[K₁, K₂]` with `steps` cells
/// per atom.
///
/// Since `ρ₁` is monotone and `ρ₂(K₂ − ·)` decreasing, only the largest
/// feasible grid value of the last atom matters for each choice of the
/// others; it is found by bisection. `ρ₂` is 1-Lipschitz in the sup norm, so
/// rounding the optimum down to the grid costs at most `max (K₂−K₁)/steps`.
pub fn grid_search(spec: &ProblemSpec, steps: usize) -> Result<GridOptimum> {
    let n = spec.len();
    if n > GRID_MAX_ATOMS {
        return Err(Error::TooLarge { atoms: n });
    }
    if steps == 0 {
        return Err(Error::InvalidSpec("grid needs at least one step".into()));
    }
    spec.validate()?;
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let cells: Vec<usize> = (0..n)
        .map(|i| if spec.pinned(i) { 0 } else { steps })
        .collect();
    let point = |i: usize, j: usize| -> f64 {
        if j == cells[i] {
            k2[i]
        } else {
            k1[i] + (k2[i] - k1[i]) * j as f64 / cells[i] as f64
        }
    };
    let feasible = |x: &[f64]| -> bool {
        evaluate(&spec.space, &spec.rho1, &RandomVariable(x.to_vec()))
            .is_ok_and(|v| v <= spec.alpha + LEVEL_SLACK)
    };
    let objective = |x: &[f64]| -> f64 {
        let y: Vec<f64> = k2.iter().zip(x).map(|(b, v)| b - v).collect();
        evaluate(&spec.space, &spec.rho2, &RandomVariable(y)).unwrap_or(f64::INFINITY)
    };

    let last = n - 1;
    let heads: usize = cells[..last].iter().map(|c| c + 1).product();
    let best = (0..heads)
        .into_par_iter()
        .filter_map(|code| {
            let mut x = vec![0.0; n];
            let mut rest = code;
            for i in 0..last {
                x[i] = point(i, rest % (cells[i] + 1));
                rest /= cells[i] + 1;
            }
            x[last] = point(last, 0);
            if !feasible(&x) {
                return None;
            }
            let (mut lo, mut hi) = (0, cells[last]);
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                x[last] = point(last, mid);
                if feasible(&x) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            x[last] = point(last, lo);
            Some((objective(&x), code, x))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let (value, _, x) = best.ok_or_else(|| {
        Error::InfeasibleSpec("no grid point satisfies the rho1 constraint".into())
    })?;
    let error_bound = (0..n)
        .filter(|&i| cells[i] > 0)
        .map(|i| (k2[i] - k1[i]) / cells[i] as f64)
        .fold(0.0, f64::max);
    Ok(GridOptimum {
        x: RandomVariable(x),
        value,
        error_bound,
    })
}

/// Largest gap between central differences of an entropic `ρ` at `x` and
/// `μ_i` times its supergradient density.
pub fn finite_diff_check(
    space: &SampleSpace,
    rho: &ConvexExpectation,
    x: &RandomVariable,
    h: f64,
) -> Result<f64> {
    if !matches!(rho, ConvexExpectation::Entropic { .. }) {
        return Err(Error::InvalidRisk(format!(
            "finite differences need a smooth family, got {}",
            rho.family()
        )));
    }
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::InvalidSpec(format!("step {h} outside [1e-8, 1e-4]")));
    }
    let grad = supergradient(space, rho, x)?;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut up = x.values().to_vec();
        let mut dn = up.clone();
        up[i] += h;
        dn[i] -= h;
        let diff = (evaluate(space, rho, &RandomVariable(up))?
            - evaluate(space, rho, &RandomVariable(dn))?)
            / (2.0 * h);
        worst = worst.max((diff - space.weights()[i] * grad.density.values()[i]).abs());
    }
    Ok(worst)
}

/// The two-atom version of the continuous appendix example, with atoms the
/// blocks `[0, (e−2)/(e−1)]` and `((e−2)/(e−1), 1]`.
pub fn example_61(alpha: f64) -> Result<ProblemSpec> {
    let a = (E - 2.0) / (E - 1.0);
    let space = make_space(&[a, 1.0 - a])?;
    let p = Density::new(&space, vec![(E + 1.0) / (E - 1.0), (3.0 - E) / (E - 1.0)])?;
    let rho1 = ConvexExpectation::linear(&space, p)?;
    let rho2 = ConvexExpectation::entropic(&space, space.base_density(), 1.0)?;
    ProblemSpec::new(
        space,
        rho1,
        rho2,
        RandomVariable::constant(2, 0.0),
        RandomVariable::constant(2, 1.0),
        alpha,
    )
}

/// Level stated with the example.
pub fn example_61_alpha() -> f64 {
    (3.0 - E) / (E - 1.0)
}

/// Level at which the example's claims are mutually consistent.
pub fn example_61_consistent_alpha() -> f64 {
    (3.0 - E) / ((E - 1.0) * (E - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub alpha: f64,
    pub claimed_x: RandomVariable,
    pub claimed_value: f64,
    /// `ρ₁` at the claimed test.
    pub claimed_rho1: f64,
    /// `α − ρ₁(claimed X*)`; positive means budget is left unused.
    pub claimed_slack: f64,
    /// `ρ₂` supergradient density at `1 − claimed X*`.
    pub q_density: Vec<f64>,
    /// Sup-norm distance of `q_density` from the stated `dQ*/dμ`.
    pub q_density_error: f64,
    pub grid: GridOptimum,
    pub solution: Solution,
    /// `E_{Q*}[1 − X*]` at the claimed test.
    pub classical_claimed: f64,
    /// `inf E_{Q*}[1 − X]` over the feasible set at level `alpha`.
    pub classical_optimum: f64,
    pub classical_claim_holds: bool,
    /// The level under which every claim holds.
    pub consistent_alpha: f64,
    /// Solver run at `consistent_alpha`.
    pub consistent_solution: Solution,
    pub flagged: bool,
    pub findings: Vec<String>,
}

/// Recomputes every claim of the appendix example on its two-atom
/// discretization and reports where they disagree.
pub fn audit_example_61() -> Result<AuditReport> {
    let alpha = example_61_alpha();
    let spec = example_61(alpha)?;
    let sp = &spec.space;
    let claimed_x = RandomVariable(vec![0.0, 1.0]);
    let loss = spec.k2.zip_with(&claimed_x, |b, x| b - x);
    let claimed_value = evaluate(sp, &spec.rho2, &loss)?;
    let claimed_rho1 = evaluate(sp, &spec.rho1, &claimed_x)?;
    let q = supergradient(sp, &spec.rho2, &loss)?;
    let stated = [E / (E - 1.0), 1.0 / (E - 1.0)];
    let q_density_error = q
        .density
        .values()
        .iter()
        .zip(stated)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let grid = grid_search(&spec, 400)?;
    let solution = solve(&spec, &SolverOptions::default())?;
    let classical_claimed = dot3(sp.weights(), q.density.values(), loss.values());
    let (classical_optimum, _) = inner_minimum(&spec, &q.density)?;
    let tol = 1e-9;
    let classical_claim_holds = (classical_claimed - classical_optimum).abs() <= tol;

    let consistent_alpha = example_61_consistent_alpha();
    let consistent_solution = solve(&example_61(consistent_alpha)?, &SolverOptions::default())?;

    let mut findings = Vec::new();
    if alpha - claimed_rho1 > tol {
        findings.push(format!(
            "claimed X* leaves slack: rho1(X*) = {claimed_rho1} < alpha = {alpha}"
        ));
    }
    if solution.beta < claimed_value - tol {
        findings.push(format!(
            "optimum {} beats the claimed value {claimed_value}",
            solution.beta
        ));
    }
    if !classical_claim_holds {
        findings.push(format!(
            "claimed X* is not Q*-optimal at level alpha: {classical_claimed} vs {classical_optimum}"
        ));
    }
    let consistent = (consistent_solution.beta - claimed_value).abs() <= 1e-6
        && consistent_solution
            .x_star
            .values()
            .iter()
            .zip(claimed_x.values())
            .all(|(a, b)| (a - b).abs() <= 1e-6);
    if consistent {
        findings.push(format!(
            "all claims hold at alpha = {consistent_alpha} instead"
        ));
    }
    Ok(AuditReport {
        alpha,
        claimed_x,
        claimed_value,
        claimed_rho1,
        claimed_slack: alpha - claimed_rho1,
        q_density: q.density.values().to_vec(),
        q_density_error,
        grid,
        solution,
        classical_claimed,
        classical_optimum,
        classical_claim_holds,
        consistent_alpha,
        consistent_solution,
        flagged: !findings.is_empty(),
        findings,
    })
}
