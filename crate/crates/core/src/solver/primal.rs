use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolution, Relation};
use crate::measure::{dot3, Density, RandomVariable};
use crate::risk::{evaluate, penalty, supergradient, ConvexExpectation, Supergradient};

use super::inner::inner_minimum;
use super::polish::polish;
use super::{ProblemSpec, SolverOptions, Strategy, LEVEL_SLACK};

/// Smallest gap the epigraph LP claims.
pub(crate) const LP_RESOLUTION: f64 = 1e-12;
/// Cutting planes stop once the bound gap is below this.
pub(crate) const CUT_RESOLUTION: f64 = 1e-10;

/// Relative distance to a bound below which a coordinate is put on the bound.
const SNAP: f64 = 1e-9;
/// Cuts closer than this (sup norm on density and offset) are duplicates.
const CUT_DEDUP: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub x: RandomVariable,
    pub value: f64,
    pub strategy: Strategy,
    pub iterations: usize,
    pub gap: f64,
    /// Measures read from LP multipliers, when the strategy produced them.
    pub q_star: Option<Supergradient>,
    pub p_star: Option<Supergradient>,
}

/// `(X*, β)` together with solver bookkeeping.
pub fn solve_primal(spec: &ProblemSpec, opts: &SolverOptions) -> Result<PrimalSolution> {
    spec.validate()?;
    let strategy = opts.strategy.resolve(spec)?;
    let tol = opts.tol_for(strategy);
    let sp = &spec.space;

    if evaluate(sp, &spec.rho1, &spec.k2)? <= spec.alpha + LEVEL_SLACK {
        let zero = RandomVariable::constant(spec.len(), 0.0);
        return Ok(PrimalSolution {
            x: spec.k2.clone(),
            value: evaluate(sp, &spec.rho2, &zero)?,
            strategy,
            iterations: 0,
            gap: 0.0,
            q_star: None,
            p_star: None,
        });
    }

    let zero = RandomVariable::constant(spec.len(), 0.0);
    let mut cuts = CutSet {
        rho2: Vec::new(),
        rho1: Vec::new(),
        floor: evaluate(sp, &spec.rho2, &zero)? - 1.0,
    };
    if strategy == Strategy::Lp {
        for g in spec.rho2.generators().unwrap_or_default() {
            cuts.rho2.push(Cut::new(g.density, g.penalty));
        }
        for g in spec.rho1.generators().unwrap_or_default() {
            cuts.rho1.push(Cut::new(g.density, g.penalty));
        }
        let sol = master(spec, &cuts)?;
        let x = snap(spec, &sol.x[..spec.len()])?;
        let value = evaluate(sp, &spec.rho2, &upper_minus(spec, &x))?;
        let (q_star, p_star) = multipliers(spec, &cuts.rho2, &cuts.rho1, &sol);
        return Ok(PrimalSolution {
            gap: (value - sol.objective).abs(),
            x,
            value,
            strategy,
            iterations: 1,
            q_star,
            p_star,
        });
    }

    cuts.add_at(spec, &spec.k1)?;
    cuts.add_at(spec, &spec.k2)?;
    let mut best_x = spec.k1.clone();
    let mut best = evaluate(sp, &spec.rho2, &upper_minus(spec, &spec.k1))?;
    let mut lower = f64::NEG_INFINITY;
    let mut last = None;
    let mut iterations = 0;
    let mut done = None;
    while iterations < opts.max_iters {
        iterations += 1;
        let sol = match master(spec, &cuts) {
            Ok(sol) => sol,
            // A degenerate master late in the run: keep the incumbent.
            Err(e) if iterations > 1 => {
                log::debug!("cutting planes: master stopped: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        lower = lower.max(sol.objective);
        let xk = clamp(spec, &sol.x[..spec.len()]);
        last = Some((sol, cuts.rho2.len(), cuts.rho1.len()));

        let repaired = repair(spec, &xk)?;
        let value = evaluate(sp, &spec.rho2, &upper_minus(spec, &repaired))?;
        if value < best {
            best = value;
            best_x = repaired.clone();
        }
        let scale = 1.0 + best.abs();
        if best - lower <= CUT_RESOLUTION * scale {
            break;
        }
        // The active set usually settles long before the Kelley bounds
        // meet; Newton plus the exact dual bound then certify directly.
        let c = finish(spec, &cuts, &last, &best_x, best, lower)?;
        if c.value - c.lower <= CUT_RESOLUTION * scale {
            done = Some(c);
            break;
        }
        let before = cuts.len();
        cuts.add_at(spec, &xk)?;
        cuts.add_at(spec, &repaired)?;
        if cuts.len() == before {
            break;
        }
    }
    log::debug!(
        "cutting planes: {iterations} iterations, {} cuts",
        cuts.len()
    );

    let c = match done {
        Some(c) => c,
        None => finish(spec, &cuts, &last, &best_x, best, lower)?,
    };
    let gap = (c.value - c.lower).max(0.0);
    if gap > tol {
        return Err(Error::NoConvergence { iterations, gap });
    }
    Ok(PrimalSolution {
        x: c.x,
        value: c.value,
        strategy,
        iterations,
        gap,
        q_star: c.q_star,
        p_star: c.p_star,
    })
}

struct Candidate {
    x: RandomVariable,
    value: f64,
    lower: f64,
    q_star: Option<Supergradient>,
    p_star: Option<Supergradient>,
}

/// Polishes the incumbent on the active set of the last master and bounds
/// it from below by weak duality.
fn finish(
    spec: &ProblemSpec,
    cuts: &CutSet,
    last: &Option<(LpSolution, usize, usize)>,
    best_x: &RandomVariable,
    best: f64,
    mut lower: f64,
) -> Result<Candidate> {
    let sp = &spec.space;
    let mut x = snap(spec, best_x.values())?;
    let (mut q_star, mut p_star) = (None, None);
    if let Some((sol, m2, m1)) = last {
        let (rho2_cuts, rho1_cuts) = (&cuts.rho2[..*m2], &cuts.rho1[..*m1]);
        let m2 = *m2;
        let lambda: Vec<f64> = sol.duals[..m2].iter().map(|d| d.max(0.0)).collect();
        let nu: Vec<f64> = sol.duals[m2..].iter().map(|d| (-d).max(0.0)).collect();
        if spec.rho2.is_polyhedral() {
            q_star = mixture(spec, rho2_cuts, &lambda);
        }
        if spec.rho1.is_polyhedral() {
            p_star = mixture(spec, rho1_cuts, &nu);
        }
        let lambda0 = per_generator(&spec.rho2, rho2_cuts, &lambda);
        let nu0 = match spec.rho1.generators() {
            Some(_) => per_generator(&spec.rho1, rho1_cuts, &nu),
            None => vec![nu.iter().sum()],
        };
        if let Some(p) = polish(spec, &x, &lambda0, &nu0) {
            let v = evaluate(sp, &spec.rho2, &upper_minus(spec, &p.x))?;
            if v <= best + CUT_RESOLUTION {
                x = p.x;
                q_star = p.q_star;
                p_star = p.p_star;
            }
        }
    }
    let value = evaluate(sp, &spec.rho2, &upper_minus(spec, &x))?;

    // Weak duality: any Q gives min_{X_α} E_Q[K₂ − X] − ρ₂*(Q) ≤ β.
    let q_bound = match &q_star {
        Some(q) => q.clone(),
        None => supergradient(sp, &spec.rho2, &upper_minus(spec, &x))?,
    };
    let dual =
        inner_minimum(spec, &q_bound.density)?.0 - penalty(sp, &spec.rho2, &q_bound.density)?;
    if dual.is_finite() {
        lower = lower.max(dual);
    }
    Ok(Candidate {
        x,
        value,
        lower,
        q_star,
        p_star,
    })
}

/// Multiplier mass on each generator of a polyhedral `rho`, summed over the
/// cut rows that reproduce it.
fn per_generator(rho: &ConvexExpectation, cuts: &[Cut], weights: &[f64]) -> Vec<f64> {
    let Some(generators) = rho.generators() else {
        return Vec::new();
    };
    generators
        .iter()
        .map(|g| {
            cuts.iter()
                .zip(weights)
                .filter(|(c, _)| c.density == g.density.values() && c.offset == g.penalty)
                .map(|(_, w)| w)
                .sum()
        })
        .collect()
}

pub(crate) fn upper_minus(spec: &ProblemSpec, x: &RandomVariable) -> RandomVariable {
    spec.k2.zip_with(x, |b, x| b - x)
}

/// Supporting hyperplane `E_Q[·] − c` of a convex expectation.
#[derive(Debug, Clone)]
struct Cut {
    density: Vec<f64>,
    offset: f64,
}

impl Cut {
    fn new(density: Density, offset: f64) -> Self {
        Cut {
            density: density.values().to_vec(),
            offset,
        }
    }

    fn same(&self, other: &Cut) -> bool {
        (self.offset - other.offset).abs() <= CUT_DEDUP
            && self
                .density
                .iter()
                .zip(&other.density)
                .all(|(a, b)| (a - b).abs() <= CUT_DEDUP)
    }
}

#[derive(Debug)]
struct CutSet {
    rho2: Vec<Cut>,
    rho1: Vec<Cut>,
    floor: f64,
}

impl CutSet {
    fn len(&self) -> usize {
        self.rho2.len() + self.rho1.len()
    }

    fn push(list: &mut Vec<Cut>, cut: Cut) {
        if !list.iter().any(|c| c.same(&cut)) {
            list.push(cut);
        }
    }

    /// Adds the supporting hyperplanes of `ρ₂(K₂ − ·)` and `ρ₁` at `x`.
    fn add_at(&mut self, spec: &ProblemSpec, x: &RandomVariable) -> Result<()> {
        Self::push(
            &mut self.rho2,
            tangent(spec, &spec.rho2, &upper_minus(spec, x))?,
        );
        Self::push(&mut self.rho1, tangent(spec, &spec.rho1, x)?);
        Ok(())
    }
}

fn tangent(spec: &ProblemSpec, rho: &ConvexExpectation, y: &RandomVariable) -> Result<Cut> {
    let sp = &spec.space;
    let sg = supergradient(sp, rho, y)?;
    let offset = match rho {
        ConvexExpectation::Entropic { .. } => {
            dot3(sp.weights(), sg.density.values(), y.values()) - evaluate(sp, rho, y)?
        }
        _ => sg.penalty,
    };
    Ok(Cut::new(sg.density, offset))
}

/// Master LP over `(X, t)`: minimize `t` subject to the `ρ₂` cuts
/// `t ≥ E_Q[K₂ − X] − c` and the `ρ₁` cuts `E_P[X] − d ≤ α`.
fn master(spec: &ProblemSpec, cuts: &CutSet) -> Result<LpSolution> {
    let n = spec.len();
    let mu = spec.space.weights();
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for i in 0..n {
        lp.set_bounds(i, k1[i], k2[i]);
    }
    // Monotonicity gives ρ₂(K₂ − X) ≥ ρ₂(0) on the box.
    lp.set_bounds(n, cuts.floor, f64::INFINITY);
    for c in &cuts.rho2 {
        let mut row: Vec<f64> = (0..n).map(|i| mu[i] * c.density[i]).collect();
        row.push(1.0);
        lp.add_constraint(row, Relation::Ge, dot3(mu, &c.density, k2) - c.offset);
    }
    for c in &cuts.rho1 {
        let mut row: Vec<f64> = (0..n).map(|i| mu[i] * c.density[i]).collect();
        row.push(0.0);
        lp.add_constraint(row, Relation::Le, spec.alpha + c.offset);
    }
    lp.solve()
}

/// Reads `Q*` and `P*` off the master multipliers.
fn multipliers(
    spec: &ProblemSpec,
    rho2: &[Cut],
    rho1: &[Cut],
    sol: &LpSolution,
) -> (Option<Supergradient>, Option<Supergradient>) {
    let m2 = rho2.len();
    let lambda: Vec<f64> = sol.duals[..m2].iter().map(|d| d.max(0.0)).collect();
    let nu: Vec<f64> = sol.duals[m2..].iter().map(|d| (-d).max(0.0)).collect();
    (mixture(spec, rho2, &lambda), mixture(spec, rho1, &nu))
}

fn mixture(spec: &ProblemSpec, cuts: &[Cut], weights: &[f64]) -> Option<Supergradient> {
    let total: f64 = weights.iter().sum();
    if !(total > 1e-12) {
        return None;
    }
    let mut density = vec![0.0; spec.len()];
    let mut penalty = 0.0;
    for (c, w) in cuts.iter().zip(weights) {
        let w = w / total;
        for (d, v) in density.iter_mut().zip(&c.density) {
            *d += w * v;
        }
        penalty += w * c.offset;
    }
    Some(Supergradient {
        density: Density(density),
        penalty,
    })
}

fn clamp(spec: &ProblemSpec, x: &[f64]) -> RandomVariable {
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    RandomVariable((0..x.len()).map(|i| x[i].clamp(k1[i], k2[i])).collect())
}

/// Pulls `x` toward `K₁` until `ρ₁(x) ≤ α`, then spends any leftover slack
/// by shifting up (capped at `K₂`).
fn repair(spec: &ProblemSpec, x: &RandomVariable) -> Result<RandomVariable> {
    let sp = &spec.space;
    let feasible = |y: &RandomVariable| -> Result<bool> {
        Ok(evaluate(sp, &spec.rho1, y)? <= spec.alpha + LEVEL_SLACK)
    };
    let along = |s: f64| spec.k1.zip_with(x, |a, b| a + s * (b - a));
    let mut y = if feasible(x)? {
        x.clone()
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if feasible(&along(mid))? {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON {
                break;
            }
        }
        along(lo)
    };
    for _ in 0..50 {
        let slack = spec.alpha - evaluate(sp, &spec.rho1, &y)?;
        if slack <= 0.0 {
            break;
        }
        let next = y.zip_with(&spec.k2, |v, b| (v + slack).min(b));
        if next == y || !feasible(&next)? {
            break;
        }
        y = next;
    }
    Ok(y)
}

/// Moves coordinates within [`SNAP`] of a bound onto it, unless that breaks
/// feasibility.
fn snap(spec: &ProblemSpec, x: &[f64]) -> Result<RandomVariable> {
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let raw = clamp(spec, x);
    let snapped = RandomVariable(
        raw.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let eps = SNAP * (k2[i] - k1[i]).max(1.0);
                if k2[i] - v <= eps {
                    k2[i]
                } else if v - k1[i] <= eps {
                    k1[i]
                } else {
                    v
                }
            })
            .collect(),
    );
    if evaluate(&spec.space, &spec.rho1, &snapped)? <= spec.alpha + SNAP {
        Ok(snapped)
    } else {
        Ok(raw)
    }
}
