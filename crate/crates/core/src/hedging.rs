//! Shortfall-risk hedging in a one-period market with one risky asset.
//!
//! With a budget below the superhedging price, minimizing `ρ((H − X_T)⁺)`
//! over `0 ≤ X_T ≤ H` subject to `sup_P E_P[X_T] ≤ X̃₀` is an instance of the
//! testing problem with `ρ₁` the worst case over martingale measures.

use serde::{Deserialize, Serialize};

use crate::classical::{ratio, ratio_groups, round_ratio};
use crate::error::{Error, Result};
use crate::measure::{dot3, Density, RandomVariable, SampleSpace};
use crate::risk::{evaluate, ConvexExpectation};
use crate::solver::{solve, ProblemSpec, Solution, SolverOptions};

/// Agreement required between the price and the strategy LP.
const DUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketSpec {
    pub space: SampleSpace,
    /// Discounted initial price.
    pub s0: f64,
    /// Discounted terminal prices.
    pub st: RandomVariable,
    pub claim: RandomVariable,
    pub budget: f64,
    pub rho: ConvexExpectation,
}

#[derive(Deserialize)]
struct RawMarket {
    space: SampleSpace,
    s0: f64,
    st: RandomVariable,
    claim: RandomVariable,
    budget: f64,
    rho: ConvexExpectation,
}

impl TryFrom<RawMarket> for MarketSpec {
    type Error = Error;

    fn try_from(r: RawMarket) -> Result<Self> {
        MarketSpec::new(r.space, r.s0, r.st, r.claim, r.budget, r.rho)
    }
}

impl MarketSpec {
    pub fn new(
        space: SampleSpace,
        s0: f64,
        st: RandomVariable,
        claim: RandomVariable,
        budget: f64,
        rho: ConvexExpectation,
    ) -> Result<Self> {
        let market = MarketSpec {
            space,
            s0,
            st,
            claim,
            budget,
            rho,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.check_len(self.st.len())?;
        self.space.check_len(self.claim.len())?;
        self.rho.validate(&self.space)?;
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "s0 = {} must be positive",
                self.s0
            )));
        }
        if self
            .st
            .values()
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidSpec(
                "terminal prices must be finite and >= 0".into(),
            ));
        }
        if self
            .claim
            .values()
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidSpec("claim must be finite and >= 0".into()));
        }
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "budget = {} must be >= 0",
                self.budget
            )));
        }
        let (min, max) = (self.st.min(), self.st.max());
        let flat = min == max && min == self.s0;
        if !flat && !(min < self.s0 && self.s0 < max) {
            return Err(Error::NoEmm {
                s0: self.s0,
                min,
                max,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    fn moves(&self) -> Vec<f64> {
        self.st.values().iter().map(|s| s - self.s0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeResult {
    /// Superhedging price of the claim.
    pub u0: f64,
    /// Modified claim `X_T*`.
    pub xt_star: RandomVariable,
    /// Threshold in the convention `X_T* = H` on `{z H_{Q*} > G_{P*}}`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub z: f64,
    /// Fraction of `H` paid on `{z H_{Q*} = G_{P*}}`.
    pub b: f64,
    /// Initial capital of the superhedge of `X_T*`.
    pub x0: f64,
    /// Risky-asset holding of the superhedge of `X_T*`.
    pub h: f64,
    /// `ρ((H − X_T*)⁺)`.
    pub shortfall_risk: f64,
    /// The budget covers the superhedge of `H` itself.
    pub full_hedge: bool,
    /// Largest disagreement between `(z, b)` and the solver's test.
    pub threshold_deviation: f64,
    pub solution: Option<Solution>,
    pub flags: Vec<String>,
}

/// Vertices of the closed set of martingale densities: point masses on
/// atoms with `S_T = s0` and two-atom mixtures straddling `s0`.
pub fn emm_vertices(market: &MarketSpec) -> Result<Vec<Density>> {
    market.validate()?;
    let sp = &market.space;
    let mu = sp.weights();
    let d = market.moves();
    let n = market.len();
    let mut out: Vec<Density> = Vec::new();
    let mut push = |v: Density| {
        let dup = out.iter().any(|w| {
            w.values()
                .iter()
                .zip(v.values())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
        });
        if !dup {
            out.push(v);
        }
    };
    for i in 0..n {
        if d[i] == 0.0 {
            push(Density::point_mass(sp, i));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if d[i] < 0.0 && d[j] > 0.0 {
                let qj = -d[i] / (d[j] - d[i]);
                let mut v = vec![0.0; n];
                v[i] = (1.0 - qj) / mu[i];
                v[j] = qj / mu[j];
                push(Density(v));
            }
        }
    }
    Ok(out)
}

/// `max_P E_P[x]` over the martingale vertices, checked against the cost of
/// the cheapest superhedge.
pub fn superhedge_price(market: &MarketSpec, x: &RandomVariable) -> Result<f64> {
    market.space.check_len(x.len())?;
    let mu = market.space.weights();
    let price = emm_vertices(market)?
        .iter()
        .map(|v| dot3(mu, v.values(), x.values()))
        .fold(f64::NEG_INFINITY, f64::max);
    let (x0, _) = superhedge_strategy(market, x)?;
    if (price - x0).abs() > DUALITY_TOL * (1.0 + price.abs()) {
        return Err(Error::DualityGap {
            primal: x0,
            dual: price,
        });
    }
    Ok(price)
}

/// Cheapest `(x0, h)` with `x0 + h (S_T − s0) ≥ x` on every atom; among
/// minimizers the smallest `|h|`.
pub fn superhedge_strategy(market: &MarketSpec, x: &RandomVariable) -> Result<(f64, f64)> {
    market.validate()?;
    market.space.check_len(x.len())?;
    let d = market.moves();
    let x = x.values();
    let n = x.len();
    let cost = |h: f64| {
        (0..n)
            .map(|i| x[i] - h * d[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };

    // The cost is a convex polygonal function of h; its minimizers lie
    // between breakpoints, and h = 0 is the smallest |h| when it is optimal.
    let mut candidates = vec![0.0];
    for i in 0..n {
        for j in i + 1..n {
            if d[i] != d[j] {
                candidates.push((x[j] - x[i]) / (d[j] - d[i]));
            }
        }
    }
    let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let best = candidates
        .iter()
        .map(|&h| cost(h))
        .fold(f64::INFINITY, f64::min);
    let h = candidates
        .into_iter()
        .filter(|&h| cost(h) <= best + 1e-12 * scale)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    Ok((cost(h), h))
}

/// Solves the budget-constrained shortfall problem.
pub fn solve_shortfall(market: &MarketSpec, opts: &SolverOptions) -> Result<HedgeResult> {
    market.validate()?;
    let sp = &market.space;
    let vertices = emm_vertices(market)?;
    let u0 = superhedge_price(market, &market.claim)?;
    let zero = RandomVariable::constant(market.len(), 0.0);

    if market.budget >= u0 {
        let (x0, h) = superhedge_strategy(market, &market.claim)?;
        return Ok(HedgeResult {
            u0,
            xt_star: market.claim.clone(),
            z: f64::INFINITY,
            b: 0.0,
            x0,
            h,
            shortfall_risk: evaluate(sp, &market.rho, &zero)?,
            full_hedge: true,
            threshold_deviation: 0.0,
            solution: None,
            flags: Vec::new(),
        });
    }

    let spec = ProblemSpec::new(
        sp.clone(),
        ConvexExpectation::sublinear(sp, vertices)?,
        market.rho.clone(),
        zero,
        market.claim.clone(),
        market.budget,
    )?;
    let solution = solve(&spec, opts)?;
    let xt = solution.x_star.clone();
    let (x0, h) = superhedge_strategy(market, &xt)?;
    let shortfall_risk = evaluate(
        sp,
        &market.rho,
        &market.claim.zip_with(&xt, |a, b| (a - b).max(0.0)),
    )?;

    let mut flags = Vec::new();
    let (z, b, threshold_deviation) = match &solution.p_star {
        None => {
            flags.push("gamma_alpha vanishes; P* is not defined".to_string());
            (f64::INFINITY, 0.0, 0.0)
        }
        Some(p) => {
            let g = p.density.values();
            let hq = solution.q_star.density.values();
            let paid = dot3(sp.weights(), g, market.claim.values());
            if paid <= 0.0 {
                flags.push("E_P*[H] = 0; the threshold formulas degenerate".to_string());
                (f64::INFINITY, 0.0, 0.0)
            } else {
                let split = threshold_split(market, g, hq, solution.tol);
                let dev = split.deviation(market, g, xt.values());
                if dev > solution.tol {
                    flags.push(format!(
                        "threshold (z, B) disagrees with the solved X_T* by {dev:e}"
                    ));
                }
                (split.z, split.b, dev)
            }
        }
    };

    Ok(HedgeResult {
        u0,
        xt_star: xt,
        z,
        b,
        x0,
        h,
        shortfall_risk,
        full_hedge: false,
        threshold_deviation,
        solution: Some(solution),
        flags,
    })
}

struct Split {
    z: f64,
    b: f64,
    /// Per atom: ratio `G/H_Q` compared with `z`.
    side: Vec<std::cmp::Ordering>,
}

/// `z = sup{z̃ : ∫_{z̃ H_Q > G} H dP* ≤ X̃₀}` and the boundary fraction `B`.
fn threshold_split(market: &MarketSpec, g: &[f64], hq: &[f64], tol: f64) -> Split {
    use std::cmp::Ordering;
    let mu = market.space.weights();
    let claim = market.claim.values();
    let n = claim.len();
    let live: Vec<usize> = (0..n).filter(|&i| claim[i] > 0.0).collect();
    let ratios: Vec<f64> = (0..n).map(|i| ratio(g[i], hq[i])).collect();
    let cost = |i: usize| mu[i] * g[i] * claim[i];

    let live_ratios: Vec<f64> = live.iter().map(|&i| ratios[i]).collect();
    let mut groups = ratio_groups(&live_ratios);
    groups.reverse();
    let mut key = f64::INFINITY;
    let mut z = f64::INFINITY;
    let mut spent = 0.0;
    for (r, members) in &groups {
        if r.is_infinite() {
            break;
        }
        let c: f64 = members.iter().map(|&k| cost(live[k])).sum();
        if spent + c > market.budget + tol {
            key = *r;
            z = ratios[live[members[0]]];
            break;
        }
        spent += c;
    }
    // Group keys are rounded ratios; compare on the same footing.
    let side: Vec<Ordering> = (0..n)
        .map(|i| round_ratio(ratios[i]).total_cmp(&key))
        .collect();
    let region: f64 = live
        .iter()
        .filter(|&&i| side[i] == Ordering::Less)
        .map(|&i| cost(i))
        .sum();
    let boundary: f64 = live
        .iter()
        .filter(|&&i| side[i] == Ordering::Equal)
        .map(|&i| cost(i))
        .sum();
    let b = if boundary > 0.0 {
        ((market.budget - region) / boundary).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Split { z, b, side }
}

impl Split {
    /// Off the boundary `X_T*` must be `H` or `0`; on it, the `P*`-cost of
    /// `X_T*` must equal `B ∫ H dP*`.
    fn deviation(&self, market: &MarketSpec, g: &[f64], x: &[f64]) -> f64 {
        use std::cmp::Ordering;
        let mu = market.space.weights();
        let claim = market.claim.values();
        let mut worst: f64 = 0.0;
        let (mut paid, mut full) = (0.0, 0.0);
        for i in 0..x.len() {
            match self.side[i] {
                Ordering::Less => worst = worst.max((x[i] - claim[i]).abs()),
                Ordering::Greater => worst = worst.max(x[i].abs()),
                Ordering::Equal => {
                    paid += mu[i] * g[i] * x[i];
                    full += mu[i] * g[i] * claim[i];
                }
            }
        }
        worst.max((paid - self.b * full).abs())
    }
}
