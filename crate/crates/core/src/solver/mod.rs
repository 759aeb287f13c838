//! Minimizing `ρ₂(K₂ − X)` over `{K₁ ≤ X ≤ K₂, ρ₁(X) ≤ α}`.
//!
//! [`solve`] runs the primal solve, extracts the representative pair
//! `(Q*, P*)`, reads off the threshold form of the optimal test and attaches
//! a [`CertificateReport`].

mod certify;
mod extract;
mod inner;
mod polish;
mod primal;
mod threshold;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{RandomVariable, SampleSpace};
use crate::risk::{evaluate, ConvexExpectation, Supergradient};

pub use crate::classical::tilt_reduction;
pub use certify::{verify_solution, CertificateReport, Residual};
pub use extract::{extract_p_star, extract_q_star, gamma_alpha};
pub use inner::inner_minimum;
pub use primal::{solve_primal, PrimalSolution};
pub use threshold::infer_threshold;

/// Slack allowed on the standing assumption `ρ₁(K₁) ≤ α ≤ ρ₁(K₂)`.
pub(crate) const LEVEL_SLACK: f64 = 1e-12;

/// Largest `γ_α` still treated as zero, whatever the requested tolerance.
const TRIVIAL_GAMMA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem")]
pub struct ProblemSpec {
    pub space: SampleSpace,
    pub rho1: ConvexExpectation,
    pub rho2: ConvexExpectation,
    pub k1: RandomVariable,
    pub k2: RandomVariable,
    pub alpha: f64,
}

#[derive(Deserialize)]
struct RawProblem {
    space: SampleSpace,
    rho1: ConvexExpectation,
    rho2: ConvexExpectation,
    k1: RandomVariable,
    k2: RandomVariable,
    alpha: f64,
}

impl TryFrom<RawProblem> for ProblemSpec {
    type Error = Error;

    fn try_from(raw: RawProblem) -> Result<Self> {
        ProblemSpec::new(raw.space, raw.rho1, raw.rho2, raw.k1, raw.k2, raw.alpha)
    }
}

impl ProblemSpec {
    pub fn new(
        space: SampleSpace,
        rho1: ConvexExpectation,
        rho2: ConvexExpectation,
        k1: RandomVariable,
        k2: RandomVariable,
        alpha: f64,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            space,
            rho1,
            rho2,
            k1,
            k2,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let space = &self.space;
        self.rho1.validate(space)?;
        self.rho2.validate(space)?;
        space.check_len(self.k1.len())?;
        space.check_len(self.k2.len())?;
        if !self.alpha.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "alpha = {} is not finite",
                self.alpha
            )));
        }
        let (k1, k2) = (self.k1.values(), self.k2.values());
        if k1.iter().chain(k2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("bounds must be finite".into()));
        }
        if let Some(i) = (0..k1.len()).find(|&i| k1[i] < 0.0 || k1[i] > k2[i]) {
            return Err(Error::InvalidSpec(format!(
                "need 0 <= k1 <= k2, violated at atom {i} (k1 = {}, k2 = {})",
                k1[i], k2[i]
            )));
        }
        if (0..k1.len()).all(|i| k1[i] == k2[i]) {
            return Err(Error::InvalidSpec("k1 = k2 on every atom".into()));
        }
        let lo = evaluate(space, &self.rho1, &self.k1)?;
        let hi = evaluate(space, &self.rho1, &self.k2)?;
        if self.alpha < lo - LEVEL_SLACK {
            return Err(Error::InfeasibleSpec(format!(
                "alpha = {} is below rho1(k1) = {lo}; the problem requires rho1(k1) <= alpha <= rho1(k2)",
                self.alpha
            )));
        }
        if self.alpha > hi + LEVEL_SLACK {
            return Err(Error::InvalidSpec(format!(
                "alpha = {} is above rho1(k2) = {hi}; the problem requires rho1(k1) <= alpha <= rho1(k2)",
                self.alpha
            )));
        }
        if generators_intersect(&self.rho1, &self.rho2) {
            log::warn!("the generating sets of rho1 and rho2 share a measure");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub(crate) fn pinned(&self, i: usize) -> bool {
        self.k1.values()[i] == self.k2.values()[i]
    }

    /// Relabels atoms so that new atom `j` is old atom `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> ProblemSpec {
        ProblemSpec {
            space: self.space.permuted(perm),
            rho1: self.rho1.permuted(perm),
            rho2: self.rho2.permuted(perm),
            k1: self.k1.permuted(perm),
            k2: self.k2.permuted(perm),
            alpha: self.alpha,
        }
    }
}

fn generators_intersect(a: &ConvexExpectation, b: &ConvexExpectation) -> bool {
    let (Some(ga), Some(gb)) = (a.generators(), b.generators()) else {
        return match (a, b) {
            (
                ConvexExpectation::Entropic { base: x, .. },
                ConvexExpectation::Entropic { base: y, .. },
            ) => x == y,
            _ => false,
        };
    };
    ga.iter().any(|g| {
        gb.iter().any(|h| {
            g.density
                .values()
                .iter()
                .zip(h.density.values())
                .all(|(x, y)| (x - y).abs() <= 1e-12)
        })
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Auto,
    /// Epigraph linear program; both functionals must be polyhedral.
    Lp,
    /// Cutting-plane outer approximation; any families.
    Subgradient,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Auto => "auto",
            Strategy::Lp => "lp",
            Strategy::Subgradient => "subgradient",
        }
    }

    /// The strategy [`Strategy::Auto`] picks for `spec`.
    pub fn resolve(self, spec: &ProblemSpec) -> Result<Strategy> {
        let polyhedral = spec.rho1.is_polyhedral() && spec.rho2.is_polyhedral();
        match self {
            Strategy::Auto if polyhedral => Ok(Strategy::Lp),
            Strategy::Auto => Ok(Strategy::Subgradient),
            Strategy::Lp if !polyhedral => Err(Error::StrategyUnavailable("lp".into())),
            s => Ok(s),
        }
    }

    /// Certificate tolerance used when none is requested.
    pub fn default_tol(self) -> f64 {
        match self {
            Strategy::Lp => 1e-6,
            _ => 1e-4,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Strategy::Auto),
            "lp" => Ok(Strategy::Lp),
            "subgradient" => Ok(Strategy::Subgradient),
            other => Err(Error::InvalidSpec(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub strategy: Strategy,
    /// Certificate tolerance; `None` uses [`Strategy::default_tol`].
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Recorded for reproducibility. The solver itself is deterministic.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            strategy: Strategy::Auto,
            tol: None,
            max_iters: 2000,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn tol_for(&self, strategy: Strategy) -> f64 {
        self.tol.unwrap_or_else(|| strategy.default_tol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x_star: RandomVariable,
    pub beta: f64,
    pub gamma_alpha: f64,
    pub q_star: Supergradient,
    /// Absent when `γ_α` vanishes.
    pub p_star: Option<Supergradient>,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub z: f64,
    pub boundary_values: BTreeMap<usize, f64>,
    pub certificates: CertificateReport,
    pub strategy: Strategy,
    pub iterations: usize,
    /// Upper minus lower bound on the optimal value when the solver stopped.
    pub gap: f64,
    pub tol: f64,
}

impl Solution {
    /// Accuracy the solver vouches for: its stopping gap, floored at the
    /// strategy's resolution.
    pub fn certified_accuracy(&self) -> f64 {
        let floor = match self.strategy {
            Strategy::Lp => primal::LP_RESOLUTION,
            _ => primal::CUT_RESOLUTION,
        };
        self.gap.max(floor)
    }
}

pub(crate) fn trivial_gamma(tol: f64) -> f64 {
    tol.min(TRIVIAL_GAMMA)
}

/// Full pipeline: primal, `Q*`, `γ_α`, `P*`, threshold and certificates.
pub fn solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<Solution> {
    spec.validate()?;
    let primal = solve_primal(spec, opts)?;
    let tol = opts.tol_for(primal.strategy);
    let x_star = primal.x.clone();

    let q_star = match &primal.q_star {
        Some(q) => q.clone(),
        None => extract_q_star(spec, &x_star)?,
    };
    let gamma = gamma_alpha(spec, &q_star, &x_star, tol)?;
    let p_star = if gamma > trivial_gamma(tol) {
        let p = match &primal.p_star {
            Some(p) => p.clone(),
            None => extract_p_star(spec, &q_star, gamma, &x_star, tol)?,
        };
        Some(p)
    } else {
        None
    };
    let (z, boundary_values) = match &p_star {
        Some(p) => infer_threshold(spec, &x_star, &q_star.density, &p.density, tol)?,
        None => threshold::trivial_threshold(spec, &x_star, &q_star.density),
    };

    let mut solution = Solution {
        x_star,
        beta: primal.value,
        gamma_alpha: gamma,
        q_star,
        p_star,
        z,
        boundary_values,
        certificates: CertificateReport::default(),
        strategy: primal.strategy,
        iterations: primal.iterations,
        gap: primal.gap,
        tol,
    };
    solution.certificates = verify_solution(spec, &solution, tol);
    Ok(solution)
}
