use crate::classical::min_cost_test;
use crate::error::{Error, Result};
use crate::measure::{dot3, RandomVariable};
use crate::risk::{supergradient, Supergradient};

use super::inner::inner_minimum;
use super::primal::upper_minus;
use super::{trivial_gamma, ProblemSpec};

/// `Q*` as the supergradient of `ρ₂` at `K₂ − X*`.
pub fn extract_q_star(spec: &ProblemSpec, x_star: &RandomVariable) -> Result<Supergradient> {
    supergradient(&spec.space, &spec.rho2, &upper_minus(spec, x_star))
}

/// `γ_α = min E_{Q*}[K₂ − X]` over the feasible set, checked against
/// `E_{Q*}[K₂ − X*]`.
pub fn gamma_alpha(
    spec: &ProblemSpec,
    q_star: &Supergradient,
    x_star: &RandomVariable,
    tol: f64,
) -> Result<f64> {
    let (gamma, _) = inner_minimum(spec, &q_star.density)?;
    let at_x = dot3(
        spec.space.weights(),
        q_star.density.values(),
        upper_minus(spec, x_star).values(),
    );
    let residual = (at_x - gamma).abs();
    if residual > tol {
        return Err(Error::SaddleViolation {
            which: "q_saddle",
            residual,
        });
    }
    Ok(gamma.max(0.0))
}

/// `P*` as the supergradient of `ρ₁` at `X*`, checked against the dual
/// problem `min E_{P*}[X]` over `{E_{Q*}[K₂ − X] ≤ γ_α}`.
pub fn extract_p_star(
    spec: &ProblemSpec,
    q_star: &Supergradient,
    gamma: f64,
    x_star: &RandomVariable,
    tol: f64,
) -> Result<Supergradient> {
    if gamma <= trivial_gamma(tol) {
        return Err(Error::TrivialCase(gamma));
    }
    let p_star = supergradient(&spec.space, &spec.rho1, x_star)?;
    let residual = p_saddle(spec, &p_star, q_star, gamma, x_star)?;
    if residual > tol {
        return Err(Error::SaddleViolation {
            which: "p_saddle",
            residual,
        });
    }
    Ok(p_star)
}

pub(crate) fn p_saddle(
    spec: &ProblemSpec,
    p_star: &Supergradient,
    q_star: &Supergradient,
    gamma: f64,
    x_star: &RandomVariable,
) -> Result<f64> {
    let sp = &spec.space;
    let best = min_cost_test(
        sp,
        &p_star.density,
        &q_star.density,
        gamma.max(0.0),
        &spec.k1,
        &spec.k2,
    )?;
    let mu = sp.weights();
    Ok((dot3(mu, p_star.density.values(), x_star.values())
        - dot3(mu, p_star.density.values(), best.values()))
    .abs())
}
