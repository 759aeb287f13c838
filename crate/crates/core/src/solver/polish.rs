//! Newton refinement of a cutting-plane solution on its active set.
//!
//! The optimality system is: on free atoms `Σλ_j q_j = Σν_k p_k` (with
//! `q`, `p` the supergradient densities, state dependent for entropic
//! families), every active `ρ₁` piece is tight at `α`, and for polyhedral
//! `ρ₂` the active generators tie at the value `t` with `Σλ = 1`. The active
//! set is adjusted until the Newton root passes every sign and bound check.

use nalgebra::{DMatrix, DVector};

use crate::measure::{dot3, Density, RandomVariable};
use crate::risk::{evaluate, supergradient, ConvexExpectation, Generator, Supergradient};

use super::primal::upper_minus;
use super::{ProblemSpec, LEVEL_SLACK};

const ROOT_TOL: f64 = 1e-13;
const SIGN_TOL: f64 = 1e-10;
const ACTIVE_TOL: f64 = 1e-9;

pub(crate) struct Polished {
    pub x: RandomVariable,
    pub q_star: Option<Supergradient>,
    pub p_star: Option<Supergradient>,
}

enum Side {
    Smooth,
    Poly(Vec<Generator>),
}

impl Side {
    fn of(rho: &ConvexExpectation) -> Side {
        match rho.generators() {
            Some(g) => Side::Poly(g),
            None => Side::Smooth,
        }
    }

    fn pieces(&self) -> usize {
        match self {
            Side::Smooth => 1,
            Side::Poly(g) => g.len(),
        }
    }
}

struct System<'a> {
    spec: &'a ProblemSpec,
    rho2: Side,
    rho1: Side,
    base: Vec<f64>,
    free: Vec<usize>,
    a1: Vec<usize>,
    a2: Vec<usize>,
}

struct State {
    x: Vec<f64>,
    nu: Vec<f64>,
    lambda: Vec<f64>,
    t: f64,
}

impl System<'_> {
    fn dim(&self) -> usize {
        let poly2 = matches!(self.rho2, Side::Poly(_));
        self.free.len() + self.a1.len() + if poly2 { self.a2.len() + 1 } else { 0 }
    }

    fn decode(&self, u: &[f64]) -> State {
        let mut x = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = u[k];
        }
        let mut at = self.free.len();
        let nu = u[at..at + self.a1.len()].to_vec();
        at += self.a1.len();
        let (lambda, t) = match self.rho2 {
            Side::Poly(_) => (u[at..at + self.a2.len()].to_vec(), u[at + self.a2.len()]),
            Side::Smooth => (Vec::new(), 0.0),
        };
        State { x, nu, lambda, t }
    }

    fn encode(&self, s: &State) -> Vec<f64> {
        let mut u: Vec<f64> = self.free.iter().map(|&i| s.x[i]).collect();
        u.extend(&s.nu);
        if let Side::Poly(_) = self.rho2 {
            u.extend(&s.lambda);
            u.push(s.t);
        }
        u
    }

    /// `Σλ_j q_j` over all atoms.
    fn q_mix(&self, s: &State) -> Option<Vec<f64>> {
        let spec = self.spec;
        match &self.rho2 {
            Side::Smooth => {
                let y = upper_minus(spec, &RandomVariable(s.x.clone()));
                let sg = supergradient(&spec.space, &spec.rho2, &y).ok()?;
                Some(sg.density.values().to_vec())
            }
            Side::Poly(g) => {
                let mut q = vec![0.0; s.x.len()];
                for (&j, &l) in self.a2.iter().zip(&s.lambda) {
                    for (qi, gi) in q.iter_mut().zip(g[j].density.values()) {
                        *qi += l * gi;
                    }
                }
                Some(q)
            }
        }
    }

    /// `Σν_k p_k` over all atoms.
    fn p_mix(&self, s: &State) -> Option<Vec<f64>> {
        let spec = self.spec;
        match &self.rho1 {
            Side::Smooth => {
                let sg =
                    supergradient(&spec.space, &spec.rho1, &RandomVariable(s.x.clone())).ok()?;
                let kappa = s.nu.first().copied().unwrap_or(0.0);
                Some(sg.density.values().iter().map(|p| kappa * p).collect())
            }
            Side::Poly(g) => {
                let mut p = vec![0.0; s.x.len()];
                for (&j, &v) in self.a1.iter().zip(&s.nu) {
                    for (pi, gi) in p.iter_mut().zip(g[j].density.values()) {
                        *pi += v * gi;
                    }
                }
                Some(p)
            }
        }
    }

    fn residual(&self, u: &[f64]) -> Option<Vec<f64>> {
        let spec = self.spec;
        let sp = &spec.space;
        let mu = sp.weights();
        let s = self.decode(u);
        let q = self.q_mix(&s)?;
        let p = self.p_mix(&s)?;
        let mut r: Vec<f64> = self.free.iter().map(|&i| q[i] - p[i]).collect();
        match &self.rho1 {
            Side::Smooth => {
                r.push(evaluate(sp, &spec.rho1, &RandomVariable(s.x.clone())).ok()? - spec.alpha)
            }
            Side::Poly(g) => {
                for &j in &self.a1 {
                    r.push(dot3(mu, g[j].density.values(), &s.x) - g[j].penalty - spec.alpha);
                }
            }
        }
        if let Side::Poly(g) = &self.rho2 {
            let y: Vec<f64> = spec
                .k2
                .values()
                .iter()
                .zip(&s.x)
                .map(|(b, x)| b - x)
                .collect();
            for &j in &self.a2 {
                r.push(dot3(mu, g[j].density.values(), &y) - g[j].penalty - s.t);
            }
            r.push(s.lambda.iter().sum::<f64>() - 1.0);
        }
        Some(r)
    }

    fn newton(&self, mut u: Vec<f64>) -> Option<Vec<f64>> {
        let m = u.len();
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut r = self.residual(&u)?;
        for _ in 0..60 {
            if norm(&r) <= ROOT_TOL {
                return Some(u);
            }
            let mut jac = DMatrix::zeros(m, m);
            for k in 0..m {
                let h = 1e-7 * u[k].abs().max(1.0);
                let mut up = u.clone();
                up[k] += h;
                let mut dn = u.clone();
                dn[k] -= h;
                let (rp, rm) = (self.residual(&up)?, self.residual(&dn)?);
                for i in 0..m {
                    jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let step = jac.lu().solve(&DVector::from_column_slice(&r))?;
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(step.iter())
                    .map(|(a, d)| a - scale * d)
                    .collect();
                if let Some(rt) = self.residual(&trial) {
                    if norm(&rt) < norm(&r) || scale < 1e-6 {
                        u = trial;
                        r = rt;
                        break;
                    }
                }
                scale *= 0.5;
                if scale < 1e-6 {
                    return None;
                }
            }
        }
        (norm(&r) <= 1e3 * ROOT_TOL).then_some(u)
    }
}

/// Refines `x0` given initial multipliers: `lambda0` per `ρ₂` generator
/// (empty for entropic `ρ₂`) and `nu0` per `ρ₁` generator (`[κ]` for
/// entropic `ρ₁`). Returns `None` when no consistent active set is found.
pub(crate) fn polish(
    spec: &ProblemSpec,
    x0: &RandomVariable,
    lambda0: &[f64],
    nu0: &[f64],
) -> Option<Polished> {
    let n = spec.len();
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let rho2 = Side::of(&spec.rho2);
    let rho1 = Side::of(&spec.rho1);
    if nu0.len() != rho1.pieces() {
        return None;
    }
    let mut free: Vec<bool> = (0..n)
        .map(|i| {
            let eps = 1e-7 * (k2[i] - k1[i]);
            !spec.pinned(i) && x0.values()[i] > k1[i] + eps && x0.values()[i] < k2[i] - eps
        })
        .collect();
    let mut a1: Vec<bool> = nu0.iter().map(|&v| v > ACTIVE_TOL).collect();
    let mut a2: Vec<bool> = match &rho2 {
        Side::Poly(g) if lambda0.len() == g.len() => {
            lambda0.iter().map(|&v| v > ACTIVE_TOL).collect()
        }
        Side::Poly(_) => return None,
        Side::Smooth => Vec::new(),
    };
    let start: Vec<f64> = (0..n)
        .map(|i| {
            let v = x0.values()[i];
            if free[i] {
                v
            } else if k2[i] - v < v - k1[i] {
                k2[i]
            } else {
                k1[i]
            }
        })
        .collect();
    let mut state = State {
        x: start,
        nu: nu0.to_vec(),
        lambda: lambda0.to_vec(),
        t: evaluate(&spec.space, &spec.rho2, &upper_minus(spec, x0)).ok()?,
    };

    for _ in 0..(3 * n + 8) {
        if !free.iter().any(|&f| f) || !a1.iter().any(|&a| a) {
            return None;
        }
        if matches!(rho2, Side::Poly(_)) && !a2.iter().any(|&a| a) {
            return None;
        }
        let sys = System {
            spec,
            rho2: Side::of(&spec.rho2),
            rho1: Side::of(&spec.rho1),
            base: state.x.clone(),
            free: (0..n).filter(|&i| free[i]).collect(),
            a1: (0..a1.len()).filter(|&j| a1[j]).collect(),
            a2: (0..a2.len()).filter(|&j| a2[j]).collect(),
        };
        let sub = State {
            x: state.x.clone(),
            nu: sys.a1.iter().map(|&j| state.nu[j].max(0.0)).collect(),
            lambda: sys.a2.iter().map(|&j| state.lambda[j].max(0.0)).collect(),
            t: state.t,
        };
        debug_assert_eq!(sys.encode(&sub).len(), sys.dim());
        let root = sys.decode(&sys.newton(sys.encode(&sub))?);

        // Scatter back to full multiplier vectors.
        state.x = root.x.clone();
        state.t = root.t;
        for v in state.nu.iter_mut() {
            *v = 0.0;
        }
        for (&j, &v) in sys.a1.iter().zip(&root.nu) {
            state.nu[j] = v;
        }
        for v in state.lambda.iter_mut() {
            *v = 0.0;
        }
        for (&j, &v) in sys.a2.iter().zip(&root.lambda) {
            state.lambda[j] = v;
        }

        let v = violation(spec, &sys, &root, &rho1, &rho2);
        match v {
            None => return finish(spec, &state, &rho1, &rho2),
            Some(Fix::Bound(i, at_upper)) => {
                free[i] = false;
                state.x[i] = if at_upper { k2[i] } else { k1[i] };
            }
            Some(Fix::Release(i)) => free[i] = true,
            Some(Fix::Drop1(j)) => a1[j] = false,
            Some(Fix::Add1(j)) => a1[j] = true,
            Some(Fix::Drop2(j)) => a2[j] = false,
            Some(Fix::Add2(j)) => a2[j] = true,
        }
        if matches!(rho1, Side::Smooth) && !a1[0] {
            return None;
        }
    }
    None
}

enum Fix {
    Bound(usize, bool),
    Release(usize),
    Drop1(usize),
    Add1(usize),
    Drop2(usize),
    Add2(usize),
}

/// The largest violated optimality condition at `root`, if any.
fn violation(
    spec: &ProblemSpec,
    sys: &System,
    root: &State,
    rho1: &Side,
    rho2: &Side,
) -> Option<Fix> {
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let mu = spec.space.weights();
    let mut worst: Option<(f64, Fix)> = None;
    let mut consider = |size: f64, fix: Fix| {
        if size > 0.0 && worst.as_ref().map_or(true, |(w, _)| size > *w) {
            worst = Some((size, fix));
        }
    };
    for &i in &sys.free {
        let x = root.x[i];
        if x > k2[i] + LEVEL_SLACK {
            consider(x - k2[i], Fix::Bound(i, true));
        } else if x < k1[i] - LEVEL_SLACK {
            consider(k1[i] - x, Fix::Bound(i, false));
        }
    }
    for (k, &j) in sys.a1.iter().enumerate() {
        if root.nu[k] < -SIGN_TOL {
            consider(-root.nu[k], Fix::Drop1(j));
        }
    }
    for (k, &j) in sys.a2.iter().enumerate() {
        if root.lambda[k] < -SIGN_TOL {
            consider(-root.lambda[k], Fix::Drop2(j));
        }
    }
    let (q, p) = (sys.q_mix(root)?, sys.p_mix(root)?);
    for i in 0..spec.len() {
        if spec.pinned(i) || sys.free.contains(&i) {
            continue;
        }
        // Raising X pays q and costs p: at K₂ we need q ≥ p, at K₁ q ≤ p.
        let d = q[i] - p[i];
        if root.x[i] == k2[i] && d < -SIGN_TOL {
            consider(-d, Fix::Release(i));
        } else if root.x[i] == k1[i] && d > SIGN_TOL {
            consider(d, Fix::Release(i));
        }
    }
    if let Side::Poly(g) = rho1 {
        for (j, gen) in g.iter().enumerate() {
            if !sys.a1.contains(&j) {
                let over = dot3(mu, gen.density.values(), &root.x) - gen.penalty - spec.alpha;
                if over > LEVEL_SLACK {
                    consider(over, Fix::Add1(j));
                }
            }
        }
    }
    if let Side::Poly(g) = rho2 {
        let y: Vec<f64> = k2.iter().zip(&root.x).map(|(b, x)| b - x).collect();
        for (j, gen) in g.iter().enumerate() {
            if !sys.a2.contains(&j) {
                let over = dot3(mu, gen.density.values(), &y) - gen.penalty - root.t;
                if over > LEVEL_SLACK {
                    consider(over, Fix::Add2(j));
                }
            }
        }
    }
    worst.map(|(_, f)| f)
}

fn finish(spec: &ProblemSpec, s: &State, rho1: &Side, rho2: &Side) -> Option<Polished> {
    let x = RandomVariable(s.x.clone());
    if evaluate(&spec.space, &spec.rho1, &x).ok()? > spec.alpha + LEVEL_SLACK {
        return None;
    }
    let mix = |g: &[Generator], w: &[f64]| -> Option<Supergradient> {
        let total: f64 = w.iter().map(|v| v.max(0.0)).sum();
        if !(total > 0.0) {
            return None;
        }
        let mut d = vec![0.0; s.x.len()];
        let mut pen = 0.0;
        for (gen, &v) in g.iter().zip(w) {
            let v = v.max(0.0) / total;
            for (di, gi) in d.iter_mut().zip(gen.density.values()) {
                *di += v * gi;
            }
            pen += v * gen.penalty;
        }
        Some(Supergradient {
            density: Density(d),
            penalty: pen,
        })
    };
    let q_star = match rho2 {
        Side::Poly(g) => Some(mix(g, &s.lambda)?),
        Side::Smooth => None,
    };
    let p_star = match rho1 {
        Side::Poly(g) => Some(mix(g, &s.nu)?),
        Side::Smooth => None,
    };
    Some(Polished { x, q_star, p_star })
}
