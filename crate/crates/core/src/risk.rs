//! Convex expectations and their dual representation.
//!
//! A convex expectation is monotone, cash invariant and convex, and admits
//! `ρ(X) = sup_P (E_P[X] − ρ*(P))`. Two families cover everything this crate
//! needs: the entropic functional `(1/θ) ln E_base[e^{θX}]`, whose penalty is
//! relative entropy scaled by `1/θ`, and finitely generated functionals
//! `max_j (E_{Q_j}[X] − c_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::measure::{dot3, kl_divergence, Density, RandomVariable, SampleSpace, DENSITY_TOL};

/// Densities closer than this (sup norm) are treated as the same measure.
const SAME_MEASURE_TOL: f64 = 1e-9;

/// One generating measure `Q_j` together with its penalty `c_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub density: Density,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConvexExpectation {
    Entropic { base: Density, theta: f64 },
    FinitelyGenerated { generators: Vec<Generator> },
    Linear { base: Density },
}

/// The measure attaining the supremum in the dual representation at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supergradient {
    pub density: Density,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub penalty: f64,
}

impl ConvexExpectation {
    pub fn entropic(space: &SampleSpace, base: Density, theta: f64) -> Result<Self> {
        let rho = ConvexExpectation::Entropic { base, theta };
        rho.validate(space)?;
        Ok(rho)
    }

    pub fn linear(space: &SampleSpace, base: Density) -> Result<Self> {
        let rho = ConvexExpectation::Linear { base };
        rho.validate(space)?;
        Ok(rho)
    }

    pub fn finitely_generated(space: &SampleSpace, generators: Vec<Generator>) -> Result<Self> {
        let rho = ConvexExpectation::FinitelyGenerated { generators };
        rho.validate(space)?;
        Ok(rho)
    }

    /// Worst-case expectation over `densities` (zero penalties).
    pub fn sublinear(space: &SampleSpace, densities: Vec<Density>) -> Result<Self> {
        let generators = densities
            .into_iter()
            .map(|density| Generator {
                density,
                penalty: 0.0,
            })
            .collect();
        Self::finitely_generated(space, generators)
    }

    pub fn validate(&self, space: &SampleSpace) -> Result<()> {
        match self {
            ConvexExpectation::Entropic { base, theta } => {
                if !(*theta > 0.0) || !theta.is_finite() {
                    return Err(Error::InvalidRisk(format!(
                        "theta must be > 0, got {theta}"
                    )));
                }
                base.validate(space, DENSITY_TOL)
            }
            ConvexExpectation::Linear { base } => base.validate(space, DENSITY_TOL),
            ConvexExpectation::FinitelyGenerated { generators } => {
                if generators.is_empty() {
                    return Err(Error::InvalidRisk("no generators".into()));
                }
                for (j, g) in generators.iter().enumerate() {
                    if !g.penalty.is_finite() {
                        return Err(Error::InvalidRisk(format!(
                            "generator {j} has non-finite penalty {}",
                            g.penalty
                        )));
                    }
                    g.density.validate(space, DENSITY_TOL)?;
                }
                Ok(())
            }
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ConvexExpectation::Entropic { .. } => "entropic",
            ConvexExpectation::FinitelyGenerated { .. } => "finitely_generated",
            ConvexExpectation::Linear { .. } => "linear",
        }
    }

    /// True for the families that are a finite max of affine functionals.
    pub fn is_polyhedral(&self) -> bool {
        !matches!(self, ConvexExpectation::Entropic { .. })
    }

    /// The generator list of a polyhedral family; `None` for entropic.
    pub fn generators(&self) -> Option<Vec<Generator>> {
        match self {
            ConvexExpectation::Entropic { .. } => None,
            ConvexExpectation::Linear { base } => Some(vec![Generator {
                density: base.clone(),
                penalty: 0.0,
            }]),
            ConvexExpectation::FinitelyGenerated { generators } => Some(generators.clone()),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> ConvexExpectation {
        match self {
            ConvexExpectation::Entropic { base, theta } => ConvexExpectation::Entropic {
                base: base.permuted(perm),
                theta: *theta,
            },
            ConvexExpectation::Linear { base } => ConvexExpectation::Linear {
                base: base.permuted(perm),
            },
            ConvexExpectation::FinitelyGenerated { generators } => {
                ConvexExpectation::FinitelyGenerated {
                    generators: generators
                        .iter()
                        .map(|g| Generator {
                            density: g.density.permuted(perm),
                            penalty: g.penalty,
                        })
                        .collect(),
                }
            }
        }
    }

    fn check_dims(&self, space: &SampleSpace, n: usize) -> Result<()> {
        space.check_len(n)?;
        match self {
            ConvexExpectation::Entropic { base, .. } | ConvexExpectation::Linear { base } => {
                space.check_len(base.len())
            }
            ConvexExpectation::FinitelyGenerated { generators } => generators
                .iter()
                .try_for_each(|g| space.check_len(g.density.len())),
        }
    }
}

/// Shifted exponentials `b_i e^{θx_i − m}` and the shift `m = max θx_i`.
fn tilted_weights(base: &Density, theta: f64, x: &[f64]) -> (Vec<f64>, f64) {
    let shift = base
        .values()
        .iter()
        .zip(x)
        .filter(|(b, _)| **b > 0.0)
        .map(|(_, x)| theta * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let w = base
        .values()
        .iter()
        .zip(x)
        .map(|(&b, &x)| {
            if b > 0.0 {
                b * (theta * x - shift).exp()
            } else {
                0.0
            }
        })
        .collect();
    (w, shift)
}

fn best_generator(space: &SampleSpace, generators: &[Generator], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, g) in generators.iter().enumerate() {
        let v = dot3(space.weights(), g.density.values(), x) - g.penalty;
        // Strict improvement beyond rounding noise keeps the lowest index on ties.
        if v > best.1 + 1e-13 * (1.0 + v.abs()) {
            best = (j, v);
        }
    }
    best
}

/// `ρ(X)`.
pub fn evaluate(space: &SampleSpace, rho: &ConvexExpectation, x: &RandomVariable) -> Result<f64> {
    rho.check_dims(space, x.len())?;
    Ok(match rho {
        ConvexExpectation::Entropic { base, theta } => {
            let (w, shift) = tilted_weights(base, *theta, x.values());
            let s: f64 = space.weights().iter().zip(&w).map(|(m, w)| m * w).sum();
            (shift + s.ln()) / theta
        }
        ConvexExpectation::Linear { base } => dot3(space.weights(), base.values(), x.values()),
        ConvexExpectation::FinitelyGenerated { generators } => generators
            .iter()
            .map(|g| dot3(space.weights(), g.density.values(), x.values()) - g.penalty)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// A measure attaining `ρ(X) = E_P[X] − ρ*(P)`.
///
/// Entropic: the exponentially tilted base. Polyhedral: the lowest-index
/// generator attaining the max.
pub fn supergradient(
    space: &SampleSpace,
    rho: &ConvexExpectation,
    x: &RandomVariable,
) -> Result<Supergradient> {
    rho.check_dims(space, x.len())?;
    Ok(match rho {
        ConvexExpectation::Entropic { base, theta } => {
            let (w, _) = tilted_weights(base, *theta, x.values());
            let s: f64 = space.weights().iter().zip(&w).map(|(m, w)| m * w).sum();
            let density = Density(w.iter().map(|w| w / s).collect());
            let penalty = kl_divergence(space, &density, base)? / theta;
            Supergradient { density, penalty }
        }
        ConvexExpectation::Linear { base } => Supergradient {
            density: base.clone(),
            penalty: 0.0,
        },
        ConvexExpectation::FinitelyGenerated { generators } => {
            let (j, _) = best_generator(space, generators, x.values());
            Supergradient {
                density: generators[j].density.clone(),
                penalty: generators[j].penalty,
            }
        }
    })
}

fn same_measure(a: &Density, b: &Density) -> bool {
    a.values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| (x - y).abs() <= SAME_MEASURE_TOL)
}

/// `ρ*(Q)`.
///
/// For polyhedral families this is the value at a generator, otherwise the
/// cheapest convex combination of generators that reproduces `q` (an upper
/// bound on the conjugate), and `+∞` outside their convex hull.
pub fn penalty(space: &SampleSpace, rho: &ConvexExpectation, q: &Density) -> Result<f64> {
    rho.check_dims(space, q.len())?;
    match rho {
        ConvexExpectation::Entropic { base, theta } => Ok(kl_divergence(space, q, base)? / theta),
        ConvexExpectation::Linear { base } => Ok(if same_measure(q, base) {
            0.0
        } else {
            f64::INFINITY
        }),
        ConvexExpectation::FinitelyGenerated { generators } => {
            if let Some(g) = generators.iter().find(|g| same_measure(q, &g.density)) {
                return Ok(g.penalty);
            }
            hull_penalty(space, generators, q)
        }
    }
}

fn hull_penalty(space: &SampleSpace, generators: &[Generator], q: &Density) -> Result<f64> {
    let k = generators.len();
    let mut lp = LinearProgram::new(generators.iter().map(|g| g.penalty).collect());
    for i in 0..space.len() {
        let w = space.weights()[i];
        let row = generators
            .iter()
            .map(|g| w * g.density.values()[i])
            .collect();
        lp.add_constraint(row, Relation::Eq, w * q.values()[i]);
    }
    lp.add_constraint(vec![1.0; k], Relation::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => Ok(sol.objective),
        Err(Error::LpInfeasible) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{expectation, make_space};
    use std::f64::consts::E;

    fn half() -> SampleSpace {
        make_space(&[0.5, 0.5]).unwrap()
    }

    fn q0(s: &SampleSpace) -> Density {
        Density::from_probabilities(s, &[0.75, 0.25]).unwrap()
    }

    #[test]
    fn entropic_value_at_example_point() {
        let s = half();
        let rho = ConvexExpectation::entropic(&s, q0(&s), 1.0).unwrap();
        let v = evaluate(&s, &rho, &RandomVariable(vec![0.0, 1.0])).unwrap();
        assert!((v - ((3.0 + E) / 4.0).ln()).abs() < 1e-15);
        assert!((v - 0.357374).abs() < 1e-6);
    }

    #[test]
    fn cash_invariance_on_constants() {
        let s = half();
        let fg = ConvexExpectation::finitely_generated(
            &s,
            vec![
                Generator {
                    density: q0(&s),
                    penalty: 0.2,
                },
                Generator {
                    density: s.base_density(),
                    penalty: 0.1,
                },
            ],
        )
        .unwrap();
        let ent = ConvexExpectation::entropic(&s, q0(&s), 2.0).unwrap();
        for rho in [&fg, &ent] {
            let zero = evaluate(&s, rho, &RandomVariable::constant(2, 0.0)).unwrap();
            let c = evaluate(&s, rho, &RandomVariable::constant(2, 1.7)).unwrap();
            assert!((c - 1.7 - zero).abs() < 1e-14);
        }
    }

    #[test]
    fn finitely_generated_value() {
        let s = half();
        let d1 = Density::new(&s, vec![1.0, 1.0]).unwrap();
        let d2 = Density::new(&s, vec![0.6, 1.4]).unwrap();
        let x = RandomVariable(vec![0.0, 1.0]);
        assert!((expectation(&s, &d1, &x).unwrap() - 0.5).abs() < 1e-15);
        assert!((expectation(&s, &d2, &x).unwrap() - 0.7).abs() < 1e-15);
        let rho = ConvexExpectation::finitely_generated(
            &s,
            vec![
                Generator {
                    density: d1,
                    penalty: 0.0,
                },
                Generator {
                    density: d2,
                    penalty: 0.1,
                },
            ],
        )
        .unwrap();
        assert!((evaluate(&s, &rho, &x).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn entropic_supergradient_matches_example_measures() {
        let s = half();
        let rho = ConvexExpectation::entropic(&s, q0(&s), 1.0).unwrap();
        let sg = supergradient(&s, &rho, &RandomVariable(vec![0.0, 1.0])).unwrap();
        let p = sg.density.probabilities(&s);
        assert!((p[0] - 3.0 / (E + 3.0)).abs() < 1e-15);
        assert!((p[1] - E / (E + 3.0)).abs() < 1e-15);
        assert!((sg.density.values()[0] - 6.0 / (3.0 + E)).abs() < 1e-14);

        let p0 = Density::from_probabilities(&s, &[0.25, 0.75]).unwrap();
        let rho = ConvexExpectation::entropic(&s, p0, 1.0).unwrap();
        let sg = supergradient(&s, &rho, &RandomVariable(vec![1.0, 0.0])).unwrap();
        let p = sg.density.probabilities(&s);
        assert!((p[0] - E / (E + 3.0)).abs() < 1e-15);
        assert!((p[1] - 3.0 / (E + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn supergradient_at_constants() {
        let s = half();
        let ent = ConvexExpectation::entropic(&s, q0(&s), 1.0).unwrap();
        let x = RandomVariable::constant(2, 0.4);
        let sg = supergradient(&s, &ent, &x).unwrap();
        assert!(same_measure(&sg.density, &q0(&s)));
        assert!(sg.penalty.abs() < 1e-15);

        let fg = ConvexExpectation::sublinear(&s, vec![q0(&s), s.base_density()]).unwrap();
        let sg = supergradient(&s, &fg, &x).unwrap();
        assert_eq!(sg.density, q0(&s));
        let att = expectation(&s, &sg.density, &x).unwrap() - sg.penalty;
        assert!((att - evaluate(&s, &fg, &x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn entropic_penalty_closed_form() {
        let s = half();
        let rho = ConvexExpectation::entropic(&s, q0(&s), 1.0).unwrap();
        assert_eq!(penalty(&s, &rho, &q0(&s)).unwrap(), 0.0);
        for &q in &[0.1, 0.3, 0.5, 0.9] {
            let d = Density::from_probabilities(&s, &[q, 1.0 - q]).unwrap();
            let closed = q * q.ln() + (1.0 - q) * (1.0 - q).ln() - q * 3f64.ln() + 2.0 * 2f64.ln();
            assert!((penalty(&s, &rho, &d).unwrap() - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn polyhedral_penalty() {
        let s = make_space(&[0.25, 0.25, 0.5]).unwrap();
        let g1 = Density::from_probabilities(&s, &[0.5, 0.25, 0.25]).unwrap();
        let g2 = Density::from_probabilities(&s, &[0.1, 0.4, 0.5]).unwrap();
        let rho = ConvexExpectation::finitely_generated(
            &s,
            vec![
                Generator {
                    density: g1.clone(),
                    penalty: 0.3,
                },
                Generator {
                    density: g2.clone(),
                    penalty: 0.1,
                },
            ],
        )
        .unwrap();
        assert_eq!(penalty(&s, &rho, &g1).unwrap(), 0.3);
        let mid = Density(
            g1.values()
                .iter()
                .zip(g2.values())
                .map(|(a, b)| 0.25 * a + 0.75 * b)
                .collect(),
        );
        assert!((penalty(&s, &rho, &mid).unwrap() - 0.15).abs() < 1e-12);
        let outside = Density::from_probabilities(&s, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(penalty(&s, &rho, &outside).unwrap(), f64::INFINITY);
        let lin = ConvexExpectation::linear(&s, g1.clone()).unwrap();
        assert_eq!(penalty(&s, &lin, &g2).unwrap(), f64::INFINITY);
        assert_eq!(penalty(&s, &lin, &g1).unwrap(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let s = half();
        assert!(ConvexExpectation::entropic(&s, q0(&s), 0.0).is_err());
        assert!(ConvexExpectation::finitely_generated(&s, vec![]).is_err());
        assert!(ConvexExpectation::finitely_generated(
            &s,
            vec![Generator {
                density: q0(&s),
                penalty: f64::INFINITY
            }]
        )
        .is_err());
        let rho = ConvexExpectation::linear(&s, q0(&s)).unwrap();
        assert!(matches!(
            evaluate(&s, &rho, &RandomVariable(vec![1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn overflow_safe_entropic() {
        let s = half();
        let rho = ConvexExpectation::entropic(&s, s.base_density(), 50.0).unwrap();
        let v = evaluate(&s, &rho, &RandomVariable(vec![100.0, 0.0])).unwrap();
        assert!((v - (100.0 + 0.5f64.ln() / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn serde_tagging() {
        let s = half();
        let rho = ConvexExpectation::entropic(&s, q0(&s), 1.0).unwrap();
        let json = serde_json::to_string(&rho).unwrap();
        assert!(json.contains("\"family\":\"entropic\""));
        let back: ConvexExpectation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rho);
    }
}
