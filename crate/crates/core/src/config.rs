//! JSON problem and market files.
//!
//! Functionals are written as
//! `{"family": "entropic", "base": [...], "theta": 1}`,
//! `{"family": "linear", "base": [...]}` or
//! `{"family": "finitely_generated", "generators": [[...], ...], "penalties": [...]}`.
//! Densities are relative to the space weights unless the object carries
//! `"as": "probabilities"`, in which case they are atom probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedging::MarketSpec;
use crate::measure::{Density, RandomVariable, SampleSpace};
use crate::risk::{ConvexExpectation, Generator};
use crate::solver::ProblemSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityForm {
    #[default]
    Density,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<f64>>,
    #[serde(default, rename = "as")]
    pub form: DensityForm,
}

impl RiskConfig {
    pub fn build(&self, space: &SampleSpace) -> Result<ConvexExpectation> {
        let density = |v: &[f64]| match self.form {
            DensityForm::Density => Density::new(space, v.to_vec()),
            DensityForm::Probabilities => Density::from_probabilities(space, v),
        };
        let missing =
            |field: &str| Error::InvalidRisk(format!("family `{}` needs `{field}`", self.family));
        match self.family.as_str() {
            "entropic" => {
                let base = density(self.base.as_deref().ok_or_else(|| missing("base"))?)?;
                ConvexExpectation::entropic(
                    space,
                    base,
                    self.theta.ok_or_else(|| missing("theta"))?,
                )
            }
            "linear" => {
                let base = density(self.base.as_deref().ok_or_else(|| missing("base"))?)?;
                ConvexExpectation::linear(space, base)
            }
            "finitely_generated" => {
                let gens = self
                    .generators
                    .as_ref()
                    .ok_or_else(|| missing("generators"))?;
                let penalties = match &self.penalties {
                    Some(p) if p.len() != gens.len() => {
                        return Err(Error::InvalidRisk(format!(
                            "{} generators but {} penalties",
                            gens.len(),
                            p.len()
                        )))
                    }
                    Some(p) => p.clone(),
                    None => vec![0.0; gens.len()],
                };
                let generators = gens
                    .iter()
                    .zip(penalties)
                    .map(|(g, penalty)| {
                        Ok(Generator {
                            density: density(g)?,
                            penalty,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConvexExpectation::finitely_generated(space, generators)
            }
            other => Err(Error::InvalidRisk(format!("unknown family `{other}`"))),
        }
    }

    /// Density-form description of `rho`.
    pub fn describe(rho: &ConvexExpectation) -> RiskConfig {
        let mut cfg = RiskConfig {
            family: rho.family().to_string(),
            base: None,
            theta: None,
            generators: None,
            penalties: None,
            form: DensityForm::Density,
        };
        match rho {
            ConvexExpectation::Entropic { base, theta } => {
                cfg.base = Some(base.values().to_vec());
                cfg.theta = Some(*theta);
            }
            ConvexExpectation::Linear { base } => cfg.base = Some(base.values().to_vec()),
            ConvexExpectation::FinitelyGenerated { generators } => {
                cfg.generators = Some(
                    generators
                        .iter()
                        .map(|g| g.density.values().to_vec())
                        .collect(),
                );
                cfg.penalties = Some(generators.iter().map(|g| g.penalty).collect());
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub space: SampleSpace,
    pub rho1: RiskConfig,
    pub rho2: RiskConfig,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub alpha: f64,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(
            self.space.clone(),
            self.rho1.build(&self.space)?,
            self.rho2.build(&self.space)?,
            RandomVariable::new(self.k1.clone())?,
            RandomVariable::new(self.k2.clone())?,
            self.alpha,
        )
    }

    pub fn describe(spec: &ProblemSpec) -> ProblemConfig {
        ProblemConfig {
            space: spec.space.clone(),
            rho1: RiskConfig::describe(&spec.rho1),
            rho2: RiskConfig::describe(&spec.rho2),
            k1: spec.k1.values().to_vec(),
            k2: spec.k2.values().to_vec(),
            alpha: spec.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub space: SampleSpace,
    pub s0: f64,
    pub st: Vec<f64>,
    pub claim: Vec<f64>,
    pub budget: f64,
    pub rho: RiskConfig,
}

impl MarketConfig {
    pub fn build(&self) -> Result<MarketSpec> {
        MarketSpec::new(
            self.space.clone(),
            self.s0,
            RandomVariable::new(self.st.clone())?,
            RandomVariable::new(self.claim.clone())?,
            self.budget,
            self.rho.build(&self.space)?,
        )
    }

    pub fn describe(market: &MarketSpec) -> MarketConfig {
        MarketConfig {
            space: market.space.clone(),
            s0: market.s0,
            st: market.st.values().to_vec(),
            claim: market.claim.values().to_vec(),
            budget: market.budget,
            rho: RiskConfig::describe(&market.rho),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    parse::<ProblemConfig>(text)?.build()
}

pub fn parse_market(text: &str) -> Result<MarketSpec> {
    parse::<MarketConfig>(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE_41: &str = r#"{
        "space": {"weights": [0.5, 0.5]},
        "rho1": {"family": "linear", "base": [1, 1]},
        "rho2": {"family": "entropic", "base": [0.75, 0.25], "theta": 1, "as": "probabilities"},
        "k1": [0, 0], "k2": [1, 1], "alpha": 0.5
    }"#;

    #[test]
    fn probabilities_are_converted() {
        let spec = parse_problem(EXAMPLE_41).unwrap();
        match &spec.rho2 {
            ConvexExpectation::Entropic { base, .. } => assert_eq!(base.values(), &[1.5, 0.5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn describe_round_trips() {
        let spec = parse_problem(EXAMPLE_41).unwrap();
        let text = serde_json::to_string(&ProblemConfig::describe(&spec)).unwrap();
        assert_eq!(parse_problem(&text).unwrap(), spec);
    }

    #[test]
    fn finitely_generated_defaults_to_zero_penalties() {
        let text = r#"{
            "space": {"weights": [0.5, 0.5]},
            "rho1": {"family": "finitely_generated", "generators": [[0.2, 0.8], [0.6, 0.4]], "as": "probabilities"},
            "rho2": {"family": "linear", "base": [1, 1]},
            "k1": [0, 0], "k2": [1, 1], "alpha": 0.3
        }"#;
        let spec = parse_problem(text).unwrap();
        let g = spec.rho1.generators().unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|g| g.penalty == 0.0));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let below = EXAMPLE_41.replace("\"alpha\": 0.5", "\"alpha\": -0.1");
        assert!(matches!(
            parse_problem(&below),
            Err(Error::InfeasibleSpec(_))
        ));
        let unknown = EXAMPLE_41.replace("\"linear\"", "\"quadratic\"");
        assert!(matches!(
            parse_problem(&unknown),
            Err(Error::InvalidRisk(_))
        ));
        assert!(matches!(parse_problem("{"), Err(Error::InvalidSpec(_))));
    }
}
