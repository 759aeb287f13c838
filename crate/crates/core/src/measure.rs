//! Finite probability spaces and the objects that live on them.
//!
//! Every measure is carried as a density with respect to the base weights
//! `μ` of a [`SampleSpace`], so `E_P[X] = Σ μ_i d_i x_i` where `d = dP/dμ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for accepting (and renormalizing) user supplied weights.
pub const CONSTRUCTION_TOL: f64 = 1e-9;
/// Tolerance for re-checking normalization of derived densities.
pub const DENSITY_TOL: f64 = 1e-10;

/// A finite sample space with strictly positive base weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SampleSpace {
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawSpace {
    weights: Vec<f64>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

impl TryFrom<RawSpace> for SampleSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        let space = make_space(&raw.weights)?;
        match raw.labels {
            Some(labels) => space.with_labels(labels),
            None => Ok(space),
        }
    }
}

/// Validates `weights` and builds a [`SampleSpace`].
///
/// Weights whose sum is within `1e-9` of one are renormalized, unless they
/// already sum to one up to rounding; anything further off is rejected.
pub fn make_space(weights: &[f64]) -> Result<SampleSpace> {
    if weights.is_empty() {
        return Err(Error::EmptySpace);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveWeight { index, value });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > CONSTRUCTION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    let rounding = 4.0 * f64::EPSILON * weights.len() as f64;
    let weights = if (sum - 1.0).abs() <= rounding {
        weights.to_vec()
    } else {
        weights.iter().map(|w| w / sum).collect()
    };
    Ok(SampleSpace {
        weights,
        labels: None,
    })
}

impl SampleSpace {
    /// The uniform space on `n` atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        make_space(&vec![1.0 / n as f64; n])
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        self.check_len(labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found == self.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.len(),
                found,
            })
        }
    }

    /// The density of the base measure itself (all ones).
    pub fn base_density(&self) -> Density {
        Density(vec![1.0; self.len()])
    }

    /// Permutes atoms: atom `i` of the result is atom `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> SampleSpace {
        SampleSpace {
            weights: perm.iter().map(|&j| self.weights[j]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&j| l[j].clone()).collect()),
        }
    }
}

/// Radon-Nikodym derivative `dP/dμ` of a probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Density(pub(crate) Vec<f64>);

impl Density {
    /// Builds a density, checking non-negativity and `Σ μ_i d_i = 1`.
    pub fn new(space: &SampleSpace, values: Vec<f64>) -> Result<Self> {
        space.check_len(values.len())?;
        let density = Density(values);
        density.validate(space, DENSITY_TOL)?;
        Ok(density)
    }

    /// Converts atom probabilities into a density by dividing by `μ_i`.
    ///
    /// Probabilities within `1e-9` of summing to one are renormalized.
    pub fn from_probabilities(space: &SampleSpace, probs: &[f64]) -> Result<Self> {
        space.check_len(probs.len())?;
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidDensity(format!(
                "probability {p} at atom {i} is negative or not finite"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::InvalidDensity(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        let values = probs
            .iter()
            .zip(space.weights())
            .map(|(p, w)| p / sum / w)
            .collect();
        Density::new(space, values)
    }

    /// Point mass on atom `i`.
    pub fn point_mass(space: &SampleSpace, i: usize) -> Density {
        let mut values = vec![0.0; space.len()];
        values[i] = 1.0 / space.weights()[i];
        Density(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Atom probabilities `μ_i d_i`.
    pub fn probabilities(&self, space: &SampleSpace) -> Vec<f64> {
        self.0
            .iter()
            .zip(space.weights())
            .map(|(d, w)| d * w)
            .collect()
    }

    pub fn validate(&self, space: &SampleSpace, tol: f64) -> Result<()> {
        space.check_len(self.len())?;
        if let Some((i, d)) = self
            .0
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d >= 0.0) || !d.is_finite())
        {
            return Err(Error::InvalidDensity(format!(
                "value {d} at atom {i} is negative or not finite"
            )));
        }
        let mass = total_mass(space, &self.0);
        if (mass - 1.0).abs() > tol {
            return Err(Error::InvalidDensity(format!(
                "integrates to {mass}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn permuted(&self, perm: &[usize]) -> Density {
        Density(perm.iter().map(|&j| self.0[j]).collect())
    }
}

/// A real-valued random variable, one value per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVariable(pub(crate) Vec<f64>);

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidRandomVariable(format!(
                "value {v} at atom {i} is not finite"
            )));
        }
        Ok(RandomVariable(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        RandomVariable(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RandomVariable {
        RandomVariable(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_with(&self, other: &RandomVariable, f: impl Fn(f64, f64) -> f64) -> RandomVariable {
        debug_assert_eq!(self.len(), other.len());
        RandomVariable(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn permuted(&self, perm: &[usize]) -> RandomVariable {
        RandomVariable(perm.iter().map(|&j| self.0[j]).collect())
    }
}

impl From<Vec<f64>> for RandomVariable {
    fn from(values: Vec<f64>) -> Self {
        RandomVariable(values)
    }
}

pub(crate) fn total_mass(space: &SampleSpace, d: &[f64]) -> f64 {
    space.weights().iter().zip(d).map(|(w, d)| w * d).sum()
}

/// `E_P[X] = Σ μ_i d_i x_i`.
pub fn expectation(space: &SampleSpace, d: &Density, x: &RandomVariable) -> Result<f64> {
    space.check_len(d.len())?;
    space.check_len(x.len())?;
    Ok(dot3(space.weights(), d.values(), x.values()))
}

pub(crate) fn dot3(w: &[f64], d: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(d).zip(x).map(|((w, d), x)| w * d * x).sum()
}

/// Relative entropy `KL(Q‖P) = Σ μ_i q_i ln(q_i / p_i)` in nats.
///
/// Atoms with `q_i = 0` contribute nothing; an atom with `q_i > 0 = p_i`
/// makes the divergence `+∞`.
pub fn kl_divergence(space: &SampleSpace, q: &Density, p: &Density) -> Result<f64> {
    space.check_len(q.len())?;
    space.check_len(p.len())?;
    let mut total = 0.0;
    for ((w, &qi), &pi) in space.weights().iter().zip(q.values()).zip(p.values()) {
        if qi <= 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total += w * qi * (qi / pi).ln();
    }
    // Rounding can push a vanishing divergence slightly negative.
    Ok(total.max(0.0))
}
