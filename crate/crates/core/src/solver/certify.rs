use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measure::dot3;
use crate::risk::{evaluate, penalty};

use super::extract::p_saddle;
use super::inner::inner_minimum;
use super::primal::upper_minus;
use super::threshold::structure_deviation;
use super::{trivial_gamma, ProblemSpec, Solution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    Value(#[serde(with = "crate::serde_ext::ext_f64")] f64),
    NotApplicable(String),
}

impl Residual {
    pub fn value(&self) -> Option<f64> {
        match self {
            Residual::Value(v) => Some(*v),
            Residual::NotApplicable(_) => None,
        }
    }

    /// Not-applicable residuals pass; NaN never does.
    pub fn passes(&self, tol: f64) -> bool {
        self.value().map_or(true, |v| v <= tol)
    }

    fn from_result(r: Result<f64>) -> Residual {
        match r {
            Ok(v) => Residual::Value(v),
            Err(e) => {
                log::warn!("certificate could not be computed: {e}");
                Residual::Value(f64::INFINITY)
            }
        }
    }
}

impl Default for Residual {
    fn default() -> Self {
        Residual::NotApplicable("not computed".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub primal_feasibility: Residual,
    pub q_attainment: Residual,
    pub q_saddle: Residual,
    pub alpha_tightness: Residual,
    pub p_attainment: Residual,
    pub p_saddle: Residual,
    pub minimax_gap: Residual,
    pub structure_violation: Residual,
}

impl CertificateReport {
    pub fn entries(&self) -> [(&'static str, &Residual); 8] {
        [
            ("primal_feasibility", &self.primal_feasibility),
            ("q_attainment", &self.q_attainment),
            ("q_saddle", &self.q_saddle),
            ("alpha_tightness", &self.alpha_tightness),
            ("p_attainment", &self.p_attainment),
            ("p_saddle", &self.p_saddle),
            ("minimax_gap", &self.minimax_gap),
            ("structure_violation", &self.structure_violation),
        ]
    }

    /// Largest applicable residual (0 if none apply).
    pub fn max_residual(&self) -> f64 {
        self.entries()
            .iter()
            .filter_map(|(_, r)| r.value())
            .fold(0.0, |a, v| if v.is_nan() { f64::NAN } else { a.max(v) })
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries().iter().all(|(_, r)| r.passes(tol))
    }
}

/// Recomputes every residual from the problem and the reported solution.
pub fn verify_solution(spec: &ProblemSpec, solution: &Solution, tol: f64) -> CertificateReport {
    let sp = &spec.space;
    let mu = sp.weights();
    let x = &solution.x_star;
    let q = &solution.q_star;
    let (k1, k2) = (spec.k1.values(), spec.k2.values());
    let mut report = CertificateReport::default();
    if sp.check_len(x.len()).is_err() || sp.check_len(q.density.len()).is_err() {
        let bad = Residual::Value(f64::INFINITY);
        report.primal_feasibility = bad.clone();
        report.q_attainment = bad.clone();
        report.q_saddle = bad.clone();
        report.minimax_gap = bad.clone();
        report.structure_violation = bad;
        return report;
    }

    let rho1_x = evaluate(sp, &spec.rho1, x);
    report.primal_feasibility = Residual::from_result(rho1_x.clone().map(|r| {
        let boxed = (0..x.len())
            .map(|i| (k1[i] - x.values()[i]).max(x.values()[i] - k2[i]))
            .fold(0.0f64, f64::max);
        boxed.max(r - spec.alpha).max(0.0)
    }));

    let loss = upper_minus(spec, x);
    let q_loss = dot3(mu, q.density.values(), loss.values());
    let q_penalty = penalty(sp, &spec.rho2, &q.density);
    report.q_attainment = Residual::from_result((|| {
        let rho2 = evaluate(sp, &spec.rho2, &loss)?;
        Ok((q_loss - q_penalty.clone()? - rho2)
            .abs()
            .max((solution.beta - rho2).abs()))
    })());

    let inner = inner_minimum(spec, &q.density).map(|(v, _)| v);
    report.q_saddle = Residual::from_result(inner.clone().map(|g| (q_loss - g).abs()));
    report.minimax_gap = Residual::from_result((|| {
        Ok((solution.beta - (inner.clone()? - q_penalty.clone()?)).abs())
    })());

    let gamma = inner.clone().unwrap_or(solution.gamma_alpha).max(0.0);
    let nontrivial = gamma > trivial_gamma(tol);
    report.alpha_tightness = if nontrivial {
        Residual::from_result(rho1_x.clone().map(|r| (r - spec.alpha).abs()))
    } else {
        Residual::NotApplicable(format!("gamma_alpha = {gamma:e} vanishes"))
    };

    match (&solution.p_star, nontrivial) {
        (Some(p), true) => {
            report.p_attainment = Residual::from_result((|| {
                let pen = penalty(sp, &spec.rho1, &p.density)?;
                Ok((dot3(mu, p.density.values(), x.values()) - pen - rho1_x.clone()?).abs())
            })());
            report.p_saddle = Residual::from_result(p_saddle(spec, p, q, gamma, x));
        }
        (None, true) => {
            report.p_attainment = Residual::Value(f64::INFINITY);
            report.p_saddle = Residual::Value(f64::INFINITY);
        }
        (_, false) => {
            let reason = format!("gamma_alpha = {gamma:e} vanishes; P* is not defined");
            report.p_attainment = Residual::NotApplicable(reason.clone());
            report.p_saddle = Residual::NotApplicable(reason);
        }
    }

    let p_density = solution
        .p_star
        .as_ref()
        .filter(|_| nontrivial)
        .map(|p| &p.density);
    report.structure_violation =
        Residual::Value(structure_deviation(spec, x, &q.density, p_density, tol));
    report
}
