//! Machine-readable reports for solved problems and hedges.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::classical::ratio;
use crate::config::{MarketConfig, ProblemConfig};
use crate::hedging::{superhedge_price, HedgeResult, MarketSpec};
use crate::solver::{verify_solution, CertificateReport, ProblemSpec, Solution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: ProblemConfig,
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    pub certified_accuracy: f64,
    pub q_star_probabilities: Vec<f64>,
    pub p_star_probabilities: Option<Vec<f64>>,
    pub solution: Solution,
}

impl SolveReport {
    pub fn new(spec: &ProblemSpec, solution: Solution, tol: f64, seed: u64) -> SolveReport {
        let sp = &spec.space;
        let passed = solution_passes(&solution, tol);
        SolveReport {
            problem: ProblemConfig::describe(spec),
            seed,
            tol,
            passed,
            certified_accuracy: solution.certified_accuracy(),
            q_star_probabilities: solution.q_star.density.probabilities(sp),
            p_star_probabilities: solution
                .p_star
                .as_ref()
                .map(|p| p.density.probabilities(sp)),
            solution,
        }
    }

    /// Residuals recomputed from the report alone.
    pub fn reverify(&self) -> crate::Result<CertificateReport> {
        let spec = self.problem.build()?;
        Ok(verify_solution(&spec, &self.solution, self.solution.tol))
    }
}

/// Every residual and the solver's own accuracy are within `tol`.
pub fn solution_passes(solution: &Solution, tol: f64) -> bool {
    solution.certificates.passes(tol) && solution.certified_accuracy() <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Upper,
    Boundary,
    Lower,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Upper => "upper",
            Region::Boundary => "boundary",
            Region::Lower => "lower",
        }
    }
}

/// One line of the per-atom table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub atom_index: usize,
    pub k1: f64,
    pub k2: f64,
    pub x_star: f64,
    /// `H_{Q*} / G_{P*}`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub ratio: f64,
    pub region: Region,
}

pub fn atom_rows(spec: &ProblemSpec, solution: &Solution) -> Vec<AtomRow> {
    let q = solution.q_star.density.values();
    let zeros = vec![0.0; q.len()];
    let p = solution
        .p_star
        .as_ref()
        .map_or(&zeros[..], |p| p.density.values());
    let z = solution.z;
    (0..spec.len())
        .map(|i| {
            let r = ratio(q[i], p[i]);
            let region = if solution.boundary_values.contains_key(&i) {
                Region::Boundary
            } else {
                let same = r == z
                    || (r.is_finite()
                        && z.is_finite()
                        && (r - z).abs() <= solution.tol * z.abs().max(1.0));
                match r.partial_cmp(&z) {
                    _ if same => Region::Boundary,
                    Some(Ordering::Greater) => Region::Upper,
                    _ => Region::Lower,
                }
            };
            AtomRow {
                atom_index: i,
                k1: spec.k1.values()[i],
                k2: spec.k2.values()[i],
                x_star: solution.x_star.values()[i],
                ratio: r,
                region,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeReport {
    pub market: MarketConfig,
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    /// Human-readable reasons for failure, empty when `passed`.
    pub failures: Vec<String>,
    pub result: HedgeResult,
}

impl HedgeReport {
    pub fn new(market: &MarketSpec, result: HedgeResult, tol: f64, seed: u64) -> HedgeReport {
        let failures = hedge_failures(market, &result, tol);
        HedgeReport {
            market: MarketConfig::describe(market),
            seed,
            tol,
            passed: failures.is_empty(),
            failures,
            result,
        }
    }
}

/// Checks `0 ≤ X_T* ≤ H`, the superhedge, the budget and the solver's own
/// certificates.
pub fn hedge_failures(market: &MarketSpec, r: &HedgeResult, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let (x, h) = (r.xt_star.values(), market.claim.values());
    if (0..x.len()).any(|i| x[i] < -tol || x[i] > h[i] + tol) {
        out.push("X_T* leaves [0, H]".to_string());
    }
    let st = market.st.values();
    if (0..x.len()).any(|i| r.x0 + r.h * (st[i] - market.s0) < x[i] - tol) {
        out.push("strategy does not superhedge X_T*".to_string());
    }
    if r.x0 > market.budget + tol.max(1e-9) && !r.full_hedge {
        out.push(format!(
            "x0 = {} exceeds the budget {}",
            r.x0, market.budget
        ));
    }
    match superhedge_price(market, &r.xt_star) {
        Ok(p) if (p - r.x0).abs() > tol.max(1e-9) => {
            out.push(format!("superhedge price {p} differs from x0 = {}", r.x0))
        }
        Ok(_) => {}
        Err(e) => out.push(e.to_string()),
    }
    if let Some(s) = &r.solution {
        if !solution_passes(s, tol) {
            out.push(format!(
                "certificates fail at tol {tol:e} (largest residual {:e}, accuracy {:e})",
                s.certificates.max_residual(),
                s.certified_accuracy()
            ));
        }
    }
    if r.threshold_deviation > tol {
        out.push(format!("threshold form off by {:e}", r.threshold_deviation));
    }
    out
}
