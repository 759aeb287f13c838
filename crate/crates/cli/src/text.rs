use std::fmt::Write;

use convex_np::fixtures::AuditTable;
use convex_np::report::{AtomRow, HedgeReport, SolveReport};
use convex_np::CertificateReport;

use crate::jobs::Outcome;

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn certificates(out: &mut String, c: &CertificateReport, tol: f64) {
    let _ = writeln!(out, "certificates (tol {tol:e})");
    for (name, r) in c.entries() {
        let line = match r.value() {
            Some(v) => {
                let mark = if v <= tol { "ok" } else { "FAIL" };
                format!("{v:.3e}  {mark}")
            }
            None => "n/a".to_string(),
        };
        let _ = writeln!(out, "  {name:<20} {line}");
    }
}

fn solved(out: &mut String, r: &SolveReport, atoms: &[AtomRow]) {
    let s = &r.solution;
    let _ = writeln!(
        out,
        "strategy    {} ({} iterations, gap {:.1e})",
        s.strategy.name(),
        s.iterations,
        s.gap
    );
    let _ = writeln!(out, "beta        {:.9}", s.beta);
    let _ = writeln!(out, "gamma_alpha {:.9}", s.gamma_alpha);
    let _ = writeln!(out, "z           {:.9}", s.z);
    let _ = writeln!(out, "Q*          {}", list(&r.q_star_probabilities));
    match &r.p_star_probabilities {
        Some(p) => {
            let _ = writeln!(out, "P*          {}", list(p));
        }
        None => {
            let _ = writeln!(out, "P*          undefined (gamma_alpha vanishes)");
        }
    }
    let _ = writeln!(
        out,
        "  {:>4} {:>10} {:>10} {:>12} {:>12}  region",
        "atom", "k1", "k2", "x*", "ratio"
    );
    for a in atoms {
        let _ = writeln!(
            out,
            "  {:>4} {:>10.6} {:>10.6} {:>12.9} {:>12.6}  {}",
            a.atom_index,
            a.k1,
            a.k2,
            a.x_star,
            a.ratio,
            a.region.name()
        );
    }
    certificates(out, &s.certificates, r.tol);
    let _ = writeln!(out, "accuracy    {:.1e}", r.certified_accuracy);
}

fn hedged(out: &mut String, r: &HedgeReport) {
    let h = &r.result;
    let _ = writeln!(out, "U0          {:.9}", h.u0);
    let _ = writeln!(out, "budget      {:.9}", r.market.budget);
    if h.full_hedge {
        let _ = writeln!(out, "full hedge: the budget covers the superhedge of H");
    }
    let _ = writeln!(out, "X_T*        {}", list(h.xt_star.values()));
    let _ = writeln!(out, "x0, h       {:.9}, {:.9}", h.x0, h.h);
    let _ = writeln!(out, "z, B        {:.9}, {:.9}", h.z, h.b);
    let _ = writeln!(out, "risk        {:.9}", h.shortfall_risk);
    for f in &h.flags {
        let _ = writeln!(out, "flag        {f}");
    }
    if let Some(s) = &h.solution {
        certificates(out, &s.certificates, r.tol);
    }
    for f in &r.failures {
        let _ = writeln!(out, "failure     {f}");
    }
}

pub fn render(label: &str, outcome: &Outcome) -> String {
    let mut out = format!("== {label} ==\n");
    let status = match outcome {
        Outcome::Solved { report, atoms } => {
            solved(&mut out, report, atoms);
            if report.passed {
                "PASS"
            } else {
                "FAIL (certificates)"
            }
        }
        Outcome::Hedged(report) => {
            hedged(&mut out, report);
            if report.passed {
                "PASS"
            } else {
                "FAIL (certificates)"
            }
        }
        Outcome::ConfigError(e) => {
            let _ = writeln!(out, "config error: {e}");
            "FAIL (config)"
        }
        Outcome::SolverFailure(e) => {
            let _ = writeln!(out, "solver failure: {e}");
            "FAIL (solver)"
        }
    };
    let _ = writeln!(out, "status      {status}\n");
    out
}

pub fn audit(table: &AuditTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<15} {:<26} {:<30} {:<30} {:>10}  status",
        "fixture", "quantity", "claimed", "computed", "deviation"
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:<15} {:<26} {:<30} {:<30} {:>10.2e}  {}",
            r.fixture,
            r.quantity,
            r.claimed,
            r.computed,
            r.deviation,
            r.status.name()
        );
    }
    if let Some(a) = &table.example_61 {
        for f in &a.findings {
            let _ = writeln!(out, "paper-6.1: {f}");
        }
    }
    let verdict = if table.passed() { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "audit {verdict} at tol {:e}", table.tol);
    out
}
