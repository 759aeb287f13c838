//! End-to-end acceptance checks, one line of output per criterion.
//!
//! Run with `cargo test -p convex-np-core --test acceptance -- --nocapture`.

#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::E;
use std::time::Instant;

use convex_np::fixtures::{binomial_market, example_41, example_42, example_43};
use convex_np::lp::{LinearProgram, Relation};
use convex_np::solver::infer_threshold;
use convex_np::{
    audit_example_61, evaluate, grid_search, most_powerful_test, penalty, solve, solve_primal,
    solve_shortfall, superhedge_price, superhedge_strategy, Density, Error, ProblemSpec,
    RandomVariable, Solution, SolverOptions, Strategy,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    check((got - want).abs() <= tol, || {
        format!("{name} = {got}, expected {want} within {tol:e}")
    })
}

fn close_vec(name: &str, got: &[f64], want: &[f64], tol: f64) -> Result<(), String> {
    check(got.len() == want.len(), || {
        format!("{name} has {} entries", got.len())
    })?;
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        close(&format!("{name}[{i}]"), *g, *w, tol)?;
    }
    Ok(())
}

fn solved(spec: &ProblemSpec) -> Result<Solution, String> {
    solve(spec, &SolverOptions::default()).map_err(|e| format!("solve failed: {e}"))
}

fn q_paper() -> [f64; 2] {
    [3.0 / (E + 3.0), E / (E + 3.0)]
}

fn p_paper() -> [f64; 2] {
    [E / (E + 3.0), 3.0 / (E + 3.0)]
}

fn residual(r: &convex_np::Residual) -> f64 {
    r.value().unwrap_or(0.0)
}

fn criterion_1() -> Outcome {
    let spec = example_41().map_err(|e| e.to_string())?;
    let sol = solved(&spec)?;
    check(sol.x_star.values() == [1.0, 0.0], || {
        format!("X* = {:?}, expected exactly (1, 0)", sol.x_star.values())
    })?;
    let q = sol.q_star.density.probabilities(&spec.space);
    close_vec("Q*", &q, &q_paper(), 1e-6)?;
    let beta = ((E + 3.0) / 4.0).ln();
    close("beta", sol.beta, beta, 1e-6)?;
    Ok(format!(
        "X* = (1, 0), Q* = ({:.6}, {:.6}), beta = {:.6} [{} path]",
        q[0],
        q[1],
        sol.beta,
        sol.strategy.name()
    ))
}

fn criterion_2() -> Outcome {
    let spec = example_42().map_err(|e| e.to_string())?;
    let sol = solved(&spec)?;
    let p = sol
        .p_star
        .as_ref()
        .ok_or("no P* returned")?
        .density
        .probabilities(&spec.space);
    close_vec("P*", &p, &p_paper(), 1e-6)?;
    close("gamma", sol.gamma_alpha, 0.5, 1e-6)?;
    let tight = residual(&sol.certificates.alpha_tightness);
    check(tight <= 1e-6, || {
        format!("alpha-tightness residual {tight:e}")
    })?;
    Ok(format!(
        "P* = ({:.6}, {:.6}), gamma = {:.6}, tightness {tight:.1e}",
        p[0], p[1], sol.gamma_alpha
    ))
}

fn criterion_3() -> Outcome {
    let spec = example_43().map_err(|e| e.to_string())?;
    let sol = solved(&spec)?;
    close_vec("X*", sol.x_star.values(), &[1.0, 0.0], 1e-6)?;
    close("z", sol.z, E / 3.0, 1e-6)?;
    let boundary: Vec<(usize, f64)> = sol.boundary_values.iter().map(|(k, v)| (*k, *v)).collect();
    check(boundary.len() == 1 && boundary[0].0 == 1, || {
        format!("boundary set {boundary:?}, expected atom 1 only")
    })?;
    close("B", boundary[0].1, 0.0, 1e-6)?;
    let q = sol.q_star.density.probabilities(&spec.space);
    close_vec("Q*", &q, &q_paper(), 1e-4)?;
    let p = sol
        .p_star
        .as_ref()
        .ok_or("no P* returned")?
        .density
        .probabilities(&spec.space);
    close_vec("P*", &p, &p_paper(), 1e-4)?;
    Ok(format!(
        "z = {:.6}, boundary {{1}} with B = {:.1e}, Q* and P* match [{} path]",
        sol.z,
        boundary[0].1,
        sol.strategy.name()
    ))
}

fn criterion_4() -> Outcome {
    let audit = audit_example_61().map_err(|e| e.to_string())?;
    check(audit.q_density_error <= 1e-9, || {
        format!("Q* densities off by {:e}", audit.q_density_error)
    })?;
    close("claimed value", audit.claimed_value, (E - 1.0).ln(), 1e-9)?;
    close(
        "oracle optimum",
        audit.grid.value,
        0.4918,
        audit.grid.error_bound,
    )?;
    close("solver optimum", audit.solution.beta, 0.4918, 5e-4)?;
    check(audit.grid.value < audit.claimed_value - 0.01, || {
        "oracle does not beat the claimed test".into()
    })?;
    check(audit.flagged && !audit.findings.is_empty(), || {
        "the example was not flagged".into()
    })?;
    Ok(format!(
        "densities within {:.1e}; oracle {:.4} < claimed {:.4}; FLAGGED ({} findings)",
        audit.q_density_error,
        audit.grid.value,
        audit.claimed_value,
        audit.findings.len()
    ))
}

fn instances() -> Vec<ProblemSpec> {
    let mut rng = common::rng(20_240_501);
    (0..50).map(|_| common::instance(&mut rng)).collect()
}

fn criterion_5() -> Outcome {
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for (k, spec) in instances().iter().enumerate() {
        let primal = solve_primal(spec, &opts).map_err(|e| format!("instance {k}: {e}"))?;
        let grid = grid_search(spec, 200).map_err(|e| format!("instance {k}: {e}"))?;
        let diff = (primal.value - grid.value).abs();
        check(diff <= grid.error_bound, || {
            format!(
                "instance {k}: solver {} vs grid {} exceeds bound {}",
                primal.value, grid.value, grid.error_bound
            )
        })?;
        worst = worst.max(diff / grid.error_bound);
        let sol = match solve(spec, &opts) {
            Err(Error::StructureViolation(m)) => {
                return Err(format!("instance {k}: structure violation {m}"))
            }
            r => r.map_err(|e| format!("instance {k}: {e}"))?,
        };
        if let Some(p) = &sol.p_star {
            infer_threshold(spec, &sol.x_star, &sol.q_star.density, &p.density, sol.tol)
                .map_err(|e| format!("instance {k}: {e}"))?;
        }
    }
    Ok(format!(
        "50 instances within the grid bound (worst {:.0}% of it), no structure violations",
        100.0 * worst
    ))
}

fn criterion_6() -> Outcome {
    let opts = SolverOptions::default();
    let (mut lp, mut cuts, mut tight) = (0, 0, 0);
    for (k, spec) in instances().iter().enumerate() {
        let sol = solve(spec, &opts).map_err(|e| format!("instance {k}: {e}"))?;
        let tol = match sol.strategy {
            Strategy::Lp => {
                lp += 1;
                1e-8
            }
            _ => {
                cuts += 1;
                1e-4
            }
        };
        let c = &sol.certificates;
        for (name, r) in [
            ("minimax_gap", &c.minimax_gap),
            ("q_attainment", &c.q_attainment),
            ("p_attainment", &c.p_attainment),
            ("q_saddle", &c.q_saddle),
            ("p_saddle", &c.p_saddle),
        ] {
            check(r.passes(tol), || format!("instance {k}: {name} = {r:?}"))?;
        }
        if sol.gamma_alpha > 1e-6 {
            tight += 1;
            let rho1 = evaluate(&spec.space, &spec.rho1, &sol.x_star).map_err(|e| e.to_string())?;
            check((rho1 - spec.alpha).abs() <= tol, || {
                format!("instance {k}: rho1(X*) = {rho1} but alpha = {}", spec.alpha)
            })?;
        }
    }
    Ok(format!(
        "{lp} LP and {cuts} cutting-plane solutions certified; alpha binding on all {tight} with gamma > 1e-6"
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = common::rng(7);
    let trials = 1000;
    let slack = 1e-9;
    let mut violations = [0usize; 4];
    for _ in 0..trials {
        let n = rng.gen_range(2..=5);
        let sp = common::space(&mut rng, n);
        let rho = common::any_risk(&mut rng, &sp);
        let x = common::variable(&mut rng, n, 3.0);
        let y = common::variable(&mut rng, n, 3.0);
        let ev = |v: &RandomVariable| evaluate(&sp, &rho, v).unwrap();
        let rx = ev(&x);

        let up = common::variable(&mut rng, n, 1.0);
        let bump = x.zip_with(&up, |a, b| a + b.abs());
        if ev(&bump) < rx - slack {
            violations[0] += 1;
        }
        let c = rng.gen_range(-5.0..5.0);
        if (ev(&x.map(|v| v + c)) - (rx + c)).abs() > slack * (1.0 + rx.abs() + c.abs()) {
            violations[1] += 1;
        }
        let l = rng.gen_range(0.0..1.0);
        let mix = x.zip_with(&y, |a, b| l * a + (1.0 - l) * b);
        if ev(&mix) > l * rx + (1.0 - l) * ev(&y) + slack * (1.0 + rx.abs()) {
            violations[2] += 1;
        }
        let q =
            Density::from_probabilities(&sp, &common::sparse_probabilities(&mut rng, n)).unwrap();
        let eq = convex_np::expectation(&sp, &q, &x).unwrap();
        let pen = penalty(&sp, &rho, &q).unwrap();
        if pen.is_finite() && rx < eq - pen - slack * (1.0 + rx.abs()) {
            violations[3] += 1;
        }
    }
    check(violations.iter().all(|v| *v == 0), || {
        format!(
            "violations (monotone, cash, convex, Fenchel) = {violations:?} out of {trials} each"
        )
    })?;
    Ok(format!(
        "monotonicity, cash invariance, convexity, Fenchel: {trials} trials each, 0 violations"
    ))
}

/// `max E_p[Z]` s.t. `E_q[Z] ≤ level`, `0 ≤ Z ≤ 1`; returns power and the
/// multiplier of the size constraint.
fn np_lp(w: &[f64], p: &[f64], q: &[f64], level: f64) -> (f64, f64, Vec<f64>) {
    let n = w.len();
    let mut lp = LinearProgram::new((0..n).map(|i| -w[i] * p[i]).collect());
    for i in 0..n {
        lp.set_bounds(i, 0.0, 1.0);
    }
    lp.add_constraint((0..n).map(|i| w[i] * q[i]).collect(), Relation::Le, level);
    let sol = lp.solve().unwrap();
    (-sol.objective, -sol.duals[0], sol.x)
}

fn criterion_8() -> Outcome {
    let mut rng = common::rng(8);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = rng.gen_range(2..=6);
        let sp = common::space(&mut rng, n);
        let p =
            Density::from_probabilities(&sp, &common::sparse_probabilities(&mut rng, n)).unwrap();
        let q =
            Density::from_probabilities(&sp, &common::sparse_probabilities(&mut rng, n)).unwrap();
        let level = rng.gen_range(0.0..1.0);
        let test = most_powerful_test(&sp, &p, &q, level).map_err(|e| e.to_string())?;
        let w = sp.weights();
        let (power, lambda, _) = np_lp(w, p.values(), q.values(), level);
        let diff = (test.power - power).abs();
        worst = worst.max(diff);
        check(diff <= 1e-9, || {
            format!("instance {k}: greedy power {} vs LP {power}", test.power)
        })?;
        check(test.size <= level + 1e-12, || {
            format!("instance {k}: size {} above level {level}", test.size)
        })?;
        let z = test.test.values();
        for i in 0..n {
            let reduced = p.values()[i] - lambda * q.values()[i];
            let scale = 1e-9 * (1.0 + p.values()[i] + lambda * q.values()[i]);
            check(
                (reduced <= scale || z[i] >= 1.0 - 1e-12) && (reduced >= -scale || z[i] <= 1e-12),
                || {
                    format!("instance {k}: atom {i} violates slackness (Z = {}, p - lambda q = {reduced})", z[i])
                },
            )?;
        }
        check(lambda * (level - test.size) <= 1e-9, || {
            format!(
                "instance {k}: multiplier {lambda} on slack size {}",
                test.size
            )
        })?;
    }
    Ok(format!(
        "100 instances, worst power gap {worst:.1e}, complementary slackness holds"
    ))
}

fn criterion_9() -> Outcome {
    let opts = SolverOptions::default();
    let u0 = 1.0 / 3.0;
    let market = binomial_market(1.0 / 6.0).map_err(|e| e.to_string())?;
    let r = solve_shortfall(&market, &opts).map_err(|e| e.to_string())?;
    close("U0", r.u0, u0, 1e-9)?;
    close_vec("X_T*", r.xt_star.values(), &[0.5, 0.0], 1e-9)?;
    close("x0", r.x0, 1.0 / 6.0, 1e-9)?;
    close("h", r.h, 1.0 / 3.0, 1e-9)?;

    let mut last = f64::INFINITY;
    let steps = 12;
    for j in 0..=steps {
        let budget = u0 * j as f64 / steps as f64;
        let m = binomial_market(budget).map_err(|e| e.to_string())?;
        let r = solve_shortfall(&m, &opts).map_err(|e| format!("budget {budget}: {e}"))?;
        check(r.shortfall_risk <= last + 1e-9, || {
            format!("risk rises to {} at budget {budget}", r.shortfall_risk)
        })?;
        last = r.shortfall_risk;
    }
    let at_u0 = binomial_market(u0).map_err(|e| e.to_string())?;
    let zero = RandomVariable::constant(2, 0.0);
    let rho0 = evaluate(&at_u0.space, &at_u0.rho, &zero).map_err(|e| e.to_string())?;
    close("risk at U0", last, rho0, 1e-9)?;

    let mut rng = common::rng(9);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let m = common::market(&mut rng);
        let x = m.claim.clone();
        let price = superhedge_price(&m, &x).map_err(|e| format!("market {k}: {e}"))?;
        let (x0, h) = superhedge_strategy(&m, &x).map_err(|e| format!("market {k}: {e}"))?;
        let shortfall = (0..m.len())
            .map(|i| x.values()[i] - x0 - h * (m.st.values()[i] - m.s0))
            .fold(0.0f64, f64::max);
        let gap = (price - x0).abs().max(shortfall);
        worst = worst.max(gap);
        check(gap <= 1e-9, || {
            format!("market {k}: price {price} vs cost {x0}")
        })?;
    }
    Ok(format!(
        "binomial fixture matches; risk nonincreasing to rho(0) at U0; 50 markets, duality residual {worst:.1e}"
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("fixture paper-4.1", criterion_1),
        ("fixture paper-4.2", criterion_2),
        ("fixture paper-4.3", criterion_3),
        ("fixture paper-6.1 audit", criterion_4),
        ("oracle equivalence", criterion_5),
        ("certificate suite", criterion_6),
        ("axiom properties", criterion_7),
        ("classical Neyman-Pearson", criterion_8),
        ("hedging", criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.2}s): {detail}", k + 1),
            Err(why) => {
                println!("criterion {}: FAIL {name} ({secs:.2}s): {why}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
