//! Optimal randomized tests when both error criteria are convex expectations
//! on a finite sample space, with a one-period shortfall hedging application.
//!
//! The problem is to minimize `ρ₂(K₂ − X)` over tests `K₁ ≤ X ≤ K₂` with
//! `ρ₁(X) ≤ α`. [`solve`] returns the optimal test together with a
//! representative pair `(Q*, P*)` under which it is a classical likelihood
//! ratio test, and a [`CertificateReport`] recomputed from scratch.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classical;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod hedging;
pub mod lp;
pub mod measure;
pub mod oracle;
pub mod report;
pub mod risk;
pub mod serde_ext;
pub mod solver;

pub use classical::{max_gain_test, min_cost_test, most_powerful_test, NpTest};
pub use error::{Error, Result};
pub use hedging::{
    emm_vertices, solve_shortfall, superhedge_price, superhedge_strategy, HedgeResult, MarketSpec,
};
pub use measure::{expectation, kl_divergence, make_space, Density, RandomVariable, SampleSpace};
pub use oracle::{audit_example_61, finite_diff_check, grid_search, AuditReport, GridOptimum};
pub use risk::{evaluate, penalty, supergradient, ConvexExpectation, Generator, Supergradient};
pub use solver::{
    solve, solve_primal, verify_solution, CertificateReport, ProblemSpec, Residual, Solution,
    SolverOptions, Strategy,
};
