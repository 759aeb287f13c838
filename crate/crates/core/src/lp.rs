//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are tiny here (a handful of atoms, at most a few hundred cuts),
//! so a dense tableau is fine. Dual values are read off the columns that
//! started as the artificial identity block, which hold `B⁻¹` at the end.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const RAY_EPS: f64 = 1e-7;
const HARRIS_EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize cᵀx` subject to linear rows and per-variable bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow price `∂objective/∂rhs` of each constraint, in insertion order.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { lo: f64, col: usize },
    Mirror { hi: f64, col: usize },
    Split { pos: usize, neg: usize },
}

impl LinearProgram {
    /// New problem with every variable bounded to `[0, ∞)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.num_vars();
        for j in 0..n {
            if self.lower[j] > self.upper[j] + FEAS_EPS {
                return Err(Error::LpInfeasible);
            }
        }

        // Map every variable onto non-negative standard columns.
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0;
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let m = if lo.is_finite() {
                ncols += 1;
                VarMap::Shift { lo, col: ncols - 1 }
            } else if hi.is_finite() {
                ncols += 1;
                VarMap::Mirror { hi, col: ncols - 1 }
            } else {
                ncols += 2;
                VarMap::Split {
                    pos: ncols - 2,
                    neg: ncols - 1,
                }
            };
            maps.push(m);
        }

        // Standardized rows: (coeffs over structural columns, relation, rhs).
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        for c in &self.constraints {
            let mut a = vec![0.0; ncols];
            let mut rhs = c.rhs;
            for (j, &coef) in c.coeffs.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                match maps[j] {
                    VarMap::Shift { lo, col } => {
                        a[col] += coef;
                        rhs -= coef * lo;
                    }
                    VarMap::Mirror { hi, col } => {
                        a[col] -= coef;
                        rhs -= coef * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        a[pos] += coef;
                        a[neg] -= coef;
                    }
                }
            }
            rows.push((a, c.relation, rhs));
        }
        for j in 0..n {
            if let VarMap::Shift { lo, col } = maps[j] {
                let hi = self.upper[j];
                if hi.is_finite() {
                    let mut a = vec![0.0; ncols];
                    a[col] = 1.0;
                    rows.push((a, Relation::Le, (hi - lo).max(0.0)));
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        for (j, &c) in self.objective.iter().enumerate() {
            match maps[j] {
                VarMap::Shift { col, .. } => {
                    cost[col] += c;
                }
                VarMap::Mirror { col, .. } => {
                    cost[col] -= c;
                }
                VarMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }

        let mut tab = Tableau::build(&rows, ncols);
        let pivots_phase1 = tab.phase_one()?;
        let full_cost: Vec<f64> = cost
            .iter()
            .copied()
            .chain(std::iter::repeat(0.0).take(tab.nslack))
            .collect();
        let pivots_phase2 = tab.phase_two(&full_cost)?;

        tab.refine();
        let y = tab.column_values();
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match maps[j] {
                VarMap::Shift { lo, col } => lo + y[col],
                VarMap::Mirror { hi, col } => hi - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            };
        }
        let violation = self.violation(&x);
        if violation > FEAS_EPS * 100.0 {
            return Err(Error::NoConvergence {
                iterations: pivots_phase1 + pivots_phase2,
                gap: violation,
            });
        }
        let objective = self.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        let std_duals = tab.duals(&full_cost);
        let duals = (0..self.constraints.len())
            .map(|r| tab.sign[r] * std_duals[r])
            .collect();
        Ok(LpSolution {
            x,
            objective,
            duals,
            pivots: pivots_phase1 + pivots_phase2,
        })
    }
}

impl LinearProgram {
    /// Largest row violation at `x`, relative to the row's scale.
    fn violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                let scale = 1.0
                    + c.rhs.abs()
                    + c.coeffs
                        .iter()
                        .zip(x)
                        .map(|(a, v)| (a * v).abs())
                        .sum::<f64>();
                let over = match c.relation {
                    Relation::Le => lhs - c.rhs,
                    Relation::Ge => c.rhs - lhs,
                    Relation::Eq => (lhs - c.rhs).abs(),
                };
                over.max(0.0) / scale
            })
            .fold(0.0, f64::max)
    }
}

struct Tableau {
    /// `m × (nstruct + nslack + m + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    /// The tableau as built, before any pivot.
    original: Vec<Vec<f64>>,
    basis: Vec<usize>,
    sign: Vec<f64>,
    nstruct: usize,
    nslack: usize,
    m: usize,
}

impl Tableau {
    fn build(rows: &[(Vec<f64>, Relation, f64)], nstruct: usize) -> Self {
        let m = rows.len();
        let nslack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let width = nstruct + nslack + m + 1;
        let mut t = vec![vec![0.0; width]; m];
        let mut sign = vec![1.0; m];
        let mut slack = nstruct;
        for (i, (a, rel, rhs)) in rows.iter().enumerate() {
            t[i][..nstruct].copy_from_slice(a);
            match rel {
                Relation::Le => {
                    t[i][slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    t[i][slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            t[i][width - 1] = *rhs;
            if *rhs < 0.0 {
                sign[i] = -1.0;
                for v in t[i].iter_mut() {
                    *v = -*v;
                }
            }
            t[i][nstruct + nslack + i] = 1.0;
        }
        let basis = (0..m).map(|i| nstruct + nslack + i).collect();
        Tableau {
            original: t.clone(),
            t,
            basis,
            sign,
            nstruct,
            nslack,
            m,
        }
    }

    fn art_start(&self) -> usize {
        self.nstruct + self.nslack
    }

    fn rhs_col(&self) -> usize {
        self.nstruct + self.nslack + self.m
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland's rule on `cost` (indexed over all columns but the rhs)
    /// over the columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<usize> {
        let mut pivots = 0;
        let limit = 50_000 + 100 * (self.m + allowed);
        loop {
            let cb: Vec<f64> = self.basis.iter().map(|&b| cost[b]).collect();
            let mut step = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let z: f64 = (0..self.m).map(|i| cb[i] * self.t[i][j]).sum();
                let scale = 1.0 + cost[j].abs();
                let reduced = cost[j] - z;
                if reduced >= -COST_EPS * scale {
                    continue;
                }
                match self.ratio_test(j) {
                    Some(row) => {
                        step = Some((row, j));
                        break;
                    }
                    // A column without a pivot row is a ray only if its
                    // reduced cost is clearly negative; otherwise it is
                    // roundoff and skipped.
                    None if reduced < -RAY_EPS * scale => return Err(Error::LpUnbounded),
                    None => continue,
                }
            }
            let Some((row, col)) = step else {
                return Ok(pivots);
            };
            self.pivot(row, col);
            pivots += 1;
            if pivots > limit {
                return Err(Error::NoConvergence {
                    iterations: pivots,
                    gap: f64::NAN,
                });
            }
        }
    }

    /// Leaving row for entering column `col` by a two-pass Harris test: the
    /// step is bounded with a small feasibility allowance, then the largest
    /// pivot within that step is taken (lowest basic index on ties).
    fn ratio_test(&self, col: usize) -> Option<usize> {
        let rhs = self.rhs_col();
        let rows = || (0..self.m).filter(move |&i| self.t[i][col] > PIVOT_EPS);
        let level = |i: usize| self.t[i][rhs].max(0.0);
        let bound = rows()
            .map(|i| (level(i) + HARRIS_EPS) / self.t[i][col])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        rows()
            .filter(|&i| level(i) / self.t[i][col] <= bound)
            .max_by(|&a, &b| {
                self.t[a][col]
                    .total_cmp(&self.t[b][col])
                    .then(self.basis[b].cmp(&self.basis[a]))
            })
    }

    fn phase_one(&mut self) -> Result<usize> {
        let art = self.art_start();
        let width = self.rhs_col();
        let mut cost = vec![0.0; width];
        for c in cost.iter_mut().skip(art) {
            *c = 1.0;
        }
        let pivots = self.optimize(&cost, width)?;
        let rhs = self.rhs_col();
        let infeasibility: f64 = self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art)
            .map(|(i, _)| self.t[i][rhs])
            .sum();
        let scale = 1.0 + self.t.iter().map(|r| r[rhs].abs()).fold(0.0f64, f64::max);
        if infeasibility > FEAS_EPS * scale {
            return Err(Error::LpInfeasible);
        }
        // Drive zero-level artificials out where possible; rows where that
        // fails are redundant and keep their artificial at zero.
        for i in 0..self.m {
            if self.basis[i] >= art {
                if let Some(j) = (0..art).find(|&j| self.t[i][j].abs() > PIVOT_EPS) {
                    self.pivot(i, j);
                }
            }
        }
        Ok(pivots)
    }

    fn phase_two(&mut self, cost: &[f64]) -> Result<usize> {
        let mut full = cost.to_vec();
        full.extend(std::iter::repeat(0.0).take(self.m));
        self.optimize(&full, self.art_start())
    }

    fn column_values(&self) -> Vec<f64> {
        let rhs = self.rhs_col();
        let mut y = vec![0.0; self.art_start()];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < y.len() {
                y[b] = self.t[i][rhs].max(0.0);
            }
        }
        y
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, k| self.original[i][self.basis[k]])
    }

    /// Recomputes the basic levels from the original rows, discarding the
    /// roundoff accumulated by pivoting.
    fn refine(&mut self) {
        if self.m == 0 {
            return;
        }
        let rhs = self.rhs_col();
        let b = DVector::from_iterator(self.m, self.original.iter().map(|r| r[rhs]));
        if let Some(levels) = self.basis_matrix().lu().solve(&b) {
            if levels.iter().all(|v| v.is_finite()) {
                for (i, v) in levels.iter().enumerate() {
                    self.t[i][rhs] = *v;
                }
            }
        }
    }

    /// `c_Bᵀ B⁻¹` for the standardized rows.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let art = self.art_start();
        if self.m == 0 {
            return Vec::new();
        }
        let cb = DVector::from_iterator(
            self.m,
            self.basis
                .iter()
                .map(|&b| if b < art { cost[b] } else { 0.0 }),
        );
        if let Some(y) = self.basis_matrix().transpose().lu().solve(&cb) {
            if y.iter().all(|v| v.is_finite()) {
                return y.iter().copied().collect();
            }
        }
        (0..self.m)
            .map(|r| (0..self.m).map(|i| cb[i] * self.t[i][art + r]).sum())
            .collect()
    }
}
