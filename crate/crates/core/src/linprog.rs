//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c . x
//! subject to  A_eq x  = b_eq
//!             A_ub x <= b_ub
//!             lo <= x <= hi
//! ```
//!
//! Bounds are folded into a nonnegative standard form (shifts, reflections and
//! free splits), upper bounds become extra rows. Pivoting uses Dantzig's rule
//! and falls back to Bland's rule after a run of degenerate pivots, so the
//! solver terminates and is deterministic for a fixed input.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::LpError;
use crate::num::dot;

/// Feasibility tolerance applied to the recovered solution.
pub const FEASIBILITY_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    /// Per-variable `(lo, hi)`; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Minimize `objective . x` with every variable in `[0, inf)`.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            bounds: vec![(0.0, f64::INFINITY); n],
            ..Self::default()
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn ge(self, row: Vec<f64>, rhs: f64) -> Self {
        self.le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        let mismatch = |what, found| LpError::DimensionMismatch {
            what,
            expected: n,
            found,
        };
        if self.bounds.len() != n {
            return Err(mismatch("bounds", self.bounds.len()));
        }
        if self.a_eq.len() != self.b_eq.len() {
            return Err(LpError::DimensionMismatch {
                what: "equality rhs",
                expected: self.a_eq.len(),
                found: self.b_eq.len(),
            });
        }
        if self.a_ub.len() != self.b_ub.len() {
            return Err(LpError::DimensionMismatch {
                what: "inequality rhs",
                expected: self.a_ub.len(),
                found: self.b_ub.len(),
            });
        }
        for row in self.a_eq.iter().chain(&self.a_ub) {
            if row.len() != n {
                return Err(mismatch("constraint row", row.len()));
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.a_eq.iter().flatten())
            .chain(self.a_ub.iter().flatten())
            .chain(&self.b_eq)
            .chain(&self.b_ub)
            .all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Numerical("non-finite coefficient"));
        }
        for (index, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff the status is optimal.
    pub x: Option<Vec<f64>>,
    /// `objective . x` when optimal, NaN otherwise.
    pub objective_value: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            x: None,
            objective_value: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable is expressed through nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { lo: f64, col: usize },
    Reflect { hi: f64, col: usize },
    Free { pos: usize, neg: usize },
}

impl VarMap {
    /// Writes `coef * x` into column coefficients, returning the constant part.
    fn substitute(&self, coef: f64, out: &mut [f64]) -> f64 {
        match *self {
            VarMap::Shift { lo, col } => {
                out[col] += coef;
                coef * lo
            }
            VarMap::Reflect { hi, col } => {
                out[col] -= coef;
                coef * hi
            }
            VarMap::Free { pos, neg } => {
                out[pos] += coef;
                out[neg] -= coef;
                0.0
            }
        }
    }

    fn recover(&self, y: &[f64]) -> f64 {
        match *self {
            VarMap::Shift { lo, col } => lo + y[col],
            VarMap::Reflect { hi, col } => hi - y[col],
            VarMap::Free { pos, neg } => y[pos] - y[neg],
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) x (cols + 1)`, last row is the reduced-cost row, last
    /// column the right-hand side.
    cells: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * (self.cols + 1) + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.cells[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..width {
            *self.at_mut(pr, c) *= inv;
        }
        *self.at_mut(pr, pc) = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.at(r, pc);
            if factor == 0.0 {
                continue;
            }
            for c in 0..width {
                let delta = factor * self.at(pr, c);
                *self.at_mut(r, c) -= delta;
            }
            *self.at_mut(r, pc) = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Loads `cost` into the objective row and prices out the basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let obj = self.rows;
        for c in 0..=self.cols {
            *self.at_mut(obj, c) = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for c in 0..=self.cols {
                let delta = cb * self.at(r, c);
                *self.at_mut(obj, c) -= delta;
            }
        }
    }

    fn run(&mut self, allow_artificial: bool, max_iter: usize) -> Result<PhaseOutcome, LpError> {
        let obj = self.rows;
        let limit = if allow_artificial {
            self.cols
        } else {
            self.artificial_start
        };
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -COST_TOL;
            for c in 0..limit {
                let d = self.at(obj, c);
                if d < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(pc) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tol = 1e-12 * (1.0 + lratio.abs());
                        if ratio < lratio - tol
                            || (ratio <= lratio + tol && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((pr, ratio)) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
        Err(LpError::Numerical("iteration limit reached"))
    }
}

/// Solves `program`. Infeasible and unbounded programs are reported through
/// the status; a solution that fails the post-solve feasibility check is an
/// error rather than a silently wrong answer.
pub fn solve_lp(program: &LinearProgram) -> Result<LpSolution, LpError> {
    program.check()?;
    let n = program.n_vars();

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &program.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shift { lo, col: ncols });
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Reflect { hi, col: ncols });
            ncols += 1;
        } else {
            maps.push(VarMap::Free {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }
    let structural = ncols;

    // (coefficients over structural columns, rhs, is_inequality)
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let mut push_row = |a: &[f64], b: f64, ineq: bool| {
        let mut coeffs = vec![0.0; structural];
        let mut offset = 0.0;
        for (j, &coef) in a.iter().enumerate() {
            if coef != 0.0 {
                offset += maps[j].substitute(coef, &mut coeffs);
            }
        }
        rows.push((coeffs, b - offset, ineq));
    };
    for (a, &b) in program.a_eq.iter().zip(&program.b_eq) {
        push_row(a, b, false);
    }
    for (a, &b) in program.a_ub.iter().zip(&program.b_ub) {
        push_row(a, b, true);
    }
    for &(col, width) in &upper_rows {
        let mut coeffs = vec![0.0; structural];
        coeffs[col] = 1.0;
        rows.push((coeffs, width, true));
    }

    let m = rows.len();
    let slack_count = rows.iter().filter(|r| r.2).count();
    let artificial_start = structural + slack_count;
    let mut needs_artificial = Vec::with_capacity(m);
    for (_, b, ineq) in &rows {
        needs_artificial.push(!*ineq || *b < 0.0);
    }
    let artificial_count = needs_artificial.iter().filter(|v| **v).count();
    let total = artificial_start + artificial_count;

    let mut tab = Tableau {
        rows: m,
        cols: total,
        cells: vec![0.0; (m + 1) * (total + 1)],
        basis: vec![0; m],
        artificial_start,
    };
    let mut slack = structural;
    let mut artificial = artificial_start;
    for (r, (coeffs, b, ineq)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for (c, v) in coeffs.iter().enumerate() {
            *tab.at_mut(r, c) = sign * v;
        }
        *tab.at_mut(r, total) = sign * b;
        if *ineq {
            *tab.at_mut(r, slack) = sign;
            if !needs_artificial[r] {
                tab.basis[r] = slack;
            }
            slack += 1;
        }
        if needs_artificial[r] {
            *tab.at_mut(r, artificial) = 1.0;
            tab.basis[r] = artificial;
            artificial += 1;
        }
    }

    let max_iter = 10_000 + 200 * (m + total);
    let scale = rows.iter().fold(1.0_f64, |s, r| s.max(r.1.abs()));

    if artificial_count > 0 {
        let mut phase1 = vec![0.0; total];
        for c in phase1.iter_mut().skip(artificial_start) {
            *c = 1.0;
        }
        tab.set_objective(&phase1);
        match tab.run(true, max_iter)? {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded => return Err(LpError::Numerical("phase one unbounded")),
        }
        let infeasibility = -tab.rhs(m);
        if infeasibility > 1e-9 * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        for r in 0..m {
            if tab.basis[r] < artificial_start {
                continue;
            }
            let replacement = (0..artificial_start)
                .filter(|&c| tab.at(r, c).abs() > 1e-9)
                .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()));
            if let Some(c) = replacement {
                tab.pivot(r, c);
            }
        }
    }

    let mut cost = vec![0.0; total];
    for (j, &coef) in program.objective.iter().enumerate() {
        if coef != 0.0 {
            // constant offset dropped; the objective is re-evaluated on x below
            maps[j].substitute(coef, &mut cost[..structural]);
        }
    }
    tab.set_objective(&cost);
    match tab.run(false, max_iter)? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => return Ok(LpSolution::without_point(LpStatus::Unbounded)),
    }

    let mut y = vec![0.0; total];
    for r in 0..m {
        y[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    let mut x: Vec<f64> = maps.iter().map(|map| map.recover(&y)).collect();
    for (v, &(lo, hi)) in x.iter_mut().zip(&program.bounds) {
        let tol = FEASIBILITY_TOL * (1.0 + v.abs());
        if *v < lo - tol || *v > hi + tol {
            return Err(LpError::Numerical("solution violates variable bounds"));
        }
        *v = v.clamp(lo, hi);
    }
    for (a, &b) in program.a_eq.iter().zip(&program.b_eq) {
        if (dot(a, &x) - b).abs() > FEASIBILITY_TOL * (1.0 + b.abs()) {
            return Err(LpError::Numerical("solution violates an equality"));
        }
    }
    for (a, &b) in program.a_ub.iter().zip(&program.b_ub) {
        if dot(a, &x) - b > FEASIBILITY_TOL * (1.0 + b.abs()) {
            return Err(LpError::Numerical("solution violates an inequality"));
        }
    }
    let objective_value = dot(&program.objective, &x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x: Some(x),
        objective_value,
    })
}
