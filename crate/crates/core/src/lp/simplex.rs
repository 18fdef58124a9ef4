//! Dense two-phase revised simplex for `min/max c'x s.t. Ax = b, x ≥ 0`.
//!
//! Dantzig pricing with a switch to Bland's rule after a run of degenerate
//! pivots. The basis inverse is kept explicitly, updated by eta steps and
//! refactored by Gauss-Jordan elimination at a fixed period.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Equality-form LP with nonnegative variables. `a` is column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub n_rows: usize,
    pub n_cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub sense: Sense,
}

impl LinearProgram {
    pub fn new(n_rows: usize, sense: Sense) -> Self {
        Self {
            n_rows,
            n_cols: 0,
            a: Vec::new(),
            b: vec![0.0; n_rows],
            c: Vec::new(),
            sense,
        }
    }

    /// Appends a column with objective coefficient `cost`; returns its index.
    pub fn push_column(&mut self, cost: f64, column: &[f64]) -> usize {
        assert_eq!(column.len(), self.n_rows, "column length");
        self.a.extend_from_slice(column);
        self.c.push(cost);
        self.n_cols += 1;
        self.n_cols - 1
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest `|Ax − b|` entry.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut r = self.b.iter().map(|v| -v).collect::<Vec<_>>();
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (ri, aij) in r.iter_mut().zip(self.column(j)) {
                    *ri += aij * xj;
                }
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn validate(&self) -> Result<()> {
        if self.a.len() != self.n_rows * self.n_cols || self.c.len() != self.n_cols || self.b.len() != self.n_rows {
            return Err(Error::Dimension("linear program arrays have inconsistent sizes".into()));
        }
        if self.a.iter().chain(&self.b).chain(&self.c).any(|v| !v.is_finite()) {
            return Err(Error::Config("linear program has non-finite data".into()));
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
pub struct LpOutcome {
    pub status: LpStatus,
    /// Objective in the caller's sense; NaN unless optimal.
    pub objective: f64,
    /// Primal point (optimal, or last feasible basis when unbounded).
    pub solution: Vec<f64>,
    /// Row duals `y` with `c_j − y'A_j ≥ 0` at a minimum (`≤ 0` at a
    /// maximum); for an infeasible problem, a Farkas vector with
    /// `y'A ≤ 0` and `y'b > 0`.
    pub duals: Vec<f64>,
    /// Improving ray when unbounded: `A d = 0`, `d ≥ 0`.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `|b'y − c'x| / (1 + |c'x|)` for an optimal outcome.
    pub fn duality_gap(&self, lp: &LinearProgram) -> f64 {
        let dual: f64 = lp.b.iter().zip(&self.duals).map(|(b, y)| b * y).sum();
        (dual - self.objective).abs() / (1.0 + self.objective.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Reduced-cost optimality tolerance.
    pub optimality_tol: f64,
    /// Minimum pivot magnitude in the ratio test.
    pub pivot_tol: f64,
    /// Pivot magnitude below which the basis is declared unstable.
    pub singular_tol: f64,
    pub refactor_period: usize,
    pub degenerate_switch: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            singular_tol: 1e-12,
            refactor_period: 64,
            degenerate_switch: 50,
        }
    }
}

struct Tableau<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Row signs applied so that `b ≥ 0`.
    sign: Vec<f64>,
    b: Vec<f64>,
    /// Basis columns; indices `≥ n` are artificials.
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major `m × m` basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    opts: SolverOptions,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded(usize, Vec<f64>),
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a LinearProgram, opts: SolverOptions) -> Self {
        let m = lp.n_rows;
        let n = lp.n_cols;
        let sign: Vec<f64> = lp.b.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = lp.b.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut is_basic = vec![false; n + m];
        for i in 0..m {
            is_basic[n + i] = true;
        }
        Self {
            lp,
            m,
            sign,
            xb: b.clone(),
            b,
            basis: (n..n + m).collect(),
            is_basic,
            binv,
            opts,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn n(&self) -> usize {
        self.lp.n_cols
    }

    /// Column `j` of the sign-adjusted constraint matrix (artificials are
    /// unit columns).
    fn col(&self, j: usize, out: &mut [f64]) {
        if j < self.n() {
            for ((o, a), s) in out.iter_mut().zip(self.lp.column(j)).zip(&self.sign) {
                *o = a * s;
            }
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[j - self.n()] = 1.0;
        }
    }

    /// `y = c_B' B^{-1}`.
    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = cost(j);
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (k, &v) in col.iter().enumerate() {
            if v != 0.0 {
                for r in 0..m {
                    out[r] += self.binv[r * m + k] * v;
                }
            }
        }
        out
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        let mut buf = vec![0.0; m];
        for (c, &j) in self.basis.iter().enumerate() {
            self.col(j, &mut buf);
            for r in 0..m {
                mat[r * m + c] = buf[r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&r, &s| mat[r * m + c].abs().total_cmp(&mat[s * m + c].abs()))
                .unwrap_or(c);
            if mat[piv * m + c].abs() < self.opts.singular_tol {
                return Err(Error::NumericalInstability(format!(
                    "basis matrix is singular during refactorization (pivot {:e})",
                    mat[piv * m + c]
                )));
            }
            if piv != c {
                for k in 0..m {
                    mat.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let p = mat[c * m + c];
            for k in 0..m {
                mat[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r != c {
                    let f = mat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            mat[r * m + k] -= f * mat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        // x_B = B^{-1} b
        let mut xb = vec![0.0; m];
        for r in 0..m {
            xb[r] = (0..m).map(|k| self.binv[r * m + k] * self.b[k]).sum();
        }
        self.xb = xb;
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let p = alpha[r];
        if p.abs() < self.opts.singular_tol {
            return Err(Error::NumericalInstability(format!("pivot element {p:e} below threshold")));
        }
        let theta = self.xb[r] / p;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= p;
        }
        for (i, row) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
            let i = if i < r { i } else { i + 1 };
            let f = alpha[i];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pr;
                }
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_period {
            self.refactor()?;
        }
        Ok(())
    }

    /// Runs simplex iterations for cost vector `cost` over the allowed
    /// entering columns.
    fn run(&mut self, cost: &dyn Fn(usize) -> f64, allow_artificial: bool) -> Result<Step> {
        let n = self.n();
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut buf = vec![0.0; m];
        let cmax = (0..n).map(|j| cost(j).abs()).fold(1.0, f64::max);
        let opt_tol = self.opts.optimality_tol * cmax;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::IterationLimit(self.opts.max_iterations));
            }
            let bland = degenerate_run >= self.opts.degenerate_switch;
            let y = self.duals(cost);
            let mut entering: Option<(usize, f64)> = None;
            let limit = if allow_artificial { n + m } else { n };
            for j in 0..limit {
                if self.is_basic[j] {
                    continue;
                }
                self.col(j, &mut buf);
                let d = cost(j) - buf.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>();
                if d < -opt_tol {
                    match entering {
                        None => {
                            entering = Some((j, d));
                            if bland {
                                break;
                            }
                        }
                        Some((_, best)) if d < best => entering = Some((j, d)),
                        _ => {}
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Step::Optimal);
            };
            self.col(q, &mut buf);
            let alpha = self.ftran(&buf);
            let mut leave: Option<(usize, f64)> = None;
            let mut any_small = false;
            for (i, &a) in alpha.iter().enumerate() {
                if a > self.opts.pivot_tol {
                    let ratio = self.xb[i].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if ratio < best && !tie {
                                Some((i, ratio))
                            } else if tie {
                                let better = if bland {
                                    self.basis[i] < self.basis[r]
                                } else {
                                    a > alpha[r]
                                };
                                if better { Some((i, ratio.min(best))) } else { Some((r, best.min(ratio))) }
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                } else if a > self.opts.singular_tol {
                    any_small = true;
                }
            }
            let Some((r, step)) = leave else {
                if any_small {
                    return Err(Error::NumericalInstability(
                        "ratio test found only pivots below the stability threshold".into(),
                    ));
                }
                return Ok(Step::Unbounded(q, alpha));
            };
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q, &alpha)?;
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n() {
                x[j] = self.xb[r].max(0.0);
            }
        }
        x
    }
}

/// Solves the LP. Infeasible and unbounded problems are reported through
/// `LpOutcome::status`; numerical failures and iteration limits are errors.
pub fn solve(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.n_cols;
    let m = lp.n_rows;
    let mut t = Tableau::new(lp, *opts);

    // Phase 1: minimize the sum of artificials.
    let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
    match t.run(&phase1, false)? {
        Step::Optimal => {}
        Step::Unbounded(..) => {
            return Err(Error::NumericalInstability("phase one reported an unbounded ray".into()));
        }
    }
    t.refactor()?;
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(j, _)| **j >= n)
        .map(|(_, v)| v.max(0.0))
        .sum();
    let bscale = t.b.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
    if infeas > 1e-9 * bscale {
        let y = t.duals(&phase1);
        // Farkas vector for the original rows: y'A ≤ 0, y'b > 0.
        let farkas = y.iter().zip(&t.sign).map(|(y, s)| y * s).collect();
        return Ok(LpOutcome {
            status: LpStatus::Infeasible,
            objective: f64::NAN,
            solution: vec![0.0; n],
            duals: farkas,
            ray: None,
            iterations: t.iterations,
        });
    }

    // Drive remaining artificials out of the basis where possible.
    let mut buf = vec![0.0; m];
    for r in 0..m {
        if t.basis[r] < n {
            continue;
        }
        let mut chosen = None;
        let mut best = opts.pivot_tol;
        for j in 0..n {
            if t.is_basic[j] {
                continue;
            }
            // row r of B^{-1} A_j
            t.col(j, &mut buf);
            let v: f64 = (0..m).map(|k| t.binv[r * m + k] * buf[k]).sum();
            if v.abs() > best {
                best = v.abs();
                chosen = Some(j);
            }
        }
        if let Some(j) = chosen {
            t.col(j, &mut buf);
            let alpha = t.ftran(&buf);
            t.pivot(r, j, &alpha)?;
        }
        // otherwise the row is redundant and its artificial stays at zero
    }

    // Phase 2.
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let phase2 = |j: usize| if j < n { flip * lp.c[j] } else { 0.0 };
    let step = t.run(&phase2, false)?;
    t.refactor()?;
    let iterations = t.iterations;
    match step {
        Step::Optimal => {
            let x = t.primal();
            let y_min = t.duals(&phase2);
            let duals: Vec<f64> = y_min.iter().zip(&t.sign).map(|(y, s)| flip * y * s).collect();
            Ok(LpOutcome {
                status: LpStatus::Optimal,
                objective: lp.objective_value(&x),
                solution: x,
                duals,
                ray: None,
                iterations,
            })
        }
        Step::Unbounded(q, alpha) => {
            let mut ray = vec![0.0; n];
            ray[q] = 1.0;
            for (r, &j) in t.basis.iter().enumerate() {
                if j < n {
                    ray[j] = -alpha[r];
                }
            }
            Ok(LpOutcome {
                status: LpStatus::Unbounded,
                objective: f64::NAN,
                solution: t.primal(),
                duals: vec![0.0; m],
                ray: Some(ray),
                iterations,
            })
        }
    }
}

/// Plain-text dump: objective line, then one line per constraint with its
/// coefficients, relation and right-hand side.
pub fn write_tableau(lp: &LinearProgram) -> String {
    let mut s = String::new();
    let sense = match lp.sense {
        Sense::Minimize => "min",
        Sense::Maximize => "max",
    };
    let _ = write!(s, "{sense}:");
    for c in &lp.c {
        let _ = write!(s, " {c:?}");
    }
    s.push('\n');
    for i in 0..lp.n_rows {
        let _ = write!(s, "r{i}:");
        for j in 0..lp.n_cols {
            let _ = write!(s, " {:?}", lp.a[j * lp.n_rows + i]);
        }
        let _ = writeln!(s, " = {:?}", lp.b[i]);
    }
    s
}
