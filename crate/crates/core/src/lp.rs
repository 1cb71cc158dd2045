//! Dense two-phase primal simplex for
//!
//! ```text
//! minimize    c'x
//! subject to  A_eq x  = b_eq
//!             A_ub x <= b_ub
//!             x >= 0
//! ```
//!
//! Pricing is steepest edge, switching to Bland's rule on long stalls; ties in
//! the ratio test are broken lexicographically, so the solver terminates on
//! degenerate problems and is deterministic. Rows and columns are
//! equilibrated before solving. The tableau is periodically rebuilt from the scaled data
//! for the current basis so that rounding does not accumulate, and at the end
//! the basic values are recomputed from the unscaled data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const PIVOT_TOL: f64 = 1e-9;
pub const FEASIBILITY_TOL: f64 = 1e-8;
const OPTIMALITY_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-11;
/// Entries below this fraction of the entering column's largest entry are
/// not used as pivots.
const RELATIVE_PIVOT_TOL: f64 = 1e-7;
const ZERO_SNAP: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
    #[error("cannot write tableau dump to {path}: {source}")]
    Dump {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    c: Vec<f64>,
    a_eq: Vec<Vec<f64>>,
    b_eq: Vec<f64>,
    a_ub: Vec<Vec<f64>>,
    b_ub: Vec<f64>,
}

impl LpProblem {
    pub fn new(
        c: Vec<f64>,
        a_eq: Vec<Vec<f64>>,
        b_eq: Vec<f64>,
        a_ub: Vec<Vec<f64>>,
        b_ub: Vec<f64>,
    ) -> Result<Self, LpError> {
        let n = c.len();
        if a_eq.len() != b_eq.len() {
            return Err(LpError::Dimension(format!(
                "{} equality rows but {} right-hand sides",
                a_eq.len(),
                b_eq.len()
            )));
        }
        if a_ub.len() != b_ub.len() {
            return Err(LpError::Dimension(format!(
                "{} inequality rows but {} right-hand sides",
                a_ub.len(),
                b_ub.len()
            )));
        }
        if let Some(row) = a_eq.iter().chain(&a_ub).find(|r| r.len() != n) {
            return Err(LpError::Dimension(format!(
                "constraint row has {} coefficients, objective has {n}",
                row.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&c) {
            return Err(LpError::NonFinite("objective"));
        }
        if !a_eq.iter().all(|r| finite(r)) || !finite(&b_eq) {
            return Err(LpError::NonFinite("equality constraints"));
        }
        if !a_ub.iter().all(|r| finite(r)) || !finite(&b_ub) {
            return Err(LpError::NonFinite("inequality constraints"));
        }
        Ok(LpProblem { c, a_eq, b_eq, a_ub, b_ub })
    }

    pub fn var_count(&self) -> usize {
        self.c.len()
    }

    pub fn eq_count(&self) -> usize {
        self.a_eq.len()
    }

    pub fn ub_count(&self) -> usize {
        self.a_ub.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn a_eq(&self) -> &[Vec<f64>] {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &[f64] {
        &self.b_eq
    }

    pub fn a_ub(&self) -> &[Vec<f64>] {
        &self.a_ub
    }

    pub fn b_ub(&self) -> &[f64] {
        &self.b_ub
    }

    /// Row `i` of the standard form `[A_eq; A_ub | 0; I]` (slack columns last).
    fn standard_entry(&self, row: usize, col: usize) -> f64 {
        let n = self.var_count();
        let me = self.eq_count();
        if col < n {
            if row < me {
                self.a_eq[row][col]
            } else {
                self.a_ub[row - me][col]
            }
        } else if row >= me && col - n == row - me {
            1.0
        } else {
            0.0
        }
    }

    fn standard_rhs(&self, row: usize) -> f64 {
        if row < self.eq_count() {
            self.b_eq[row]
        } else {
            self.b_ub[row - self.eq_count()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (empty unless optimal).
    pub x: Vec<f64>,
    /// Slack of each inequality row (empty unless optimal).
    pub slack: Vec<f64>,
    pub objective: f64,
    /// Basic columns of the standard form: `0..n` structural, `n..n+m_ub` slacks.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            slack: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
            basis: Vec::new(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Write the final tableau here (debug aid).
    pub tableau_dump: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 1_000_000,
            tableau_dump: None,
        }
    }
}

pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    solve_with(p, &SolveOptions::default())
}

/// Pivots between reinversions of the tableau from the original data.
const REINVERT_EVERY: usize = 64;
/// Consecutive degenerate pivots before pricing falls back to Bland's rule.
const BLAND_AFTER: usize = 1000;

struct Tableau {
    width: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    /// Scaled original rows `[A | artificials | rhs]`, used for reinversion.
    original: DMatrix<f64>,
    /// Cost of every column in the current phase.
    cost: Vec<f64>,
    since_reinversion: usize,
    /// Slack and artificial columns of the starting basis; their tableau
    /// entries are `B^-1` and drive the lexicographic ratio test.
    initial_basis: Vec<usize>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn cols(&self) -> usize {
        self.width - 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols())
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].iter().map(|v| v * inv).collect();
        let eliminate = |row: &mut [f64], factor: f64| {
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
                if v.abs() < ZERO_SNAP {
                    *v = 0.0;
                }
            }
            row[c] = 0.0;
        };
        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let factor = self.data[i * w + c];
            if factor != 0.0 {
                eliminate(&mut self.data[i * w..(i + 1) * w], factor);
            }
        }
        let factor = self.obj[c];
        if factor != 0.0 {
            eliminate(&mut self.obj, factor);
        }
        self.data[r * w..(r + 1) * w].copy_from_slice(&pivot_row);
        self.data[r * w + c] = 1.0;
        self.clamp_rhs(r);
        self.basis[r] = c;
        self.iterations += 1;
        self.since_reinversion += 1;
    }

    fn clamp_rhs(&mut self, r: usize) {
        let rhs = r * self.width + self.cols();
        if self.data[rhs] < 0.0 && self.data[rhs] > -FEASIBILITY_TOL {
            self.data[rhs] = 0.0;
        }
    }

    /// Installs a new phase cost and prices out the basic columns.
    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.reprice();
    }

    fn reprice(&mut self) {
        let w = self.width;
        let mut obj = self.cost.clone();
        obj.push(0.0);
        for r in 0..self.rows() {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.data[r * w..(r + 1) * w]) {
                    *o -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            obj[b] = 0.0;
        }
        for v in obj.iter_mut() {
            if v.abs() < ZERO_SNAP {
                *v = 0.0;
            }
        }
        self.obj = obj;
    }

    /// Rebuilds `B^-1 [A | b]` and the reduced costs from the original rows,
    /// discarding accumulated rounding. Keeps the current tableau if the basis
    /// matrix is numerically singular.
    fn reinvert(&mut self) {
        self.since_reinversion = 0;
        let m = self.original.nrows();
        let k = self.rows();
        let bmat = DMatrix::from_fn(m, k, |i, c| self.original[(i, self.basis[c])]);
        let solved = if k == m {
            bmat.lu().solve(&self.original)
        } else {
            let qr = bmat.qr();
            qr.r().solve_upper_triangular(&(qr.q().transpose() * &self.original))
        };
        let Some(x) = solved else {
            return;
        };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let w = self.width;
        for r in 0..k {
            for c in 0..w {
                let v = x[(r, c)];
                self.data[r * w + c] = if v.abs() < ZERO_SNAP { 0.0 } else { v };
            }
            for (c, &b) in self.basis.iter().enumerate() {
                self.data[r * w + b] = if c == r { 1.0 } else { 0.0 };
            }
            self.clamp_rhs(r);
        }
        self.reprice();
    }

    /// Steepest-edge pricing (reduced cost over column norm) until
    /// `BLAND_AFTER` consecutive degenerate pivots, then Bland's rule (lowest-index improving
    /// column) until the objective moves again. Tied ratios are broken
    /// lexicographically, which rules out cycling under either rule.
    /// Termination is only declared on a freshly reinverted tableau.
    fn run(&mut self, allowed: usize, max_iterations: usize) -> Result<Outcome, LpError> {
        let mut stalled = 0;
        loop {
            if self.since_reinversion >= REINVERT_EVERY {
                self.reinvert();
            }
            let bland = stalled >= BLAND_AFTER;
            let candidates = (0..allowed).filter(|&j| self.obj[j] < -OPTIMALITY_TOL);
            let enter = if bland {
                candidates.min()
            } else {
                let norms = self.column_norms(allowed);
                let score = |j: usize| self.obj[j] / norms[j].sqrt();
                candidates.fold(None, |best: Option<usize>, j| match best {
                    Some(b) if score(b) <= score(j) => Some(b),
                    _ => Some(j),
                })
            };
            let Some(enter) = enter else {
                if self.since_reinversion > 0 {
                    self.reinvert();
                    continue;
                }
                return Ok(Outcome::Optimal);
            };
            let col_max = (0..self.rows()).fold(0.0_f64, |m, i| m.max(self.at(i, enter).abs()));
            let threshold = PIVOT_TOL.max(RELATIVE_PIVOT_TOL * col_max);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows() {
                let a = self.at(i, enter);
                if a <= threshold {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                let Some((best, best_ratio)) = leave else {
                    leave = Some((i, ratio));
                    continue;
                };
                let tie = (ratio - best_ratio).abs() <= RATIO_TIE * (1.0 + best_ratio.abs());
                if (tie && self.lex_less(i, best, enter)) || (!tie && ratio < best_ratio) {
                    leave = Some((i, ratio));
                }
            }
            let Some((row, ratio)) = leave else {
                if self.since_reinversion > 0 {
                    self.reinvert();
                    continue;
                }
                return Ok(Outcome::Unbounded);
            };
            if self.iterations >= max_iterations {
                return Err(LpError::IterationLimit(max_iterations));
            }
            stalled = if ratio > 0.0 { 0 } else { stalled + 1 };
            self.pivot(row, enter);
        }
    }

    /// `1 + |column|^2` of the first `allowed` tableau columns.
    fn column_norms(&self, allowed: usize) -> Vec<f64> {
        let mut norms = vec![1.0; allowed];
        for r in 0..self.rows() {
            let row = &self.data[r * self.width..r * self.width + allowed];
            for (n, v) in norms.iter_mut().zip(row) {
                *n += v * v;
            }
        }
        norms
    }

    /// Lexicographic tie-break between rows `i` and `k` for entering column
    /// `c`: compares the rows of `B^-1` (the initial basis columns) scaled by
    /// the pivot entries, then the basic indices.
    fn lex_less(&self, i: usize, k: usize, c: usize) -> bool {
        let (ai, ak) = (self.at(i, c), self.at(k, c));
        for &j in &self.initial_basis {
            let (u, v) = (self.at(i, j) / ai, self.at(k, j) / ak);
            if (u - v).abs() > RATIO_TIE * (1.0 + u.abs().max(v.abs())) {
                return u < v;
            }
        }
        self.basis[i] < self.basis[k]
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width;
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
    }

    fn dump(&self, path: &Path) -> Result<(), LpError> {
        let mut out = String::new();
        let _ = writeln!(out, "# rows {} cols {} pivots {}", self.rows(), self.cols(), self.iterations);
        let _ = write!(out, "obj");
        for v in &self.obj {
            let _ = write!(out, " {v:.6e}");
        }
        let _ = writeln!(out);
        for r in 0..self.rows() {
            let _ = write!(out, "x{}", self.basis[r]);
            for c in 0..self.width {
                let _ = write!(out, " {:.6e}", self.at(r, c));
            }
            let _ = writeln!(out);
        }
        fs::write(path, out).map_err(|source| LpError::Dump {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

pub fn solve_with(p: &LpProblem, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    let n = p.var_count();
    let me = p.eq_count();
    let mu = p.ub_count();
    let m = me + mu;

    // Equilibration: rows to unit max-norm, then columns.
    let row_scale: Vec<f64> = (0..m)
        .map(|i| {
            let big = max_abs((0..n).map(|j| p.standard_entry(i, j)));
            if big > 0.0 {
                1.0 / big
            } else {
                1.0
            }
        })
        .collect();
    let col_scale: Vec<f64> = (0..n)
        .map(|j| {
            let big = max_abs((0..m).map(|i| p.standard_entry(i, j) * row_scale[i]));
            if big > 0.0 {
                1.0 / big
            } else {
                1.0
            }
        })
        .collect();

    let flipped: Vec<bool> = (0..m).map(|i| p.standard_rhs(i) < 0.0).collect();
    let needs_artificial: Vec<usize> = (0..m).filter(|&i| i < me || flipped[i]).collect();
    let structural = n + mu;
    let cols = structural + needs_artificial.len();
    let width = cols + 1;

    let mut original = DMatrix::zeros(m, width);
    let mut basis = vec![0; m];
    for i in 0..m {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            original[(i, j)] = sign * p.standard_entry(i, j) * row_scale[i] * col_scale[j];
        }
        if i >= me {
            original[(i, n + i - me)] = sign;
            basis[i] = n + i - me;
        }
        original[(i, cols)] = sign * p.standard_rhs(i) * row_scale[i];
    }
    for (k, &i) in needs_artificial.iter().enumerate() {
        original[(i, structural + k)] = 1.0;
        basis[i] = structural + k;
    }
    let basis_start = basis.clone();
    let data = (0..m).flat_map(|i| original.row(i).iter().copied().collect::<Vec<_>>()).collect();

    // Phase 1: minimize the sum of artificials.
    let mut t = Tableau {
        width,
        data,
        obj: Vec::new(),
        basis,
        iterations: 0,
        original,
        cost: Vec::new(),
        since_reinversion: 0,
        initial_basis: basis_start,
    };
    t.set_cost((0..cols).map(|j| if j >= structural { 1.0 } else { 0.0 }).collect());
    t.run(cols, opts.max_iterations)?;
    if -t.obj[cols] > FEASIBILITY_TOL {
        if let Some(path) = &opts.tableau_dump {
            t.dump(path)?;
        }
        return Ok(LpSolution::without_point(LpStatus::Infeasible, t.iterations));
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows() {
        if t.basis[r] < structural {
            r += 1;
            continue;
        }
        let best = (0..structural)
            .map(|j| (j, t.at(r, j).abs()))
            .filter(|&(_, a)| a > PIVOT_TOL)
            .fold(None, |acc: Option<(usize, f64)>, cand| match acc {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            });
        match best {
            Some((j, _)) => {
                t.pivot(r, j);
                r += 1;
            }
            None => t.remove_row(r),
        }
    }

    // Phase 2 on the scaled objective.
    t.set_cost((0..cols).map(|j| if j < n { p.c[j] * col_scale[j] } else { 0.0 }).collect());
    t.reinvert();
    let outcome = t.run(structural, opts.max_iterations)?;
    if let Some(path) = &opts.tableau_dump {
        t.dump(path)?;
    }
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, t.iterations));
    }

    // Unscale the basic point.
    let mut x_std = vec![0.0; structural];
    for r in 0..t.rows() {
        let j = t.basis[r];
        let v = t.rhs(r).max(0.0);
        x_std[j] = if j < n { v * col_scale[j] } else { v / row_scale[me + j - n] };
    }
    let mut basis: Vec<usize> = t.basis.clone();
    refine(p, &mut basis, &mut x_std);
    basis.sort_unstable();

    let x = x_std[..n].to_vec();
    let slack = x_std[n..].to_vec();
    let objective = p.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        slack,
        objective,
        basis,
        iterations: t.iterations,
    })
}

/// Recomputes basic values from the original data; keeps the simplex values
/// if the basis matrix is numerically singular or the refined point is worse.
fn refine(p: &LpProblem, basis: &mut [usize], x_std: &mut [f64]) {
    let m = p.eq_count() + p.ub_count();
    let k = basis.len();
    if k == 0 {
        return;
    }
    // Rows kept by phase 1 are not tracked individually; pick the k rows of the
    // basis matrix with a least-squares solve over all rows instead.
    let bmat = DMatrix::from_fn(m, k, |i, c| p.standard_entry(i, basis[c]));
    let rhs = DVector::from_fn(m, |i, _| p.standard_rhs(i));
    let qr = bmat.clone().qr();
    let Some(sol) = qr.r().solve_upper_triangular(&(qr.q().transpose() * &rhs)) else {
        return;
    };
    if sol.iter().any(|v| !v.is_finite() || *v < -FEASIBILITY_TOL) {
        return;
    }
    let residual = |vals: &[f64]| {
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let ax: f64 = (0..k).map(|c| bmat[(i, c)] * vals[c]).sum();
            worst = worst.max((ax - rhs[i]).abs());
        }
        worst
    };
    let old: Vec<f64> = basis.iter().map(|&j| x_std[j]).collect();
    let new: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    if residual(&new) <= residual(&old) {
        for (c, &j) in basis.iter().enumerate() {
            x_std[j] = new[c];
        }
    }
}

/// Residuals of a claimed optimal solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub eq_residual: f64,
    pub ub_violation: f64,
    pub bound_violation: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub objective_error: f64,
    pub duality_gap: f64,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        [
            self.eq_residual,
            self.ub_violation,
            self.bound_violation,
            self.dual_infeasibility,
            self.complementarity,
            self.objective_error,
            self.duality_gap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks primal feasibility, complementary slackness against duals recovered
/// from the basis, and objective consistency. Dual quantities are compared
/// relative to the magnitude of the recovered duals.
pub fn verify(p: &LpProblem, sol: &LpSolution, tol: f64) -> VerifyReport {
    let mut report = VerifyReport::default();
    if sol.status != LpStatus::Optimal {
        report.failures.push(format!("status is {:?}, not optimal", sol.status));
        return report;
    }
    let n = p.var_count();
    let me = p.eq_count();
    let mu = p.ub_count();
    let m = me + mu;
    if sol.x.len() != n {
        report.failures.push(format!("solution has {} values, problem has {n} variables", sol.x.len()));
        return report;
    }
    let row_dot = |row: &[f64]| row.iter().zip(&sol.x).map(|(a, x)| a * x).sum::<f64>();
    for (row, b) in p.a_eq.iter().zip(&p.b_eq) {
        report.eq_residual = report.eq_residual.max((row_dot(row) - b).abs());
    }
    let ub_slack: Vec<f64> = p.a_ub.iter().zip(&p.b_ub).map(|(row, b)| b - row_dot(row)).collect();
    report.ub_violation = ub_slack.iter().fold(0.0, |w, &s| w.max(-s));
    report.bound_violation = sol.x.iter().fold(0.0, |w, &v| w.max(-v));

    let objective: f64 = p.c.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
    report.objective_error = (objective - sol.objective).abs();

    // Duals: min-norm solution of B' y = c_B.
    let k = sol.basis.len();
    let cost = |j: usize| if j < n { p.c[j] } else { 0.0 };
    let bt = DMatrix::from_fn(k, m, |c, i| p.standard_entry(i, sol.basis[c]));
    let cb = DVector::from_fn(k, |c, _| cost(sol.basis[c]));
    let y = match bt.svd(true, true).solve(&cb, 1e-12) {
        Ok(y) => y,
        Err(e) => {
            report.failures.push(format!("dual recovery failed: {e}"));
            return report;
        }
    };
    let scale = 1.0 + y.iter().fold(0.0_f64, |w, v| w.max(v.abs()));
    for j in 0..n + mu {
        let d = cost(j) - (0..m).map(|i| p.standard_entry(i, j) * y[i]).sum::<f64>();
        let value = if j < n { sol.x[j] } else { ub_slack[j - n].max(0.0) };
        report.dual_infeasibility = report.dual_infeasibility.max(-d / scale);
        report.complementarity = report.complementarity.max((value * d).abs() / scale);
    }
    let dual_objective: f64 = (0..m).map(|i| p.standard_rhs(i) * y[i]).sum();
    report.duality_gap = (objective - dual_objective).abs() / scale;

    let checks = [
        ("equality residual", report.eq_residual),
        ("inequality violation", report.ub_violation),
        ("negative variable", report.bound_violation),
        ("dual infeasibility", report.dual_infeasibility),
        ("complementary slackness", report.complementarity),
        ("objective mismatch", report.objective_error),
        ("duality gap", report.duality_gap),
    ];
    for (what, value) in checks {
        if value > tol {
            report.failures.push(format!("{what} {value:.3e} exceeds {tol:.1e}"));
        }
    }
    report
}
