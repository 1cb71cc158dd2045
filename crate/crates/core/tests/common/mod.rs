//! Test oracles shared by the integration suites.

#![allow(dead_code)]

use num::rational::BigRational;
use num::{Signed, ToPrimitive, Zero, One};

use std::path::PathBuf;

use arqopt::cli::{load_scenario, Scenario};
use arqopt::costs::{CostKind, CostSpec, Metric};
use arqopt::lp::LpProblem;
use arqopt::model::{InterferenceModel, Network, NetworkConfig, SourceConfig, SourceId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn scenario(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).unwrap()
}

pub fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coefficient")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub status: ExactStatus,
    pub objective: Option<BigRational>,
    pub x: Vec<BigRational>,
    pub pivots: usize,
}

impl ExactSolution {
    pub fn objective_f64(&self) -> f64 {
        self.objective.as_ref().and_then(|o| o.to_f64()).unwrap_or(f64::NAN)
    }
}

struct Tableau {
    rows: Vec<Vec<BigRational>>,
    obj: Vec<BigRational>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.obj.len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        for v in self.rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<BigRational>| {
            if row[c].is_zero() {
                return;
            }
            let f = row[c].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Textbook Bland: lowest improving column, lowest basic index on ties.
    fn run(&mut self, allowed: usize) -> bool {
        let rhs = self.rhs();
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.obj[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(usize, BigRational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[enter].is_positive() {
                    continue;
                }
                let ratio = &row[rhs] / &row[enter];
                let better = match &best {
                    None => true,
                    Some((b, r)) => ratio < *r || (ratio == *r && self.basis[i] < self.basis[*b]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

/// Exact two-phase simplex with Bland's rule on
/// `min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0`.
pub fn exact_simplex(c: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64], a_ub: &[Vec<f64>], b_ub: &[f64]) -> ExactSolution {
    let n = c.len();
    let me = a_eq.len();
    let m = me + a_ub.len();
    let structural = n + a_ub.len();
    let cols = structural + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![BigRational::zero(); cols + 1];
        let (coeffs, b) = if i < me { (&a_eq[i], b_eq[i]) } else { (&a_ub[i - me], b_ub[i - me]) };
        for j in 0..n {
            row[j] = rational(coeffs[j]);
        }
        if i >= me {
            row[n + i - me] = BigRational::one();
        }
        row[cols] = rational(b);
        if row[cols].is_negative() {
            for v in row.iter_mut() {
                *v = -&*v;
            }
        }
        row[structural + i] = BigRational::one();
        rows.push(row);
    }
    let mut obj = vec![BigRational::zero(); cols + 1];
    for row in &rows {
        for j in 0..structural {
            obj[j] -= &row[j];
        }
        obj[cols] -= &row[cols];
    }
    let mut t = Tableau {
        rows,
        obj,
        basis: (structural..cols).collect(),
        pivots: 0,
    };
    t.run(cols);
    if !t.obj[cols].is_zero() {
        return ExactSolution {
            status: ExactStatus::Infeasible,
            objective: None,
            x: vec![],
            pivots: t.pivots,
        };
    }
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] < structural {
            r += 1;
            continue;
        }
        match (0..structural).find(|&j| !t.rows[r][j].is_zero()) {
            Some(j) => {
                t.pivot(r, j);
                r += 1;
            }
            None => {
                t.rows.remove(r);
                t.basis.remove(r);
            }
        }
    }

    // Phase 2 over structural columns; the rhs moves next to them.
    for row in t.rows.iter_mut() {
        let rhs = row[cols].clone();
        row.truncate(structural);
        row.push(rhs);
    }
    let mut obj = vec![BigRational::zero(); structural + 1];
    for j in 0..n {
        obj[j] = rational(c[j]);
    }
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < n && !obj[b].is_zero() {
            let cb = rational(c[b]);
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= &cb * v;
            }
        }
    }
    t.obj = obj;
    if !t.run(structural) {
        return ExactSolution {
            status: ExactStatus::Unbounded,
            objective: None,
            x: vec![],
            pivots: t.pivots,
        };
    }
    let mut x = vec![BigRational::zero(); n];
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < n {
            x[b] = row[structural].clone();
        }
    }
    let objective = c
        .iter()
        .zip(&x)
        .fold(BigRational::zero(), |acc, (ci, xi)| acc + rational(*ci) * xi);
    ExactSolution {
        status: ExactStatus::Optimal,
        objective: Some(objective),
        x,
        pivots: t.pivots,
    }
}

pub fn exact_solve(p: &LpProblem) -> ExactSolution {
    exact_simplex(p.objective(), p.a_eq(), p.b_eq(), p.a_ub(), p.b_ub())
}

/// Quarter-integer coefficient, exactly representable.
pub fn coefficient(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    rng.random_range(lo * 4..=hi * 4) as f64 / 4.0
}

/// Dense instance with a known feasible point and a bounding row.
pub fn random_feasible(rng: &mut ChaCha8Rng, n: usize, m_ub: usize, m_eq: usize) -> LpProblem {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0..=8) as f64 / 2.0).collect();
    let dot = |row: &[f64]| row.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>();
    let mut a_ub: Vec<Vec<f64>> = (0..m_ub).map(|_| (0..n).map(|_| coefficient(rng, -5, 5)).collect()).collect();
    let mut b_ub: Vec<f64> = a_ub.iter().map(|r| dot(r) + rng.random_range(0..=8) as f64 / 4.0).collect();
    a_ub.push(vec![1.0; n]);
    b_ub.push(dot(&vec![1.0; n]) + 10.0);
    let a_eq: Vec<Vec<f64>> = (0..m_eq).map(|_| (0..n).map(|_| coefficient(rng, -3, 3)).collect()).collect();
    let b_eq = a_eq.iter().map(|r| dot(r)).collect();
    let c = (0..n).map(|_| coefficient(rng, -4, 4)).collect();
    LpProblem::new(c, a_eq, b_eq, a_ub, b_ub).unwrap()
}

/// Solves `pi P = pi, sum pi = 1` by Gaussian elimination with partial pivoting.
pub fn stationary(kernel: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = kernel.len();
    // Rows of (P^T - I), last row replaced by the normalization.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| kernel[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                for j in col..=n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Best value over all deterministic stationary policies, from first principles.
pub fn enumerate_deterministic(net: &Network, objective: &Metric) -> Option<f64> {
    let n = net.state_count();
    let counts: Vec<usize> = (0..n).map(|x| net.actions(x).len()).collect();
    let num: Vec<f64> = (0..net.pair_count()).map(|p| objective.numerator.expected(net, p)).collect();
    let den: Vec<f64> = (0..net.pair_count()).map(|p| objective.denominator.expected(net, p)).collect();
    let mut choice = vec![0usize; n];
    let mut best: Option<f64> = None;
    loop {
        let pairs: Vec<usize> = (0..n).map(|x| net.pair_index(x, choice[x])).collect();
        let mut kernel = vec![vec![0.0; n]; n];
        for (x, &p) in pairs.iter().enumerate() {
            for &(next, q) in net.transitions(p) {
                kernel[x][next] += q;
            }
        }
        if let Some(pi) = stationary(&kernel) {
            let zn: f64 = pairs.iter().zip(&pi).map(|(&p, w)| num[p] * w).sum();
            let zd: f64 = pairs.iter().zip(&pi).map(|(&p, w)| den[p] * w).sum();
            if zd > 1e-9 {
                let v = objective.beta * zn / zd + objective.lambda;
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        let mut x = n;
        loop {
            if x == 0 {
                return best;
            }
            x -= 1;
            choice[x] += 1;
            if choice[x] < counts[x] {
                break;
            }
            choice[x] = 0;
        }
    }
}

pub fn network(buffer: usize, max_service: usize, alpha: &[f64], alone: f64, interfered: f64) -> Network {
    let config = NetworkConfig::new(
        buffer,
        max_service,
        alpha.iter().map(|&arrival_prob| SourceConfig { arrival_prob }).collect(),
        InterferenceModel::symmetric_failure(alpha.len(), alone, interfered),
    )
    .unwrap();
    Network::new(config).unwrap()
}

pub fn random_objective(rng: &mut ChaCha8Rng, sources: usize) -> Metric {
    let source = SourceId::new(rng.random_range(0..sources));
    match rng.random_range(0..5) {
        0 => Metric::ratio("energy_per_packet", CostSpec::total(CostKind::Energy), CostSpec::total(CostKind::Throughput)),
        1 => Metric::ratio("delay", CostSpec::of(CostKind::QueueLen, source), CostSpec::of(CostKind::Arrival, source)),
        2 => Metric {
            beta: -1.0,
            ..Metric::ratio("delivery", CostSpec::of(CostKind::SuccessSlot, source), CostSpec::of(CostKind::ServiceStart, source))
        },
        3 => Metric {
            beta: -1.0,
            ..Metric::time_average("throughput", CostSpec::total(CostKind::Throughput))
        },
        _ => Metric {
            lambda: 0.5,
            ..Metric::time_average("energy", CostSpec::of(CostKind::Energy, source))
        },
    }
}
