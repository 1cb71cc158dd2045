//! Constrained ratio-of-averages optimization over occupancy measures.
//!
//! The decision variable `omega[x, u]` is the long-run fraction of slots in
//! which the network is in state `x` and plays action `u`. Every metric is a
//! ratio of two linear functions of `omega`, so bounded metrics become
//! homogeneous linear constraints and the objective a linear-fractional
//! function. The Charnes-Cooper substitution `kappa = g * omega` with the
//! denominator normalized to one turns the problem into an LP:
//!
//! ```text
//! minimize    beta * z_num' kappa
//! subject to  (beta_q z_num(q) + (lambda_q - gamma_q) z_den(q))' kappa <= 0
//!             balance * kappa = 0
//!             z_den' kappa = 1,   kappa >= 0
//! ```
//!
//! and `omega = kappa / sum(kappa)`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::costs::{metric_value, CostError, CostTable, Metric};
use crate::lp::{self, LpError, LpProblem, LpSolution, LpStatus, SolveOptions};
use crate::model::{local_actions, Network, SourceAction};

/// Action probabilities below `1 - RANDOMIZATION_TOL` count as randomized.
pub const RANDOMIZATION_TOL: f64 = 1e-9;
/// States with total occupancy at or below this are treated as transient.
pub const TRANSIENT_TOL: f64 = 1e-10;
/// Slack allowed when re-checking constraint bounds on predicted metrics.
pub const CONSTRAINT_SLACK: f64 = 1e-6;
/// Maximum number of deterministic policies the brute-force oracle will try.
pub const MAX_ENUMERATED_POLICIES: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum LfpError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("constraint `{0}` has no bound")]
    MissingBound(String),
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("degenerate transform: occupancy mass {0:e} (objective denominator vanishes on the feasible set)")]
    DegenerateTransform(f64),
    #[error("chain is not unichain under this policy")]
    NotUnichain,
    #[error("{0} deterministic policies exceed the enumeration guard")]
    TooManyPolicies(u128),
    #[error("no deterministic policy satisfies the constraints")]
    NoFeasiblePolicy,
}

/// The assembled program: bound cost vectors, constraint rows and the balance
/// matrix, all indexed by `(state, action)` pair.
#[derive(Debug, Clone)]
pub struct LfpProblem<'a> {
    network: &'a Network,
    costs: CostTable,
    objective: Metric,
    constraints: Vec<Metric>,
    constraint_rows: Vec<Vec<f64>>,
    balance: Vec<Vec<f64>>,
}

impl<'a> LfpProblem<'a> {
    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    /// Binds an extra cost (e.g. for reporting) into the problem's table.
    pub fn bind_metric(&mut self, metric: &Metric) -> Result<(), CostError> {
        metric.bind(self.network, &mut self.costs).map(|_| ())
    }

    pub fn objective(&self) -> &Metric {
        &self.objective
    }

    pub fn constraints(&self) -> &[Metric] {
        &self.constraints
    }

    /// Number of constraints `M_c`.
    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraint_rows(&self) -> &[Vec<f64>] {
        &self.constraint_rows
    }

    /// Row `x`, column `(x', u)`: `1{x = x'} - P(x | x', u)`.
    pub fn balance(&self) -> &[Vec<f64>] {
        &self.balance
    }
}

pub fn assemble<'a>(
    network: &'a Network,
    objective: Metric,
    constraints: Vec<Metric>,
) -> Result<LfpProblem<'a>, LfpError> {
    let mut costs = CostTable::new();
    objective.bind(network, &mut costs)?;
    let mut constraint_rows = Vec::with_capacity(constraints.len());
    for c in &constraints {
        let gamma = c.bound.ok_or_else(|| LfpError::MissingBound(c.name.clone()))?;
        let (num, den) = c.bind(network, &mut costs)?;
        let row = costs
            .vector(num)
            .iter()
            .zip(costs.vector(den))
            .map(|(zn, zd)| c.beta * zn + (c.lambda - gamma) * zd)
            .collect();
        constraint_rows.push(row);
    }
    let pairs = network.pair_count();
    let mut balance = vec![vec![0.0; pairs]; network.state_count()];
    for p in 0..pairs {
        balance[network.pair_state(p)][p] += 1.0;
        for &(next, prob) in network.transitions(p) {
            balance[next][p] -= prob;
        }
    }
    Ok(LfpProblem {
        network,
        costs,
        objective,
        constraints,
        constraint_rows,
        balance,
    })
}

/// The equivalent LP in `kappa` (one variable per pair). Equality rows are the
/// balance rows followed by the denominator normalization.
pub fn charnes_cooper(problem: &LfpProblem) -> Result<LpProblem, LfpError> {
    let zn = problem.costs.lookup(&problem.objective.numerator)?;
    let zd = problem.costs.lookup(&problem.objective.denominator)?;
    let beta = problem.objective.beta;
    let c = zn.iter().map(|v| beta * v).collect();
    let mut a_eq = problem.balance.clone();
    a_eq.push(zd.to_vec());
    let mut b_eq = vec![0.0; problem.balance.len()];
    b_eq.push(1.0);
    let b_ub = vec![0.0; problem.constraint_rows.len()];
    Ok(LpProblem::new(c, a_eq, b_eq, problem.constraint_rows.clone(), b_ub)?)
}

/// Steady-state probability of every `(state, action)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub omega: Vec<f64>,
}

impl OccupancyMeasure {
    /// `pi(x) = sum_u omega[x, u]`.
    pub fn state_marginal(&self, network: &Network) -> Vec<f64> {
        (0..network.state_count())
            .map(|x| network.pairs_of(x).map(|p| self.omega[p]).sum())
            .collect()
    }

    /// `(|sum omega - 1|, max balance residual, most negative entry)`.
    pub fn residuals(&self, problem: &LfpProblem) -> (f64, f64, f64) {
        let total: f64 = self.omega.iter().sum();
        let balance = problem
            .balance
            .iter()
            .map(|row| row.iter().zip(&self.omega).map(|(a, w)| a * w).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let negative = self.omega.iter().fold(0.0_f64, |w, &v| w.max(-v));
        ((total - 1.0).abs(), balance, negative)
    }

    /// Long-run probability that at least two sources transmit together.
    pub fn simultaneous_transmission(&self, network: &Network) -> f64 {
        (0..network.pair_count())
            .filter(|&p| network.pair_action(p).transmit_count() >= 2)
            .fold(0.0, |acc, p| acc + self.omega[p])
    }
}

/// Inverts the substitution: `omega = kappa / sum(kappa)`.
pub fn recover(sol: &LpSolution) -> Result<OccupancyMeasure, LfpError> {
    match sol.status {
        LpStatus::Infeasible => return Err(LfpError::Infeasible),
        LpStatus::Unbounded => return Err(LfpError::Unbounded),
        LpStatus::Optimal => {}
    }
    let g: f64 = sol.x.iter().sum();
    if g <= 1e-12 {
        return Err(LfpError::DegenerateTransform(g));
    }
    Ok(OccupancyMeasure {
        omega: sol.x.iter().map(|k| k.max(0.0) / g).collect(),
    })
}

/// Randomized stationary policy: action probabilities per state, over the
/// state's legal actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<Vec<f64>>,
    transient: Vec<usize>,
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Self {
        Policy { probs, transient: Vec::new() }
    }

    /// Plays `choice[x]` (an index into `network.actions(x)`) in every state.
    pub fn deterministic(network: &Network, choice: &[usize]) -> Self {
        let probs = (0..network.state_count())
            .map(|x| {
                let mut row = vec![0.0; network.actions(x).len()];
                row[choice[x]] = 1.0;
                row
            })
            .collect();
        Policy::new(probs)
    }

    pub fn uniform(network: &Network) -> Self {
        let probs = (0..network.state_count())
            .map(|x| {
                let k = network.actions(x).len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        Policy::new(probs)
    }

    /// Deterministic policy built per source from `pick(state, legal)`.
    pub fn per_source(network: &Network, pick: impl Fn(usize, &[SourceAction]) -> SourceAction) -> Self {
        let f = network.config().max_service();
        let choice: Vec<usize> = network
            .states()
            .iter()
            .map(|x| {
                let wanted: Vec<SourceAction> = x
                    .per_source
                    .iter()
                    .enumerate()
                    .map(|(s, &st)| pick(s, local_actions(st, f)))
                    .collect();
                network.actions(x.index).iter().position(|u| u.per_source == wanted).unwrap_or(0)
            })
            .collect();
        Policy::deterministic(network, &choice)
    }

    pub fn action_probs(&self, x: usize) -> &[f64] {
        &self.probs[x]
    }

    pub fn state_count(&self) -> usize {
        self.probs.len()
    }

    /// States with zero occupancy that received the fallback action.
    pub fn transient_states(&self) -> &[usize] {
        &self.transient
    }

    /// States where no action has probability `>= 1 - RANDOMIZATION_TOL`.
    pub fn randomized_states(&self) -> Vec<usize> {
        (0..self.probs.len())
            .filter(|&x| self.probs[x].iter().fold(0.0_f64, |m, &p| m.max(p)) < 1.0 - RANDOMIZATION_TOL)
            .collect()
    }

    /// `mu(x, u)` as a dense vector over pairs.
    pub fn pair_probs(&self, network: &Network) -> Vec<f64> {
        (0..network.pair_count())
            .map(|p| self.probs[network.pair_state(p)][p - network.pairs_of(network.pair_state(p)).start])
            .collect()
    }

    /// Marginal probability that source `s` transmits in state `x`.
    pub fn transmit_prob(&self, network: &Network, x: usize, source: usize) -> f64 {
        network
            .actions(x)
            .iter()
            .zip(&self.probs[x])
            .filter(|(u, _)| u.per_source[source].transmit)
            .fold(0.0, |acc, (_, p)| acc + p)
    }

    /// Probability that all sources transmit together in state `x`.
    pub fn all_transmit_prob(&self, network: &Network, x: usize) -> f64 {
        network
            .actions(x)
            .iter()
            .zip(&self.probs[x])
            .filter(|(u, _)| u.per_source.iter().all(|a| a.transmit))
            .fold(0.0, |acc, (_, p)| acc + p)
    }
}

/// Fallback for zero-occupancy states: every source idles without dropping,
/// or drops without transmitting where dropping is forced.
pub fn fallback_action(network: &Network, x: usize) -> usize {
    let f = network.config().max_service();
    let wanted: Vec<SourceAction> = network
        .state(x)
        .per_source
        .iter()
        .map(|&st| {
            if local_actions(st, f).contains(&SourceAction::IDLE) {
                SourceAction::IDLE
            } else {
                SourceAction::DISCARD
            }
        })
        .collect();
    network
        .actions(x)
        .iter()
        .position(|u| u.per_source == wanted)
        .expect("fallback action is always legal")
}

/// `mu(x, u) = omega[x, u] / sum_u omega[x, u]`, with the fallback action in
/// transient states.
pub fn extract_policy(network: &Network, omega: &OccupancyMeasure) -> Policy {
    let mut probs = Vec::with_capacity(network.state_count());
    let mut transient = Vec::new();
    for x in 0..network.state_count() {
        let pairs = network.pairs_of(x);
        let mass: f64 = pairs.clone().map(|p| omega.omega[p]).sum();
        if mass > TRANSIENT_TOL {
            probs.push(pairs.map(|p| omega.omega[p] / mass).collect());
        } else {
            let mut row = vec![0.0; pairs.len()];
            row[fallback_action(network, x)] = 1.0;
            probs.push(row);
            transient.push(x);
        }
    }
    Policy { probs, transient }
}

#[derive(Debug, Clone)]
pub struct PredictedMetric {
    pub name: String,
    pub value: Result<f64, CostError>,
    pub bound: Option<f64>,
    /// False when the bound is violated beyond [`CONSTRAINT_SLACK`] or the value is undefined.
    pub satisfied: bool,
}

/// Every metric evaluated at `omega`, with bounds re-checked.
pub fn predicted_metrics(problem: &LfpProblem, omega: &OccupancyMeasure, metrics: &[Metric]) -> Vec<PredictedMetric> {
    metrics
        .iter()
        .map(|m| {
            let value = metric_value(m, &omega.omega, &problem.costs);
            let satisfied = match &value {
                Ok(v) => m.satisfied(*v, CONSTRAINT_SLACK),
                Err(_) => false,
            };
            PredictedMetric {
                name: m.name.clone(),
                value,
                bound: m.bound,
                satisfied,
            }
        })
        .collect()
}

/// `P_mu(x' | x)` as a dense row-stochastic matrix.
pub fn policy_kernel(network: &Network, policy: &Policy) -> DMatrix<f64> {
    let n = network.state_count();
    let mut k = DMatrix::zeros(n, n);
    for x in 0..n {
        for (p, &mu) in network.pairs_of(x).zip(policy.action_probs(x)) {
            if mu == 0.0 {
                continue;
            }
            for &(next, prob) in network.transitions(p) {
                k[(x, next)] += mu * prob;
            }
        }
    }
    k
}

/// Solves `pi P_mu = pi`, `sum pi = 1`.
pub fn stationary_distribution(network: &Network, policy: &Policy) -> Result<Vec<f64>, LfpError> {
    let n = network.state_count();
    let kernel = policy_kernel(network, policy);
    // (P' - I) with the last equation replaced by the normalization.
    let mut a = kernel.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let singular = a.clone().singular_values();
    if singular.min() <= 1e-10 * singular.max().max(1.0) {
        return Err(LfpError::NotUnichain);
    }
    let lu = a.clone().full_piv_lu();
    let mut pi = lu.solve(&b).ok_or(LfpError::NotUnichain)?;
    // one step of iterative refinement
    if let Some(correction) = lu.solve(&(&b - &a * &pi)) {
        pi += correction;
    }
    let pi: Vec<f64> = pi.iter().map(|&v| if v.abs() < 1e-15 { 0.0 } else { v }).collect();
    let residual = (&kernel.transpose() * DVector::from_column_slice(&pi) - DVector::from_column_slice(&pi)).amax();
    if residual > 1e-10 || pi.iter().any(|&v| v < -1e-10) {
        return Err(LfpError::NotUnichain);
    }
    Ok(pi)
}

/// Closed communicating classes of the chain restricted to pairs with
/// `support(pair)`.
pub fn closed_classes(network: &Network, support: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let n = network.state_count();
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for p in (0..network.pair_count()).filter(|&p| support(p)) {
        let from = nodes[network.pair_state(p)];
        for &(next, prob) in network.transitions(p) {
            if prob > 0.0 && !graph.contains_edge(from, nodes[next]) {
                graph.add_edge(from, nodes[next], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter()
                .all(|&node| graph.neighbors(node).all(|m| component[m.index()] == *c))
        })
        .map(|(_, scc)| {
            let mut states: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            states.sort_unstable();
            states
        })
        .collect();
    closed.sort();
    closed
}

/// Number of recurrent classes under the uniformly random policy. More than
/// one means some stationary policy splits the chain; a warning is logged.
pub fn unichain_diagnostic(network: &Network) -> usize {
    let classes = closed_classes(network, |_| true).len();
    if classes != 1 {
        warn!("model has {classes} recurrent classes under the uniform policy; results assume a unichain model");
    }
    classes
}

/// Result of the full solve pipeline.
#[derive(Debug, Clone)]
pub struct LfpSolution {
    pub lp: LpSolution,
    /// Objective of the transformed LP, plus the objective offset `lambda`.
    pub lp_objective: f64,
    /// Objective recomputed from `omega`.
    pub objective: f64,
    pub omega: OccupancyMeasure,
    pub policy: Policy,
    pub metrics: Vec<PredictedMetric>,
}

impl LfpSolution {
    pub fn randomized_count(&self) -> usize {
        self.policy.randomized_states().len()
    }
}

pub fn solve(problem: &LfpProblem) -> Result<LfpSolution, LfpError> {
    solve_with(problem, &SolveOptions::default())
}

/// Assemble-free pipeline: transform, solve, recover, extract, predict.
pub fn solve_with(problem: &LfpProblem, opts: &SolveOptions) -> Result<LfpSolution, LfpError> {
    let lp_problem = charnes_cooper(problem)?;
    let sol = lp::solve_with(&lp_problem, opts)?;
    let omega = recover(&sol)?;
    let policy = extract_policy(problem.network, &omega);
    let objective = metric_value(&problem.objective, &omega.omega, &problem.costs)?;
    let mut all = vec![problem.objective.clone()];
    all.extend(problem.constraints.iter().cloned());
    let metrics = predicted_metrics(problem, &omega, &all);
    Ok(LfpSolution {
        lp_objective: sol.objective + problem.objective.lambda,
        lp: sol,
        objective,
        omega,
        policy,
        metrics,
    })
}

/// Exhaustive search over deterministic stationary policies. Exact when there
/// are no constraints; otherwise only the best deterministic feasible policy,
/// which may be worse than the randomized optimum.
pub fn brute_force_reference(
    network: &Network,
    objective: &Metric,
    constraints: &[Metric],
) -> Result<(Policy, f64), LfpError> {
    let counts: Vec<usize> = (0..network.state_count()).map(|x| network.actions(x).len()).collect();
    let total = counts.iter().try_fold(1u128, |acc, &k| acc.checked_mul(k as u128));
    let total = match total {
        Some(t) if t <= MAX_ENUMERATED_POLICIES => t as usize,
        Some(t) => return Err(LfpError::TooManyPolicies(t)),
        None => return Err(LfpError::TooManyPolicies(u128::MAX)),
    };
    let mut costs = CostTable::new();
    objective.bind(network, &mut costs)?;
    for c in constraints {
        c.bind(network, &mut costs)?;
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut choice = vec![0usize; counts.len()];
    for _ in 0..total {
        let policy = Policy::deterministic(network, &choice);
        if let Ok(pi) = stationary_distribution(network, &policy) {
            let mut omega = vec![0.0; network.pair_count()];
            for x in 0..pi.len() {
                omega[network.pair_index(x, choice[x])] = pi[x];
            }
            let feasible = constraints.iter().all(|c| {
                metric_value(c, &omega, &costs).is_ok_and(|v| c.satisfied(v, 1e-9))
            });
            if feasible {
                if let Ok(v) = metric_value(objective, &omega, &costs) {
                    if best.as_ref().is_none_or(|(_, b)| v < *b - 1e-12) {
                        best = Some((choice.clone(), v));
                    }
                }
            }
        }
        // next mixed-radix choice, last state fastest
        for x in (0..choice.len()).rev() {
            choice[x] += 1;
            if choice[x] < counts[x] {
                break;
            }
            choice[x] = 0;
        }
    }
    let (choice, value) = best.ok_or(LfpError::NoFeasiblePolicy)?;
    Ok((Policy::deterministic(network, &choice), value))
}
