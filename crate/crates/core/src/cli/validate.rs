//! Invariant suite run by the `validate` command.

use std::time::Instant;

use crate::lfp::{self, LfpError};
use crate::lp::{self, SolveOptions};
use crate::model::Network;

use super::scenario::{GridPoint, Scenario, ScenarioError};

pub const OCCUPANCY_TOL: f64 = 1e-8;
pub const OBJECTIVE_TOL: f64 = 1e-8;
pub const STATIONARY_TOL: f64 = 1e-6;
pub const VERIFY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub point: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(point: usize, name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        point,
        name,
        passed,
        detail,
    }
}

/// Checks one grid point. Infeasible points pass trivially.
pub fn validate_point(scenario: &Scenario, network: &Network, point: &GridPoint, opts: &SolveOptions) -> Vec<Check> {
    let i = point.index;
    let constraints = point.constraints.iter().map(|c| c.to_metric()).collect();
    let started = Instant::now();
    let problem = match lfp::assemble(network, scenario.objective.clone(), constraints) {
        Ok(p) => p,
        Err(e) => return vec![check(i, "assemble", false, e.to_string())],
    };
    let solution = match lfp::solve_with(&problem, opts) {
        Ok(s) => s,
        Err(LfpError::Infeasible) => return vec![check(i, "solve", true, "infeasible".into())],
        Err(e) => return vec![check(i, "solve", false, e.to_string())],
    };
    let elapsed = started.elapsed().as_secs_f64();
    let mut out = vec![check(i, "solve", true, format!("{} pivots, {elapsed:.3} s", solution.lp.iterations))];

    let (sum_err, balance, negative) = solution.omega.residuals(&problem);
    out.push(check(
        i,
        "occupancy",
        sum_err <= OCCUPANCY_TOL && balance <= OCCUPANCY_TOL && negative <= OCCUPANCY_TOL,
        format!("|sum - 1| = {sum_err:.2e}, balance {balance:.2e}, negative {negative:.2e}"),
    ));

    let randomized = solution.randomized_count();
    let mc = problem.constraint_count();
    out.push(check(
        i,
        "randomizations",
        randomized <= mc,
        format!("{randomized} randomized states, {mc} constraints"),
    ));

    let gap = (solution.lp_objective - solution.objective).abs();
    out.push(check(
        i,
        "transform",
        gap <= OBJECTIVE_TOL * solution.objective.abs().max(1.0),
        format!("LP {} vs occupancy {} (gap {gap:.2e})", solution.lp_objective, solution.objective),
    ));

    let violated: Vec<String> = solution
        .metrics
        .iter()
        .filter(|m| !m.satisfied)
        .map(|m| format!("{} = {:?} (bound {:?})", m.name, m.value, m.bound))
        .collect();
    out.push(check(
        i,
        "constraints",
        violated.is_empty(),
        if violated.is_empty() { "all satisfied".into() } else { violated.join("; ") },
    ));

    match lfp::charnes_cooper(&problem) {
        Ok(lp_problem) => {
            let report = lp::verify(&lp_problem, &solution.lp, VERIFY_TOL);
            out.push(check(
                i,
                "lp-optimality",
                report.passed(),
                if report.passed() {
                    format!("max residual {:.2e}", report.max_residual())
                } else {
                    report.failures.join("; ")
                },
            ));
        }
        Err(e) => out.push(check(i, "lp-optimality", false, e.to_string())),
    }

    let marginal = solution.omega.state_marginal(network);
    match lfp::stationary_distribution(network, &solution.policy) {
        Ok(pi) => {
            let err = pi.iter().zip(&marginal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            out.push(check(
                i,
                "stationary",
                err <= STATIONARY_TOL,
                format!("max |pi - sum_u omega| = {err:.2e}"),
            ));
        }
        Err(e) => out.push(check(i, "stationary", false, e.to_string())),
    }
    out
}

/// Runs the suite on every grid point, in grid order.
pub fn validate_scenario(scenario: &Scenario, opts: &SolveOptions) -> Result<Vec<Check>, ScenarioError> {
    let network = scenario.build_network()?;
    let classes = lfp::unichain_diagnostic(&network);
    let mut out = vec![check(
        0,
        "unichain",
        classes == 1,
        format!("{classes} recurrent classes under the uniform policy"),
    )];
    for point in scenario.grid() {
        out.extend(validate_point(scenario, &network, &point, opts));
    }
    Ok(out)
}
