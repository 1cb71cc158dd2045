//! Grid sweeps: solve, predict and optionally simulate every grid point.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::costs::{CostKind, CostSpec, Metric};
use crate::lfp::{self, LfpError, LfpSolution};
use crate::lp::SolveOptions;
use crate::model::{Network, SourceId};
use crate::sim::{self, Estimate, MetricsAccumulator, SimError};

use super::scenario::{GridPoint, Scenario, ScenarioError};

/// Cell value written for metrics of infeasible points.
pub const INFEASIBLE: &str = "infeasible";
/// Simulated constraints may exceed their bound by this many standard errors.
pub const SIM_SE_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Optimal,
    Infeasible,
    Error,
}

/// Per-source report metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SourceReport<T> {
    pub throughput: T,
    pub energy: T,
    pub delay: T,
    pub delivery: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub objective: f64,
    pub lp_objective: f64,
    pub sources: Vec<SourceReport<Option<f64>>>,
    pub simultaneous: f64,
    pub randomized: usize,
    pub constraints_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulated {
    pub objective: Option<Estimate>,
    pub sources: Vec<SourceReport<Option<Estimate>>>,
    pub simultaneous: Estimate,
    pub constraints_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub status: PointStatus,
    pub message: String,
    pub prediction: Option<Prediction>,
    pub simulation: Option<Simulated>,
}

impl ResultRow {
    pub fn feasible(&self) -> bool {
        self.status == PointStatus::Optimal
    }
}

/// A row together with the solution it was computed from.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub row: ResultRow,
    pub solution: Option<LfpSolution>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Skip simulation even when the scenario configures it.
    pub no_sim: bool,
    /// Overrides of the scenario's simulation seed and length.
    pub seed: Option<u64>,
    pub slots: Option<u64>,
    pub solve: SolveOptions,
}

/// Throughput, energy, delay and delivery metrics of every source.
pub fn report_metrics(sources: usize) -> Vec<[Metric; 4]> {
    (0..sources)
        .map(|s| {
            let id = SourceId::new(s);
            [
                Metric::time_average(format!("throughput_{id}"), CostSpec::of(CostKind::Throughput, id)),
                Metric::time_average(format!("energy_{id}"), CostSpec::of(CostKind::Energy, id)),
                Metric::ratio(
                    format!("delay_{id}"),
                    CostSpec::of(CostKind::QueueLen, id),
                    CostSpec::of(CostKind::Arrival, id),
                ),
                Metric::ratio(
                    format!("delivery_{id}"),
                    CostSpec::of(CostKind::SuccessSlot, id),
                    CostSpec::of(CostKind::ServiceStart, id),
                ),
            ]
        })
        .collect()
}

fn simultaneous_pair(network: &Network, pair: usize) -> bool {
    network.pair_action(pair).transmit_count() >= 2
}

/// Solves one grid point. Solver failures land in the row, not in `Err`.
pub fn solve_point(
    scenario: &Scenario,
    network: &Network,
    point: &GridPoint,
    opts: &SweepOptions,
) -> Result<PointResult, SimError> {
    let constraints: Vec<Metric> = point.constraints.iter().map(|c| c.to_metric()).collect();
    let mut row = ResultRow {
        index: point.index,
        coordinates: point.coordinates.clone(),
        status: PointStatus::Error,
        message: String::new(),
        prediction: None,
        simulation: None,
    };
    let solved = lfp::assemble(network, scenario.objective.clone(), constraints.clone()).and_then(|mut problem| {
        let reports = report_metrics(network.source_count());
        for m in reports.iter().flatten() {
            problem.bind_metric(m)?;
        }
        let solution = lfp::solve_with(&problem, &opts.solve)?;
        Ok((problem, solution, reports))
    });
    let (problem, solution, reports) = match solved {
        Ok(v) => v,
        Err(LfpError::Infeasible) => {
            row.status = PointStatus::Infeasible;
            return Ok(PointResult { row, solution: None });
        }
        Err(e) => {
            row.message = e.to_string();
            return Ok(PointResult { row, solution: None });
        }
    };
    let value = |m: &Metric| lfp::predicted_metrics(&problem, &solution.omega, std::slice::from_ref(m))[0].value.clone().ok();
    row.status = PointStatus::Optimal;
    row.prediction = Some(Prediction {
        objective: solution.objective,
        lp_objective: solution.lp_objective,
        sources: reports
            .iter()
            .map(|[t, e, d, p]| SourceReport {
                throughput: value(t),
                energy: value(e),
                delay: value(d),
                delivery: value(p),
            })
            .collect(),
        simultaneous: solution.omega.simultaneous_transmission(network),
        randomized: solution.randomized_count(),
        constraints_ok: solution.metrics.iter().all(|m| m.satisfied),
    });
    if let Some(settings) = scenario.simulation.filter(|s| s.enabled && !opts.no_sim) {
        let mut cfg = settings.config(point.index);
        if let Some(seed) = opts.seed {
            cfg.seed = seed.wrapping_add(point.index as u64);
        }
        if let Some(n) = opts.slots {
            cfg.n_slots = n;
            cfg.burn_in = cfg.burn_in.min(n / 10);
        }
        let acc = sim::simulate(network, &solution.policy, &cfg)?;
        row.simulation = Some(summarize_simulation(scenario, network, &constraints, &acc));
    }
    Ok(PointResult {
        row,
        solution: Some(solution),
    })
}

/// Simulated objective, report metrics and constraint check of one run.
pub fn summarize_simulation(
    scenario: &Scenario,
    network: &Network,
    constraints: &[Metric],
    acc: &MetricsAccumulator,
) -> Simulated {
    let estimate = |m: &Metric| acc.metric(network, m).ok();
    let constraints_ok = constraints.iter().all(|c| match (acc.metric(network, c), c.bound) {
        (Ok(est), Some(g)) => est.value <= g + SIM_SE_TOLERANCE * est.se + 1e-9,
        (Ok(_), None) => true,
        (Err(_), _) => false,
    });
    Simulated {
        objective: estimate(&scenario.objective),
        sources: report_metrics(network.source_count())
            .iter()
            .map(|[t, e, d, p]| SourceReport {
                throughput: estimate(t),
                energy: estimate(e),
                delay: estimate(d),
                delivery: estimate(p),
            })
            .collect(),
        simultaneous: acc.pair_fraction(|pair| simultaneous_pair(network, pair)),
        constraints_ok,
    }
}

/// Runs every grid point in parallel; results come back in grid order.
pub fn run_sweep(scenario: &Scenario, opts: &SweepOptions) -> Result<Vec<PointResult>, ScenarioError> {
    let network = scenario.build_network()?;
    let grid = scenario.grid();
    let results: Result<Vec<_>, SimError> = grid
        .par_iter()
        .map(|point| solve_point(scenario, &network, point, opts))
        .collect();
    Ok(results?)
}

fn number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), number)
}

/// Column names of `results.csv`, in order.
pub fn result_header(axes: &[String], sources: usize, with_sim: bool) -> Vec<String> {
    let mut h = vec!["point".to_string()];
    h.extend(axes.iter().map(|a| format!("bound_{a}")));
    h.extend(["status", "objective", "lp_objective"].map(String::from));
    let per_source = ["throughput", "energy", "delay", "delivery"];
    for s in 1..=sources {
        h.extend(per_source.iter().map(|m| format!("{m}_{s}")));
    }
    h.extend(["p_simultaneous", "randomized_states", "constraints_ok"].map(String::from));
    if with_sim {
        h.extend(["sim_objective", "sim_objective_se"].map(String::from));
        for s in 1..=sources {
            for m in per_source {
                h.push(format!("sim_{m}_{s}"));
                h.push(format!("sim_{m}_{s}_se"));
            }
        }
        h.extend(["sim_p_simultaneous", "sim_p_simultaneous_se", "sim_constraints_ok"].map(String::from));
    }
    h
}

fn result_record(row: &ResultRow, sources: usize, with_sim: bool) -> Vec<String> {
    let mut r = vec![row.index.to_string()];
    r.extend(row.coordinates.iter().map(|&c| number(c)));
    let width = 2 + 4 * sources + 3 + if with_sim { 2 + 8 * sources + 3 } else { 0 };
    let Some(p) = &row.prediction else {
        match row.status {
            PointStatus::Infeasible => r.push("infeasible".into()),
            _ => r.push(format!("error: {}", row.message)),
        }
        let marker = if row.status == PointStatus::Infeasible { INFEASIBLE } else { "error" };
        r.extend(std::iter::repeat_n(marker.to_string(), width));
        return r;
    };
    r.push("optimal".into());
    r.push(number(p.objective));
    r.push(number(p.lp_objective));
    for s in &p.sources {
        r.extend([s.throughput, s.energy, s.delay, s.delivery].map(optional));
    }
    r.push(number(p.simultaneous));
    r.push(p.randomized.to_string());
    r.push(p.constraints_ok.to_string());
    if with_sim {
        let est = |e: Option<Estimate>| match e {
            Some(e) => [number(e.value), number(e.se)],
            None => ["undefined".to_string(), "undefined".to_string()],
        };
        match &row.simulation {
            Some(sim) => {
                r.extend(est(sim.objective));
                for s in &sim.sources {
                    for e in [s.throughput, s.energy, s.delay, s.delivery] {
                        r.extend(est(e));
                    }
                }
                r.extend(est(Some(sim.simultaneous)));
                r.push(sim.constraints_ok.to_string());
            }
            None => r.extend(std::iter::repeat_n("skipped".to_string(), 2 + 8 * sources + 3)),
        }
    }
    r
}

/// Writes `results.csv`. Simulation columns appear when any row was simulated.
pub fn write_results(path: &Path, axes: &[String], sources: usize, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let with_sim = rows.iter().any(|r| r.simulation.is_some());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(result_header(axes, sources, with_sim))?;
    for row in rows {
        w.write_record(result_record(row, sources, with_sim))?;
    }
    w.flush()?;
    Ok(())
}
