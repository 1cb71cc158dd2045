//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arqopt::cli::sweep::ResultRow;
use arqopt::cli::{run_sweep, PointResult, Scenario, SweepOptions};
use arqopt::costs::{CostSpec, Event, Metric};
use arqopt::lfp::{self, LfpSolution, RANDOMIZATION_TOL};
use arqopt::lp::{solve, LpStatus};
use arqopt::model::{Network, SourceId};
use arqopt::sim::{self, renewal_counts, total_variation};

const BALANCE_TOL: f64 = 1e-8;
const SOLVE_SECONDS: f64 = 5.0;
const ORACLE_TOL: f64 = 1e-8;
const ORACLE_SECONDS: f64 = 10.0;
const TRANSFORM_TOL: f64 = 1e-8;
const SIM_SE: f64 = 3.0;
const SIM_TV: f64 = 0.02;
const SIM_SECONDS: f64 = 30.0;
const IDENTITY_SE: f64 = 2.0;
const THRESHOLD_TOL: f64 = 1e-6;
const TRANSPOSE_TOL: f64 = 1e-6;
const TRANSMIT_GAP: f64 = 0.5;
const LP_TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn no_sim() -> SweepOptions {
    SweepOptions {
        no_sim: true,
        ..SweepOptions::default()
    }
}

fn solve_grid_point(scenario: &Scenario, network: &Network, index: usize) -> Result<LfpSolution, lfp::LfpError> {
    let point = &scenario.grid()[index];
    let constraints: Vec<Metric> = point.constraints.iter().map(|c| c.to_metric()).collect();
    let problem = lfp::assemble(network, scenario.objective.clone(), constraints)?;
    lfp::solve(&problem)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn predicted(network: &Network, omega: &[f64], metric: &Metric) -> f64 {
    let num: Vec<f64> = (0..network.pair_count()).map(|p| metric.numerator.expected(network, p)).collect();
    let den: Vec<f64> = (0..network.pair_count()).map(|p| metric.denominator.expected(network, p)).collect();
    metric.beta * dot(&num, omega) / dot(&den, omega) + metric.lambda
}

fn sweep_rows(name: &str) -> (Scenario, Vec<PointResult>) {
    let scenario = common::scenario(name);
    let results = run_sweep(&scenario, &no_sim()).unwrap();
    (scenario, results)
}

/// Index of the first fig1 point with simultaneous transmission.
fn threshold_index(rows: &[ResultRow]) -> Option<usize> {
    rows.iter()
        .position(|r| r.prediction.as_ref().is_some_and(|p| p.simultaneous > THRESHOLD_TOL))
}

fn occupancy_feasibility() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for name in ["fig1.json", "fig2.json", "fig3.json"] {
        let scenario = common::scenario(name);
        let network = scenario.build_network().unwrap();
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        let mut solved = 0;
        for point in scenario.grid() {
            let constraints: Vec<Metric> = point.constraints.iter().map(|c| c.to_metric()).collect();
            let problem = lfp::assemble(&network, scenario.objective.clone(), constraints).unwrap();
            if let Ok(sol) = lfp::solve(&problem) {
                let (total, balance, negative) = sol.omega.residuals(&problem);
                worst = worst.max(total).max(balance).max(negative);
                solved += 1;
            }
        }
        let seconds = start.elapsed().as_secs_f64();
        passed &= solved > 0 && worst <= BALANCE_TOL && seconds < SOLVE_SECONDS;
        details.push(format!("{name}: {solved} solves, residual {worst:.1e}, {seconds:.2}s"));
    }
    outcome(passed, details.join("; "))
}

fn randomization_bound() -> Outcome {
    let (scenario, results) = sweep_rows("fig1.json");
    let bound = scenario.constraints.len();
    let counts: Vec<usize> = results
        .iter()
        .filter_map(|r| r.solution.as_ref())
        .map(|s| s.policy.randomized_states().len())
        .collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    outcome(
        !counts.is_empty() && max <= bound,
        format!("max {max} randomized states (threshold {RANDOMIZATION_TOL:e}) over {} points, M_c = {bound}", counts.len()),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut compared, mut worst) = (0, 0.0_f64);
    let mut failures = Vec::new();
    for i in 0..80 {
        if compared >= 60 {
            break;
        }
        let f = rng.random_range(1..=2);
        let alpha = [rng.random_range(0.05..=1.0)];
        let failure = rng.random_range(0.0..0.95);
        let net = common::network(1, f, &alpha, failure, failure);
        let objective = common::random_objective(&mut rng, 1);
        let Some(reference) = common::enumerate_deterministic(&net, &objective) else {
            continue;
        };
        let problem = lfp::assemble(&net, objective, vec![]).unwrap();
        match lfp::solve(&problem) {
            Ok(sol) => {
                let err = (sol.objective - reference).abs();
                worst = worst.max(err);
                if err > ORACLE_TOL {
                    failures.push(i);
                }
            }
            Err(_) => failures.push(i),
        }
        compared += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    outcome(
        compared >= 50 && failures.is_empty() && seconds < ORACLE_SECONDS,
        format!("{compared} instances, max error {worst:.1e}, {seconds:.2}s, failing {failures:?}"),
    )
}

fn transform_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for name in ["fig1.json", "fig2.json", "fig3.json", "fig4.json"] {
        let (_, results) = sweep_rows(name);
        for sol in results.iter().filter_map(|r| r.solution.as_ref()) {
            worst = worst.max((sol.lp_objective - sol.objective).abs());
            solved += 1;
        }
    }
    outcome(worst <= TRANSFORM_TOL, format!("max |LP objective - ratio at omega| {worst:.1e} over {solved} solves"))
}

fn simulator_agreement() -> Outcome {
    let (scenario, results) = sweep_rows("fig1.json");
    let network = scenario.build_network().unwrap();
    let rows: Vec<ResultRow> = results.iter().map(|r| r.row.clone()).collect();
    let Some(threshold) = threshold_index(&rows) else {
        return outcome(false, "no threshold point in the fig1 sweep");
    };
    let mut metrics = vec![scenario.objective.clone()];
    metrics.extend(scenario.constraint_metrics());
    let settings = scenario.simulation.expect("fig1 configures simulation");
    let mut passed = true;
    let mut details = Vec::new();
    for index in [0, threshold, rows.len() - 1] {
        let start = Instant::now();
        let sol = results[index].solution.as_ref().expect("feasible point");
        let cfg = settings.config(index);
        let acc = sim::simulate(&network, &sol.policy, &cfg).unwrap();
        let tv = total_variation(&acc.occupancy(&network), &sol.omega.omega);
        let mut worst_se: f64 = 0.0;
        for m in &metrics {
            let est = acc.metric(&network, m).unwrap();
            let want = predicted(&network, &sol.omega.omega, m);
            worst_se = worst_se.max((est.value - want).abs() / est.se.max(1e-300));
            passed &= est.agrees(want, SIM_SE, 1e-12);
        }
        let seconds = start.elapsed().as_secs_f64();
        passed &= tv <= SIM_TV && seconds < SIM_SECONDS && cfg.n_slots >= 1_000_000;
        details.push(format!(
            "t2={}: worst {worst_se:.2} SE, TV {tv:.4}, {seconds:.1}s",
            rows[index].coordinates[0]
        ));
    }
    outcome(passed, details.join("; "))
}

fn littles_law() -> Outcome {
    let scenario = common::scenario("fig3.json");
    let network = scenario.build_network().unwrap();
    let settings = scenario.simulation.expect("fig3 configures simulation");
    let mut passed = true;
    let (mut worst, mut checked): (f64, usize) = (0.0, 0);
    for point in scenario.grid() {
        let Ok(sol) = solve_grid_point(&scenario, &network, point.index) else {
            continue;
        };
        let acc = sim::simulate(&network, &sol.policy, &settings.config(point.index)).unwrap();
        for s in 0..network.source_count() {
            let id = SourceId::new(s);
            let little = Metric::ratio(
                "delay",
                CostSpec::of(arqopt::costs::CostKind::QueueLen, id),
                CostSpec::of(arqopt::costs::CostKind::Arrival, id),
            );
            let ratio = acc.metric(&network, &little).unwrap();
            let sojourn = acc.sojourn(Some(s)).unwrap();
            worst = worst.max((sojourn.value - ratio.value).abs() / sojourn.se);
            passed &= sojourn.agrees(ratio.value, IDENTITY_SE, 1e-12);
            checked += 1;
        }
    }
    outcome(passed && checked > 0, format!("{checked} source/point pairs, worst {worst:.2} SE"))
}

fn renewal_identity() -> Outcome {
    let (scenario, results) = sweep_rows("fig1.json");
    let network = scenario.build_network().unwrap();
    let rows: Vec<ResultRow> = results.iter().map(|r| r.row.clone()).collect();
    let Some(index) = threshold_index(&rows) else {
        return outcome(false, "no threshold point in the fig1 sweep");
    };
    let sol = results[index].solution.as_ref().unwrap();
    let cfg = scenario.simulation.unwrap().config(index);
    let mut passed = true;
    let mut details = Vec::new();
    for s in 0..network.source_count() {
        let id = SourceId::new(s);
        let (phi, psi) = (Event::transmit(id), Event::service_start(id));
        let average = |e: &Event| {
            let spec = CostSpec::Event(e.clone());
            let c: Vec<f64> = (0..network.pair_count()).map(|p| spec.expected(&network, p)).collect();
            dot(&c, &sol.omega.omega)
        };
        let want = average(&phi) / average(&psi);
        let stats = renewal_counts(&network, &sol.policy, &phi, &psi, &cfg).unwrap();
        let v = stats.mean_occurrences();
        let interval = stats.mean_interval();
        let inverse = stats.inverse_frequency();
        passed &= v.agrees(want, IDENTITY_SE, 1e-12) && interval.agrees(inverse.value, IDENTITY_SE, 1e-12);
        details.push(format!(
            "source {}: V {:.4} vs {want:.4} ({:.2} SE), interval {:.4} vs {:.4} ({:.2} SE)",
            s + 1,
            v.value,
            (v.value - want).abs() / v.se,
            interval.value,
            inverse.value,
            (interval.value - inverse.value).abs() / interval.se
        ));
    }
    outcome(passed, details.join("; "))
}

fn fig1_threshold() -> Outcome {
    let (_, results) = sweep_rows("fig1.json");
    let rows: Vec<ResultRow> = results.iter().map(|r| r.row.clone()).collect();
    let Some(threshold) = threshold_index(&rows) else {
        return outcome(false, "simultaneous transmission never appears");
    };
    if threshold == 0 {
        return outcome(false, "simultaneous transmission from the first point");
    }
    let objective = |i: usize| rows[i].prediction.as_ref().map(|p| p.objective);
    let Some(flat) = objective(0) else {
        return outcome(false, "first point infeasible");
    };
    let below_flat = (0..threshold).all(|i| objective(i).is_some_and(|v| (v - flat).abs() <= THRESHOLD_TOL));
    let above: Vec<f64> = (threshold - 1..rows.len()).filter_map(objective).collect();
    let nondecreasing = above.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let constraints_ok = results
        .iter()
        .filter_map(|r| r.solution.as_ref())
        .all(|s| s.metrics.iter().all(|m| m.satisfied));
    outcome(
        below_flat && nondecreasing && constraints_ok,
        format!(
            "threshold at t2={}, objective {flat:.6} below, {:.6} at t2={}",
            rows[threshold].coordinates[0],
            above.last().copied().unwrap_or(f64::NAN),
            rows.last().unwrap().coordinates[0]
        ),
    )
}

fn fig2_structure() -> Outcome {
    let scenario = common::scenario("fig2.json");
    let network = scenario.build_network().unwrap();
    let Ok(sol) = solve_grid_point(&scenario, &network, 0) else {
        return outcome(false, "fig2 infeasible");
    };
    let c = network.config();
    let (mut ahead, mut behind) = (Vec::new(), Vec::new());
    let mut transpose_err: f64 = 0.0;
    for x in network.states() {
        let [a, b] = [x.per_source[0], x.per_source[1]];
        let p1 = sol.policy.transmit_prob(&network, x.index, 0);
        let mirrored = sol.policy.transmit_prob(&network, c.state_index(&[b, a]), 1);
        transpose_err = transpose_err.max((p1 - mirrored).abs());
        match a.service().cmp(&b.service()) {
            std::cmp::Ordering::Greater => ahead.push(p1),
            std::cmp::Ordering::Less => behind.push(p1),
            std::cmp::Ordering::Equal => {}
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&ahead) - mean(&behind);
    outcome(
        gap >= TRANSMIT_GAP && transpose_err <= TRANSPOSE_TOL,
        format!("transmit gap {gap:.4}, transpose error {transpose_err:.1e}"),
    )
}

fn fig3_endpoints() -> Outcome {
    let (scenario, results) = sweep_rows("fig3.json");
    let axis = &scenario.sweep.as_ref().unwrap().axes[0].values;
    let (tight, relaxed) = if axis[0] < axis[axis.len() - 1] {
        (0, results.len() - 1)
    } else {
        (results.len() - 1, 0)
    };
    let energy = |i: usize, s: usize| results[i].row.prediction.as_ref().and_then(|p| p.sources[s].energy);
    match (energy(tight, 0), energy(relaxed, 0), energy(tight, 1), energy(relaxed, 1)) {
        (Some(e1t), Some(e1r), Some(e2t), Some(e2r)) => outcome(
            e1r > e1t && e2r < e2t,
            format!("e1 {e1t:.4} -> {e1r:.4}, e2 {e2t:.4} -> {e2r:.4} (tight -> relaxed)"),
        ),
        _ => outcome(false, "an endpoint is infeasible"),
    }
}

fn lp_core() -> Outcome {
    let beale = arqopt::lp::LpProblem::new(
        vec![-0.75, 20.0, -0.5, 6.0],
        vec![],
        vec![],
        vec![
            vec![0.25, -8.0, -1.0, 9.0],
            vec![0.5, -12.0, -0.5, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap();
    let mut instances = vec![beale];
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let m_ub = rng.random_range(1..=8);
        let m_eq = rng.random_range(0..=2.min(n - 1));
        instances.push(common::random_feasible(&mut rng, n, m_ub, m_eq));
    }
    let (mut worst, mut mismatched, mut nondeterministic) = (0.0_f64, 0, 0);
    for p in &instances {
        let exact = common::exact_solve(p);
        let a = solve(p).unwrap();
        let b = solve(p).unwrap();
        if a != b || a.objective.to_bits() != b.objective.to_bits() {
            nondeterministic += 1;
        }
        if a.status != LpStatus::Optimal || exact.status != common::ExactStatus::Optimal {
            mismatched += 1;
            continue;
        }
        let err = (a.objective - exact.objective_f64()).abs();
        worst = worst.max(err);
        mismatched += (err > LP_TOL) as usize;
    }
    outcome(
        mismatched == 0 && nondeterministic == 0,
        format!(
            "Beale + 100 instances, max error {worst:.1e}, {mismatched} mismatched, {nondeterministic} nondeterministic"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("occupancy feasibility", occupancy_feasibility),
        ("randomization bound", randomization_bound),
        ("oracle equivalence", oracle_equivalence),
        ("transform identity", transform_identity),
        ("simulator agreement", simulator_agreement),
        ("little's law", littles_law),
        ("renewal identity", renewal_identity),
        ("fig1 threshold", fig1_threshold),
        ("fig2 structure", fig2_structure),
        ("fig3 endpoints", fig3_endpoints),
        ("lp core", lp_core),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        failed += !result.passed as usize;
        println!(
            "{} {:>2} {:<22} {}",
            if result.passed { "PASS" } else { "FAIL" },
            i + 1,
            name,
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
