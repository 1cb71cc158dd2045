use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use arqopt::cli::scenario::GridPoint;
use arqopt::cli::sweep::{solve_point, summarize_simulation, SIM_SE_TOLERANCE};
use arqopt::cli::{
    dump_occupancy, dump_policy_map, load_scenario, run_sweep, validate_scenario, write_results, PointResult, Scenario,
    SweepOptions,
};
use arqopt::lp::SolveOptions;
use arqopt::sim::{self, SimConfig};

#[derive(Parser)]
#[command(name = "arqopt", version, about = "Optimal transmit/drop policies for interfering ARQ sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario at its base constraint bounds.
    Solve(Common),
    /// Solve every point of the scenario's sweep grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write policy_map_<point>.csv for every feasible point.
        #[arg(long)]
        policy_maps: bool,
    },
    /// Solve at the base bounds, then simulate the optimal policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the per-slot trace to trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Solve at the base bounds and write only policy_map.csv.
    PolicyMap(Common),
    /// Run the invariant suite on every grid point.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base simulation seed (grid point i uses seed + i).
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated slots per point.
    #[arg(long)]
    slots: Option<u64>,
    /// Skip simulation even when the scenario configures it.
    #[arg(long)]
    no_sim: bool,
    /// Write the final simplex tableau of each solve here (single-point commands).
    #[arg(long)]
    dump_tableau: Option<PathBuf>,
}

type Failure = Box<dyn std::error::Error>;

impl Common {
    fn load(&self) -> Result<Scenario, Failure> {
        let scenario = load_scenario(&self.config)?;
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join("scenario.resolved.json"), scenario.to_json())?;
        Ok(scenario)
    }

    fn options(&self, no_sim: bool) -> SweepOptions {
        SweepOptions {
            no_sim: self.no_sim || no_sim,
            seed: self.seed,
            slots: self.slots,
            solve: SolveOptions {
                tableau_dump: self.dump_tableau.clone(),
                ..SolveOptions::default()
            },
        }
    }
}

fn base_point(scenario: &Scenario) -> GridPoint {
    GridPoint {
        index: 0,
        coordinates: Vec::new(),
        constraints: scenario.constraints.clone(),
    }
}

fn solve_base(scenario: &Scenario, opts: &SweepOptions) -> Result<PointResult, Failure> {
    let network = scenario.build_network()?;
    Ok(solve_point(scenario, &network, &base_point(scenario), opts)?)
}

fn write_solution(scenario: &Scenario, result: &PointResult, out: &Path, occupancy: bool) -> Result<(), Failure> {
    let network = scenario.build_network()?;
    if let Some(sol) = &result.solution {
        dump_policy_map(&sol.policy, &network, Some(&sol.omega), &out.join("policy_map.csv"))?;
        if occupancy {
            dump_occupancy(&sol.policy, &network, &sol.omega, &out.join("occupancy.csv"))?;
        }
    }
    Ok(())
}

fn report(result: &PointResult) {
    let row = &result.row;
    match (&row.prediction, row.status) {
        (Some(p), _) => {
            println!("objective {:.9} ({} randomized states)", p.objective, p.randomized);
            for (s, m) in p.sources.iter().enumerate() {
                println!(
                    "  source {}: throughput {:?} energy {:?} delay {:?} delivery {:?}",
                    s + 1,
                    m.throughput,
                    m.energy,
                    m.delay,
                    m.delivery
                );
            }
            println!("  simultaneous transmission {:.6}", p.simultaneous);
        }
        (None, status) => println!("{status:?} {}", row.message),
    }
    if let Some(sim) = &row.simulation {
        if let Some(o) = sim.objective {
            println!("simulated objective {:.6} +/- {:.6}", o.value, o.se);
        }
        println!(
            "simulated constraints within {SIM_SE_TOLERANCE} SE: {}",
            sim.constraints_ok
        );
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Solve(common) => {
            let scenario = common.load()?;
            let result = solve_base(&scenario, &common.options(true))?;
            report(&result);
            write_results(
                &common.out.join("results.csv"),
                &[],
                scenario.network.arrival.len(),
                std::slice::from_ref(&result.row),
            )?;
            write_solution(&scenario, &result, &common.out, true)?;
            Ok(result.row.feasible())
        }
        Command::Sweep { common, policy_maps } => {
            let scenario = common.load()?;
            let mut opts = common.options(false);
            opts.solve.tableau_dump = None;
            let results = run_sweep(&scenario, &opts)?;
            let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
            write_results(&common.out.join("results.csv"), &scenario.axis_names(), scenario.network.arrival.len(), &rows)?;
            if policy_maps {
                let network = scenario.build_network()?;
                for r in &results {
                    if let Some(sol) = &r.solution {
                        let path = common.out.join(format!("policy_map_{}.csv", r.row.index));
                        dump_policy_map(&sol.policy, &network, Some(&sol.omega), &path)?;
                    }
                }
            }
            let feasible = rows.iter().filter(|r| r.feasible()).count();
            println!("{} points, {feasible} feasible; wrote {}", rows.len(), common.out.join("results.csv").display());
            Ok(true)
        }
        Command::Simulate { common, trace } => {
            let scenario = common.load()?;
            let result = solve_base(&scenario, &SweepOptions { no_sim: true, ..common.options(true) })?;
            let Some(sol) = &result.solution else {
                report(&result);
                return Ok(false);
            };
            let network = scenario.build_network()?;
            let mut cfg = match scenario.simulation {
                Some(s) => s.config(0),
                None => SimConfig::new(1_000_000, 0),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(n) = common.slots {
                cfg.n_slots = n;
                cfg.burn_in = cfg.burn_in.min(n / 10);
            }
            info!("simulating {} slots with seed {}", cfg.n_slots, cfg.seed);
            let acc = if trace {
                let mut w = BufWriter::new(File::create(common.out.join("trace.csv"))?);
                sim::simulate_traced(&network, &sol.policy, &cfg, Some(&mut w))?
            } else {
                sim::simulate(&network, &sol.policy, &cfg)?
            };
            acc.write_summary(&common.out.join("sim_summary.csv"))?;
            let mut result = result;
            let simulated = summarize_simulation(&scenario, &network, &scenario.constraint_metrics(), &acc);
            result.row.simulation = Some(simulated);
            report(&result);
            write_results(
                &common.out.join("results.csv"),
                &[],
                scenario.network.arrival.len(),
                std::slice::from_ref(&result.row),
            )?;
            write_solution(&scenario, &result, &common.out, true)?;
            Ok(result.row.simulation.as_ref().is_some_and(|s| s.constraints_ok))
        }
        Command::PolicyMap(common) => {
            let scenario = common.load()?;
            let result = solve_base(&scenario, &common.options(true))?;
            write_solution(&scenario, &result, &common.out, false)?;
            report(&result);
            Ok(result.row.feasible())
        }
        Command::Validate(common) => {
            let scenario = common.load()?;
            let checks = validate_scenario(&scenario, &common.options(true).solve)?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!(
                    "{} point {:>3} {:<15} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.point,
                    c.name,
                    c.detail
                );
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
