//! Scenario files, sweeps and CSV output behind the `arqopt` binary.

pub mod output;
pub mod scenario;
pub mod sweep;
pub mod validate;

pub use output::{dump_occupancy, dump_policy_map};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub use sweep::{run_sweep, write_results, PointResult, ResultRow, SweepOptions};
pub use validate::{validate_scenario, Check};
