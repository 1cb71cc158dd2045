//! Versioned JSON scenario files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostError, Metric};
use crate::model::{InterferenceModel, ModelError, Network, NetworkConfig, SourceConfig, SourceId};
use crate::sim::{SimConfig, SimError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: at `{field}`: {message}")]
    Schema { path: String, field: String, message: String },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A scalar shared by every source, or one value per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSource {
    All(f64),
    Each(Vec<f64>),
}

impl PerSource {
    fn expand(&self, sources: usize, field: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            PerSource::All(v) => Ok(vec![*v; sources]),
            PerSource::Each(v) if v.len() == sources => Ok(v.clone()),
            PerSource::Each(v) => Err(ScenarioError::Invalid(format!(
                "`{field}` lists {} values for {sources} sources",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    /// 1-based ids of the transmitting sources.
    pub transmitters: Vec<SourceId>,
    /// Failure probability of each transmitter, in the order listed.
    pub failure: Vec<f64>,
}

/// Failure probabilities, in exactly one of three forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSpec {
    /// Failure probability without interferers, paired with `failure_interfered`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_alone: Option<PerSource>,
    /// Failure probability with one or more interferers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_interfered: Option<PerSource>,
    /// `failure_by_interferers[s][k]`: failure of source `s` with `k` interferers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_by_interferers: Option<Vec<Vec<f64>>>,
    /// One entry per transmitter set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TableEntry>>,
    /// Reject tables where an extra interferer raises a success probability.
    #[serde(default = "yes")]
    pub monotone: bool,
}

fn yes() -> bool {
    true
}

impl InterferenceSpec {
    pub fn symmetric(failure_alone: f64, failure_interfered: f64) -> Self {
        InterferenceSpec {
            failure_alone: Some(PerSource::All(failure_alone)),
            failure_interfered: Some(PerSource::All(failure_interfered)),
            failure_by_interferers: None,
            table: None,
            monotone: true,
        }
    }

    fn to_model(&self, sources: usize) -> Result<InterferenceModel, ScenarioError> {
        let monotone = self.monotone;
        let success = |f: &f64| 1.0 - f;
        match (&self.failure_alone, &self.failure_interfered, &self.failure_by_interferers, &self.table) {
            (Some(alone), Some(interfered), None, None) => {
                let alone = alone.expand(sources, "failure_alone")?;
                let interfered = interfered.expand(sources, "failure_interfered")?;
                let rows = (0..sources)
                    .map(|s| (0..sources).map(|k| 1.0 - if k == 0 { alone[s] } else { interfered[s] }).collect())
                    .collect();
                Ok(InterferenceModel::ByInterferers { success: rows, monotone })
            }
            (None, None, Some(rows), None) => {
                if let Some((s, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != sources) {
                    return Err(ScenarioError::Invalid(format!(
                        "failure_by_interferers[{s}] has {} entries, expected {sources}",
                        row.len()
                    )));
                }
                Ok(InterferenceModel::ByInterferers {
                    success: rows.iter().map(|r| r.iter().map(success).collect()).collect(),
                    monotone,
                })
            }
            (None, None, None, Some(entries)) => {
                let mut table = BTreeMap::new();
                for e in entries {
                    if e.transmitters.len() != e.failure.len() {
                        return Err(ScenarioError::Invalid(format!(
                            "table entry for {:?} lists {} failure probabilities",
                            e.transmitters.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                            e.failure.len()
                        )));
                    }
                    let mut mask = 0u64;
                    let mut row = vec![0.0; sources];
                    for (id, f) in e.transmitters.iter().zip(&e.failure) {
                        if id.index() >= sources {
                            return Err(ScenarioError::Invalid(format!("table names source {id}, network has {sources}")));
                        }
                        mask |= 1 << id.index();
                        row[id.index()] = 1.0 - f;
                    }
                    if table.insert(mask, row).is_some() {
                        return Err(ScenarioError::Invalid(format!("table lists transmitter set {mask:#b} twice")));
                    }
                }
                Ok(InterferenceModel::Table { success: table, monotone })
            }
            _ => Err(ScenarioError::Invalid(
                "interference needs exactly one of: failure_alone + failure_interfered, failure_by_interferers, table"
                    .into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub buffer: usize,
    pub max_service: usize,
    /// Per-slot arrival probability of each source.
    pub arrival: Vec<f64>,
    pub interference: InterferenceSpec,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<Network, ScenarioError> {
        let sources = self.arrival.iter().map(|&arrival_prob| SourceConfig { arrival_prob }).collect();
        let interference = self.interference.to_model(self.arrival.len())?;
        let config = NetworkConfig::new(self.buffer, self.max_service, sources, interference)?;
        Ok(Network::new(config)?)
    }
}

/// A named bound. The builtin kinds take bounds in natural units (a minimum
/// throughput of 0.3 is written `0.3`); `metric` takes any ratio metric whose
/// own `bound` is the value swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    MinThroughput {
        #[serde(default)]
        name: String,
        source: SourceId,
        bound: f64,
    },
    MaxDelay {
        #[serde(default)]
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<SourceId>,
        bound: f64,
    },
    MinDelivery {
        #[serde(default)]
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<SourceId>,
        bound: f64,
    },
    Metric { metric: Metric },
}

impl ConstraintSpec {
    pub fn name(&self) -> &str {
        match self {
            ConstraintSpec::MinThroughput { name, .. }
            | ConstraintSpec::MaxDelay { name, .. }
            | ConstraintSpec::MinDelivery { name, .. } => name,
            ConstraintSpec::Metric { metric } => &metric.name,
        }
    }

    pub fn bound(&self) -> Option<f64> {
        match self {
            ConstraintSpec::MinThroughput { bound, .. }
            | ConstraintSpec::MaxDelay { bound, .. }
            | ConstraintSpec::MinDelivery { bound, .. } => Some(*bound),
            ConstraintSpec::Metric { metric } => metric.bound,
        }
    }

    /// Same constraint with the bound replaced.
    pub fn with_bound(&self, value: f64) -> Self {
        let mut c = self.clone();
        match &mut c {
            ConstraintSpec::MinThroughput { bound, .. }
            | ConstraintSpec::MaxDelay { bound, .. }
            | ConstraintSpec::MinDelivery { bound, .. } => *bound = value,
            ConstraintSpec::Metric { metric } => metric.bound = Some(value),
        }
        c
    }

    pub fn to_metric(&self) -> Metric {
        let (mut metric, name) = match self {
            ConstraintSpec::MinThroughput { name, source, bound } => (Metric::min_throughput(*source, *bound), name),
            ConstraintSpec::MaxDelay { name, source, bound } => (Metric::max_delay(*source, *bound), name),
            ConstraintSpec::MinDelivery { name, source, bound } => (Metric::min_delivery(*source, *bound), name),
            ConstraintSpec::Metric { metric } => return metric.clone(),
        };
        if !name.is_empty() {
            metric.name = name.clone();
        }
        metric
    }

    fn resolve_name(&mut self) {
        let derived = self.to_metric().name;
        match self {
            ConstraintSpec::MinThroughput { name, .. }
            | ConstraintSpec::MaxDelay { name, .. }
            | ConstraintSpec::MinDelivery { name, .. } => {
                if name.is_empty() {
                    *name = derived;
                }
            }
            ConstraintSpec::Metric { .. } => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Name of the constraint whose bound varies.
    pub constraint: String,
    pub values: Vec<f64>,
}

/// One axis for a curve, two for a feasibility map (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub n_slots: u64,
    /// Grid point `i` simulates with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub burn_in: Option<u64>,
    #[serde(default)]
    pub batches: Option<usize>,
}

impl SimSettings {
    /// Simulation settings for grid point `index`.
    pub fn config(&self, index: usize) -> SimConfig {
        let mut cfg = SimConfig::new(self.n_slots, self.seed.wrapping_add(index as u64));
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(k) = self.batches {
            cfg.batches = k;
        }
        cfg
    }

    fn resolve(&mut self) {
        let cfg = self.config(0);
        self.burn_in = Some(cfg.burn_in);
        self.batches = Some(cfg.batches);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub network: NetworkSpec,
    pub objective: Metric,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSettings>,
}

/// A point of the sweep grid: coordinates and the constraints they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub constraints: Vec<ConstraintSpec>,
}

impl Scenario {
    /// Fills defaults and checks every cross-reference.
    pub fn resolve(mut self) -> Result<Self, ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(ScenarioError::Version(self.version));
        }
        let network = self.network.build()?;
        for c in &mut self.constraints {
            c.resolve_name();
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.constraints {
            if !seen.insert(c.name().to_string()) {
                return Err(ScenarioError::Invalid(format!("constraint name `{}` is used twice", c.name())));
            }
            if c.bound().is_none() {
                return Err(ScenarioError::Invalid(format!("constraint `{}` has no bound", c.name())));
            }
        }
        // Binding validates source ids and event predicates.
        let mut table = crate::costs::CostTable::new();
        self.objective.bind(&network, &mut table)?;
        for c in &self.constraints {
            c.to_metric().bind(&network, &mut table)?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.axes.is_empty() || sweep.axes.len() > 2 {
                return Err(ScenarioError::Invalid("a sweep has one or two axes".into()));
            }
            for axis in &sweep.axes {
                if !seen.contains(&axis.constraint) {
                    return Err(ScenarioError::Invalid(format!(
                        "sweep axis names unknown constraint `{}`",
                        axis.constraint
                    )));
                }
                if axis.values.is_empty() {
                    return Err(ScenarioError::Invalid(format!("sweep over `{}` has no values", axis.constraint)));
                }
                let increasing = axis.values.windows(2).all(|w| w[0] < w[1]);
                let decreasing = axis.values.windows(2).all(|w| w[0] > w[1]);
                if !(increasing || decreasing) || axis.values.iter().any(|v| !v.is_finite()) {
                    return Err(ScenarioError::Invalid(format!(
                        "sweep over `{}` is not strictly monotone",
                        axis.constraint
                    )));
                }
            }
            if sweep.axes.len() == 2 && sweep.axes[0].constraint == sweep.axes[1].constraint {
                return Err(ScenarioError::Invalid("both sweep axes name the same constraint".into()));
            }
        }
        if let Some(sim) = &mut self.simulation {
            sim.resolve();
            sim.config(0).validate()?;
        }
        Ok(self)
    }

    pub fn build_network(&self) -> Result<Network, ScenarioError> {
        self.network.build()
    }

    pub fn constraint_metrics(&self) -> Vec<Metric> {
        self.constraints.iter().map(ConstraintSpec::to_metric).collect()
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.sweep
            .as_ref()
            .map(|s| s.axes.iter().map(|a| a.constraint.clone()).collect())
            .unwrap_or_default()
    }

    /// Grid points in row-major order; a scenario without sweep is one point.
    pub fn grid(&self) -> Vec<GridPoint> {
        let axes = self.sweep.as_ref().map(|s| s.axes.as_slice()).unwrap_or(&[]);
        let mut coords: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in axes {
            coords = coords
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        coords
            .into_iter()
            .enumerate()
            .map(|(index, coordinates)| {
                let constraints = self
                    .constraints
                    .iter()
                    .map(|c| match axes.iter().position(|a| a.constraint == c.name()) {
                        Some(k) => c.with_bound(coordinates[k]),
                        None => c.clone(),
                    })
                    .collect();
                GridPoint {
                    index,
                    coordinates,
                    constraints,
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses a scenario, reporting schema violations with their field path.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
        path: origin.to_string(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    scenario.resolve()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}
