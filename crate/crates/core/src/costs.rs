//! Cost functions over `(state, outcome, action)` triples, their expected form
//! over `(state, action)` pairs, event indicators and ratio metrics.
//!
//! Builtin costs (per source `s`, or summed over all sources when no source is
//! given):
//!
//! | name            | pointwise `z(x, y, u)`             | expected `c(x, u)`              |
//! |-----------------|------------------------------------|---------------------------------|
//! | `throughput`    | `y(s)` (delivery in the slot)      | `rho_s(x, u) T(s)`              |
//! | `energy`        | `T(s)`                             | `T(s)`                          |
//! | `success_slot`  | `y(s)`                             | `rho_s(x, u) T(s)`              |
//! | `service_start` | `1{f(s) = 1}`                      | same                            |
//! | `queue_len`     | `b(s)`                             | same                            |
//! | `arrival`       | `alpha_s 1{arrival admitted}`      | `alpha_s P(admitted | x, u)`    |
//! | `one`           | `1`                                | `1`                             |
//!
//! Delivery probability is `success_slot / service_start`, transmissions per
//! packet `energy / service_start`, and mean packet delay (Little's law)
//! `queue_len / arrival`. An arrival is admitted when the queue left after this
//! slot's removal is shorter than `B`, so at `b = B` the arrival cost is
//! nonzero only through the chance that the head packet leaves.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{admits_arrival, JointAction, Network, NetworkState, Outcome, SourceId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("source {id} is out of range for a network with {sources} sources")]
    SourceOutOfRange { id: SourceId, sources: usize },
    #[error("event has an empty {0} set")]
    EmptyEvent(&'static str),
    #[error("metric `{metric}` is undefined: denominator `{denominator}` averages to {value:e}")]
    UndefinedMetric {
        metric: String,
        denominator: String,
        value: f64,
    },
    #[error("invalid cost specification: {0}")]
    InvalidSpec(String),
    #[error("cost `{0}` is not bound")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Throughput,
    Energy,
    SuccessSlot,
    ServiceStart,
    QueueLen,
    Arrival,
}

impl CostKind {
    pub const ALL: [CostKind; 6] = [
        CostKind::Throughput,
        CostKind::Energy,
        CostKind::SuccessSlot,
        CostKind::ServiceStart,
        CostKind::QueueLen,
        CostKind::Arrival,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Throughput => "throughput",
            CostKind::Energy => "energy",
            CostKind::SuccessSlot => "success_slot",
            CostKind::ServiceStart => "service_start",
            CostKind::QueueLen => "queue_len",
            CostKind::Arrival => "arrival",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "is", rename_all = "snake_case")]
pub enum StatePredicate {
    Empty { source: SourceId },
    Occupied { source: SourceId },
    /// Head-of-line service counter in `min..=max` (source occupied).
    ServiceTime { source: SourceId, min: usize, max: usize },
    /// Queue length in `min..=max` (an empty source has length 0).
    QueueLen { source: SourceId, min: usize, max: usize },
}

impl StatePredicate {
    fn source(&self) -> SourceId {
        match *self {
            StatePredicate::Empty { source }
            | StatePredicate::Occupied { source }
            | StatePredicate::ServiceTime { source, .. }
            | StatePredicate::QueueLen { source, .. } => source,
        }
    }

    fn holds(&self, x: &NetworkState) -> bool {
        let st = x.per_source[self.source().index()];
        match *self {
            StatePredicate::Empty { .. } => st.is_empty(),
            StatePredicate::Occupied { .. } => !st.is_empty(),
            StatePredicate::ServiceTime { min, max, .. } => {
                !st.is_empty() && (min..=max).contains(&st.service())
            }
            StatePredicate::QueueLen { min, max, .. } => (min..=max).contains(&st.queue()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "is", rename_all = "snake_case")]
pub enum OutcomePredicate {
    Success { source: SourceId },
    Failure { source: SourceId },
}

impl OutcomePredicate {
    fn source(&self) -> SourceId {
        match *self {
            OutcomePredicate::Success { source } | OutcomePredicate::Failure { source } => source,
        }
    }

    fn wants_success(&self) -> bool {
        matches!(self, OutcomePredicate::Success { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "is", rename_all = "snake_case")]
pub enum ActionPredicate {
    Transmit { source: SourceId },
    Idle { source: SourceId },
    Drop { source: SourceId },
    Keep { source: SourceId },
}

impl ActionPredicate {
    fn source(&self) -> SourceId {
        match *self {
            ActionPredicate::Transmit { source }
            | ActionPredicate::Idle { source }
            | ActionPredicate::Drop { source }
            | ActionPredicate::Keep { source } => source,
        }
    }

    fn holds_for(&self, transmit: bool, drop: bool) -> bool {
        match self {
            ActionPredicate::Transmit { .. } => transmit,
            ActionPredicate::Idle { .. } => !transmit,
            ActionPredicate::Drop { .. } => drop,
            ActionPredicate::Keep { .. } => !drop,
        }
    }
}

/// A subset `X_e x Y_e x U_e` of the state-outcome-action space, each factor
/// given as a conjunction of per-source predicates. An empty predicate list
/// selects the whole factor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state: Vec<StatePredicate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcome: Vec<OutcomePredicate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action: Vec<ActionPredicate>,
}

impl Event {
    pub fn everything() -> Self {
        Event::default()
    }

    /// Source `s` starts serving a new packet.
    pub fn service_start(source: SourceId) -> Self {
        Event {
            state: vec![StatePredicate::ServiceTime { source, min: 1, max: 1 }],
            ..Event::default()
        }
    }

    /// Source `s` transmits.
    pub fn transmit(source: SourceId) -> Self {
        Event {
            action: vec![ActionPredicate::Transmit { source }],
            ..Event::default()
        }
    }

    /// Source `s` delivers a packet.
    pub fn delivery(source: SourceId) -> Self {
        Event {
            outcome: vec![OutcomePredicate::Success { source }],
            ..Event::default()
        }
    }

    /// Rejects predicates on missing sources and factors that select nothing.
    pub fn validate(&self, network: &Network) -> Result<(), CostError> {
        let sources = network.source_count();
        let sources_used = self
            .state
            .iter()
            .map(StatePredicate::source)
            .chain(self.outcome.iter().map(OutcomePredicate::source))
            .chain(self.action.iter().map(ActionPredicate::source));
        for source in sources_used {
            if source.index() >= sources {
                return Err(CostError::SourceOutOfRange { id: source, sources });
            }
        }
        if !network.states().iter().any(|x| self.contains_state(x)) {
            return Err(CostError::EmptyEvent("state"));
        }
        for s in 0..sources {
            let mut preds = self.outcome.iter().filter(|p| p.source().index() == s);
            if let Some(first) = preds.next() {
                if preds.any(|p| p.wants_success() != first.wants_success()) {
                    return Err(CostError::EmptyEvent("outcome"));
                }
            }
            let any_action = [(false, false), (false, true), (true, false), (true, true)]
                .iter()
                .any(|&(t, d)| {
                    self.action
                        .iter()
                        .filter(|p| p.source().index() == s)
                        .all(|p| p.holds_for(t, d))
                });
            if !any_action {
                return Err(CostError::EmptyEvent("action"));
            }
        }
        Ok(())
    }

    pub fn contains_state(&self, x: &NetworkState) -> bool {
        self.state.iter().all(|p| p.holds(x))
    }

    pub fn contains_action(&self, u: &JointAction) -> bool {
        self.action.iter().all(|p| {
            let a = u.per_source[p.source().index()];
            p.holds_for(a.transmit, a.drop)
        })
    }

    pub fn contains_outcome(&self, y: Outcome) -> bool {
        self.outcome
            .iter()
            .all(|p| y.succeeded(p.source().index()) == p.wants_success())
    }

    /// Whether the event occurs for a realized `(x, y, u)`.
    pub fn occurs(&self, x: &NetworkState, u: &JointAction, y: Outcome) -> bool {
        self.contains_state(x) && self.contains_action(u) && self.contains_outcome(y)
    }

    /// `P(Y in Y_e | x, u)` from per-source success probabilities.
    fn outcome_prob(&self, rho: &[f64]) -> f64 {
        let mut prob = 1.0;
        for s in 0..rho.len() {
            let mut preds = self.outcome.iter().filter(|p| p.source().index() == s);
            let Some(first) = preds.next() else { continue };
            if preds.any(|p| p.wants_success() != first.wants_success()) {
                return 0.0;
            }
            prob *= if first.wants_success() { rho[s] } else { 1.0 - rho[s] };
        }
        prob
    }
}

/// A cost function, either builtin, constant one, or an event indicator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCost", into = "RawCost")]
pub enum CostSpec {
    One,
    /// `source: None` sums the per-source cost over all sources.
    Builtin { kind: CostKind, source: Option<SourceId> },
    Event(Event),
}

impl CostSpec {
    pub fn of(kind: CostKind, source: SourceId) -> Self {
        CostSpec::Builtin { kind, source: Some(source) }
    }

    pub fn total(kind: CostKind) -> Self {
        CostSpec::Builtin { kind, source: None }
    }

    fn validate(&self, network: &Network) -> Result<(), CostError> {
        match self {
            CostSpec::One => Ok(()),
            CostSpec::Builtin { source: Some(source), .. } => {
                if source.index() < network.source_count() {
                    Ok(())
                } else {
                    Err(CostError::SourceOutOfRange {
                        id: *source,
                        sources: network.source_count(),
                    })
                }
            }
            CostSpec::Builtin { source: None, .. } => Ok(()),
            CostSpec::Event(e) => e.validate(network),
        }
    }

    fn sources(&self, network: &Network) -> std::ops::Range<usize> {
        match self {
            CostSpec::Builtin { source: Some(s), .. } => s.index()..s.index() + 1,
            _ => 0..network.source_count(),
        }
    }

    /// `z(x, y, u)` for a realized outcome.
    pub fn pointwise(&self, network: &Network, pair: usize, y: Outcome) -> f64 {
        let x = network.state(network.pair_state(pair));
        let u = network.pair_action(pair);
        match self {
            CostSpec::One => 1.0,
            CostSpec::Event(e) => e.occurs(x, u, y) as u8 as f64,
            CostSpec::Builtin { kind, .. } => self
                .sources(network)
                .map(|s| {
                    let st = x.per_source[s];
                    let a = u.per_source[s];
                    let delivered = y.succeeded(s);
                    match kind {
                        CostKind::Throughput | CostKind::SuccessSlot => delivered as u8 as f64,
                        CostKind::Energy => a.transmit as u8 as f64,
                        CostKind::ServiceStart => (st.service() == 1) as u8 as f64,
                        CostKind::QueueLen => st.queue() as f64,
                        CostKind::Arrival => {
                            let buffer = network.config().buffer();
                            if admits_arrival(st, a, delivered, buffer) {
                                network.config().arrival_prob(s)
                            } else {
                                0.0
                            }
                        }
                    }
                })
                .sum(),
        }
    }

    /// `c(x, u) = sum_y z(x, y, u) P(y | x, u)`, in closed form.
    pub fn expected(&self, network: &Network, pair: usize) -> f64 {
        let x = network.state(network.pair_state(pair));
        let u = network.pair_action(pair);
        let rho = network.success(pair);
        match self {
            CostSpec::One => 1.0,
            CostSpec::Event(e) => {
                if e.contains_state(x) && e.contains_action(u) {
                    e.outcome_prob(rho)
                } else {
                    0.0
                }
            }
            CostSpec::Builtin { kind, .. } => self
                .sources(network)
                .map(|s| {
                    let st = x.per_source[s];
                    let a = u.per_source[s];
                    match kind {
                        CostKind::Throughput | CostKind::SuccessSlot => {
                            if a.transmit {
                                rho[s]
                            } else {
                                0.0
                            }
                        }
                        CostKind::Energy => a.transmit as u8 as f64,
                        CostKind::ServiceStart => (st.service() == 1) as u8 as f64,
                        CostKind::QueueLen => st.queue() as f64,
                        CostKind::Arrival => {
                            let buffer = network.config().buffer();
                            let alpha = network.config().arrival_prob(s);
                            if admits_arrival(st, a, false, buffer) {
                                alpha
                            } else if a.transmit && admits_arrival(st, a, true, buffer) {
                                alpha * rho[s]
                            } else {
                                0.0
                            }
                        }
                    }
                })
                .sum(),
        }
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::One => write!(f, "one"),
            CostSpec::Builtin { kind, source: Some(s) } => write!(f, "{}[{s}]", kind.name()),
            CostSpec::Builtin { kind, source: None } => write!(f, "{}[*]", kind.name()),
            CostSpec::Event(e) => write!(f, "event{}", serde_json::to_string(e).unwrap_or_default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CostName {
    One,
    Throughput,
    Energy,
    SuccessSlot,
    ServiceStart,
    QueueLen,
    Arrival,
    Event,
}

/// On-disk form: `{"cost": "<name>", "source": <1-based id>?, "event": {...}?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    cost: CostName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event: Option<Event>,
}

impl TryFrom<RawCost> for CostSpec {
    type Error = String;

    fn try_from(raw: RawCost) -> Result<Self, String> {
        let kind = match raw.cost {
            CostName::One | CostName::Event if raw.source.is_some() => {
                return Err("`source` is only meaningful for builtin costs".into())
            }
            CostName::One => {
                return match raw.event {
                    None => Ok(CostSpec::One),
                    Some(_) => Err("`event` given for cost `one`".into()),
                }
            }
            CostName::Event => {
                return raw
                    .event
                    .map(CostSpec::Event)
                    .ok_or_else(|| "cost `event` requires an `event` object".into())
            }
            CostName::Throughput => CostKind::Throughput,
            CostName::Energy => CostKind::Energy,
            CostName::SuccessSlot => CostKind::SuccessSlot,
            CostName::ServiceStart => CostKind::ServiceStart,
            CostName::QueueLen => CostKind::QueueLen,
            CostName::Arrival => CostKind::Arrival,
        };
        if raw.event.is_some() {
            return Err(format!("`event` given for builtin cost `{}`", kind.name()));
        }
        Ok(CostSpec::Builtin { kind, source: raw.source })
    }
}

impl From<CostSpec> for RawCost {
    fn from(spec: CostSpec) -> Self {
        match spec {
            CostSpec::One => RawCost { cost: CostName::One, source: None, event: None },
            CostSpec::Event(e) => RawCost { cost: CostName::Event, source: None, event: Some(e) },
            CostSpec::Builtin { kind, source } => RawCost {
                cost: match kind {
                    CostKind::Throughput => CostName::Throughput,
                    CostKind::Energy => CostName::Energy,
                    CostKind::SuccessSlot => CostName::SuccessSlot,
                    CostKind::ServiceStart => CostName::ServiceStart,
                    CostKind::QueueLen => CostName::QueueLen,
                    CostKind::Arrival => CostName::Arrival,
                },
                source,
                event: None,
            },
        }
    }
}

/// Dense expected-form vector of a builtin cost over all `(state, action)` pairs.
pub fn builtin_cost(kind: CostKind, source: SourceId, network: &Network) -> Result<Vec<f64>, CostError> {
    bind_vector(&CostSpec::of(kind, source), network)
}

/// Dense expected-form vector of an event indicator.
pub fn event_cost(event: &Event, network: &Network) -> Result<Vec<f64>, CostError> {
    bind_vector(&CostSpec::Event(event.clone()), network)
}

fn bind_vector(spec: &CostSpec, network: &Network) -> Result<Vec<f64>, CostError> {
    spec.validate(network)?;
    Ok((0..network.pair_count()).map(|p| spec.expected(network, p)).collect())
}

/// Cost functions bound to a network, deduplicated by specification.
#[derive(Debug, Clone, Default)]
pub struct CostTable {
    specs: Vec<CostSpec>,
    vectors: Vec<Vec<f64>>,
}

impl CostTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `spec` (once) and returns its id.
    pub fn bind(&mut self, network: &Network, spec: &CostSpec) -> Result<usize, CostError> {
        if let Some(id) = self.id_of(spec) {
            return Ok(id);
        }
        let v = bind_vector(spec, network)?;
        self.specs.push(spec.clone());
        self.vectors.push(v);
        Ok(self.specs.len() - 1)
    }

    pub fn id_of(&self, spec: &CostSpec) -> Option<usize> {
        self.specs.iter().position(|s| s == spec)
    }

    pub fn specs(&self) -> &[CostSpec] {
        &self.specs
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id]
    }

    pub fn lookup(&self, spec: &CostSpec) -> Result<&[f64], CostError> {
        self.id_of(spec)
            .map(|id| self.vector(id))
            .ok_or_else(|| CostError::Unbound(spec.to_string()))
    }
}

/// `beta * numerator / denominator + lambda`, optionally bounded above by `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metric {
    pub name: String,
    pub numerator: CostSpec,
    #[serde(default = "one")]
    pub denominator: CostSpec,
    #[serde(default = "unit")]
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

fn one() -> CostSpec {
    CostSpec::One
}

fn unit() -> f64 {
    1.0
}

impl Metric {
    pub fn ratio(name: impl Into<String>, numerator: CostSpec, denominator: CostSpec) -> Self {
        Metric {
            name: name.into(),
            numerator,
            denominator,
            beta: 1.0,
            lambda: 0.0,
            bound: None,
        }
    }

    pub fn time_average(name: impl Into<String>, cost: CostSpec) -> Self {
        Self::ratio(name, cost, CostSpec::One)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    fn scope(source: Option<SourceId>) -> String {
        source.map_or_else(|| "all".to_string(), |s| s.to_string())
    }

    fn cost(kind: CostKind, source: Option<SourceId>) -> CostSpec {
        CostSpec::Builtin { kind, source }
    }

    /// Time-average throughput of `source` at least `target`.
    pub fn min_throughput(source: SourceId, target: f64) -> Self {
        Metric {
            name: format!("min_throughput_{source}"),
            numerator: CostSpec::of(CostKind::Throughput, source),
            denominator: CostSpec::One,
            beta: -1.0,
            lambda: 0.0,
            bound: Some(-target),
        }
    }

    /// Mean packet delay (Little's law) at most `target` slots.
    pub fn max_delay(source: Option<SourceId>, target: f64) -> Self {
        Metric {
            name: format!("max_delay_{}", Self::scope(source)),
            numerator: Self::cost(CostKind::QueueLen, source),
            denominator: Self::cost(CostKind::Arrival, source),
            beta: 1.0,
            lambda: 0.0,
            bound: Some(target),
        }
    }

    /// Packet delivery probability at least `target`.
    pub fn min_delivery(source: Option<SourceId>, target: f64) -> Self {
        Metric {
            name: format!("min_delivery_{}", Self::scope(source)),
            numerator: Self::cost(CostKind::SuccessSlot, source),
            denominator: Self::cost(CostKind::ServiceStart, source),
            beta: -1.0,
            lambda: 0.0,
            bound: Some(-target),
        }
    }

    /// Ensures both cost functions are bound in `table`.
    pub fn bind(&self, network: &Network, table: &mut CostTable) -> Result<(usize, usize), CostError> {
        Ok((table.bind(network, &self.numerator)?, table.bind(network, &self.denominator)?))
    }

    /// Value given the already-averaged numerator and denominator.
    pub fn from_averages(&self, numerator: f64, denominator: f64) -> Result<f64, CostError> {
        if denominator.abs() <= 1e-12 {
            return Err(CostError::UndefinedMetric {
                metric: self.name.clone(),
                denominator: self.denominator.to_string(),
                value: denominator,
            });
        }
        Ok(self.beta * numerator / denominator + self.lambda)
    }

    /// Whether `value` satisfies the bound within `slack`.
    pub fn satisfied(&self, value: f64, slack: f64) -> bool {
        self.bound.is_none_or(|g| value <= g + slack)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Metric value under the occupancy vector `omega` (one entry per pair).
pub fn metric_value(metric: &Metric, omega: &[f64], costs: &CostTable) -> Result<f64, CostError> {
    let num = dot(costs.lookup(&metric.numerator)?, omega);
    let den = dot(costs.lookup(&metric.denominator)?, omega);
    metric.from_averages(num, den)
}
