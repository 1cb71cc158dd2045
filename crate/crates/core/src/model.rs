//! Finite state, action and outcome spaces of the slotted multi-source ARQ
//! network, and its exact transition law.
//!
//! Every source owns a FIFO buffer of `B` packets. The head-of-line packet
//! carries a service counter `f` in `1..=F`; at `f = F` the packet must leave
//! the buffer at the end of the slot. Within a slot the order of events is:
//!
//! 1. the joint action is chosen,
//! 2. the transmission outcome of every transmitting source is realized,
//! 3. the head packet is removed if it was delivered or dropped,
//! 4. an arrival (probability `alpha_s`) is admitted iff the queue left after
//!    step 3 holds fewer than `B` packets,
//! 5. a new head starts at `f = 1`, a surviving head advances to `f + 1`.
//!
//! States, legal actions and (state, action) pairs are densely indexed. Network
//! states are ordered lexicographically over sources (source 1 most
//! significant); within a source, `Empty` comes first and occupied states are
//! ordered by `(b, f)` with `f` varying fastest. Joint actions are ordered the
//! same way over the per-source legal action lists documented on
//! [`local_actions`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Hard cap on the number of network states a [`Network`] will enumerate.
pub const MAX_STATES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("interference model has no entry for source {id} when sources {transmitters:?} transmit")]
    MissingInterferenceEntry {
        id: SourceId,
        transmitters: Vec<SourceId>,
    },
    #[error("interference model is not monotone: {0}")]
    NotMonotone(String),
    #[error("outcome marks source {0} as successful but it does not transmit")]
    InconsistentOutcome(SourceId),
    #[error("action {action} is not legal in state {state}")]
    IllegalAction { state: usize, action: String },
}

/// Source identifier. Stored zero-based; displayed and serialized one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceId(usize);

impl SourceId {
    pub const fn new(index: usize) -> Self {
        SourceId(index)
    }

    pub fn from_one_based(id: usize) -> Option<Self> {
        id.checked_sub(1).map(SourceId)
    }

    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

impl Serialize for SourceId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0 as u64 + 1)
    }
}

impl<'de> Deserialize<'de> for SourceId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let id = u64::deserialize(deserializer)?;
        SourceId::from_one_based(id as usize)
            .ok_or_else(|| serde::de::Error::custom("source ids start at 1"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Probability that a packet arrives at the source in a slot.
    pub arrival_prob: f64,
}

/// Success probability of a transmission as a function of who else transmits.
#[derive(Debug, Clone, PartialEq)]
pub enum InterferenceModel {
    /// `success[s][k]`: success probability of source `s` when `k` other
    /// sources transmit in the same slot.
    ByInterferers { success: Vec<Vec<f64>>, monotone: bool },
    /// Full table keyed by the transmitter set (bit `s` set when source `s`
    /// transmits). Each entry lists one success probability per source;
    /// values for non-transmitting sources are ignored.
    Table {
        success: BTreeMap<u64, Vec<f64>>,
        monotone: bool,
    },
}

impl InterferenceModel {
    /// Identical sources: failure probability `failure_alone` without
    /// interference and `failure_interfered` with one or more interferers.
    pub fn symmetric_failure(sources: usize, failure_alone: f64, failure_interfered: f64) -> Self {
        let row: Vec<f64> = (0..sources)
            .map(|k| if k == 0 { 1.0 - failure_alone } else { 1.0 - failure_interfered })
            .collect();
        InterferenceModel::ByInterferers {
            success: vec![row; sources],
            monotone: true,
        }
    }

    pub fn is_monotone_checked(&self) -> bool {
        match self {
            InterferenceModel::ByInterferers { monotone, .. } => *monotone,
            InterferenceModel::Table { monotone, .. } => *monotone,
        }
    }

    /// Success probability of `source` when the sources in `transmitters`
    /// transmit. Zero when `source` itself is idle.
    pub fn success_prob(&self, source: usize, transmitters: u64) -> Result<f64, ModelError> {
        if transmitters & (1 << source) == 0 {
            return Ok(0.0);
        }
        let found = match self {
            InterferenceModel::ByInterferers { success, .. } => {
                let interferers = transmitters.count_ones() as usize - 1;
                success.get(source).and_then(|row| row.get(interferers)).copied()
            }
            InterferenceModel::Table { success, .. } => {
                success.get(&transmitters).and_then(|row| row.get(source)).copied()
            }
        };
        found.ok_or_else(|| ModelError::MissingInterferenceEntry {
            id: SourceId::new(source),
            transmitters: mask_sources(transmitters),
        })
    }

    fn validate(&self, sources: usize) -> Result<(), ModelError> {
        let values: Box<dyn Iterator<Item = &f64>> = match self {
            InterferenceModel::ByInterferers { success, .. } => {
                if success.len() != sources {
                    return Err(ModelError::InvalidConfig(format!(
                        "interference model lists {} sources, network has {}",
                        success.len(),
                        sources
                    )));
                }
                Box::new(success.iter().flatten())
            }
            InterferenceModel::Table { success, .. } => {
                for (mask, row) in success {
                    if *mask == 0 || *mask >> sources != 0 {
                        return Err(ModelError::InvalidConfig(format!(
                            "interference table key {mask:#b} is not a nonempty subset of {sources} sources"
                        )));
                    }
                    if row.len() != sources {
                        return Err(ModelError::InvalidConfig(format!(
                            "interference table row for {mask:#b} has {} entries, expected {sources}",
                            row.len()
                        )));
                    }
                }
                Box::new(success.values().flatten())
            }
        };
        for &p in values {
            if !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidConfig(format!(
                    "success probability {p} outside [0, 1]"
                )));
            }
        }
        if self.is_monotone_checked() {
            self.check_monotone(sources)?;
        }
        Ok(())
    }

    /// Adding an interferer must never raise a configured success probability.
    fn check_monotone(&self, sources: usize) -> Result<(), ModelError> {
        match self {
            InterferenceModel::ByInterferers { success, .. } => {
                for (s, row) in success.iter().enumerate() {
                    for k in 1..row.len() {
                        if row[k] > row[k - 1] + 1e-12 {
                            return Err(ModelError::NotMonotone(format!(
                                "source {} succeeds with {} with {k} interferers but {} with {}",
                                s + 1,
                                row[k],
                                row[k - 1],
                                k - 1
                            )));
                        }
                    }
                }
            }
            InterferenceModel::Table { success, .. } => {
                for (&mask, row) in success {
                    for extra in 0..sources {
                        let bigger = mask | (1 << extra);
                        if bigger == mask {
                            continue;
                        }
                        let Some(bigger_row) = success.get(&bigger) else {
                            continue;
                        };
                        for s in (0..sources).filter(|s| mask & (1 << s) != 0) {
                            if bigger_row[s] > row[s] + 1e-12 {
                                return Err(ModelError::NotMonotone(format!(
                                    "source {} improves from {} to {} when source {} joins",
                                    s + 1,
                                    row[s],
                                    bigger_row[s],
                                    extra + 1
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn mask_sources(mask: u64) -> Vec<SourceId> {
    (0..64).filter(|s| mask & (1 << s) != 0).map(SourceId::new).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    buffer: usize,
    max_service: usize,
    sources: Vec<SourceConfig>,
    interference: InterferenceModel,
}

impl NetworkConfig {
    pub fn new(
        buffer: usize,
        max_service: usize,
        sources: Vec<SourceConfig>,
        interference: InterferenceModel,
    ) -> Result<Self, ModelError> {
        if sources.is_empty() {
            return Err(ModelError::InvalidConfig("at least one source is required".into()));
        }
        if sources.len() > 16 {
            return Err(ModelError::InvalidConfig("at most 16 sources are supported".into()));
        }
        if buffer == 0 || max_service == 0 {
            return Err(ModelError::InvalidConfig(
                "buffer size and maximum service time must be at least 1".into(),
            ));
        }
        for (s, src) in sources.iter().enumerate() {
            if !(0.0..=1.0).contains(&src.arrival_prob) {
                return Err(ModelError::InvalidConfig(format!(
                    "arrival probability of source {} is {}, outside [0, 1]",
                    s + 1,
                    src.arrival_prob
                )));
            }
        }
        interference.validate(sources.len())?;
        Ok(NetworkConfig {
            buffer,
            max_service,
            sources,
            interference,
        })
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn max_service(&self) -> usize {
        self.max_service
    }

    pub fn sources(&self) -> &[SourceConfig] {
        &self.sources
    }

    pub fn arrival_prob(&self, source: usize) -> f64 {
        self.sources[source].arrival_prob
    }

    pub fn interference(&self) -> &InterferenceModel {
        &self.interference
    }

    /// Number of states of a single source: `1 + F * B`.
    pub fn local_state_count(&self) -> usize {
        1 + self.buffer * self.max_service
    }

    /// `(1 + F * B)^S`, or `None` on overflow.
    pub fn state_count(&self) -> Option<usize> {
        self.local_state_count().checked_pow(self.source_count() as u32)
    }

    fn local_state(&self, local: usize) -> SourceState {
        if local == 0 {
            SourceState::Empty
        } else {
            let k = local - 1;
            SourceState::Occupied {
                queue: k / self.max_service + 1,
                service: k % self.max_service + 1,
            }
        }
    }

    fn local_index(&self, state: SourceState) -> usize {
        match state {
            SourceState::Empty => 0,
            SourceState::Occupied { queue, service } => {
                1 + (queue - 1) * self.max_service + (service - 1)
            }
        }
    }

    /// Decodes a dense state index.
    pub fn state(&self, index: usize) -> NetworkState {
        let n = self.local_state_count();
        let mut rest = index;
        let mut per_source = vec![SourceState::Empty; self.source_count()];
        for slot in per_source.iter_mut().rev() {
            *slot = self.local_state(rest % n);
            rest /= n;
        }
        NetworkState { per_source, index }
    }

    /// Encodes per-source states into the dense index.
    pub fn state_index(&self, per_source: &[SourceState]) -> usize {
        let n = self.local_state_count();
        per_source
            .iter()
            .fold(0, |acc, &st| acc * n + self.local_index(st))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceState {
    Empty,
    /// `queue` packets buffered, head packet in service for `service` slots.
    Occupied { queue: usize, service: usize },
}

impl SourceState {
    /// Queue length, zero when empty.
    pub fn queue(self) -> usize {
        match self {
            SourceState::Empty => 0,
            SourceState::Occupied { queue, .. } => queue,
        }
    }

    /// Service counter of the head packet, zero when empty.
    pub fn service(self) -> usize {
        match self {
            SourceState::Empty => 0,
            SourceState::Occupied { service, .. } => service,
        }
    }

    pub fn is_empty(self) -> bool {
        matches!(self, SourceState::Empty)
    }
}

impl fmt::Display for SourceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceState::Empty => write!(f, "0"),
            SourceState::Occupied { queue, service } => write!(f, "b{queue}f{service}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkState {
    pub per_source: Vec<SourceState>,
    pub index: usize,
}

impl fmt::Display for NetworkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.per_source.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceAction {
    pub transmit: bool,
    pub drop: bool,
}

impl SourceAction {
    pub const IDLE: SourceAction = SourceAction { transmit: false, drop: false };
    pub const DISCARD: SourceAction = SourceAction { transmit: false, drop: true };
    pub const SEND: SourceAction = SourceAction { transmit: true, drop: false };
    pub const SEND_AND_DROP: SourceAction = SourceAction { transmit: true, drop: true };
}

impl fmt::Display for SourceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}D{}", self.transmit as u8, self.drop as u8)
    }
}

const EMPTY_ACTIONS: [SourceAction; 1] = [SourceAction::IDLE];
const SERVING_ACTIONS: [SourceAction; 4] = [
    SourceAction::IDLE,
    SourceAction::DISCARD,
    SourceAction::SEND,
    SourceAction::SEND_AND_DROP,
];
const DEADLINE_ACTIONS: [SourceAction; 2] = [SourceAction::DISCARD, SourceAction::SEND_AND_DROP];

/// Legal actions of one source, ordered by `(T, D)`:
/// empty buffer `{(0,0)}`; `f < F` all four; `f = F` only `{(0,1), (1,1)}`.
pub fn local_actions(state: SourceState, max_service: usize) -> &'static [SourceAction] {
    match state {
        SourceState::Empty => &EMPTY_ACTIONS,
        SourceState::Occupied { service, .. } if service >= max_service => &DEADLINE_ACTIONS,
        SourceState::Occupied { .. } => &SERVING_ACTIONS,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction {
    pub per_source: Vec<SourceAction>,
    /// Position within the legal-action list of the paired state.
    pub index: usize,
}

impl JointAction {
    /// Bit mask of transmitting sources.
    pub fn transmitters(&self) -> u64 {
        self.per_source
            .iter()
            .enumerate()
            .filter(|(_, a)| a.transmit)
            .fold(0, |m, (s, _)| m | (1 << s))
    }

    pub fn transmit_count(&self) -> usize {
        self.per_source.iter().filter(|a| a.transmit).count()
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.per_source.iter().enumerate() {
            if i > 0 {
                write!(f, "|")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Success/failure bits of all sources in a slot; bit `s` set iff `y(s) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Outcome(pub u64);

impl Outcome {
    pub fn from_flags(flags: &[bool]) -> Self {
        Outcome(
            flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .fold(0, |m, (s, _)| m | (1 << s)),
        )
    }

    pub fn succeeded(self, source: usize) -> bool {
        self.0 & (1 << source) != 0
    }
}

/// Every network state in index order; `(1 + F*B)^S` of them.
pub fn enumerate_states(config: &NetworkConfig) -> Vec<NetworkState> {
    let count = config.state_count().expect("state count overflows usize");
    (0..count).map(|i| config.state(i)).collect()
}

/// Cartesian product of the per-source legal action sets, source 1 most
/// significant.
pub fn legal_actions(x: &NetworkState, config: &NetworkConfig) -> Vec<JointAction> {
    let lists: Vec<&[SourceAction]> = x
        .per_source
        .iter()
        .map(|&st| local_actions(st, config.max_service()))
        .collect();
    let total: usize = lists.iter().map(|l| l.len()).product();
    (0..total)
        .map(|index| {
            let mut rest = index;
            let mut per_source = vec![SourceAction::IDLE; lists.len()];
            for (s, list) in lists.iter().enumerate().rev() {
                per_source[s] = list[rest % list.len()];
                rest /= list.len();
            }
            JointAction { per_source, index }
        })
        .collect()
}

fn check_legal(x: &NetworkState, u: &JointAction, config: &NetworkConfig) -> Result<(), ModelError> {
    let ok = x.per_source.len() == u.per_source.len()
        && x
            .per_source
            .iter()
            .zip(&u.per_source)
            .all(|(&st, a)| local_actions(st, config.max_service()).contains(a));
    if ok {
        Ok(())
    } else {
        Err(ModelError::IllegalAction {
            state: x.index,
            action: u.to_string(),
        })
    }
}

fn check_consistent(u: &JointAction, y: Outcome) -> Result<(), ModelError> {
    match (0..u.per_source.len()).find(|&s| y.succeeded(s) && !u.per_source[s].transmit) {
        Some(s) => Err(ModelError::InconsistentOutcome(SourceId::new(s))),
        None => Ok(()),
    }
}

/// Per-source success probabilities `rho_s(x, u)`; zero for idle sources.
pub fn success_probs(
    x: &NetworkState,
    u: &JointAction,
    config: &NetworkConfig,
) -> Result<Vec<f64>, ModelError> {
    check_legal(x, u, config)?;
    let mask = u.transmitters();
    (0..config.source_count())
        .map(|s| config.interference().success_prob(s, mask))
        .collect()
}

fn outcome_prob_from(rho: &[f64], u: &JointAction, y: Outcome) -> f64 {
    u.per_source
        .iter()
        .enumerate()
        .filter(|(_, a)| a.transmit)
        .map(|(s, _)| if y.succeeded(s) { rho[s] } else { 1.0 - rho[s] })
        .product()
}

/// `P(y | x, u)`: outcomes are independent across sources given `(x, u)`.
pub fn outcome_prob(
    x: &NetworkState,
    u: &JointAction,
    y: Outcome,
    config: &NetworkConfig,
) -> Result<f64, ModelError> {
    check_consistent(u, y)?;
    let rho = success_probs(x, u, config)?;
    Ok(outcome_prob_from(&rho, u, y))
}

/// Whether an arrival would be admitted given the removal decision of this slot.
pub fn admits_arrival(state: SourceState, action: SourceAction, delivered: bool, buffer: usize) -> bool {
    match state {
        SourceState::Empty => true,
        SourceState::Occupied { queue, .. } => {
            let removed = delivered || action.drop;
            queue - usize::from(removed) < buffer
        }
    }
}

/// Deterministic single-source update once the outcome and the arrival are known.
pub fn advance(
    state: SourceState,
    action: SourceAction,
    delivered: bool,
    arrived: bool,
    buffer: usize,
) -> SourceState {
    match state {
        SourceState::Empty => {
            if arrived {
                SourceState::Occupied { queue: 1, service: 1 }
            } else {
                SourceState::Empty
            }
        }
        SourceState::Occupied { queue, service } => {
            let removed = delivered || action.drop;
            let remaining = queue - removed as usize;
            let queue = remaining + (arrived && remaining < buffer) as usize;
            if queue == 0 {
                SourceState::Empty
            } else if removed {
                SourceState::Occupied { queue, service: 1 }
            } else {
                SourceState::Occupied { queue, service: service + 1 }
            }
        }
    }
}

/// Successors of one source with their probabilities (arrival or not), merged
/// when both branches lead to the same state.
fn local_successors(
    state: SourceState,
    action: SourceAction,
    delivered: bool,
    alpha: f64,
    buffer: usize,
) -> ([(SourceState, f64); 2], usize) {
    let without = advance(state, action, delivered, false, buffer);
    let with = advance(state, action, delivered, true, buffer);
    if with == without {
        ([(without, 1.0), (without, 0.0)], 1)
    } else {
        ([(without, 1.0 - alpha), (with, alpha)], 2)
    }
}

/// Product of per-source successor distributions, as `(state index, prob)`
/// pairs, for a fixed outcome. Zero-probability branches are kept out.
fn successors_for_outcome(
    x: &NetworkState,
    u: &JointAction,
    y: Outcome,
    config: &NetworkConfig,
    mut emit: impl FnMut(usize, f64),
) {
    let n = config.local_state_count();
    let per: Vec<([(SourceState, f64); 2], usize)> = x
        .per_source
        .iter()
        .enumerate()
        .map(|(s, &st)| {
            local_successors(
                st,
                u.per_source[s],
                y.succeeded(s),
                config.arrival_prob(s),
                config.buffer(),
            )
        })
        .collect();
    let combos: usize = per.iter().map(|(_, k)| k).product();
    for combo in 0..combos {
        let mut rest = combo;
        let mut index = 0;
        let mut prob = 1.0;
        for (branches, k) in &per {
            let (st, p) = branches[rest % k];
            rest /= k;
            index = index * n + config.local_index(st);
            prob *= p;
        }
        if prob > 0.0 {
            emit(index, prob);
        }
    }
}

fn merge_sorted(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|&(i, _)| i);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (i, p) in entries {
        match out.last_mut() {
            Some((j, q)) if *j == i => *q += p,
            _ => out.push((i, p)),
        }
    }
    out
}

/// `P(x' | x, y, u)` as a sparse distribution sorted by state index.
pub fn next_state_dist(
    x: &NetworkState,
    u: &JointAction,
    y: Outcome,
    config: &NetworkConfig,
) -> Result<Vec<(usize, f64)>, ModelError> {
    check_legal(x, u, config)?;
    check_consistent(u, y)?;
    let mut entries = Vec::new();
    successors_for_outcome(x, u, y, config, |i, p| entries.push((i, p)));
    Ok(merge_sorted(entries))
}

/// Outcomes consistent with `u` (subsets of the transmitter set).
pub fn consistent_outcomes(u: &JointAction) -> impl Iterator<Item = Outcome> {
    let mask = u.transmitters();
    // enumerate submasks of `mask`, including 0
    let mut sub = Some(mask);
    std::iter::from_fn(move || {
        let cur = sub?;
        sub = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(Outcome(cur))
    })
}

fn transition_row(
    x: &NetworkState,
    u: &JointAction,
    rho: &[f64],
    config: &NetworkConfig,
) -> Vec<(usize, f64)> {
    let mut entries = Vec::new();
    for y in consistent_outcomes(u) {
        let py = outcome_prob_from(rho, u, y);
        if py == 0.0 {
            continue;
        }
        successors_for_outcome(x, u, y, config, |i, p| entries.push((i, p * py)));
    }
    merge_sorted(entries)
}

/// `P(x' | x, u) = sum_y P(x' | x, y, u) P(y | x, u)`.
pub fn transition_prob(
    x_next: &NetworkState,
    x: &NetworkState,
    u: &JointAction,
    config: &NetworkConfig,
) -> Result<f64, ModelError> {
    let rho = success_probs(x, u, config)?;
    Ok(transition_row(x, u, &rho, config)
        .into_iter()
        .find(|&(i, _)| i == x_next.index)
        .map_or(0.0, |(_, p)| p))
}

/// Enumerated model: states, legal actions, (state, action) pairs, success
/// probabilities and sparse transition rows, all precomputed.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    states: Vec<NetworkState>,
    actions: Vec<Vec<JointAction>>,
    pair_offsets: Vec<usize>,
    pair_state: Vec<usize>,
    success: Vec<Vec<f64>>,
    transitions: Vec<Vec<(usize, f64)>>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, ModelError> {
        let count = config
            .state_count()
            .filter(|&c| c <= MAX_STATES)
            .ok_or_else(|| {
                ModelError::InvalidConfig(format!("state space exceeds {MAX_STATES} states"))
            })?;
        let states: Vec<NetworkState> = (0..count).map(|i| config.state(i)).collect();
        let actions: Vec<Vec<JointAction>> =
            states.iter().map(|x| legal_actions(x, &config)).collect();

        let mut pair_offsets = Vec::with_capacity(count + 1);
        let mut pair_state = Vec::new();
        let mut success = Vec::new();
        let mut transitions = Vec::new();
        for (x, acts) in states.iter().zip(&actions) {
            pair_offsets.push(pair_state.len());
            for u in acts {
                let mask = u.transmitters();
                let rho = (0..config.source_count())
                    .map(|s| config.interference().success_prob(s, mask))
                    .collect::<Result<Vec<f64>, _>>()?;
                transitions.push(transition_row(x, u, &rho, &config));
                success.push(rho);
                pair_state.push(x.index);
            }
        }
        pair_offsets.push(pair_state.len());
        Ok(Network {
            config,
            states,
            actions,
            pair_offsets,
            pair_state,
            success,
            transitions,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn source_count(&self) -> usize {
        self.config.source_count()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[NetworkState] {
        &self.states
    }

    pub fn state(&self, x: usize) -> &NetworkState {
        &self.states[x]
    }

    pub fn actions(&self, x: usize) -> &[JointAction] {
        &self.actions[x]
    }

    pub fn pair_count(&self) -> usize {
        self.pair_state.len()
    }

    /// Pair indices belonging to state `x`.
    pub fn pairs_of(&self, x: usize) -> std::ops::Range<usize> {
        self.pair_offsets[x]..self.pair_offsets[x + 1]
    }

    pub fn pair_index(&self, x: usize, action: usize) -> usize {
        self.pair_offsets[x] + action
    }

    pub fn pair_state(&self, pair: usize) -> usize {
        self.pair_state[pair]
    }

    pub fn pair_action(&self, pair: usize) -> &JointAction {
        let x = self.pair_state[pair];
        &self.actions[x][pair - self.pair_offsets[x]]
    }

    /// `rho_s(x, u)` for every source.
    pub fn success(&self, pair: usize) -> &[f64] {
        &self.success[pair]
    }

    /// Sparse row of `P(. | x, u)`, sorted by next-state index.
    pub fn transitions(&self, pair: usize) -> &[(usize, f64)] {
        &self.transitions[pair]
    }

    /// `P(y | x, u)` for the pair.
    pub fn outcome_prob(&self, pair: usize, y: Outcome) -> f64 {
        let u = self.pair_action(pair);
        if check_consistent(u, y).is_err() {
            return 0.0;
        }
        outcome_prob_from(&self.success[pair], u, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_source(buffer: usize, max_service: usize, alpha: f64) -> NetworkConfig {
        NetworkConfig::new(
            buffer,
            max_service,
            vec![SourceConfig { arrival_prob: alpha }; 2],
            InterferenceModel::symmetric_failure(2, 0.2, 0.4),
        )
        .unwrap()
    }

    fn occupied(queue: usize, service: usize) -> SourceState {
        SourceState::Occupied { queue, service }
    }

    fn action(config: &NetworkConfig, x: &NetworkState, per: &[SourceAction]) -> JointAction {
        legal_actions(x, config)
            .into_iter()
            .find(|u| u.per_source == per)
            .expect("action is legal")
    }

    #[test]
    fn state_counts() {
        assert_eq!(enumerate_states(&two_source(1, 5, 0.95)).len(), 36);
        assert_eq!(enumerate_states(&two_source(3, 3, 0.5)).len(), 100);
        let single = NetworkConfig::new(
            1,
            1,
            vec![SourceConfig { arrival_prob: 0.5 }],
            InterferenceModel::symmetric_failure(1, 0.2, 0.4),
        )
        .unwrap();
        let states = enumerate_states(&single);
        assert_eq!(states.len(), 2);
        assert_eq!(states[0].per_source, vec![SourceState::Empty]);
        assert_eq!(states[1].per_source, vec![occupied(1, 1)]);
    }

    #[test]
    fn state_order_is_service_fastest() {
        let c = two_source(2, 3, 0.5);
        let x = c.state(1);
        assert_eq!(x.per_source, vec![SourceState::Empty, occupied(1, 1)]);
        assert_eq!(c.state(2).per_source[1], occupied(1, 2));
        assert_eq!(c.state(4).per_source[1], occupied(2, 1));
        assert_eq!(c.state(7).per_source[0], occupied(1, 1));
    }

    #[test]
    fn legal_action_sets() {
        let c = two_source(1, 5, 0.95);
        assert_eq!(local_actions(SourceState::Empty, 5), &[SourceAction::IDLE]);
        let deadline = local_actions(occupied(1, 5), 5);
        assert_eq!(deadline.len(), 2);
        assert!(deadline.iter().all(|a| a.drop));
        let x = c.state(c.state_index(&[occupied(1, 2), occupied(1, 2)]));
        assert_eq!(legal_actions(&x, &c).len(), 16);
    }

    #[test]
    fn success_probabilities_follow_interference() {
        let c = two_source(1, 5, 0.95);
        let x = c.state(c.state_index(&[occupied(1, 1), occupied(1, 1)]));
        let both = action(&c, &x, &[SourceAction::SEND, SourceAction::SEND]);
        let rho = success_probs(&x, &both, &c).unwrap();
        assert!((rho[0] - 0.6).abs() < 1e-15 && (rho[1] - 0.6).abs() < 1e-15);
        let alone = action(&c, &x, &[SourceAction::SEND, SourceAction::IDLE]);
        let rho = success_probs(&x, &alone, &c).unwrap();
        assert!((rho[0] - 0.8).abs() < 1e-15);
        assert_eq!(rho[1], 0.0);
        let idle = action(&c, &x, &[SourceAction::IDLE, SourceAction::IDLE]);
        assert_eq!(success_probs(&x, &idle, &c).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn outcome_probabilities() {
        let c = two_source(1, 5, 0.95);
        let x = c.state(c.state_index(&[occupied(1, 1), occupied(1, 1)]));
        let both = action(&c, &x, &[SourceAction::SEND, SourceAction::SEND]);
        let p = outcome_prob(&x, &both, Outcome::from_flags(&[true, false]), &c).unwrap();
        assert!((p - 0.24).abs() < 1e-15);
        let total: f64 = consistent_outcomes(&both)
            .map(|y| outcome_prob(&x, &both, y, &c).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-15);

        let alone = action(&c, &x, &[SourceAction::SEND, SourceAction::IDLE]);
        let p = outcome_prob(&x, &alone, Outcome::from_flags(&[true, false]), &c).unwrap();
        assert!((p - 0.8).abs() < 1e-15);
        assert_eq!(
            outcome_prob(&x, &alone, Outcome::from_flags(&[false, true]), &c),
            Err(ModelError::InconsistentOutcome(SourceId::new(1)))
        );
    }

    #[test]
    fn next_state_examples() {
        let single = |alpha: f64, max_service| {
            NetworkConfig::new(
                1,
                max_service,
                vec![SourceConfig { arrival_prob: alpha }],
                InterferenceModel::symmetric_failure(1, 0.2, 0.4),
            )
            .unwrap()
        };
        let c = single(0.0, 3);
        let x = c.state(c.state_index(&[occupied(1, 1)]));
        let idle = action(&c, &x, &[SourceAction::IDLE]);
        let d = next_state_dist(&x, &idle, Outcome(0), &c).unwrap();
        assert_eq!(d, vec![(c.state_index(&[occupied(1, 2)]), 1.0)]);

        let send = action(&c, &x, &[SourceAction::SEND]);
        let d = next_state_dist(&x, &send, Outcome(1), &c).unwrap();
        assert_eq!(d, vec![(0, 1.0)]);

        let c = single(0.95, 3);
        let d = next_state_dist(&x, &send, Outcome(1), &c).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, 0);
        assert!((d[0].1 - 0.05).abs() < 1e-15);
        assert_eq!(d[1].0, c.state_index(&[occupied(1, 1)]));
        assert!((d[1].1 - 0.95).abs() < 1e-15);
    }

    #[test]
    fn full_buffer_blocks_arrival_without_removal() {
        let c = NetworkConfig::new(
            2,
            3,
            vec![SourceConfig { arrival_prob: 0.7 }],
            InterferenceModel::symmetric_failure(1, 0.2, 0.4),
        )
        .unwrap();
        let x = c.state(c.state_index(&[occupied(2, 1)]));
        let idle = action(&c, &x, &[SourceAction::IDLE]);
        let d = next_state_dist(&x, &idle, Outcome(0), &c).unwrap();
        assert_eq!(d, vec![(c.state_index(&[occupied(2, 2)]), 1.0)]);
        // a removal frees a slot for the arrival; the next head starts fresh
        let drop = action(&c, &x, &[SourceAction::DISCARD]);
        let d = next_state_dist(&x, &drop, Outcome(0), &c).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, c.state_index(&[occupied(1, 1)]));
        assert_eq!(d[1].0, c.state_index(&[occupied(2, 1)]));
    }

    #[test]
    fn transition_example_component_empty() {
        let c = two_source(1, 5, 0.95);
        let x = c.state(c.state_index(&[occupied(1, 1), SourceState::Empty]));
        let u = action(&c, &x, &[SourceAction::SEND, SourceAction::IDLE]);
        let p: f64 = enumerate_states(&c)
            .iter()
            .filter(|x2| x2.per_source[0].is_empty())
            .map(|x2| transition_prob(x2, &x, &u, &c).unwrap())
            .sum();
        assert!((p - 0.04).abs() < 1e-14, "{p}");
    }

    #[test]
    fn interference_table_errors() {
        let mut table = BTreeMap::new();
        table.insert(0b01, vec![0.8, 0.0]);
        table.insert(0b11, vec![0.6, 0.6]);
        let model = InterferenceModel::Table { success: table.clone(), monotone: true };
        assert!(matches!(
            model.success_prob(1, 0b10),
            Err(ModelError::MissingInterferenceEntry { .. })
        ));
        let config = NetworkConfig::new(
            1,
            2,
            vec![SourceConfig { arrival_prob: 0.5 }; 2],
            model,
        )
        .unwrap();
        assert!(matches!(
            Network::new(config),
            Err(ModelError::MissingInterferenceEntry { .. })
        ));

        table.insert(0b10, vec![0.0, 0.5]);
        let bad = InterferenceModel::Table { success: table, monotone: true };
        let err = NetworkConfig::new(1, 2, vec![SourceConfig { arrival_prob: 0.5 }; 2], bad);
        assert!(matches!(err, Err(ModelError::NotMonotone(_))));
    }

    #[test]
    fn non_monotone_compact_model_rejected_unless_unchecked() {
        let success = vec![vec![0.5, 0.7], vec![0.5, 0.4]];
        let checked = InterferenceModel::ByInterferers { success: success.clone(), monotone: true };
        let cfg = |m| NetworkConfig::new(1, 2, vec![SourceConfig { arrival_prob: 0.5 }; 2], m);
        assert!(matches!(cfg(checked), Err(ModelError::NotMonotone(_))));
        let unchecked = InterferenceModel::ByInterferers { success, monotone: false };
        assert!(cfg(unchecked).is_ok());
    }

    #[test]
    fn invalid_configs() {
        let m = || InterferenceModel::symmetric_failure(1, 0.2, 0.4);
        assert!(NetworkConfig::new(0, 1, vec![SourceConfig { arrival_prob: 0.5 }], m()).is_err());
        assert!(NetworkConfig::new(1, 0, vec![SourceConfig { arrival_prob: 0.5 }], m()).is_err());
        assert!(NetworkConfig::new(1, 1, vec![], m()).is_err());
        assert!(NetworkConfig::new(1, 1, vec![SourceConfig { arrival_prob: 1.5 }], m()).is_err());
    }

    #[test]
    fn illegal_action_rejected() {
        let c = two_source(1, 5, 0.5);
        let x = c.state(0);
        let u = JointAction { per_source: vec![SourceAction::SEND, SourceAction::IDLE], index: 0 };
        assert!(matches!(success_probs(&x, &u, &c), Err(ModelError::IllegalAction { .. })));
    }

    #[test]
    fn network_pairs_match_enumeration() {
        let c = two_source(1, 5, 0.95);
        let net = Network::new(c.clone()).unwrap();
        // per source: empty 1 + four mid states x4 + deadline x2 = 19
        assert_eq!(net.pair_count(), 19 * 19);
        for p in 0..net.pair_count() {
            let x = net.pair_state(p);
            let u = net.pair_action(p);
            assert_eq!(net.pair_index(x, u.index), p);
        }
    }
}
