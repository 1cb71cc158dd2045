//! Slot-by-slot Monte Carlo simulation of the network under a stationary policy.
//!
//! Randomness comes from three ChaCha8 streams derived from one seed:
//! stream 0 samples actions, stream 1 transmission outcomes and stream 2
//! arrivals. Every source draws an arrival every slot, so the arrival stream
//! stays aligned across policies.
//!
//! Statistics are collected after `burn_in` slots and split into contiguous
//! batches; standard errors are batch means of ratio estimators.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostError, CostSpec, Event, Metric};
use crate::lfp::Policy;
use crate::model::{admits_arrival, advance, Network, Outcome, SourceState};

const ACTION_STREAM: u64 = 0;
const OUTCOME_STREAM: u64 = 1;
const ARRIVAL_STREAM: u64 = 2;

/// Minimum number of batches for standard errors.
pub const MIN_BATCHES: usize = 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("policy covers {policy} states but the network has {network}")]
    PolicyMismatch { policy: usize, network: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("writing simulation output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing simulation output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_burn_in() -> u64 {
    10_000
}

fn default_batches() -> usize {
    50
}

impl SimConfig {
    pub fn new(n_slots: u64, seed: u64) -> Self {
        SimConfig {
            n_slots,
            seed,
            burn_in: default_burn_in().min(n_slots / 10),
            batches: default_batches(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_slots <= self.burn_in {
            return Err(SimError::InvalidConfig(format!(
                "n_slots ({}) must exceed burn_in ({})",
                self.n_slots, self.burn_in
            )));
        }
        if self.batches < MIN_BATCHES {
            return Err(SimError::InvalidConfig(format!("at least {MIN_BATCHES} batches are required")));
        }
        if self.n_slots - self.burn_in < self.batches as u64 {
            return Err(SimError::InvalidConfig("fewer accumulated slots than batches".into()));
        }
        Ok(())
    }

    fn accumulated(&self) -> u64 {
        self.n_slots - self.burn_in
    }

    /// Batch of the `t`-th slot (0-based, including burn-in); `None` during burn-in.
    fn batch_of(&self, t: u64) -> Option<usize> {
        let rel = t.checked_sub(self.burn_in)?;
        let len = self.accumulated() / self.batches as u64;
        Some(((rel / len) as usize).min(self.batches - 1))
    }
}

/// One simulated slot, as seen by observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub t: u64,
    pub state: usize,
    pub pair: usize,
    pub outcome: Outcome,
    /// Bit `s` set when source `s` had an arrival (admitted or not).
    pub arrivals: u64,
}

/// The slot engine. Starts in the all-empty state.
pub struct Simulator<'a> {
    network: &'a Network,
    policy: &'a Policy,
    state: Vec<SourceState>,
    index: usize,
    t: u64,
    action_rng: ChaCha8Rng,
    outcome_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Simulator<'a> {
    pub fn new(network: &'a Network, policy: &'a Policy, seed: u64) -> Result<Self, SimError> {
        if policy.state_count() != network.state_count() {
            return Err(SimError::PolicyMismatch {
                policy: policy.state_count(),
                network: network.state_count(),
            });
        }
        let state = vec![SourceState::Empty; network.source_count()];
        Ok(Simulator {
            network,
            policy,
            index: network.config().state_index(&state),
            state,
            t: 0,
            action_rng: stream(seed, ACTION_STREAM),
            outcome_rng: stream(seed, OUTCOME_STREAM),
            arrival_rng: stream(seed, ARRIVAL_STREAM),
        })
    }

    pub fn state(&self) -> &[SourceState] {
        &self.state
    }

    fn sample_action(&mut self) -> usize {
        let probs = self.policy.action_probs(self.index);
        let r: f64 = self.action_rng.random();
        let mut acc = 0.0;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if r < acc {
                return a;
            }
        }
        // rounding left the cumulative sum just below one
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Plays one slot and moves to the next state.
    pub fn step(&mut self) -> Slot {
        let network = self.network;
        let config = network.config();
        let action = self.sample_action();
        let pair = network.pair_index(self.index, action);
        let u = network.pair_action(pair);
        let rho = network.success(pair);
        let mut outcome = 0u64;
        let mut arrivals = 0u64;
        for s in 0..self.state.len() {
            let a = u.per_source[s];
            if a.transmit && self.outcome_rng.random::<f64>() < rho[s] {
                outcome |= 1 << s;
            }
            let arrived = self.arrival_rng.random::<f64>() < config.arrival_prob(s);
            if arrived {
                arrivals |= 1 << s;
            }
            self.state[s] = advance(self.state[s], a, outcome & (1 << s) != 0, arrived, config.buffer());
        }
        let slot = Slot {
            t: self.t,
            state: self.index,
            pair,
            outcome: Outcome(outcome),
            arrivals,
        };
        self.index = config.state_index(&self.state);
        self.t += 1;
        slot
    }
}

/// Point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Whether `reference` lies within `k` standard errors (plus `floor`).
    pub fn agrees(&self, reference: f64, k: f64, floor: f64) -> bool {
        (self.value - reference).abs() <= k * self.se + floor
    }
}

/// Ratio estimator `sum(num) / sum(den)` over batches, with the standard error
/// of the linearized residuals.
pub fn batch_ratio(num: &[f64], den: &[f64]) -> Option<Estimate> {
    let k = num.len();
    let total_den: f64 = den.iter().sum();
    if k < 2 || total_den.abs() <= 1e-12 {
        return None;
    }
    let ratio = num.iter().sum::<f64>() / total_den;
    let mean_den = total_den / k as f64;
    let ss: f64 = num
        .iter()
        .zip(den)
        .map(|(n, d)| ((n - ratio * d) / mean_den).powi(2))
        .sum();
    Some(Estimate {
        value: ratio,
        se: (ss / (k * (k - 1)) as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SourceCounters {
    pub transmissions: u64,
    pub successes: u64,
    /// Drops of packets that were not delivered in the same slot.
    pub drops: u64,
    pub removals: u64,
    pub services_started: u64,
    pub arrivals_admitted: u64,
    pub queue_sum: u64,
    pub initial_queue: u64,
    pub final_queue: u64,
}

/// Everything collected by [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsAccumulator {
    config: SimConfig,
    slots: u64,
    /// Per batch: visits of every `(pair, outcome)` seen.
    counts: Vec<BTreeMap<(usize, u64), u64>>,
    sources: Vec<SourceCounters>,
    /// Per source, per batch: (sum of sojourn times, tagged packets).
    sojourn: Vec<Vec<(u64, u64)>>,
}

impl MetricsAccumulator {
    fn new(config: SimConfig, sources: usize) -> Self {
        MetricsAccumulator {
            config,
            slots: 0,
            counts: vec![BTreeMap::new(); config.batches],
            sources: vec![SourceCounters::default(); sources],
            sojourn: vec![vec![(0, 0); config.batches]; sources],
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Slots accumulated after burn-in.
    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn source(&self, s: usize) -> &SourceCounters {
        &self.sources[s]
    }

    /// Visits per `(state, action)` pair.
    pub fn visits(&self, network: &Network) -> Vec<u64> {
        let mut visits = vec![0; network.pair_count()];
        for batch in &self.counts {
            for (&(pair, _), &n) in batch {
                visits[pair] += n;
            }
        }
        visits
    }

    /// Empirical state-action frequencies.
    pub fn occupancy(&self, network: &Network) -> Vec<f64> {
        self.visits(network)
            .into_iter()
            .map(|v| v as f64 / self.slots as f64)
            .collect()
    }

    /// Per-batch sums of the pointwise cost `spec`.
    pub fn batch_sums(&self, network: &Network, spec: &CostSpec) -> Vec<f64> {
        self.counts
            .iter()
            .map(|batch| {
                batch
                    .iter()
                    .map(|(&(pair, y), &n)| n as f64 * spec.pointwise(network, pair, Outcome(y)))
                    .sum()
            })
            .collect()
    }

    /// Time average of `spec` over the accumulated slots.
    pub fn time_average(&self, network: &Network, spec: &CostSpec) -> Estimate {
        let ones: Vec<f64> = self.batch_slot_counts().into_iter().map(|n| n as f64).collect();
        batch_ratio(&self.batch_sums(network, spec), &ones).expect("accumulated slots are positive")
    }

    /// Fraction of slots whose `(state, action)` pair satisfies `select`.
    pub fn pair_fraction(&self, select: impl Fn(usize) -> bool) -> Estimate {
        let hits: Vec<f64> = self
            .counts
            .iter()
            .map(|batch| {
                batch
                    .iter()
                    .filter(|(&(pair, _), _)| select(pair))
                    .map(|(_, &n)| n as f64)
                    .sum()
            })
            .collect();
        let ones: Vec<f64> = self.batch_slot_counts().into_iter().map(|n| n as f64).collect();
        batch_ratio(&hits, &ones).expect("accumulated slots are positive")
    }

    fn batch_slot_counts(&self) -> Vec<u64> {
        self.counts.iter().map(|b| b.values().sum()).collect()
    }

    /// `beta * sum(z_num) / sum(z_den) + lambda` with a batch-means error.
    pub fn metric(&self, network: &Network, metric: &Metric) -> Result<Estimate, SimError> {
        let num = self.batch_sums(network, &metric.numerator);
        let den = self.batch_sums(network, &metric.denominator);
        let value = metric.from_averages(num.iter().sum::<f64>(), den.iter().sum::<f64>())?;
        let ratio = batch_ratio(&num, &den).ok_or_else(|| {
            SimError::InsufficientData(format!("metric `{}` has a vanishing denominator", metric.name))
        })?;
        Ok(Estimate {
            value,
            se: metric.beta.abs() * ratio.se,
        })
    }

    /// Mean sojourn (arrival to removal, in slots) of tagged packets of
    /// `source`, or of all sources.
    pub fn sojourn(&self, source: Option<usize>) -> Result<Estimate, SimError> {
        let sources: Vec<usize> = match source {
            Some(s) => vec![s],
            None => (0..self.sources.len()).collect(),
        };
        let (num, den): (Vec<f64>, Vec<f64>) = (0..self.config.batches)
            .map(|b| {
                sources.iter().fold((0.0, 0.0), |(n, d), &s| {
                    let (sum, count) = self.sojourn[s][b];
                    (n + sum as f64, d + count as f64)
                })
            })
            .unzip();
        batch_ratio(&num, &den).ok_or_else(|| SimError::InsufficientData("no tagged packet left the queue".into()))
    }

    /// Per-source counter summary as CSV.
    pub fn write_summary(&self, path: &Path) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "source",
            "slots",
            "transmissions",
            "successes",
            "drops",
            "removals",
            "services_started",
            "arrivals_admitted",
            "queue_sum",
            "initial_queue",
            "final_queue",
        ])?;
        for (s, c) in self.sources.iter().enumerate() {
            w.write_record(
                [
                    (s + 1) as u64,
                    self.slots,
                    c.transmissions,
                    c.successes,
                    c.drops,
                    c.removals,
                    c.services_started,
                    c.arrivals_admitted,
                    c.queue_sum,
                    c.initial_queue,
                    c.final_queue,
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `cfg.n_slots` slots and calls `observe` on each one.
pub fn run(
    network: &Network,
    policy: &Policy,
    cfg: &SimConfig,
    mut observe: impl FnMut(&Slot, &[SourceState], &[SourceState]),
) -> Result<(), SimError> {
    cfg.validate()?;
    let mut sim = Simulator::new(network, policy, cfg.seed)?;
    for _ in 0..cfg.n_slots {
        let before = sim.state().to_vec();
        let slot = sim.step();
        observe(&slot, &before, sim.state());
    }
    Ok(())
}

pub fn simulate(network: &Network, policy: &Policy, cfg: &SimConfig) -> Result<MetricsAccumulator, SimError> {
    simulate_traced(network, policy, cfg, None)
}

/// [`simulate`], optionally writing `slot,state,action,outcome` rows to `trace`.
pub fn simulate_traced(
    network: &Network,
    policy: &Policy,
    cfg: &SimConfig,
    mut trace: Option<&mut dyn Write>,
) -> Result<MetricsAccumulator, SimError> {
    let config = network.config();
    let buffer = config.buffer();
    let mut acc = MetricsAccumulator::new(*cfg, network.source_count());
    let mut queues: Vec<VecDeque<u64>> = vec![VecDeque::new(); network.source_count()];
    let mut io_error = None;
    if let Some(out) = trace.as_mut() {
        writeln!(out, "slot,state,action,outcome")?;
    }
    run(network, policy, cfg, |slot, before, after| {
        if let Some(out) = trace.as_mut() {
            let action = slot.pair - network.pairs_of(slot.state).start;
            if let Err(e) = writeln!(out, "{},{},{},{}", slot.t, slot.state, action, slot.outcome.0) {
                io_error.get_or_insert(e);
            }
        }
        let batch = cfg.batch_of(slot.t);
        if let Some(b) = batch {
            acc.slots += 1;
            *acc.counts[b].entry((slot.pair, slot.outcome.0)).or_insert(0) += 1;
        }
        let u = network.pair_action(slot.pair);
        for (s, queue) in queues.iter_mut().enumerate() {
            let st = before[s];
            let a = u.per_source[s];
            let delivered = slot.outcome.succeeded(s);
            let removed = !st.is_empty() && (delivered || a.drop);
            let admitted = slot.arrivals & (1 << s) != 0 && admits_arrival(st, a, delivered, buffer);
            if removed {
                let arrived_at = queue.pop_front().expect("queue tracks the state");
                if arrived_at >= cfg.burn_in {
                    if let Some(b) = batch {
                        let tagged = &mut acc.sojourn[s][b];
                        tagged.0 += slot.t - arrived_at;
                        tagged.1 += 1;
                    }
                }
            }
            if admitted {
                queue.push_back(slot.t);
            }
            debug_assert_eq!(queue.len(), after[s].queue());
            if batch.is_none() {
                continue;
            }
            let c = &mut acc.sources[s];
            if slot.t == cfg.burn_in {
                c.initial_queue = st.queue() as u64;
            }
            c.final_queue = after[s].queue() as u64;
            c.transmissions += a.transmit as u64;
            c.successes += delivered as u64;
            c.drops += (a.drop && !delivered && !st.is_empty()) as u64;
            c.removals += removed as u64;
            c.services_started += (st.service() == 1) as u64;
            c.arrivals_admitted += admitted as u64;
            c.queue_sum += st.queue() as u64;
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    Ok(acc)
}

/// Occurrences of `phi` per renewal interval delimited by occurrences of `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalStats {
    pub psi_count: u64,
    pub phi_count: u64,
    /// `(length, occurrences of phi)` for every complete interval, in order.
    pub intervals: Vec<(u64, u64)>,
    /// Per batch of slots: (occurrences of phi, occurrences of psi, slots).
    batches: Vec<(u64, u64, u64)>,
}

impl RenewalStats {
    fn interval_batches(&self, k: usize) -> Vec<&[(u64, u64)]> {
        let len = self.intervals.len() / k;
        (0..k)
            .map(|b| {
                let end = if b + 1 == k { self.intervals.len() } else { (b + 1) * len };
                &self.intervals[b * len..end]
            })
            .collect()
    }

    fn interval_ratio(&self, value: impl Fn(&(u64, u64)) -> u64) -> Estimate {
        let groups = self.interval_batches(self.batches.len());
        let num: Vec<f64> = groups.iter().map(|g| g.iter().map(&value).sum::<u64>() as f64).collect();
        let den: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
        batch_ratio(&num, &den).expect("intervals checked nonempty")
    }

    /// Mean occurrences of `phi` per complete interval.
    pub fn mean_occurrences(&self) -> Estimate {
        self.interval_ratio(|&(_, v)| v)
    }

    /// Mean length of a complete interval.
    pub fn mean_interval(&self) -> Estimate {
        self.interval_ratio(|&(len, _)| len)
    }

    /// `pi(phi) / pi(psi)` from slot frequencies.
    pub fn frequency_ratio(&self) -> Estimate {
        let num: Vec<f64> = self.batches.iter().map(|b| b.0 as f64).collect();
        let den: Vec<f64> = self.batches.iter().map(|b| b.1 as f64).collect();
        batch_ratio(&num, &den).expect("psi observed")
    }

    /// `1 / pi(psi)`, with a delta-method standard error.
    pub fn inverse_frequency(&self) -> Estimate {
        let num: Vec<f64> = self.batches.iter().map(|b| b.1 as f64).collect();
        let den: Vec<f64> = self.batches.iter().map(|b| b.2 as f64).collect();
        let p = batch_ratio(&num, &den).expect("slots accumulated");
        Estimate {
            value: 1.0 / p.value,
            se: p.se / (p.value * p.value),
        }
    }
}

/// Simulates and splits the accumulated path at occurrences of `psi`.
/// The leading partial interval and the trailing incomplete one are dropped.
pub fn renewal_counts(
    network: &Network,
    policy: &Policy,
    phi: &Event,
    psi: &Event,
    cfg: &SimConfig,
) -> Result<RenewalStats, SimError> {
    phi.validate(network)?;
    psi.validate(network)?;
    let mut stats = RenewalStats {
        psi_count: 0,
        phi_count: 0,
        intervals: Vec::new(),
        batches: vec![(0, 0, 0); cfg.batches],
    };
    let mut open: Option<(u64, u64)> = None;
    run(network, policy, cfg, |slot, _, _| {
        let Some(b) = cfg.batch_of(slot.t) else {
            return;
        };
        let x = network.state(slot.state);
        let u = network.pair_action(slot.pair);
        let is_phi = phi.occurs(x, u, slot.outcome);
        let is_psi = psi.occurs(x, u, slot.outcome);
        if is_psi {
            if let Some((start, v)) = open {
                stats.intervals.push((slot.t - start, v));
            }
            open = Some((slot.t, 0));
        }
        if is_phi {
            if let Some((_, v)) = open.as_mut() {
                *v += 1;
            }
        }
        stats.psi_count += is_psi as u64;
        stats.phi_count += is_phi as u64;
        let batch = &mut stats.batches[b];
        batch.0 += is_phi as u64;
        batch.1 += is_psi as u64;
        batch.2 += 1;
    })?;
    if stats.intervals.len() < 2 * cfg.batches {
        return Err(SimError::InsufficientData(format!(
            "{} complete renewal intervals, need at least {}",
            stats.intervals.len(),
            2 * cfg.batches
        )));
    }
    Ok(stats)
}

/// `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
