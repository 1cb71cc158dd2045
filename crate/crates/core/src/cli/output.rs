//! CSV writers for policies and occupancy measures.

use std::path::Path;

use crate::lfp::{OccupancyMeasure, Policy};
use crate::model::Network;

fn number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn state_columns(network: &Network) -> Vec<String> {
    (1..=network.source_count())
        .flat_map(|s| [format!("q{s}"), format!("f{s}")])
        .collect()
}

fn state_cells(network: &Network, x: usize) -> Vec<String> {
    network
        .state(x)
        .per_source
        .iter()
        .flat_map(|st| [st.queue().to_string(), st.service().to_string()])
        .collect()
}

/// One row per state: queue length `q` and service counter `f` of every
/// source (both 0 when empty), the stationary state probability, the marginal
/// transmit probability of each source and the probability that all sources
/// transmit together.
pub fn dump_policy_map(policy: &Policy, network: &Network, omega: Option<&OccupancyMeasure>, path: &Path) -> Result<(), csv::Error> {
    let sources = network.source_count();
    let marginal = omega.map(|o| o.state_marginal(network));
    let transient = policy.transient_states();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["state".to_string()];
    header.extend(state_columns(network));
    if marginal.is_some() {
        header.push("occupancy".into());
    }
    header.extend((1..=sources).map(|s| format!("p_tx_{s}")));
    header.extend(["p_all".to_string(), "transient".to_string()]);
    w.write_record(&header)?;
    for x in 0..network.state_count() {
        let mut r = vec![x.to_string()];
        r.extend(state_cells(network, x));
        if let Some(m) = &marginal {
            r.push(number(m[x]));
        }
        r.extend((0..sources).map(|s| number(policy.transmit_prob(network, x, s))));
        r.push(number(policy.all_transmit_prob(network, x)));
        r.push(transient.contains(&x).to_string());
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per `(state, action)` pair with `omega` and the policy's `mu`.
pub fn dump_occupancy(policy: &Policy, network: &Network, omega: &OccupancyMeasure, path: &Path) -> Result<(), csv::Error> {
    let sources = network.source_count();
    let mu = policy.pair_probs(network);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["pair".to_string(), "state".to_string()];
    header.extend(state_columns(network));
    header.push("action".into());
    header.extend((1..=sources).flat_map(|s| [format!("transmit_{s}"), format!("drop_{s}")]));
    header.extend(["omega".to_string(), "mu".to_string()]);
    w.write_record(&header)?;
    for p in 0..network.pair_count() {
        let x = network.pair_state(p);
        let u = network.pair_action(p);
        let mut r = vec![p.to_string(), x.to_string()];
        r.extend(state_cells(network, x));
        r.push(u.index.to_string());
        r.extend(
            u.per_source
                .iter()
                .flat_map(|a| [(a.transmit as u8).to_string(), (a.drop as u8).to_string()]),
        );
        r.push(number(omega.omega[p]));
        r.push(number(mu[p]));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}
