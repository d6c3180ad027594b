//! Fixed workloads shared by the benchmarks and their smoke tests.

use fusesim_core::adversary::DelayRule;
use fusesim_core::{run_scenario, ChainParams, NetworkStrategy, ProtocolKind, Scenario, Transaction};

pub const SEED: u64 = 0x5eed;

pub fn params(max_bb: u64) -> ChainParams {
    ChainParams::new(max_bb, Scenario::DEFAULT_D, Scenario::DEFAULT_T).expect("default params are valid")
}

/// All-honest run under a network that malleates everything and waits the
/// full `max_bb`.
pub fn scenario(protocol: ProtocolKind, max_bb: u64) -> Scenario {
    let network = NetworkStrategy::malleate_all(max_bb).with_delay(DelayRule::Max).expect("max delay is in range");
    Scenario::new(protocol, params(max_bb), network, SEED)
}

/// Every transaction confirmed in honest runs of all four protocols.
pub fn sample_transactions() -> Vec<Transaction> {
    ProtocolKind::ALL
        .iter()
        .flat_map(|&p| {
            let report = run_scenario(&scenario(p, 2)).expect("honest scenario runs");
            report.outcome.ledger.confirmed().iter().map(|c| c.tx.clone()).collect::<Vec<_>>()
        })
        .filter(|tx| !tx.inputs.is_empty())
        .collect()
}
