//! Deterministic simulation of timed-commitment protocols on a toy UTXO
//! ledger whose network can malleate transaction ids.
//!
//! The crate is layered bottom-up: [`crypto`] (hashing and idealized
//! signatures), [`txmodel`] (transactions, scripts, validation), [`chain`]
//! (the round-based ledger), [`adversary`] (network and party strategies),
//! [`protocols`] (the four protocol state machines), and [`harness`]
//! (scenarios, traces, verdicts, the fairness matrix).

pub mod adversary;
pub mod chain;
pub mod crypto;
pub mod harness;
pub mod protocols;
pub mod txmodel;

pub use adversary::{
    enumerate_strategies, AbortPoint, ConflictOrder, DelayRule, Malleation, NetworkStrategy, Party, PartyStrategy,
    ProtocolKind,
};
pub use chain::{ChainParams, Ledger};
pub use crypto::{hash, Digest, PublicKey};
pub use harness::{
    classify, parse_scenario, run_matrix, run_scenario, Classification, HarnessError, MatrixSummary, Report, Scenario,
    Trace, TraceFormat, Verdict,
};
pub use protocols::{Outcome, RunConfig};
pub use txmodel::{body_digest, malleate, txid, Outpoint, Transaction};
