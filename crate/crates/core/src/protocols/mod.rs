//! Two-party protocol state machines over a [`Ledger`].
//!
//! Each protocol is driven round by round: after every call to
//! [`Ledger::advance_round`] party A acts, then party B. Off-chain messages
//! are plain fields on the session, so a message from A is visible to B in
//! the same round and a message from B reaches A one round later.
//!
//! Parties never predict the txid of an unconfirmed transaction except
//! through [`Ctx::predict_txid`], which counts every such call. The legacy
//! flows need it; the malleability-resistant flows must not.

pub mod cs;
pub mod deposit;
pub mod newscs;
pub mod scs_legacy;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::adversary::{AbortPoint, NetworkAdversary, NetworkStrategy, Party, PartyStrategy, ProtocolKind};
use crate::chain::{Allocation, ChainError, ChainParams, Ledger, TxStatus};
use crate::crypto::{hash, keygen, sign, Digest, KeyPair, PublicKey, Signature};
use crate::txmodel::{Outpoint, Script, Transaction, TxOut, ValidationError, WitnessItem};

pub use cs::{CsPhase, CsSession};
pub use deposit::{legacy_fuse_flow, DepositRefundSession, DrPhase, LegacyFuseOutcome, LegacyFuseReport};
pub use newscs::{NewScsPhase, NewScsSession};
pub use scs_legacy::{LegacyPhase, ScsLegacySession};

/// Byte length of every generated secret.
pub const SECRET_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("party strategy for {expected} given as {got}")]
    WrongParty { expected: Party, got: Party },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no confirmed transaction with that body digest")]
    NotConfirmed,
    #[error("witness slot does not hold a secret")]
    NotASecret,
}

/// Reads a secret from input 0 of the confirmed transaction with `body`.
/// Padding is skipped, so this works on malleated confirmations too.
pub fn extract_secret(ledger: &Ledger, body: &Digest, slot: usize) -> Result<Vec<u8>, ExtractError> {
    let confirmed = ledger.confirmed_by_body(body).ok_or(ExtractError::NotConfirmed)?;
    let witness = confirmed.tx.inputs.first().map(|i| i.witness.as_slice()).unwrap_or(&[]);
    match witness.iter().filter(|w| !w.is_pad()).nth(slot) {
        Some(WitnessItem::Secret(x)) => Ok(x.clone()),
        _ => Err(ExtractError::NotASecret),
    }
}

/// Everything a protocol run needs besides the protocol itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ChainParams,
    pub network: NetworkStrategy,
    pub seed: u64,
    pub a: PartyStrategy,
    pub b: PartyStrategy,
    pub max_rounds: u64,
}

impl RunConfig {
    pub fn new(params: ChainParams, network: NetworkStrategy, seed: u64) -> RunConfig {
        let max_rounds = params.t + 3 * params.max_bb + 2;
        RunConfig {
            params,
            network,
            seed,
            a: PartyStrategy::honest(Party::A),
            b: PartyStrategy::honest(Party::B),
            max_rounds,
        }
    }

    pub fn with_parties(mut self, a: PartyStrategy, b: PartyStrategy) -> RunConfig {
        self.a = a;
        self.b = b;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Balance {
    pub initial: u64,
    pub last: u64,
}

impl Balance {
    pub fn delta(&self) -> i128 {
        i128::from(self.last) - i128::from(self.initial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfirmedTx {
    pub role: String,
    pub txid: Digest,
    pub round: u64,
}

/// Result of one protocol run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub protocol: ProtocolKind,
    pub phase: &'static str,
    pub keys: [PublicKey; 2],
    pub balances: [Balance; 2],
    pub confirmed: Vec<ConfirmedTx>,
    /// Txids computed for transactions that were not yet confirmed.
    pub predicted_txids: usize,
    /// Hash commitments made during the run, by secret name.
    pub commitments: BTreeMap<String, Digest>,
    /// Secrets the counterparty read off confirmed witnesses, by name.
    pub revealed: BTreeMap<String, Vec<u8>>,
    pub ledger: Ledger,
}

impl Outcome {
    pub fn balance(&self, party: Party) -> Balance {
        self.balances[index(party)]
    }

    pub fn delta(&self, party: Party) -> i128 {
        self.balance(party).delta()
    }

    /// Rejections of broadcasts made by `party`, in trace order.
    pub fn rejections(&self, party: Party) -> Vec<ValidationError> {
        let prefix = format!("{party}/");
        self.ledger
            .events()
            .iter()
            .filter(|e| e.role.starts_with(&prefix))
            .filter_map(|e| match e.kind {
                crate::chain::TraceKind::Reject(err) => Some(err),
                _ => None,
            })
            .collect()
    }
}

pub(crate) fn index(party: Party) -> usize {
    match party {
        Party::A => 0,
        Party::B => 1,
    }
}

/// Shared state of a running protocol: the ledger plus each party's keys
/// and strategy.
#[derive(Debug)]
pub struct Ctx {
    pub ledger: Ledger,
    pub protocol: ProtocolKind,
    keys: [KeyPair; 2],
    strategies: [PartyStrategy; 2],
    initial: [u64; 2],
    predicted_txids: usize,
    rng: ChaCha20Rng,
}

impl Ctx {
    /// Builds genesis from `(owner, label)` pairs, each funded with `d`.
    /// Returns the funding outpoints in the same order.
    pub fn setup(
        protocol: ProtocolKind,
        config: &RunConfig,
        funding: &[(Party, &str)],
    ) -> Result<(Ctx, Vec<Outpoint>), ProtocolError> {
        for (expected, got) in [(Party::A, config.a.party), (Party::B, config.b.party)] {
            if expected != got {
                return Err(ProtocolError::WrongParty { expected, got });
            }
        }
        let keys = [keygen(config.seed, "A"), keygen(config.seed, "B")];
        let d = config.params.d;
        let allocations: Vec<Allocation> = funding
            .iter()
            .map(|&(p, label)| Allocation { owner: keys[index(p)].public, value: d, label: format!("{p}/{label}") })
            .collect();
        let mut initial = [0u64; 2];
        for &(p, _) in funding {
            initial[index(p)] += d;
        }
        let network = NetworkAdversary::new(config.network.clone(), config.seed);
        let (ledger, outpoints) = Ledger::genesis(config.params, network, &allocations)?;
        let ctx = Ctx {
            ledger,
            protocol,
            keys,
            strategies: [config.a.clone(), config.b.clone()],
            initial,
            predicted_txids: 0,
            rng: ChaCha20Rng::seed_from_u64(config.seed),
        };
        Ok((ctx, outpoints))
    }

    pub fn key(&self, party: Party) -> &KeyPair {
        &self.keys[index(party)]
    }

    pub fn public(&self, party: Party) -> PublicKey {
        self.keys[index(party)].public
    }

    pub fn strategy(&self, party: Party) -> &PartyStrategy {
        &self.strategies[index(party)]
    }

    pub fn skips(&self, party: Party, point: AbortPoint) -> bool {
        self.strategy(party).skips(self.protocol, point)
    }

    pub fn params(&self) -> ChainParams {
        *self.ledger.params()
    }

    pub fn round(&self) -> u64 {
        self.ledger.round()
    }

    pub fn fresh_secret(&mut self) -> Vec<u8> {
        let mut s = vec![0u8; SECRET_LEN];
        self.rng.fill_bytes(&mut s);
        s
    }

    /// Honest on-chain signature by `party`.
    pub fn sign(&self, party: Party, digest: &Digest) -> Signature {
        sign(&self.key(party).private, digest)
    }

    /// Signature sent off-chain; garbage if the party's strategy says so.
    pub fn sign_message(&self, party: Party, digest: &Digest) -> Signature {
        if self.strategy(party).send_bad_signature {
            Signature::garbage(self.key(party).id)
        } else {
            self.sign(party, digest)
        }
    }

    /// The only sanctioned way to learn the txid of an unconfirmed transaction.
    pub fn predict_txid(&mut self, tx: &Transaction) -> Digest {
        self.predicted_txids += 1;
        tx.txid()
    }

    pub fn predicted_txids(&self) -> usize {
        self.predicted_txids
    }

    pub fn broadcast(&mut self, party: Party, tx: Transaction, what: &str) -> Result<(), ProtocolError> {
        self.ledger.broadcast(tx, &format!("{party}/{what}"))?;
        Ok(())
    }

    /// Broadcasts unless the same body is pending, confirmed, or was rejected
    /// for a reason other than an early lock time. Returns whether it sent.
    pub fn submit(&mut self, party: Party, tx: Transaction, what: &str) -> Result<bool, ProtocolError> {
        match self.ledger.status(&tx.body_digest()) {
            None | Some(TxStatus::Rejected { error: ValidationError::LockTimeNotReached, .. }) => {
                self.broadcast(party, tx, what)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn is_confirmed(&self, body: &Digest) -> bool {
        self.ledger.confirmed_by_body(body).is_some()
    }

    /// Self-payment of a pay-to-key coin owned by `party`.
    pub fn redeem_tx(&self, party: Party, coin: Outpoint) -> Transaction {
        let tx = Transaction::unsigned(&[coin], vec![pay_to(self.public(party), self.params().d)], 0);
        let sig = self.sign(party, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig)])
    }

    pub fn finish(
        self,
        phase: &'static str,
        commitments: BTreeMap<String, Digest>,
        revealed: BTreeMap<String, Vec<u8>>,
    ) -> Outcome {
        let ledger = self.ledger;
        let keys = [self.keys[0].public, self.keys[1].public];
        let balances = [0, 1].map(|i| Balance { initial: self.initial[i], last: ledger.balance(&keys[i]) });
        let confirmed = ledger
            .confirmed()
            .iter()
            .map(|c| ConfirmedTx { role: c.role.clone(), txid: c.txid, round: c.round })
            .collect();
        Outcome {
            protocol: self.protocol,
            phase,
            keys,
            balances,
            confirmed,
            predicted_txids: self.predicted_txids,
            commitments,
            revealed,
            ledger,
        }
    }
}

pub(crate) fn pay_to(key: PublicKey, value: u64) -> TxOut {
    TxOut { value, script: Script::p2pk(key) }
}

pub(crate) fn commitment(secret: &[u8]) -> Digest {
    hash(secret)
}

/// A per-round party callback plus a phase label for reports.
pub(crate) trait Machine {
    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError>;
    fn phase(&self, ctx: &Ctx) -> &'static str;
}

/// Runs `machine` until `max_rounds`, or earlier once round `t` has passed
/// and nothing is in flight: every party rule is triggered either by a
/// round threshold no later than `t` or by a confirmation.
pub(crate) fn drive(machine: &mut impl Machine, ctx: &mut Ctx, max_rounds: u64) -> Result<(), ProtocolError> {
    let t = ctx.params().t;
    loop {
        for party in Party::BOTH {
            machine.act(ctx, party)?;
        }
        let round = ctx.round();
        if round >= max_rounds || (round >= t && ctx.ledger.mempool().is_empty()) {
            return Ok(());
        }
        ctx.ledger.advance_round();
    }
}

/// Dispatches to the protocol's run function.
pub fn run(protocol: ProtocolKind, config: &RunConfig) -> Result<Outcome, ProtocolError> {
    match protocol {
        ProtocolKind::Cs => cs::run(config),
        ProtocolKind::DepositRefund => deposit::run(config, None),
        ProtocolKind::ScsLegacy => scs_legacy::run(config),
        ProtocolKind::NewScs => newscs::run(config),
    }
}
