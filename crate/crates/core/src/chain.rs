//! Round-based ledger with an adversarially scheduled mempool.
//!
//! Every broadcast is handed to the [`NetworkAdversary`], which picks the
//! inclusion round within `(now, now + max_bb]` and may substitute a
//! malleated copy. At each round boundary the due entries are validated in
//! the adversary's conflict order; accepted ones update the UTXO set at once,
//! so a later conflicting entry of the same round fails `AlreadySpent`.
//! Rejected entries are dropped. Re-broadcasting is the caller's business.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::adversary::{ConflictOrder, NetworkAdversary};
use crate::crypto::{hash_parts, Digest, PublicKey};
use crate::txmodel::{
    body_digest, txid, validate, CoinState, Outpoint, Script, Transaction, TxOut, UtxoView, ValidationError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainParams {
    /// Maximal rounds between broadcast and inclusion.
    pub max_bb: u64,
    /// Deposit size in coin units.
    pub d: u64,
    /// Commitment deadline round.
    pub t: u64,
}

impl ChainParams {
    pub fn new(max_bb: u64, d: u64, t: u64) -> Result<ChainParams, ChainError> {
        if max_bb == 0 {
            return Err(ChainError::InvalidParams("max_bb must be positive".into()));
        }
        if d == 0 {
            return Err(ChainError::InvalidParams("d must be positive".into()));
        }
        if t <= 3 * max_bb {
            return Err(ChainError::InvalidParams(format!("t = {t} must exceed 3 * max_bb = {}", 3 * max_bb)));
        }
        Ok(ChainParams { max_bb, d, t })
    }

    /// `t - 3 * max_bb`: last round at which the joint Commit may still be
    /// waited for.
    pub fn commit_deadline(&self) -> u64 {
        self.t - 3 * self.max_bb
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("genesis needs at least one allocation")]
    EmptyAllocation,
    #[error("allocation {0} has zero value")]
    ZeroValue(usize),
    #[error("invalid chain parameters: {0}")]
    InvalidParams(String),
    #[error("network strategy max_bb {strategy} differs from chain max_bb {chain}")]
    MaxBbMismatch { strategy: u64, chain: u64 },
    #[error("adversary substitution changed the body digest")]
    IllegalSubstitution,
    #[error("adversary delay {0} outside [1, max_bb]")]
    DelayOutOfBounds(u64),
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub owner: PublicKey,
    pub value: u64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub u64);

#[derive(Debug, Clone)]
pub struct MempoolEntry {
    pub id: EntryId,
    pub tx: Transaction,
    pub role: String,
    pub broadcast_round: u64,
    pub scheduled_round: u64,
    pub substituted: Option<Transaction>,
}

impl MempoolEntry {
    /// What the ledger will actually try to include.
    pub fn effective(&self) -> &Transaction {
        self.substituted.as_ref().unwrap_or(&self.tx)
    }
}

#[derive(Debug, Clone)]
pub struct Confirmed {
    pub round: u64,
    pub tx: Transaction,
    pub txid: Digest,
    pub body: Digest,
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Pending,
    Confirmed { round: u64 },
    Rejected { round: u64, error: ValidationError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceKind {
    Genesis,
    Broadcast { delay: u64, malleated: bool },
    Confirm,
    Reject(ValidationError),
}

#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub round: u64,
    pub kind: TraceKind,
    pub role: String,
    pub tx: Transaction,
    pub txid: Digest,
    pub body: Digest,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    params: ChainParams,
    network: NetworkAdversary,
    round: u64,
    confirmed: Vec<Confirmed>,
    by_txid: BTreeMap<Digest, usize>,
    by_body: BTreeMap<Digest, usize>,
    utxo: BTreeMap<Outpoint, TxOut>,
    spent: BTreeMap<Outpoint, usize>,
    mempool: Vec<MempoolEntry>,
    next_entry: u64,
    status: BTreeMap<Digest, TxStatus>,
    genesis_total: u64,
    events: Vec<TraceEvent>,
}

impl Ledger {
    /// One confirmed pay-to-key funding transaction per allocation, at round 0.
    /// Returns the funding outpoints in allocation order.
    pub fn genesis(
        params: ChainParams,
        network: NetworkAdversary,
        allocations: &[Allocation],
    ) -> Result<(Ledger, Vec<Outpoint>), ChainError> {
        if allocations.is_empty() {
            return Err(ChainError::EmptyAllocation);
        }
        if let Some(i) = allocations.iter().position(|a| a.value == 0) {
            return Err(ChainError::ZeroValue(i));
        }
        if network.strategy().max_bb() != params.max_bb {
            return Err(ChainError::MaxBbMismatch { strategy: network.strategy().max_bb(), chain: params.max_bb });
        }
        let mut ledger = Ledger {
            params,
            network,
            round: 0,
            confirmed: Vec::new(),
            by_txid: BTreeMap::new(),
            by_body: BTreeMap::new(),
            utxo: BTreeMap::new(),
            spent: BTreeMap::new(),
            mempool: Vec::new(),
            next_entry: 0,
            status: BTreeMap::new(),
            genesis_total: 0,
            events: Vec::new(),
        };
        let mut outpoints = Vec::with_capacity(allocations.len());
        for (i, a) in allocations.iter().enumerate() {
            let source = Outpoint::new(hash_parts(&[b"fusesim/genesis", &(i as u64).to_le_bytes()]), 0);
            let tx = Transaction::unsigned(&[source], vec![TxOut { value: a.value, script: Script::p2pk(a.owner) }], 0);
            let id = txid(&tx);
            ledger.genesis_total += a.value;
            ledger.record(tx, a.label.clone(), TraceKind::Genesis);
            outpoints.push(Outpoint::new(id, 0));
        }
        Ok((ledger, outpoints))
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn network(&self) -> &NetworkAdversary {
        &self.network
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn confirmed(&self) -> &[Confirmed] {
        &self.confirmed
    }

    pub fn mempool(&self) -> &[MempoolEntry] {
        &self.mempool
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn genesis_total(&self) -> u64 {
        self.genesis_total
    }

    /// Queues `tx`; the adversary picks its inclusion round and form.
    pub fn broadcast(&mut self, tx: Transaction, role: &str) -> Result<EntryId, ChainError> {
        let (effective, delay) = self.network.on_broadcast(&tx);
        let body = body_digest(&tx);
        if body_digest(&effective) != body {
            return Err(ChainError::IllegalSubstitution);
        }
        if !(1..=self.params.max_bb).contains(&delay) {
            return Err(ChainError::DelayOutOfBounds(delay));
        }
        let id = EntryId(self.next_entry);
        self.next_entry += 1;
        let malleated = effective != tx;
        self.events.push(TraceEvent {
            round: self.round,
            kind: TraceKind::Broadcast { delay, malleated },
            role: role.to_string(),
            txid: txid(&tx),
            body,
            tx: tx.clone(),
        });
        self.status.insert(body, TxStatus::Pending);
        self.mempool.push(MempoolEntry {
            id,
            tx,
            role: role.to_string(),
            broadcast_round: self.round,
            scheduled_round: self.round + delay,
            substituted: malleated.then_some(effective),
        });
        Ok(id)
    }

    /// Moves to the next round and processes every entry due in it.
    pub fn advance_round(&mut self) -> Vec<(Transaction, Result<(), ValidationError>)> {
        self.round += 1;
        let round = self.round;
        let (mut due, rest): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.mempool).into_iter().partition(|e| e.scheduled_round == round);
        self.mempool = rest;
        if self.network.strategy().order() == ConflictOrder::Lifo {
            due.reverse();
        }
        let mut verdicts = Vec::with_capacity(due.len());
        for entry in due {
            let role = entry.role.clone();
            let tx = match entry.substituted {
                Some(s) => s,
                None => entry.tx,
            };
            let verdict = validate(&tx, self, round);
            match verdict {
                Ok(()) => self.record(tx.clone(), role, TraceKind::Confirm),
                Err(error) => {
                    let body = body_digest(&tx);
                    self.status.insert(body, TxStatus::Rejected { round, error });
                    self.events.push(TraceEvent {
                        round,
                        kind: TraceKind::Reject(error),
                        role,
                        txid: txid(&tx),
                        body,
                        tx: tx.clone(),
                    });
                }
            }
            verdicts.push((tx, verdict));
        }
        verdicts
    }

    fn record(&mut self, tx: Transaction, role: String, kind: TraceKind) {
        let id = txid(&tx);
        let body = body_digest(&tx);
        let index = self.confirmed.len();
        if kind != TraceKind::Genesis {
            for input in &tx.inputs {
                self.utxo.remove(&input.prevout);
                self.spent.insert(input.prevout, index);
            }
        }
        for (i, out) in tx.outputs.iter().enumerate() {
            self.utxo.insert(Outpoint::new(id, i as u32), out.clone());
        }
        self.by_txid.insert(id, index);
        self.by_body.insert(body, index);
        self.status.insert(body, TxStatus::Confirmed { round: self.round });
        self.events.push(TraceEvent { round: self.round, kind, role: role.clone(), tx: tx.clone(), txid: id, body });
        self.confirmed.push(Confirmed { round: self.round, tx, txid: id, body, role });
    }

    /// The confirmed transaction with this body digest, whatever its txid.
    pub fn confirmed_by_body(&self, body: &Digest) -> Option<&Confirmed> {
        self.by_body.get(body).map(|&i| &self.confirmed[i])
    }

    pub fn confirmed_by_txid(&self, id: &Digest) -> Option<&Confirmed> {
        self.by_txid.get(id).map(|&i| &self.confirmed[i])
    }

    /// The confirmed transaction that consumed `outpoint`.
    pub fn spender_of(&self, outpoint: &Outpoint) -> Option<&Confirmed> {
        self.spent.get(outpoint).map(|&i| &self.confirmed[i])
    }

    /// Latest known fate of a broadcast, keyed by body digest.
    pub fn status(&self, body: &Digest) -> Option<TxStatus> {
        self.status.get(body).copied()
    }

    pub fn is_unspent(&self, outpoint: &Outpoint) -> bool {
        self.utxo.contains_key(outpoint)
    }

    pub fn output(&self, outpoint: &Outpoint) -> Option<&TxOut> {
        self.utxo.get(outpoint)
    }

    pub fn unspent(&self) -> impl Iterator<Item = (&Outpoint, &TxOut)> {
        self.utxo.iter()
    }

    /// Sum of unspent pay-to-key outputs of `key`. Composite protocol outputs
    /// belong to nobody.
    pub fn balance(&self, key: &PublicKey) -> u64 {
        self.utxo.values().filter(|o| o.script.owner() == Some(key)).map(|o| o.value).sum()
    }

    pub fn total_unspent(&self) -> u64 {
        self.utxo.values().map(|o| o.value).sum()
    }

    /// Genesis total equals the unspent total, and no outpoint was spent twice.
    pub fn conserves_value(&self) -> bool {
        let mut inputs = BTreeSet::new();
        let no_double_spend =
            self.confirmed.iter().flat_map(|c| c.tx.inputs.iter().map(|i| i.prevout)).all(|op| inputs.insert(op));
        no_double_spend && self.total_unspent() == self.genesis_total
    }
}

impl UtxoView for Ledger {
    fn coin(&self, outpoint: &Outpoint) -> CoinState<'_> {
        match self.utxo.get(outpoint) {
            Some(out) => CoinState::Unspent(out),
            None if self.spent.contains_key(outpoint) => CoinState::Spent,
            None => CoinState::Unknown,
        }
    }
}
