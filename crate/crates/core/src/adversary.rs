//! Network and party misbehavior as plain, enumerable values.
//!
//! The network adversary decides, per broadcast, whether the transaction is
//! replaced by a malleated copy and how many rounds it waits before the
//! ledger sees it. It cannot delay past `max_bb`, drop transactions, or forge
//! signatures. Party strategies name the single protocol step a party skips.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{hash_parts, Digest};
use crate::txmodel::{body_digest, malleate, Transaction};

/// Largest `max_bb` for which exhaustive enumeration is offered.
pub const EXHAUSTIVE_MAX_BB: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("max_bb must be at least 1")]
    ZeroMaxBb,
    #[error("delay {delay} outside [1, {max_bb}]")]
    DelayOutOfRange { delay: u64, max_bb: u64 },
    #[error("delay table is empty")]
    EmptyDelayTable,
    #[error("exhaustive enumeration needs max_bb <= {EXHAUSTIVE_MAX_BB}, got {0}")]
    ExhaustiveBoundExceeded(u64),
    #[error("party strategy combines {0} deviations; only one is allowed outside fuzz mode")]
    CompoundDeviation(usize),
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub const BOTH: [Party; 2] = [Party::A, Party::B];

    pub fn other(self) -> Party {
        match self {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Party::A => "A",
            Party::B => "B",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Cs,
    DepositRefund,
    ScsLegacy,
    NewScs,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] =
        [ProtocolKind::Cs, ProtocolKind::DepositRefund, ProtocolKind::ScsLegacy, ProtocolKind::NewScs];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Cs => "cs",
            ProtocolKind::DepositRefund => "deposit_refund",
            ProtocolKind::ScsLegacy => "scs_legacy",
            ProtocolKind::NewScs => "newscs",
        }
    }

    /// Steps a party may skip, in declaration order.
    pub fn abort_points(self, party: Party) -> &'static [AbortPoint] {
        use AbortPoint::*;
        match (self, party) {
            (ProtocolKind::Cs, Party::A) => &[Open],
            (ProtocolKind::Cs, Party::B) => &[Fuse],
            (ProtocolKind::DepositRefund, Party::A) => &[Deposit],
            (ProtocolKind::DepositRefund, Party::B) => &[CsFuseSignature, CsOpen],
            (ProtocolKind::ScsLegacy, Party::A) => &[CommitSignature, FuseSignatures, Open],
            (ProtocolKind::ScsLegacy, Party::B) => &[FuseSignatures, CommitBroadcast, Open],
            (ProtocolKind::NewScs, Party::A) => &[CsCommit, CsFuseSignature, CommitSignature, Open, CsOpen],
            (ProtocolKind::NewScs, Party::B) => &[CsCommit, CsFuseSignature, CommitBroadcast, Open, CsOpen],
        }
    }

    /// The step at which `party` reveals the secret the protocol is about.
    pub fn reveal_point(self, party: Party) -> Option<AbortPoint> {
        match (self, party) {
            (ProtocolKind::Cs, Party::A) => Some(AbortPoint::Open),
            (ProtocolKind::DepositRefund, Party::B) => Some(AbortPoint::CsOpen),
            (ProtocolKind::ScsLegacy | ProtocolKind::NewScs, _) => Some(AbortPoint::Open),
            _ => None,
        }
    }

    /// Steps that happen only once the protocol's main commitment is on chain.
    pub fn is_post_commit(self, point: AbortPoint) -> bool {
        match self {
            ProtocolKind::Cs => matches!(point, AbortPoint::Open | AbortPoint::Fuse),
            ProtocolKind::DepositRefund => matches!(point, AbortPoint::CsOpen),
            ProtocolKind::ScsLegacy | ProtocolKind::NewScs => matches!(point, AbortPoint::Open | AbortPoint::CsOpen),
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| AdversaryError::Unknown { what: "protocol", value: s.to_string() })
    }
}

/// A named protocol step a party can refuse to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbortPoint {
    /// Broadcasting the commit transaction of one's own inner timed commitment.
    CsCommit,
    /// Sending the signature on the inner commitment's Fuse to the recipient.
    CsFuseSignature,
    /// Sending one's signature on the joint Commit to the counterparty.
    CommitSignature,
    /// Signing and broadcasting the joint Commit.
    CommitBroadcast,
    /// Exchanging signatures on pre-signed Fuse transactions.
    FuseSignatures,
    /// Broadcasting the Deposit transaction.
    Deposit,
    /// Broadcasting the Open transaction that reveals the main secret.
    Open,
    /// Opening one's inner timed commitment.
    CsOpen,
    /// Broadcasting a Fuse transaction to claim a penalty.
    Fuse,
}

impl AbortPoint {
    pub const ALL: [AbortPoint; 9] = [
        AbortPoint::CsCommit,
        AbortPoint::CsFuseSignature,
        AbortPoint::CommitSignature,
        AbortPoint::CommitBroadcast,
        AbortPoint::FuseSignatures,
        AbortPoint::Deposit,
        AbortPoint::Open,
        AbortPoint::CsOpen,
        AbortPoint::Fuse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AbortPoint::CsCommit => "cs_commit",
            AbortPoint::CsFuseSignature => "cs_fuse_signature",
            AbortPoint::CommitSignature => "commit_signature",
            AbortPoint::CommitBroadcast => "commit_broadcast",
            AbortPoint::FuseSignatures => "fuse_signatures",
            AbortPoint::Deposit => "deposit",
            AbortPoint::Open => "open",
            AbortPoint::CsOpen => "cs_open",
            AbortPoint::Fuse => "fuse",
        }
    }
}

impl fmt::Display for AbortPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AbortPoint {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AbortPoint::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| AdversaryError::Unknown { what: "abort point", value: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Malleation {
    Off,
    All,
    /// Only transactions whose body digest is listed.
    Bodies(BTreeSet<Digest>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayRule {
    /// Every transaction lands in the next round.
    Honest,
    /// Every transaction waits exactly `max_bb` rounds.
    Max,
    Constant(u64),
    /// Delay of the n-th broadcast is `table[n % len]`.
    Table(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictOrder {
    /// Same-round entries are processed in broadcast order.
    Fifo,
    /// Same-round entries are processed latest broadcast first.
    Lifo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkStrategy {
    malleation: Malleation,
    delay: DelayRule,
    order: ConflictOrder,
    max_bb: u64,
}

impl NetworkStrategy {
    pub fn new(
        malleation: Malleation,
        delay: DelayRule,
        order: ConflictOrder,
        max_bb: u64,
    ) -> Result<NetworkStrategy, AdversaryError> {
        if max_bb == 0 {
            return Err(AdversaryError::ZeroMaxBb);
        }
        let check = |delay: u64| {
            if (1..=max_bb).contains(&delay) {
                Ok(())
            } else {
                Err(AdversaryError::DelayOutOfRange { delay, max_bb })
            }
        };
        match &delay {
            DelayRule::Constant(k) => check(*k)?,
            DelayRule::Table(t) if t.is_empty() => return Err(AdversaryError::EmptyDelayTable),
            DelayRule::Table(t) => t.iter().try_for_each(|&k| check(k))?,
            DelayRule::Honest | DelayRule::Max => {}
        }
        Ok(NetworkStrategy { malleation, delay, order, max_bb })
    }

    pub fn honest(max_bb: u64) -> NetworkStrategy {
        NetworkStrategy::new(Malleation::Off, DelayRule::Honest, ConflictOrder::Fifo, max_bb).expect("max_bb >= 1")
    }

    pub fn malleate_all(max_bb: u64) -> NetworkStrategy {
        NetworkStrategy::new(Malleation::All, DelayRule::Honest, ConflictOrder::Fifo, max_bb).expect("max_bb >= 1")
    }

    pub fn with_delay(self, delay: DelayRule) -> Result<NetworkStrategy, AdversaryError> {
        NetworkStrategy::new(self.malleation, delay, self.order, self.max_bb)
    }

    pub fn with_order(mut self, order: ConflictOrder) -> NetworkStrategy {
        self.order = order;
        self
    }

    pub fn malleation(&self) -> &Malleation {
        &self.malleation
    }

    pub fn delay(&self) -> &DelayRule {
        &self.delay
    }

    pub fn order(&self) -> ConflictOrder {
        self.order
    }

    pub fn max_bb(&self) -> u64 {
        self.max_bb
    }

    pub fn malleates(&self) -> bool {
        !matches!(self.malleation, Malleation::Off)
    }

    fn delay_for(&self, seq: u64) -> u64 {
        match &self.delay {
            DelayRule::Honest => 1,
            DelayRule::Max => self.max_bb,
            DelayRule::Constant(k) => *k,
            DelayRule::Table(t) => t[(seq % t.len() as u64) as usize],
        }
    }

    fn targets(&self, body: &Digest) -> bool {
        match &self.malleation {
            Malleation::Off => false,
            Malleation::All => true,
            Malleation::Bodies(set) => set.contains(body),
        }
    }
}

impl fmt::Display for NetworkStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let malleate = match &self.malleation {
            Malleation::Off => "off".to_string(),
            Malleation::All => "all".to_string(),
            Malleation::Bodies(set) => format!("bodies({})", set.len()),
        };
        let delay = match &self.delay {
            DelayRule::Honest => "honest".to_string(),
            DelayRule::Max => "max".to_string(),
            DelayRule::Constant(k) => k.to_string(),
            DelayRule::Table(t) => {
                format!("table:{}", t.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
            }
        };
        let order = match self.order {
            ConflictOrder::Fifo => "fifo",
            ConflictOrder::Lifo => "lifo",
        };
        write!(f, "malleate={malleate} delay={delay} order={order}")
    }
}

/// Padding bytes the adversary appends for the `seq`-th broadcast.
fn padding(seed: u64, seq: u64, body: &Digest) -> Vec<u8> {
    hash_parts(&[b"fusesim/pad", &seed.to_le_bytes(), &seq.to_le_bytes(), body.as_bytes()]).0[..8].to_vec()
}

/// The adversary's decision for the `seq`-th broadcast of a run.
pub fn on_broadcast(strategy: &NetworkStrategy, tx: &Transaction, seed: u64, seq: u64) -> (Transaction, u64) {
    let delay = strategy.delay_for(seq);
    let body = body_digest(tx);
    if strategy.targets(&body) && !tx.inputs.is_empty() {
        let pad = padding(seed, seq, &body);
        (malleate(tx, &pad).expect("padding is non-empty"), delay)
    } else {
        (tx.clone(), delay)
    }
}

/// Stateful wrapper that numbers broadcasts.
#[derive(Debug, Clone)]
pub struct NetworkAdversary {
    strategy: NetworkStrategy,
    seed: u64,
    seq: u64,
}

impl NetworkAdversary {
    pub fn new(strategy: NetworkStrategy, seed: u64) -> NetworkAdversary {
        NetworkAdversary { strategy, seed, seq: 0 }
    }

    pub fn strategy(&self) -> &NetworkStrategy {
        &self.strategy
    }

    pub fn on_broadcast(&mut self, tx: &Transaction) -> (Transaction, u64) {
        let out = on_broadcast(&self.strategy, tx, self.seed, self.seq);
        self.seq += 1;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyStrategy {
    pub party: Party,
    pub abort_at: Option<AbortPoint>,
    pub withhold_secret: bool,
    pub send_bad_signature: bool,
}

impl PartyStrategy {
    pub fn honest(party: Party) -> PartyStrategy {
        PartyStrategy { party, abort_at: None, withhold_secret: false, send_bad_signature: false }
    }

    pub fn abort(party: Party, point: AbortPoint) -> PartyStrategy {
        PartyStrategy { abort_at: Some(point), ..PartyStrategy::honest(party) }
    }

    pub fn withholding(party: Party) -> PartyStrategy {
        PartyStrategy { withhold_secret: true, ..PartyStrategy::honest(party) }
    }

    pub fn bad_signature(party: Party) -> PartyStrategy {
        PartyStrategy { send_bad_signature: true, ..PartyStrategy::honest(party) }
    }

    /// Checks the single-deviation rule. `fuzz` lifts it.
    pub fn validated(self, fuzz: bool) -> Result<PartyStrategy, AdversaryError> {
        let n = self.deviation_count();
        if n > 1 && !fuzz {
            return Err(AdversaryError::CompoundDeviation(n));
        }
        Ok(self)
    }

    pub fn deviation_count(&self) -> usize {
        usize::from(self.abort_at.is_some()) + usize::from(self.withhold_secret) + usize::from(self.send_bad_signature)
    }

    pub fn is_honest(&self) -> bool {
        self.deviation_count() == 0
    }

    /// Whether the party refuses to perform `point` under `protocol`.
    pub fn skips(&self, protocol: ProtocolKind, point: AbortPoint) -> bool {
        self.abort_at == Some(point) || (self.withhold_secret && protocol.reveal_point(self.party) == Some(point))
    }
}

impl fmt::Display for PartyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(p) = self.abort_at {
            parts.push(format!("abort_at={p}"));
        }
        if self.withhold_secret {
            parts.push("withhold_secret".to_string());
        }
        if self.send_bad_signature {
            parts.push("bad_signature".to_string());
        }
        if parts.is_empty() {
            f.write_str("honest")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

pub type StrategyTriple = (NetworkStrategy, PartyStrategy, PartyStrategy);

/// Malleation {off, all} x delay {1, max_bb} x each party's {honest, abort
/// point...}, in that nesting order.
pub fn enumerate_strategies(max_bb: u64, protocol: ProtocolKind) -> Result<Vec<StrategyTriple>, AdversaryError> {
    if max_bb == 0 {
        return Err(AdversaryError::ZeroMaxBb);
    }
    if max_bb > EXHAUSTIVE_MAX_BB {
        return Err(AdversaryError::ExhaustiveBoundExceeded(max_bb));
    }
    let options = |party: Party| {
        std::iter::once(PartyStrategy::honest(party))
            .chain(protocol.abort_points(party).iter().map(move |&p| PartyStrategy::abort(party, p)))
            .collect::<Vec<_>>()
    };
    let mut out = Vec::new();
    for malleation in [Malleation::Off, Malleation::All] {
        for delay in [DelayRule::Honest, DelayRule::Max] {
            let net = NetworkStrategy::new(malleation.clone(), delay, ConflictOrder::Fifo, max_bb)?;
            for a in options(Party::A) {
                for b in options(Party::B) {
                    out.push((net.clone(), a.clone(), b));
                }
            }
        }
    }
    Ok(out)
}
