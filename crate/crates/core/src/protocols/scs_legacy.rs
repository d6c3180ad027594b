//! The original simultaneous commitment.
//!
//! One Commit spends `T^A` and `T^B` into two outputs,
//! `(sig_A ∧ H(x) = h_sA) ∨ (sig_A ∧ sig_B)` and its mirror. Both Fuse
//! transactions are co-signed against the predicted Commit txid before
//! Commit is broadcast, which is what malleation breaks.
//!
//! Signing order: A sends `sig_A(Commit)`; B predicts the txid, signs both
//! Fuses and sends them with `sig_B(Commit)`; A predicts, signs both Fuses
//! and sends them back; B broadcasts Commit.

use std::collections::BTreeMap;

use crate::adversary::{AbortPoint, Party, ProtocolKind};
use crate::chain::TxStatus;
use crate::crypto::{verify, Digest, Signature};
use crate::txmodel::{Outpoint, Script, ScriptNode, Transaction, TxOut, WitnessItem};

use super::{commitment, drive, extract_secret, index, pay_to, Ctx, Machine, Outcome, ProtocolError, RunConfig};

/// Witness slot of the secret in Open.
pub const SECRET_SLOT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegacyPhase {
    Signing,
    Committed,
    Done,
    Aborted,
}

impl LegacyPhase {
    pub fn name(self) -> &'static str {
        match self {
            LegacyPhase::Signing => "signing",
            LegacyPhase::Committed => "committed",
            LegacyPhase::Done => "done",
            LegacyPhase::Aborted => "aborted",
        }
    }
}

/// Fuse signatures on (Fuse^A, Fuse^B).
type FusePair = (Signature, Signature);

#[derive(Debug, Clone, Default)]
struct PartyView {
    quit: bool,
    /// Signature on Commit released to the counterparty.
    released: bool,
    redeem_sent: bool,
    open_sent: bool,
    /// The counterparty's Fuse, fully signed, spending the predicted txid.
    fuse: Option<Transaction>,
}

#[derive(Debug, Clone)]
pub struct ScsLegacySession {
    pub funding: [Outpoint; 2],
    secrets: [Vec<u8>; 2],
    pub hashes: [Digest; 2],
    commit: Transaction,
    /// A's Commit signature, sent to B.
    msg_commit_a: Option<Signature>,
    /// B's Commit signature and Fuse signatures, sent to A.
    msg_from_b: Option<(Signature, FusePair)>,
    /// A's Fuse signatures, sent to B.
    msg_fuse_a: Option<FusePair>,
    commit_sigs: [Option<Signature>; 2],
    pub commit_out: Option<Digest>,
    views: [PartyView; 2],
    pub revealed: [Option<Vec<u8>>; 2],
}

pub fn output_script(ctx: &Ctx, owner: Party, h: Digest) -> Script {
    let (own, other) = (
        ScriptNode::sig(ctx.public(owner), slot_of(owner)),
        ScriptNode::sig(ctx.public(owner.other()), slot_of(owner.other())),
    );
    let root =
        ScriptNode::or(ScriptNode::and(own.clone(), ScriptNode::hashlock(h, SECRET_SLOT)), ScriptNode::and(own, other));
    Script::new(root, 3).expect("static script")
}

fn slot_of(party: Party) -> usize {
    index(party)
}

impl ScsLegacySession {
    fn new(ctx: &mut Ctx, funding: [Outpoint; 2]) -> ScsLegacySession {
        let secrets = [ctx.fresh_secret(), ctx.fresh_secret()];
        let hashes = [commitment(&secrets[0]), commitment(&secrets[1])];
        let d = ctx.params().d;
        let commit = Transaction::unsigned(
            &funding,
            vec![
                TxOut { value: d, script: output_script(ctx, Party::A, hashes[0]) },
                TxOut { value: d, script: output_script(ctx, Party::B, hashes[1]) },
            ],
            0,
        );
        ScsLegacySession {
            funding,
            secrets,
            hashes,
            commit,
            msg_commit_a: None,
            msg_from_b: None,
            msg_fuse_a: None,
            commit_sigs: [None, None],
            commit_out: None,
            views: Default::default(),
            revealed: [None, None],
        }
    }

    fn commit_body(&self) -> Digest {
        self.commit.body_digest()
    }

    fn signed_commit(&self) -> Option<Transaction> {
        let [Some(a), Some(b)] = self.commit_sigs.clone() else { return None };
        Some(self.commit.clone().with_witness(0, vec![WitnessItem::Sig(a)]).with_witness(1, vec![WitnessItem::Sig(b)]))
    }

    /// Fuse^X spends output X of Commit and pays X's counterparty after `t`.
    fn unsigned_fuse(ctx: &Ctx, commit_txid: Digest, owner: Party) -> Transaction {
        let params = ctx.params();
        Transaction::unsigned(
            &[Outpoint::new(commit_txid, index(owner) as u32)],
            vec![pay_to(ctx.public(owner.other()), params.d)],
            params.t,
        )
    }

    fn fuse_bodies(ctx: &Ctx, commit_txid: Digest) -> [Digest; 2] {
        Party::BOTH.map(|p| Self::unsigned_fuse(ctx, commit_txid, p).body_digest())
    }

    fn sign_fuses(ctx: &Ctx, party: Party, bodies: &[Digest; 2]) -> FusePair {
        (ctx.sign_message(party, &bodies[0]), ctx.sign_message(party, &bodies[1]))
    }

    fn fuses_valid(ctx: &Ctx, party: Party, bodies: &[Digest; 2], sigs: &FusePair) -> bool {
        let key = ctx.public(party);
        verify(&key, &bodies[0], &sigs.0) && verify(&key, &bodies[1], &sigs.1)
    }

    /// Fully signed Fuse^owner with witness `(sig_A, sig_B, ⊥)`.
    fn complete_fuse(ctx: &Ctx, commit_txid: Digest, owner: Party, a: &Signature, b: &Signature) -> Transaction {
        Self::unsigned_fuse(ctx, commit_txid, owner)
            .with_witness(0, vec![WitnessItem::Sig(a.clone()), WitnessItem::Sig(b.clone()), WitnessItem::Omitted])
    }

    fn open_tx(&self, ctx: &Ctx, party: Party, commit_txid: Digest) -> Transaction {
        let tx = Transaction::unsigned(
            &[Outpoint::new(commit_txid, index(party) as u32)],
            vec![pay_to(ctx.public(party), ctx.params().d)],
            0,
        );
        let sig = WitnessItem::Sig(ctx.sign(party, &tx.body_digest()));
        let mut witness =
            vec![WitnessItem::Omitted, WitnessItem::Omitted, WitnessItem::Secret(self.secrets[index(party)].clone())];
        witness[slot_of(party)] = sig;
        tx.with_witness(0, witness)
    }

    fn poll(&mut self, ctx: &Ctx) {
        if self.commit_out.is_none() {
            self.commit_out = ctx.ledger.confirmed_by_body(&self.commit_body()).map(|c| c.txid);
        }
        let Some(id) = self.commit_out else { return };
        for p in Party::BOTH {
            let out = Outpoint::new(id, index(p) as u32);
            if self.revealed[index(p)].is_none() {
                if let Some(spender) = ctx.ledger.spender_of(&out) {
                    self.revealed[index(p)] = extract_secret(&ctx.ledger, &spender.body, SECRET_SLOT).ok();
                }
            }
        }
    }

    fn signing_a(&mut self, ctx: &mut Ctx) {
        if ctx.round() == 0 && !ctx.skips(Party::A, AbortPoint::CommitSignature) {
            self.msg_commit_a = Some(ctx.sign_message(Party::A, &self.commit_body()));
            self.commit_sigs[0] = Some(ctx.sign(Party::A, &self.commit_body()));
            self.views[0].released = true;
        }
        if let Some((sig_b, fuse_b)) = self.msg_from_b.take() {
            if !verify(&ctx.public(Party::B), &self.commit_body(), &sig_b) {
                self.views[0].quit = true;
                return;
            }
            self.commit_sigs[1] = Some(sig_b);
            let commit = self.signed_commit().expect("both commit signatures");
            let predicted = ctx.predict_txid(&commit);
            let bodies = Self::fuse_bodies(ctx, predicted);
            if !Self::fuses_valid(ctx, Party::B, &bodies, &fuse_b) {
                self.views[0].quit = true;
                return;
            }
            let own = (ctx.sign(Party::A, &bodies[0]), ctx.sign(Party::A, &bodies[1]));
            // A holds Fuse^B, claimable if B does not open
            self.views[0].fuse = Some(Self::complete_fuse(ctx, predicted, Party::B, &own.1, &fuse_b.1));
            if !ctx.skips(Party::A, AbortPoint::FuseSignatures) {
                self.msg_fuse_a = Some(Self::sign_fuses(ctx, Party::A, &bodies));
            }
        }
    }

    fn signing_b(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        if let Some(sig_a) = self.msg_commit_a.take() {
            if !verify(&ctx.public(Party::A), &self.commit_body(), &sig_a) {
                self.views[1].quit = true;
                return Ok(());
            }
            self.commit_sigs[0] = Some(sig_a);
            if !ctx.skips(Party::B, AbortPoint::FuseSignatures) {
                let own = ctx.sign(Party::B, &self.commit_body());
                self.commit_sigs[1] = Some(own.clone());
                let predicted = ctx.predict_txid(&self.signed_commit().expect("both commit signatures"));
                let bodies = Self::fuse_bodies(ctx, predicted);
                let msg = if ctx.strategy(Party::B).send_bad_signature {
                    Signature::garbage(ctx.key(Party::B).id)
                } else {
                    own
                };
                self.msg_from_b = Some((msg, Self::sign_fuses(ctx, Party::B, &bodies)));
                self.views[1].released = true;
            }
        }
        if let Some(fuse_a) = self.msg_fuse_a.take() {
            let commit = self.signed_commit().expect("both commit signatures");
            let predicted = ctx.predict_txid(&commit);
            let bodies = Self::fuse_bodies(ctx, predicted);
            if !Self::fuses_valid(ctx, Party::A, &bodies, &fuse_a) {
                self.views[1].quit = true;
                return Ok(());
            }
            let own = ctx.sign(Party::B, &bodies[0]);
            self.views[1].fuse = Some(Self::complete_fuse(ctx, predicted, Party::A, &fuse_a.0, &own));
            if !ctx.skips(Party::B, AbortPoint::CommitBroadcast) {
                ctx.broadcast(Party::B, commit, "commit")?;
            }
        }
        Ok(())
    }

    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        self.poll(ctx);
        if self.commit_out.is_none() && !self.views[index(party)].quit {
            match party {
                Party::A => self.signing_a(ctx),
                Party::B => self.signing_b(ctx)?,
            }
        }
        let round = ctx.round();
        let params = ctx.params();
        let i = index(party);
        match self.commit_out {
            None => {
                let commit_pending = ctx.ledger.status(&self.commit_body()) == Some(TxStatus::Pending);
                let view = &mut self.views[i];
                if round >= params.commit_deadline() && view.released && !view.redeem_sent && !commit_pending {
                    view.redeem_sent = true;
                    let tx = ctx.redeem_tx(party, self.funding[i]);
                    ctx.broadcast(party, tx, "redeem")?;
                }
            }
            Some(id) => {
                if !self.views[i].open_sent && !ctx.skips(party, AbortPoint::Open) {
                    self.views[i].open_sent = true;
                    let tx = self.open_tx(ctx, party, id);
                    ctx.submit(party, tx, "open")?;
                }
                let other = Outpoint::new(id, index(party.other()) as u32);
                if round >= params.t && ctx.ledger.is_unspent(&other) {
                    if let Some(fuse) = self.views[i].fuse.clone() {
                        let what = format!("fuse.{}", party.other().label().to_lowercase());
                        ctx.submit(party, fuse, &what)?;
                    }
                }
            }
        }
        self.poll(ctx);
        Ok(())
    }

    fn phase(&self, ctx: &Ctx) -> LegacyPhase {
        match self.commit_out {
            Some(id) => {
                let settled = (0..2).all(|i| !ctx.ledger.is_unspent(&Outpoint::new(id, i)));
                if settled {
                    LegacyPhase::Done
                } else {
                    LegacyPhase::Committed
                }
            }
            None if self.views.iter().any(|v| v.quit || v.redeem_sent) => LegacyPhase::Aborted,
            None if ctx.round() >= ctx.params().commit_deadline() => LegacyPhase::Aborted,
            None => LegacyPhase::Signing,
        }
    }
}

struct LegacyRun {
    session: ScsLegacySession,
}

impl Machine for LegacyRun {
    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        self.session.act(ctx, party)
    }

    fn phase(&self, ctx: &Ctx) -> &'static str {
        self.session.phase(ctx).name()
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, ProtocolError> {
    let (mut ctx, funding) = Ctx::setup(ProtocolKind::ScsLegacy, config, &[(Party::A, "fund"), (Party::B, "fund")])?;
    let session = ScsLegacySession::new(&mut ctx, [funding[0], funding[1]]);
    let mut machine = LegacyRun { session };
    drive(&mut machine, &mut ctx, config.max_rounds)?;
    let phase = machine.phase(&ctx);
    let s = &machine.session;
    let commitments = BTreeMap::from([("s_A".to_string(), s.hashes[0]), ("s_B".to_string(), s.hashes[1])]);
    let revealed = [("s_A", &s.revealed[0]), ("s_B", &s.revealed[1])]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect();
    Ok(ctx.finish(phase, commitments, revealed))
}
