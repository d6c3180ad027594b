//! Timed commitment: Commit / Open / Fuse.
//!
//! The committer locks `d` under
//! `(sig_C ∧ H(x) = h) ∨ (sig_C ∧ sig_R)` and, once Commit is confirmed,
//! signs a time-locked Fuse that spends the *confirmed* txid. Opening
//! reveals `s` and returns the deposit; failing to open by `t` lets the
//! recipient take it with Fuse.

use crate::adversary::{AbortPoint, Party};
use crate::chain::{Ledger, TxStatus};
use crate::crypto::{verify, Digest, PublicKey, Signature};
use crate::txmodel::{Outpoint, Script, ScriptNode, Transaction, TxOut, WitnessItem};

use super::{commitment, drive, extract_secret, pay_to, Ctx, Machine, Outcome, ProtocolError, RunConfig};

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsPhase {
    Init,
    Committed,
    FuseSigned,
    Opened,
    Fused,
    Aborted,
}

impl CsPhase {
    pub fn name(self) -> &'static str {
        match self {
            CsPhase::Init => "init",
            CsPhase::Committed => "committed",
            CsPhase::FuseSigned => "fuse_signed",
            CsPhase::Opened => "opened",
            CsPhase::Fused => "fused",
            CsPhase::Aborted => "aborted",
        }
    }
}

/// Witness slot of the secret in Open.
pub const SECRET_SLOT: usize = 2;

pub fn commit_script(committer: PublicKey, recipient: PublicKey, h: Digest) -> Script {
    let root = ScriptNode::or(
        ScriptNode::and(ScriptNode::sig(committer, 0), ScriptNode::hashlock(h, SECRET_SLOT)),
        ScriptNode::and(ScriptNode::sig(committer, 0), ScriptNode::sig(recipient, 1)),
    );
    Script::new(root, 3).expect("static script")
}

#[derive(Debug, Clone)]
pub struct CsSession {
    /// Role stem used in trace labels, e.g. `cs` or `csA`.
    pub label: String,
    pub committer: Party,
    pub recipient: Party,
    pub committer_key: PublicKey,
    pub recipient_key: PublicKey,
    pub d: u64,
    pub t: u64,
    secret: Vec<u8>,
    pub h: Digest,
    pub funding: Outpoint,
    pub commit_body: Option<Digest>,
    pub commit_out: Option<Outpoint>,
    pub commit_round: Option<u64>,
    /// Committer signature on Fuse as accepted by the recipient.
    pub fuse_signature: Option<Signature>,
    pub phase: CsPhase,
    inbox: Option<Signature>,
    signature_sent: bool,
    recipient_quit: bool,
    open_sent: bool,
    pub revealed: Option<Vec<u8>>,
}

impl CsSession {
    pub fn new(ctx: &Ctx, label: &str, committer: Party, secret: Vec<u8>, funding: Outpoint) -> CsSession {
        let params = ctx.params();
        CsSession {
            label: label.to_string(),
            committer,
            recipient: committer.other(),
            committer_key: ctx.public(committer),
            recipient_key: ctx.public(committer.other()),
            d: params.d,
            t: params.t,
            h: commitment(&secret),
            secret,
            funding,
            commit_body: None,
            commit_out: None,
            commit_round: None,
            fuse_signature: None,
            phase: CsPhase::Init,
            inbox: None,
            signature_sent: false,
            recipient_quit: false,
            open_sent: false,
            revealed: None,
        }
    }

    fn role(&self, step: &str) -> String {
        format!("{}.{step}", self.label)
    }

    pub fn commit_tx(&self, ctx: &Ctx) -> Transaction {
        let out = TxOut { value: self.d, script: commit_script(self.committer_key, self.recipient_key, self.h) };
        let tx = Transaction::unsigned(&[self.funding], vec![out], 0);
        let sig = ctx.sign(self.committer, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig)])
    }

    /// Step 1: broadcast Commit.
    pub fn commit(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let tx = self.commit_tx(ctx);
        self.commit_body = Some(tx.body_digest());
        ctx.broadcast(self.committer, tx, &self.role("commit"))
    }

    /// Refreshes the session from the chain. Commit is located by body digest.
    pub fn poll(&mut self, ledger: &Ledger) {
        let Some(body) = self.commit_body else { return };
        if self.commit_out.is_none() {
            match ledger.status(&body) {
                Some(TxStatus::Confirmed { round }) => {
                    let c = ledger.confirmed_by_body(&body).expect("confirmed");
                    self.commit_out = Some(Outpoint::new(c.txid, 0));
                    self.commit_round = Some(round);
                    if self.phase == CsPhase::Init {
                        self.phase = CsPhase::Committed;
                    }
                }
                Some(TxStatus::Rejected { .. }) => self.phase = CsPhase::Aborted,
                _ => {}
            }
        }
        let Some(out) = self.commit_out else { return };
        let Some(spender) = ledger.spender_of(&out) else { return };
        if Some(spender.body) == self.open_body() {
            self.phase = CsPhase::Opened;
            if self.revealed.is_none() {
                self.revealed = extract_secret(ledger, &spender.body, SECRET_SLOT).ok();
            }
        } else if Some(spender.body) == self.fuse_body() {
            self.phase = CsPhase::Fused;
        }
    }

    pub fn is_committed(&self) -> bool {
        self.commit_out.is_some()
    }

    /// Commit confirmed and its output still unspent.
    pub fn is_live(&self, ledger: &Ledger) -> bool {
        self.commit_out.is_some_and(|o| ledger.is_unspent(&o))
    }

    pub fn signature_sent(&self) -> bool {
        self.signature_sent
    }

    pub fn open_sent(&self) -> bool {
        self.open_sent
    }

    pub fn recipient_quit(&self) -> bool {
        self.recipient_quit
    }

    pub fn is_settled(&self) -> bool {
        matches!(self.phase, CsPhase::Opened | CsPhase::Fused)
    }

    fn unsigned_fuse(&self) -> Option<Transaction> {
        let out = self.commit_out?;
        Some(Transaction::unsigned(&[out], vec![pay_to(self.recipient_key, self.d)], self.t))
    }

    fn unsigned_open(&self) -> Option<Transaction> {
        let out = self.commit_out?;
        Some(Transaction::unsigned(&[out], vec![pay_to(self.committer_key, self.d)], 0))
    }

    pub fn fuse_body(&self) -> Option<Digest> {
        self.unsigned_fuse().map(|t| t.body_digest())
    }

    pub fn open_body(&self) -> Option<Digest> {
        self.unsigned_open().map(|t| t.body_digest())
    }

    /// Step 2, committer side: sign the Fuse body built from the confirmed
    /// Commit and send the signature.
    pub fn send_fuse_signature(&mut self, ctx: &Ctx) {
        let Some(body) = self.fuse_body() else { return };
        self.inbox = Some(ctx.sign_message(self.committer, &body));
        self.signature_sent = true;
    }

    /// Step 3, recipient side. Quits on a bad signature, or on a missing one
    /// once the round after confirmation has passed.
    pub fn receive_fuse_signature(&mut self, round: u64) {
        if self.phase != CsPhase::Committed || self.recipient_quit {
            return;
        }
        let body = self.fuse_body().expect("committed");
        match self.inbox.take() {
            Some(sig) if verify(&self.committer_key, &body, &sig) => {
                self.fuse_signature = Some(sig);
                self.phase = CsPhase::FuseSigned;
            }
            Some(_) => self.quit(),
            None if round > self.commit_round.expect("committed") => self.quit(),
            None => {}
        }
    }

    /// Recipient gives up on the session, e.g. on a deadline of an outer
    /// protocol.
    pub fn quit(&mut self) {
        self.recipient_quit = true;
        if !self.is_settled() {
            self.phase = CsPhase::Aborted;
        }
    }

    /// Step 4: Open with witness `(sig_C, ⊥, s)`.
    pub fn open(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let Some(tx) = self.unsigned_open() else { return Ok(()) };
        let sig = ctx.sign(self.committer, &tx.body_digest());
        let tx = tx.with_witness(
            0,
            vec![WitnessItem::Sig(sig), WitnessItem::Omitted, WitnessItem::Secret(self.secret.clone())],
        );
        self.open_sent = true;
        ctx.submit(self.committer, tx, &self.role("open"))?;
        Ok(())
    }

    /// Step 5: Fuse with witness `(sig_C, sig_R, ⊥)`, valid from round `t`.
    pub fn fuse(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let (Some(tx), Some(sig_c)) = (self.unsigned_fuse(), self.fuse_signature.clone()) else { return Ok(()) };
        let sig_r = ctx.sign(self.recipient, &tx.body_digest());
        let tx = tx.with_witness(0, vec![WitnessItem::Sig(sig_c), WitnessItem::Sig(sig_r), WitnessItem::Omitted]);
        ctx.submit(self.recipient, tx, &self.role("fuse"))?;
        Ok(())
    }

    /// Recipient's standing duty: once `t` is reached and Open has not
    /// confirmed, claim the deposit.
    pub fn recipient_duty(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        if ctx.round() >= self.t && self.fuse_signature.is_some() && self.is_live(&ctx.ledger) {
            self.fuse(ctx)?;
        }
        Ok(())
    }
}

/// `cs_commit`: builds the session and broadcasts Commit.
pub fn cs_commit(
    ctx: &mut Ctx,
    label: &str,
    committer: Party,
    secret: Vec<u8>,
    funding: Outpoint,
) -> Result<CsSession, ProtocolError> {
    let mut session = CsSession::new(ctx, label, committer, secret, funding);
    session.commit(ctx)?;
    Ok(session)
}

/// Standalone CS with A as committer and B as recipient.
struct CsRun {
    session: CsSession,
}

impl Machine for CsRun {
    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        let s = &mut self.session;
        s.poll(&ctx.ledger);
        let round = ctx.round();
        if party == s.committer {
            if s.is_committed() && !s.signature_sent() && !ctx.skips(party, AbortPoint::CsFuseSignature) {
                s.send_fuse_signature(ctx);
            }
            let open_at = ctx.params().commit_deadline().max(s.commit_round.unwrap_or(u64::MAX));
            if s.is_live(&ctx.ledger)
                && !s.open_sent()
                && round >= open_at
                && round < s.t
                && !ctx.skips(party, AbortPoint::Open)
            {
                s.open(ctx)?;
            }
        } else {
            s.receive_fuse_signature(round);
            if !ctx.skips(party, AbortPoint::Fuse) {
                s.recipient_duty(ctx)?;
            }
        }
        s.poll(&ctx.ledger);
        Ok(())
    }

    fn phase(&self, _: &Ctx) -> &'static str {
        self.session.phase.name()
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, ProtocolError> {
    let (mut ctx, funding) = Ctx::setup(crate::adversary::ProtocolKind::Cs, config, &[(Party::A, "fund")])?;
    let secret = ctx.fresh_secret();
    let session = cs_commit(&mut ctx, "cs", Party::A, secret, funding[0])?;
    let mut machine = CsRun { session };
    drive(&mut machine, &mut ctx, config.max_rounds)?;
    machine.session.poll(&ctx.ledger);
    let phase = machine.phase(&ctx);
    let commitments = BTreeMap::from([("s".to_string(), machine.session.h)]);
    let revealed = machine.session.revealed.clone().map(|s| ("s".to_string(), s)).into_iter().collect();
    Ok(ctx.finish(phase, commitments, revealed))
}
