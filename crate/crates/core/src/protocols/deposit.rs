//! Refunding a deposit.
//!
//! The legacy flow co-signs a time-locked Fuse against the predicted txid of
//! Deposit before Deposit is broadcast; a single malleation orphans it. The
//! secret-gated technique instead locks Deposit under
//! `(sig_A ∧ H(x) = h_r) ∨ extra`, where `r` is the secret of a timed
//! commitment made by B. A builds and signs Fuse alone, after Deposit is
//! confirmed, and can use it once `r` is revealed. If B never opens, A takes
//! B's commitment deposit instead.

use std::collections::BTreeMap;

use crate::adversary::{AbortPoint, NetworkStrategy, Party, ProtocolKind};
use crate::chain::{ChainParams, TxStatus};
use crate::crypto::Digest;
use crate::txmodel::{Outpoint, Script, ScriptNode, Transaction, TxOut, ValidationError, WitnessItem};

use super::cs::CsSession;
use super::{commitment, drive, pay_to, Ctx, Machine, Outcome, ProtocolError, RunConfig};

/// Default "extra" branch of the Deposit script: A and B jointly.
pub fn joint_branch(ctx: &Ctx) -> ScriptNode {
    ScriptNode::and(ScriptNode::sig(ctx.public(Party::A), 0), ScriptNode::sig(ctx.public(Party::B), 2))
}

pub fn deposit_script(ctx: &Ctx, h_r: Digest, extra: ScriptNode) -> Script {
    let root =
        ScriptNode::or(ScriptNode::and(ScriptNode::sig(ctx.public(Party::A), 0), ScriptNode::hashlock(h_r, 1)), extra);
    Script::with_minimal_arity(root).expect("well-formed deposit script")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrPhase {
    InnerCommit,
    Deposited,
    Refunded,
    CsFused,
    Aborted,
}

impl DrPhase {
    pub fn name(self) -> &'static str {
        match self {
            DrPhase::InnerCommit => "inner_commit",
            DrPhase::Deposited => "deposited",
            DrPhase::Refunded => "refunded",
            DrPhase::CsFused => "cs_fused",
            DrPhase::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DepositRefundSession {
    /// `CS(B, A, d, t, r)`.
    pub cs: CsSession,
    pub deposit_funding: Outpoint,
    pub script: Script,
    pub deposit_body: Option<Digest>,
    pub deposit_out: Option<Outpoint>,
    /// Built and signed by A once Deposit is confirmed.
    pub fuse: Option<Transaction>,
    pub phase: DrPhase,
}

impl DepositRefundSession {
    fn deposit_tx(&self, ctx: &Ctx) -> Transaction {
        let tx = Transaction::unsigned(
            &[self.deposit_funding],
            vec![TxOut { value: ctx.params().d, script: self.script.clone() }],
            0,
        );
        let sig = ctx.sign(Party::A, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig)])
    }

    /// Fuse spending the confirmed Deposit with witness `(sig_A, r, ⊥...)`.
    fn build_fuse(&self, ctx: &Ctx, out: Outpoint, r: &[u8]) -> Transaction {
        let tx = Transaction::unsigned(&[out], vec![pay_to(ctx.public(Party::A), ctx.params().d)], 0);
        let sig = ctx.sign(Party::A, &tx.body_digest());
        let mut witness = vec![WitnessItem::Sig(sig), WitnessItem::Secret(r.to_vec())];
        witness.resize(self.script.arity(), WitnessItem::Omitted);
        tx.with_witness(0, witness)
    }

    fn poll(&mut self, ctx: &Ctx) {
        self.cs.poll(&ctx.ledger);
        if let (Some(body), None) = (self.deposit_body, self.deposit_out) {
            if let Some(c) = ctx.ledger.confirmed_by_body(&body) {
                self.deposit_out = Some(Outpoint::new(c.txid, 0));
                self.phase = DrPhase::Deposited;
            }
        }
        if let (Some(fuse), Some(out)) = (&self.fuse, self.deposit_out) {
            if ctx.ledger.spender_of(&out).is_some_and(|s| s.body == fuse.body_digest()) {
                self.phase = DrPhase::Refunded;
            }
        }
        if self.cs.phase == super::CsPhase::Fused && self.phase != DrPhase::Refunded {
            self.phase = DrPhase::CsFused;
        }
    }

    fn act_b(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let cs = &mut self.cs;
        if cs.is_committed() && !cs.signature_sent() && !ctx.skips(Party::B, AbortPoint::CsFuseSignature) {
            cs.send_fuse_signature(ctx);
        }
        let round = ctx.round();
        let open_at = ctx.params().commit_deadline().max(cs.commit_round.unwrap_or(u64::MAX));
        if cs.is_live(&ctx.ledger)
            && !cs.open_sent()
            && round >= open_at
            && round < cs.t
            && !ctx.skips(Party::B, AbortPoint::CsOpen)
        {
            cs.open(ctx)?;
        }
        Ok(())
    }

    fn act_a(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let round = ctx.round();
        self.cs.receive_fuse_signature(round);
        if self.cs.recipient_quit() && self.deposit_body.is_none() {
            self.phase = DrPhase::Aborted;
        }
        if self.cs.phase == super::CsPhase::FuseSigned
            && self.deposit_body.is_none()
            && self.phase != DrPhase::Aborted
            && !ctx.skips(Party::A, AbortPoint::Deposit)
        {
            let tx = self.deposit_tx(ctx);
            self.deposit_body = Some(tx.body_digest());
            ctx.broadcast(Party::A, tx, "deposit")?;
        }
        if let (Some(out), Some(r)) = (self.deposit_out, self.cs.revealed.clone()) {
            if self.fuse.is_none() {
                self.fuse = Some(self.build_fuse(ctx, out, &r));
            }
        }
        if round >= self.cs.t {
            match (&self.fuse, self.deposit_out) {
                (Some(fuse), Some(out)) if ctx.ledger.is_unspent(&out) => {
                    ctx.submit(Party::A, fuse.clone(), "fuse")?;
                }
                _ => self.cs.recipient_duty(ctx)?,
            }
        }
        Ok(())
    }
}

struct DrRun {
    session: DepositRefundSession,
}

impl Machine for DrRun {
    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        self.session.poll(ctx);
        match party {
            Party::A => self.session.act_a(ctx)?,
            Party::B => self.session.act_b(ctx)?,
        }
        self.session.poll(ctx);
        Ok(())
    }

    fn phase(&self, _: &Ctx) -> &'static str {
        self.session.phase.name()
    }
}

/// Runs the secret-gated technique. `extra` replaces the default joint
/// branch of the Deposit script.
pub fn run(config: &RunConfig, extra: Option<ScriptNode>) -> Result<Outcome, ProtocolError> {
    let (mut ctx, funding) =
        Ctx::setup(ProtocolKind::DepositRefund, config, &[(Party::A, "fund.deposit"), (Party::B, "fund.cs")])?;
    let r = ctx.fresh_secret();
    let h_r = commitment(&r);
    let extra = extra.unwrap_or_else(|| joint_branch(&ctx));
    let script = deposit_script(&ctx, h_r, extra);
    let cs = super::cs::cs_commit(&mut ctx, "cs", Party::B, r, funding[1])?;
    let session = DepositRefundSession {
        cs,
        deposit_funding: funding[0],
        script,
        deposit_body: None,
        deposit_out: None,
        fuse: None,
        phase: DrPhase::InnerCommit,
    };
    let mut machine = DrRun { session };
    drive(&mut machine, &mut ctx, config.max_rounds)?;
    machine.session.poll(&ctx);
    let phase = machine.phase(&ctx);
    let commitments = BTreeMap::from([("r".to_string(), h_r)]);
    let revealed = machine.session.cs.revealed.clone().map(|r| ("r".to_string(), r)).into_iter().collect();
    Ok(ctx.finish(phase, commitments, revealed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegacyFuseOutcome {
    Refunded,
    /// The pre-signed Fuse was refused, typically `UnknownInput`.
    Stuck(ValidationError),
    /// Refund only happened because B agreed to sign again.
    RecoveredWithCooperation,
}

#[derive(Debug, Clone)]
pub struct LegacyFuseReport {
    pub outcome: LegacyFuseOutcome,
    pub rejections: Vec<ValidationError>,
    pub predicted_txids: usize,
    pub deposit_unspent: bool,
    pub conserves_value: bool,
}

/// The vulnerable refund: Fuse is co-signed against the predicted Deposit
/// txid. With `cooperative`, B re-signs a Fuse for the confirmed txid if
/// the first one is refused.
pub fn legacy_fuse_flow(
    params: ChainParams,
    network: NetworkStrategy,
    seed: u64,
    extra: Option<ScriptNode>,
    cooperative: bool,
) -> Result<LegacyFuseReport, ProtocolError> {
    let config = RunConfig::new(params, network, seed);
    let (mut ctx, funding) = Ctx::setup(ProtocolKind::DepositRefund, &config, &[(Party::A, "fund.deposit")])?;
    let joint = ScriptNode::and(ScriptNode::sig(ctx.public(Party::A), 0), ScriptNode::sig(ctx.public(Party::B), 1));
    let root = match extra {
        Some(e) => ScriptNode::or(joint, e),
        None => joint,
    };
    let script = Script::with_minimal_arity(root).expect("well-formed deposit script");
    let arity = script.arity();
    let d = params.d;

    let deposit = Transaction::unsigned(&[funding[0]], vec![TxOut { value: d, script }], 0);
    let sig = ctx.sign(Party::A, &deposit.body_digest());
    let deposit = deposit.with_witness(0, vec![WitnessItem::Sig(sig)]);
    let predicted = ctx.predict_txid(&deposit);

    let signed_fuse = |ctx: &Ctx, prev: Outpoint| {
        let tx = Transaction::unsigned(&[prev], vec![pay_to(ctx.public(Party::A), d)], params.t);
        let body = tx.body_digest();
        let mut witness =
            vec![WitnessItem::Sig(ctx.sign(Party::A, &body)), WitnessItem::Sig(ctx.sign(Party::B, &body))];
        witness.resize(arity, WitnessItem::Omitted);
        tx.with_witness(0, witness)
    };
    let fuse = signed_fuse(&ctx, Outpoint::new(predicted, 0));
    ctx.broadcast(Party::A, deposit.clone(), "deposit")?;

    while ctx.round() < params.t {
        ctx.ledger.advance_round();
    }
    ctx.broadcast(Party::A, fuse.clone(), "fuse")?;
    let mut outcome = LegacyFuseOutcome::Refunded;
    while ctx.ledger.status(&fuse.body_digest()) == Some(TxStatus::Pending) {
        ctx.ledger.advance_round();
    }
    if let Some(TxStatus::Rejected { error, .. }) = ctx.ledger.status(&fuse.body_digest()) {
        outcome = LegacyFuseOutcome::Stuck(error);
        let confirmed = ctx.ledger.confirmed_by_body(&deposit.body_digest()).map(|c| c.txid);
        if let (true, Some(id)) = (cooperative, confirmed) {
            let again = signed_fuse(&ctx, Outpoint::new(id, 0));
            ctx.broadcast(Party::A, again.clone(), "fuse.resigned")?;
            while ctx.ledger.status(&again.body_digest()) == Some(TxStatus::Pending) {
                ctx.ledger.advance_round();
            }
            if ctx.is_confirmed(&again.body_digest()) {
                outcome = LegacyFuseOutcome::RecoveredWithCooperation;
            }
        }
    }
    let deposit_unspent = ctx
        .ledger
        .confirmed_by_body(&deposit.body_digest())
        .is_some_and(|c| ctx.ledger.is_unspent(&Outpoint::new(c.txid, 0)));
    let result = ctx.finish("done", BTreeMap::new(), BTreeMap::new());
    Ok(LegacyFuseReport {
        outcome,
        rejections: result.rejections(Party::A),
        predicted_txids: result.predicted_txids,
        deposit_unspent,
        conserves_value: result.ledger.conserves_value(),
    })
}
