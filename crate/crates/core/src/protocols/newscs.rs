//! Malleability-resistant simultaneous commitment.
//!
//! Each party first commits to an auxiliary secret `r_X` with a timed
//! commitment `CS^X` on `T^X_1`. The joint Commit then spends `T^A_2` and
//! `T^B_2` into
//!
//! ```text
//! out_A: (sig_A ∧ H(x) = h_sA) ∨ (sig_B ∧ H(x) = h_rA)
//! out_B: (sig_B ∧ H(x) = h_sB) ∨ (sig_A ∧ H(x) = h_rB)
//! ```
//!
//! No transaction spending Commit is signed before Commit is confirmed. A
//! party that reveals `s_X` with `Open^X` then opens `CS^X`; one that skips
//! `Open^X` leaks `r_X` through `CS^X` (or forfeits `CS^X` itself), and the
//! counterparty takes `out_X`.

use std::collections::BTreeMap;

use crate::adversary::{AbortPoint, Party, ProtocolKind};
use crate::chain::TxStatus;
use crate::crypto::{verify, Digest, Signature};
use crate::txmodel::{Outpoint, Script, ScriptNode, Transaction, TxOut, WitnessItem};

use super::cs::CsSession;
use super::{commitment, drive, extract_secret, index, pay_to, Ctx, Machine, Outcome, ProtocolError, RunConfig};

/// Witness slot of the revealed secret in Open^X and Fuse^X.
pub const SECRET_SLOT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NewScsPhase {
    CommitR,
    CommitS,
    Open,
    Punish,
    Done,
    Aborted,
}

impl NewScsPhase {
    pub fn name(self) -> &'static str {
        match self {
            NewScsPhase::CommitR => "commit_r",
            NewScsPhase::CommitS => "commit_s",
            NewScsPhase::Open => "open",
            NewScsPhase::Punish => "punish",
            NewScsPhase::Done => "done",
            NewScsPhase::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone)]
struct View {
    stage: NewScsPhase,
    /// A: Commit signature sent. B: Commit broadcast.
    commit_step_done: bool,
    redeem: Option<Digest>,
    open_sent: bool,
}

impl Default for View {
    fn default() -> View {
        View { stage: NewScsPhase::CommitR, commit_step_done: false, redeem: None, open_sent: false }
    }
}

pub fn output_script(ctx: &Ctx, owner: Party, h_s: Digest, h_r: Digest) -> Script {
    let root = ScriptNode::or(
        ScriptNode::and(ScriptNode::sig(ctx.public(owner), 0), ScriptNode::hashlock(h_s, SECRET_SLOT)),
        ScriptNode::and(ScriptNode::sig(ctx.public(owner.other()), 0), ScriptNode::hashlock(h_r, SECRET_SLOT)),
    );
    Script::new(root, 2).expect("static script")
}

#[derive(Debug, Clone)]
pub struct NewScsSession {
    /// `CS^A(A, B, d, t, r_A)` and `CS^B(B, A, d, t, r_B)`.
    pub cs: [CsSession; 2],
    secrets: [Vec<u8>; 2],
    pub h_s: [Digest; 2],
    pub h_r: [Digest; 2],
    pub funding: [Outpoint; 2],
    commit: Transaction,
    /// A's Commit signature, sent to B.
    inbox: Option<Signature>,
    pub commit_out: Option<Digest>,
    pub revealed: [Option<Vec<u8>>; 2],
    views: [View; 2],
}

impl NewScsSession {
    fn new(ctx: &mut Ctx, t1: [Outpoint; 2], t2: [Outpoint; 2]) -> NewScsSession {
        let secrets = [ctx.fresh_secret(), ctx.fresh_secret()];
        let r = [ctx.fresh_secret(), ctx.fresh_secret()];
        let h_s = [commitment(&secrets[0]), commitment(&secrets[1])];
        let h_r = [commitment(&r[0]), commitment(&r[1])];
        let d = ctx.params().d;
        let commit = Transaction::unsigned(
            &t2,
            Party::BOTH
                .map(|p| TxOut { value: d, script: output_script(ctx, p, h_s[index(p)], h_r[index(p)]) })
                .to_vec(),
            0,
        );
        let [r_a, r_b] = r;
        let cs = [CsSession::new(ctx, "csA", Party::A, r_a, t1[0]), CsSession::new(ctx, "csB", Party::B, r_b, t1[1])];
        NewScsSession {
            cs,
            secrets,
            h_s,
            h_r,
            funding: t2,
            commit,
            inbox: None,
            commit_out: None,
            revealed: [None, None],
            views: Default::default(),
        }
    }

    fn commit_body(&self) -> Digest {
        self.commit.body_digest()
    }

    fn output(&self, owner: Party) -> Option<Outpoint> {
        self.commit_out.map(|id| Outpoint::new(id, index(owner) as u32))
    }

    fn open_tx(&self, ctx: &Ctx, party: Party, out: Outpoint) -> Transaction {
        let tx = Transaction::unsigned(&[out], vec![pay_to(ctx.public(party), ctx.params().d)], 0);
        let sig = ctx.sign(party, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig), WitnessItem::Secret(self.secrets[index(party)].clone())])
    }

    /// Fuse^owner, built by the counterparty from the confirmed Commit and
    /// the extracted `r_owner`.
    fn fuse_tx(ctx: &Ctx, owner: Party, out: Outpoint, r: &[u8]) -> Transaction {
        let taker = owner.other();
        let tx = Transaction::unsigned(&[out], vec![pay_to(ctx.public(taker), ctx.params().d)], 0);
        let sig = ctx.sign(taker, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig), WitnessItem::Secret(r.to_vec())])
    }

    fn open_body(&self, ctx: &Ctx, party: Party) -> Option<Digest> {
        self.output(party)
            .map(|out| Transaction::unsigned(&[out], vec![pay_to(ctx.public(party), ctx.params().d)], 0).body_digest())
    }

    fn open_confirmed(&self, ctx: &Ctx, party: Party) -> bool {
        self.open_body(ctx, party).is_some_and(|b| ctx.is_confirmed(&b))
    }

    fn poll(&mut self, ctx: &Ctx) {
        for cs in &mut self.cs {
            cs.poll(&ctx.ledger);
        }
        if self.commit_out.is_none() {
            self.commit_out = ctx.ledger.confirmed_by_body(&self.commit_body()).map(|c| c.txid);
        }
        for p in Party::BOTH {
            if self.revealed[index(p)].is_none() {
                if let Some(body) = self.open_body(ctx, p) {
                    self.revealed[index(p)] = extract_secret(&ctx.ledger, &body, SECRET_SLOT).ok();
                }
            }
        }
    }

    fn quit(&mut self, party: Party) {
        self.views[index(party)].stage = NewScsPhase::Aborted;
    }

    /// Own CS.Commit done: confirmed, and the Fuse signature handled.
    fn own_cs_done(&self, ctx: &Ctx, party: Party) -> bool {
        let cs = &self.cs[index(party)];
        cs.is_committed() && (cs.signature_sent() || ctx.skips(party, AbortPoint::CsFuseSignature))
    }

    fn commit_r(&mut self, ctx: &Ctx, party: Party) {
        let (i, j) = (index(party), index(party.other()));
        let round = ctx.round();
        let deadline = ctx.params().commit_deadline();
        if self.cs[j].recipient_quit() || (self.cs[i].phase == super::CsPhase::Aborted && !self.cs[i].is_committed()) {
            self.quit(party);
        } else if self.own_cs_done(ctx, party) && self.cs[j].fuse_signature.is_some() {
            self.views[i].stage = NewScsPhase::CommitS;
        } else if round >= deadline {
            self.quit(party);
        }
    }

    fn commit_s(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        let i = index(party);
        let round = ctx.round();
        let deadline = ctx.params().commit_deadline();
        match party {
            Party::A => {
                if !self.views[i].commit_step_done && round < deadline && !ctx.skips(party, AbortPoint::CommitSignature)
                {
                    self.inbox = Some(ctx.sign_message(party, &self.commit_body()));
                    self.views[i].commit_step_done = true;
                }
            }
            Party::B => {
                if let Some(sig_a) = self.inbox.take() {
                    if round >= deadline || self.views[i].commit_step_done {
                        // too late to act on
                    } else if !verify(&ctx.public(Party::A), &self.commit_body(), &sig_a) {
                        self.quit(party);
                        return Ok(());
                    } else if !ctx.skips(party, AbortPoint::CommitBroadcast) {
                        let sig_b = ctx.sign(party, &self.commit_body());
                        let tx = self
                            .commit
                            .clone()
                            .with_witness(0, vec![WitnessItem::Sig(sig_a)])
                            .with_witness(1, vec![WitnessItem::Sig(sig_b)]);
                        ctx.broadcast(party, tx, "commit")?;
                        self.views[i].commit_step_done = true;
                    }
                }
            }
        }
        if round < deadline {
            return Ok(());
        }
        // Commit not confirmed in time.
        match party {
            Party::A if self.views[i].commit_step_done => match self.views[i].redeem {
                None => {
                    let tx = ctx.redeem_tx(party, self.funding[i]);
                    self.views[i].redeem = Some(tx.body_digest());
                    ctx.broadcast(party, tx, "redeem")?;
                }
                Some(body) if ctx.is_confirmed(&body) => self.quit(party),
                Some(_) => {}
            },
            Party::A => self.quit(party),
            Party::B => match ctx.ledger.status(&self.commit_body()) {
                Some(TxStatus::Pending) => {}
                _ => self.quit(party),
            },
        }
        Ok(())
    }

    fn open_phase(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        let (i, other) = (index(party), party.other());
        let params = ctx.params();
        let round = ctx.round();
        if !self.views[i].open_sent && !ctx.skips(party, AbortPoint::Open) {
            self.views[i].open_sent = true;
            let tx = self.open_tx(ctx, party, self.output(party).expect("committed"));
            ctx.submit(party, tx, "open")?;
        }
        let own_done = self.open_confirmed(ctx, party) || ctx.skips(party, AbortPoint::Open);
        let other_done = self.open_confirmed(ctx, other) || round + 2 * params.max_bb >= params.t;
        if own_done && other_done {
            self.open_own_cs(ctx, party)?;
        }
        if round >= params.t {
            self.views[i].stage = NewScsPhase::Punish;
            let out = self.output(other).expect("committed");
            if !self.open_confirmed(ctx, other) && ctx.ledger.is_unspent(&out) {
                if let Some(r) = self.cs[index(other)].revealed.clone() {
                    let tx = Self::fuse_tx(ctx, other, out, &r);
                    let what = format!("fuse.{}", other.label().to_lowercase());
                    ctx.submit(party, tx, &what)?;
                }
            }
        }
        Ok(())
    }

    fn open_own_cs(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        let cs = &mut self.cs[index(party)];
        if cs.is_live(&ctx.ledger) && !cs.open_sent() && !ctx.skips(party, AbortPoint::CsOpen) {
            cs.open(ctx)?;
        }
        Ok(())
    }

    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        let (i, j) = (index(party), index(party.other()));
        self.poll(ctx);
        let round = ctx.round();

        // CS^X as committer.
        if round == 0 && !ctx.skips(party, AbortPoint::CsCommit) {
            self.cs[i].commit(ctx)?;
        }
        let cs = &mut self.cs[i];
        if cs.is_committed() && !cs.signature_sent() && !ctx.skips(party, AbortPoint::CsFuseSignature) {
            cs.send_fuse_signature(ctx);
        }
        // CS^Y as recipient.
        if self.views[i].stage == NewScsPhase::CommitR {
            self.cs[j].receive_fuse_signature(round);
        }

        if self.commit_out.is_some() && self.views[i].stage < NewScsPhase::Open {
            self.views[i].stage = NewScsPhase::Open;
        }
        match self.views[i].stage {
            NewScsPhase::CommitR => self.commit_r(ctx, party),
            NewScsPhase::CommitS => self.commit_s(ctx, party)?,
            NewScsPhase::Open | NewScsPhase::Punish | NewScsPhase::Done => self.open_phase(ctx, party)?,
            NewScsPhase::Aborted => {}
        }
        if self.views[i].stage == NewScsPhase::Aborted {
            debug_assert!(self.commit_out.is_none(), "quit after Commit confirmed");
            self.open_own_cs(ctx, party)?;
        }
        self.cs[j].recipient_duty(ctx)?;
        self.poll(ctx);
        self.update_done(ctx, party);
        Ok(())
    }

    fn update_done(&mut self, ctx: &Ctx, party: Party) {
        let i = index(party);
        if !matches!(self.views[i].stage, NewScsPhase::Open | NewScsPhase::Punish) {
            return;
        }
        let outputs_spent = Party::BOTH.iter().all(|&p| self.output(p).is_some_and(|o| !ctx.ledger.is_unspent(&o)));
        let cs_settled = self.cs.iter().all(|cs| !cs.is_live(&ctx.ledger));
        if outputs_spent && cs_settled {
            self.views[i].stage = NewScsPhase::Done;
        }
    }

    pub fn phase(&self) -> NewScsPhase {
        let [a, b] = [self.views[0].stage, self.views[1].stage];
        if a == NewScsPhase::Aborted || b == NewScsPhase::Aborted {
            NewScsPhase::Aborted
        } else {
            a.min(b)
        }
    }
}

struct NewScsRun {
    session: NewScsSession,
}

impl Machine for NewScsRun {
    fn act(&mut self, ctx: &mut Ctx, party: Party) -> Result<(), ProtocolError> {
        self.session.act(ctx, party)
    }

    fn phase(&self, _: &Ctx) -> &'static str {
        self.session.phase().name()
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, ProtocolError> {
    let (mut ctx, funding) = Ctx::setup(
        ProtocolKind::NewScs,
        config,
        &[(Party::A, "fund.1"), (Party::A, "fund.2"), (Party::B, "fund.1"), (Party::B, "fund.2")],
    )?;
    let session = NewScsSession::new(&mut ctx, [funding[0], funding[2]], [funding[1], funding[3]]);
    let mut machine = NewScsRun { session };
    drive(&mut machine, &mut ctx, config.max_rounds)?;
    let phase = machine.phase(&ctx);
    let s = &machine.session;
    let commitments = BTreeMap::from([
        ("s_A".to_string(), s.h_s[0]),
        ("s_B".to_string(), s.h_s[1]),
        ("r_A".to_string(), s.h_r[0]),
        ("r_B".to_string(), s.h_r[1]),
    ]);
    let mut revealed = BTreeMap::new();
    for (name, value) in
        [("s_A", &s.revealed[0]), ("s_B", &s.revealed[1]), ("r_A", &s.cs[0].revealed), ("r_B", &s.cs[1].revealed)]
    {
        if let Some(v) = value {
            revealed.insert(name.to_string(), v.clone());
        }
    }
    Ok(ctx.finish(phase, commitments, revealed))
}
