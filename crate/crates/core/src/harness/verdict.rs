//! Fairness classification, computed from a trace alone.

use std::collections::BTreeMap;
use std::fmt;

use crate::adversary::Party;
use crate::txmodel::Outpoint;

use super::trace::{Detail, Owner, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classification {
    Nominal,
    PunishedDeviator,
    StuckFunds,
    Violation,
}

impl Classification {
    pub const ALL: [Classification; 4] = [
        Classification::Nominal,
        Classification::PunishedDeviator,
        Classification::StuckFunds,
        Classification::Violation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Classification::Nominal => "nominal",
            Classification::PunishedDeviator => "punished-deviator",
            Classification::StuckFunds => "stuck-funds",
            Classification::Violation => "violation",
        }
    }

    /// Outcomes that count against a protocol claiming fairness.
    pub fn is_unfair(self) -> bool {
        matches!(self, Classification::StuckFunds | Classification::Violation)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// Net balance change of A and B.
    pub deltas: [i128; 2],
    pub phase: String,
    pub classification: Classification,
    /// Every confirm balanced and the final unspent total equals the genesis total.
    pub conserved: bool,
    /// Value locked in composite outputs at the end of the run.
    pub locked: u64,
}

impl Verdict {
    pub fn delta(&self, party: Party) -> i128 {
        self.deltas[party as usize]
    }
}

/// Replays the trace's genesis and confirm records and classifies the run.
///
/// Precedence: `violation` (an honest party lost value, a deviator gained
/// value from an honest counterparty, or value was not conserved), then
/// `stuck-funds` (a composite output is still unspent and an honest party
/// had a spend rejected with `UnknownInput`), then `punished-deviator` (a
/// deviator lost value), else `nominal`.
pub fn classify(trace: &Trace) -> Verdict {
    let mut utxos: BTreeMap<Outpoint, (u64, Owner)> = BTreeMap::new();
    let mut genesis_total: u128 = 0;
    let mut initial = [0u128; 2];
    let mut balanced = true;
    let mut unknown_input = [false; 2];
    let add_outputs = |utxos: &mut BTreeMap<Outpoint, (u64, Owner)>, txid, outputs: &[(u64, Owner)]| {
        for (i, &(value, owner)) in outputs.iter().enumerate() {
            utxos.insert(Outpoint::new(txid, i as u32), (value, owner));
        }
    };
    for r in &trace.records {
        match &r.detail {
            Detail::Genesis { outputs } => {
                for &(value, owner) in outputs {
                    genesis_total += u128::from(value);
                    if let Some(p) = party_of(owner) {
                        initial[p as usize] += u128::from(value);
                    }
                }
                add_outputs(&mut utxos, r.txid, outputs);
            }
            Detail::Confirm { inputs, outputs } => {
                let mut spent: u128 = 0;
                for op in inputs {
                    match utxos.remove(op) {
                        Some((v, _)) => spent += u128::from(v),
                        None => balanced = false,
                    }
                }
                let created: u128 = outputs.iter().map(|&(v, _)| u128::from(v)).sum();
                balanced &= spent == created;
                add_outputs(&mut utxos, r.txid, outputs);
            }
            Detail::Reject { kind } if kind == "UnknownInput" => match r.party() {
                "A" => unknown_input[0] = true,
                "B" => unknown_input[1] = true,
                _ => {}
            },
            Detail::Broadcast { .. } | Detail::Reject { .. } => {}
        }
    }
    let mut last = [0u128; 2];
    let mut locked: u64 = 0;
    let mut total: u128 = 0;
    for &(value, owner) in utxos.values() {
        total += u128::from(value);
        match party_of(owner) {
            Some(p) => last[p as usize] += u128::from(value),
            None => locked += value,
        }
    }
    let conserved = balanced && total == genesis_total;
    let deltas = [last[0] as i128 - initial[0] as i128, last[1] as i128 - initial[1] as i128];
    let honest = [trace.header.party_a == "honest", trace.header.party_b == "honest"];

    let violation =
        !conserved || (0..2).any(|i| if honest[i] { deltas[i] < 0 } else { honest[1 - i] && deltas[i] > 0 });
    let stuck = locked > 0 && (0..2).any(|i| honest[i] && unknown_input[i]);
    let classification = if violation {
        Classification::Violation
    } else if stuck {
        Classification::StuckFunds
    } else if (0..2).any(|i| !honest[i] && deltas[i] < 0) {
        Classification::PunishedDeviator
    } else {
        Classification::Nominal
    };
    Verdict { deltas, phase: trace.phase.clone(), classification, conserved, locked }
}

fn party_of(owner: Owner) -> Option<Party> {
    match owner {
        Owner::A => Some(Party::A),
        Owner::B => Some(Party::B),
        Owner::Script => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::ProtocolKind;
    use crate::crypto::{hash, PublicKey};
    use crate::harness::trace::{TraceHeader, TraceRecord};

    fn trace(party_a: &str, party_b: &str, records: Vec<TraceRecord>) -> Trace {
        Trace {
            header: TraceHeader {
                protocol: ProtocolKind::Cs,
                d: 10,
                t: 12,
                max_bb: 1,
                seed: 0,
                network: "malleate=off delay=honest order=fifo".into(),
                party_a: party_a.into(),
                party_b: party_b.into(),
                key_a: PublicKey(hash(b"a")),
                key_b: PublicKey(hash(b"b")),
            },
            records,
            phase: "x".into(),
        }
    }

    fn rec(role: &str, id: &[u8], detail: Detail) -> TraceRecord {
        TraceRecord { round: 0, role: role.into(), txid: hash(id), body: hash(id), detail }
    }

    fn genesis() -> TraceRecord {
        rec("A/fund", b"g", Detail::Genesis { outputs: vec![(10, Owner::A), (10, Owner::B)] })
    }

    fn transfer(id: &[u8], from: Outpoint, to: Owner) -> TraceRecord {
        rec("A/x", id, Detail::Confirm { inputs: vec![from], outputs: vec![(10, to)] })
    }

    #[test]
    fn untouched_genesis_is_nominal() {
        let v = classify(&trace("honest", "honest", vec![genesis()]));
        assert_eq!(v.deltas, [0, 0]);
        assert_eq!(v.classification, Classification::Nominal);
        assert!(v.conserved);
    }

    #[test]
    fn deviator_paying_honest_party_is_punished() {
        let g = Outpoint::new(hash(b"g"), 0);
        let v = classify(&trace("abort_at=open", "honest", vec![genesis(), transfer(b"t", g, Owner::B)]));
        assert_eq!(v.deltas, [-10, 10]);
        assert_eq!(v.classification, Classification::PunishedDeviator);
    }

    #[test]
    fn honest_loss_is_a_violation() {
        let g = Outpoint::new(hash(b"g"), 0);
        let v = classify(&trace("honest", "abort_at=fuse", vec![genesis(), transfer(b"t", g, Owner::B)]));
        assert_eq!(v.classification, Classification::Violation);
    }

    #[test]
    fn gains_between_two_deviators_are_not_violations() {
        let g = Outpoint::new(hash(b"g"), 0);
        let v = classify(&trace("abort_at=open", "abort_at=fuse", vec![genesis(), transfer(b"t", g, Owner::B)]));
        assert_eq!(v.classification, Classification::PunishedDeviator);
        let v = classify(&trace(
            "abort_at=open",
            "honest",
            vec![genesis(), transfer(b"t", Outpoint::new(hash(b"g"), 1), Owner::A)],
        ));
        assert_eq!(v.classification, Classification::Violation);
    }

    #[test]
    fn locked_value_with_unknown_input_is_stuck() {
        let g = Outpoint::new(hash(b"g"), 1);
        let records = vec![
            genesis(),
            transfer(b"t", g, Owner::Script),
            rec("B/fuse", b"f", Detail::Reject { kind: "UnknownInput".into() }),
        ];
        // B's coins are locked: B lost them, so this is a violation first.
        assert_eq!(
            classify(&trace("withhold_secret", "honest", records.clone())).classification,
            Classification::Violation
        );
        // The same lock with a deviator's coins is stuck funds.
        let g = Outpoint::new(hash(b"g"), 0);
        let records = vec![genesis(), transfer(b"t", g, Owner::Script), records[2].clone()];
        let v = classify(&trace("withhold_secret", "honest", records));
        assert_eq!(v.classification, Classification::StuckFunds);
        assert_eq!(v.locked, 10);
    }

    #[test]
    fn unbalanced_confirm_breaks_conservation() {
        let g = Outpoint::new(hash(b"g"), 0);
        let bad = rec("A/x", b"t", Detail::Confirm { inputs: vec![g], outputs: vec![(11, Owner::A)] });
        let v = classify(&trace("honest", "honest", vec![genesis(), bad]));
        assert!(!v.conserved);
        assert_eq!(v.classification, Classification::Violation);
        let missing = transfer(b"u", Outpoint::new(hash(b"nope"), 0), Owner::A);
        assert!(!classify(&trace("honest", "honest", vec![genesis(), missing])).conserved);
    }
}
