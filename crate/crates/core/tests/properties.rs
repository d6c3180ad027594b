mod support;

use std::collections::BTreeSet;

use fusesim_core::adversary::{
    on_broadcast, AbortPoint, ConflictOrder, DelayRule, Malleation, NetworkStrategy, Party, PartyStrategy, ProtocolKind,
};
use fusesim_core::chain::TraceKind;
use fusesim_core::crypto::hash;
use fusesim_core::txmodel::{decode, encode, eval_script, validate, Script, ScriptNode, WitnessItem};
use fusesim_core::{body_digest, classify, malleate, run_scenario, txid, ChainParams, Scenario, Trace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn case(seed: u64) -> support::Case {
    support::random_case(&mut ChaCha20Rng::seed_from_u64(seed), &support::keys())
}

fn network() -> impl Strategy<Value = NetworkStrategy> {
    (1u64..=2, any::<bool>(), prop::collection::vec(1u64..=2, 1..5), any::<bool>(), 0u8..3).prop_map(
        |(m, mall, table, lifo, delay)| {
            let malleation = if mall { Malleation::All } else { Malleation::Off };
            let delay = match delay {
                0 => DelayRule::Honest,
                1 => DelayRule::Max,
                _ => DelayRule::Table(table.into_iter().map(|k| k.min(m)).collect()),
            };
            let order = if lifo { ConflictOrder::Lifo } else { ConflictOrder::Fifo };
            NetworkStrategy::new(malleation, delay, order, m).unwrap()
        },
    )
}

fn party(p: Party) -> impl Strategy<Value = PartyStrategy> {
    (0usize..AbortPoint::ALL.len() + 3).prop_map(move |i| match i {
        i if i < AbortPoint::ALL.len() => PartyStrategy::abort(p, AbortPoint::ALL[i]),
        i if i == AbortPoint::ALL.len() => PartyStrategy::withholding(p),
        i if i == AbortPoint::ALL.len() + 1 => PartyStrategy::bad_signature(p),
        _ => PartyStrategy::honest(p),
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        prop::sample::select(ProtocolKind::ALL.to_vec()),
        network(),
        party(Party::A),
        party(Party::B),
        any::<u64>(),
        1u64..6,
        0u64..4,
    )
        .prop_map(|(protocol, net, a, b, seed, d, extra_t)| {
            let m = net.max_bb();
            let params = ChainParams::new(m, d, 3 * m + 6 + extra_t).unwrap();
            Scenario::new(protocol, params, net, seed).with_parties(a, b)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn encoding_round_trips(seed in any::<u64>(), pad in prop::collection::vec(any::<u8>(), 1..16)) {
        let c = case(seed);
        prop_assert_eq!(decode(&encode(&c.tx, true)).unwrap(), c.tx.clone());
        let m = malleate(&c.tx, &pad).unwrap();
        prop_assert_eq!(decode(&encode(&m, true)).unwrap(), m);
    }

    #[test]
    fn malleation_keeps_body_and_verdict(seed in any::<u64>(), pad in prop::collection::vec(any::<u8>(), 1..16)) {
        let c = case(seed);
        let m = malleate(&c.tx, &pad).unwrap();
        prop_assert_eq!(body_digest(&m), body_digest(&c.tx));
        prop_assert_ne!(txid(&m), txid(&c.tx));
        prop_assert_eq!(validate(&m, &c.utxo, c.round), validate(&c.tx, &c.utxo, c.round));
    }

    #[test]
    fn or_is_commutative(seed in any::<u64>(), a in any::<[u8; 4]>(), b in any::<[u8; 4]>()) {
        let c = case(seed);
        let k = support::keys();
        let left = ScriptNode::and(ScriptNode::sig(k[0].public, 0), ScriptNode::hashlock(hash(&a), 1));
        let right = ScriptNode::hashlock(hash(&b), 2);
        let ab = Script::new(ScriptNode::or(left.clone(), right.clone()), 3).unwrap();
        let ba = Script::new(ScriptNode::or(right, left), 3).unwrap();
        let body = body_digest(&c.tx);
        let choose = |x: u64, s: &[u8; 4]| if x & 1 == 0 { WitnessItem::Secret(s.to_vec()) } else { WitnessItem::Omitted };
        let witness = vec![
            c.tx.inputs[0].witness.first().cloned().unwrap_or(WitnessItem::Omitted),
            choose(seed >> 1, &a),
            choose(seed >> 2, &b),
        ];
        prop_assert_eq!(eval_script(&ab, &witness, &body), eval_script(&ba, &witness, &body));
    }

    #[test]
    fn adversary_never_changes_the_body(seed in any::<u64>(), net in network(), seq in any::<u64>()) {
        let c = case(seed);
        let (out, delay) = on_broadcast(&net, &c.tx, seed, seq);
        prop_assert_eq!(body_digest(&out), body_digest(&c.tx));
        prop_assert!((1..=net.max_bb()).contains(&delay));
        if net.malleates() {
            prop_assert_ne!(txid(&out), txid(&c.tx));
        } else {
            prop_assert_eq!(out, c.tx.clone());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn any_run_is_consistent(s in scenario()) {
        let r = run_scenario(&s).unwrap();
        let ledger = &r.outcome.ledger;
        prop_assert!(r.verdict.conserved && ledger.conserves_value());

        let mut inputs = BTreeSet::new();
        let mut bodies = BTreeSet::new();
        for c in ledger.confirmed() {
            prop_assert!(bodies.insert(c.body), "two confirmations share a body");
            for i in &c.tx.inputs {
                prop_assert!(inputs.insert(i.prevout), "outpoint spent twice");
            }
        }
        for e in ledger.events() {
            if let TraceKind::Broadcast { delay, .. } = e.kind {
                prop_assert!((1..=s.params.max_bb).contains(&delay));
            }
        }
        if s.protocol != ProtocolKind::ScsLegacy && s.a.is_honest() {
            prop_assert!(r.verdict.delta(Party::A) >= 0, "honest A lost value: {:?}", r.verdict);
        }
        if s.protocol != ProtocolKind::ScsLegacy && s.b.is_honest() {
            prop_assert!(r.verdict.delta(Party::B) >= 0, "honest B lost value: {:?}", r.verdict);
        }
        let text = r.trace.to_records();
        let parsed = Trace::parse_records(&text).unwrap();
        prop_assert_eq!(classify(&parsed), r.verdict.clone());
        prop_assert_eq!(run_scenario(&s).unwrap().trace.to_records(), text);
    }
}
