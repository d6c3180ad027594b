//! Random transactions against random UTXO sets, shared by the property
//! and acceptance tests.

#![allow(dead_code)]

use fusesim_core::crypto::{self, hash, KeyPair, Signature};
use fusesim_core::txmodel::{MemoryUtxo, Outpoint, Script, ScriptNode, Transaction, TxIn, TxOut, WitnessItem};
use rand::Rng;

/// What a correct witness puts in each slot.
#[derive(Clone)]
enum Slot {
    Sig(KeyPair),
    Secret(Vec<u8>),
}

pub struct Case {
    pub tx: Transaction,
    pub utxo: MemoryUtxo,
    pub round: u64,
}

pub fn keys() -> Vec<KeyPair> {
    (0..4).map(|i| crypto::keygen(0xfeed, &format!("prop{i}"))).collect()
}

fn random_script(rng: &mut impl Rng, keys: &[KeyPair]) -> (Script, Vec<Slot>) {
    let k0 = keys[rng.random_range(0..keys.len())].clone();
    let k1 = keys[rng.random_range(0..keys.len())].clone();
    let secret: Vec<u8> = (0..rng.random_range(1..8)).map(|_| rng.random()).collect();
    let h = hash(&secret);
    match rng.random_range(0..3) {
        0 => (Script::p2pk(k0.public), vec![Slot::Sig(k0)]),
        1 => {
            let root = ScriptNode::and(ScriptNode::sig(k0.public, 0), ScriptNode::hashlock(h, 1));
            (Script::new(root, 2).unwrap(), vec![Slot::Sig(k0), Slot::Secret(secret)])
        }
        _ => {
            let root = ScriptNode::or(
                ScriptNode::and(ScriptNode::sig(k0.public, 0), ScriptNode::hashlock(h, 2)),
                ScriptNode::and(ScriptNode::sig(k0.public, 0), ScriptNode::sig(k1.public, 1)),
            );
            (Script::new(root, 3).unwrap(), vec![Slot::Sig(k0), Slot::Sig(k1), Slot::Secret(secret)])
        }
    }
}

fn witness_item(rng: &mut impl Rng, slot: &Slot, body: &fusesim_core::Digest) -> WitnessItem {
    let roll = rng.random_range(0..10);
    match slot {
        Slot::Sig(k) if roll < 8 => WitnessItem::Sig(crypto::sign(&k.private, body)),
        Slot::Sig(k) if roll < 9 => WitnessItem::Sig(Signature::garbage(k.public.id())),
        Slot::Secret(s) if roll < 8 => WitnessItem::Secret(s.clone()),
        Slot::Secret(_) if roll < 9 => WitnessItem::Secret(vec![rng.random()]),
        _ => WitnessItem::Omitted,
    }
}

/// A transaction that is valid often enough to exercise both verdicts and
/// every rejection class.
pub fn random_case(rng: &mut impl Rng, keys: &[KeyPair]) -> Case {
    let mut utxo = MemoryUtxo::default();
    let round = rng.random_range(0..20);
    let n_in = rng.random_range(1..4);
    let mut inputs = Vec::new();
    let mut slots = Vec::new();
    let mut in_value = 0u64;
    for _ in 0..n_in {
        let op = Outpoint::new(hash(&rng.random::<[u8; 8]>()), rng.random_range(0..3));
        let (script, s) = random_script(rng, keys);
        let value = rng.random_range(1..100);
        match rng.random_range(0..20) {
            0 => {}
            1 => {
                utxo.insert(op, TxOut { value, script: script.clone() });
                utxo.spend(&op);
            }
            _ => utxo.insert(op, TxOut { value, script: script.clone() }),
        }
        in_value += value;
        inputs.push(op);
        slots.push(s);
    }
    if n_in > 1 && rng.random_range(0..20) == 0 {
        inputs[1] = inputs[0];
    }
    let n_out = rng.random_range(1..3);
    let mut outputs = Vec::new();
    let mut left = in_value;
    for i in 0..n_out {
        let value = if i + 1 == n_out { left } else { rng.random_range(0..=left) };
        left -= value;
        let (script, _) = random_script(rng, keys);
        outputs.push(TxOut { value, script });
    }
    if rng.random_range(0..10) == 0 {
        outputs[0].value += 1;
    }
    let lock_time = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..25) };
    let mut tx = Transaction::unsigned(&inputs, outputs, lock_time);
    let body = tx.body_digest();
    for (input, slot) in tx.inputs.iter_mut().zip(&slots) {
        let mut witness: Vec<WitnessItem> = slot.iter().map(|s| witness_item(rng, s, &body)).collect();
        if rng.random_range(0..20) == 0 {
            witness.pop();
        }
        *input = TxIn { prevout: input.prevout, witness };
    }
    Case { tx, utxo, round }
}

pub fn random_padding(rng: &mut impl Rng) -> Vec<u8> {
    (0..rng.random_range(1..12)).map(|_| rng.random()).collect()
}
