use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{body_digest, eval_script, Outpoint, Transaction, TxOut};

/// What a UTXO view knows about an outpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinState<'a> {
    Unspent(&'a TxOut),
    Spent,
    Unknown,
}

pub trait UtxoView {
    fn coin(&self, outpoint: &Outpoint) -> CoinState<'_>;
}

/// A plain in-memory UTXO set, handy for tests and stateless checks.
#[derive(Debug, Clone, Default)]
pub struct MemoryUtxo {
    pub unspent: BTreeMap<Outpoint, TxOut>,
    pub spent: BTreeSet<Outpoint>,
}

impl MemoryUtxo {
    pub fn insert(&mut self, outpoint: Outpoint, out: TxOut) {
        self.unspent.insert(outpoint, out);
    }

    pub fn spend(&mut self, outpoint: &Outpoint) {
        if self.unspent.remove(outpoint).is_some() {
            self.spent.insert(*outpoint);
        }
    }
}

impl UtxoView for MemoryUtxo {
    fn coin(&self, outpoint: &Outpoint) -> CoinState<'_> {
        match self.unspent.get(outpoint) {
            Some(out) => CoinState::Unspent(out),
            None if self.spent.contains(outpoint) => CoinState::Spent,
            None => CoinState::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Error)]
pub enum ValidationError {
    #[error("transaction has no inputs or no outputs")]
    Malformed,
    #[error("input references an unknown outpoint")]
    UnknownInput,
    #[error("input already spent")]
    AlreadySpent,
    #[error("witness does not match the spent script's arity")]
    MalformedWitness,
    #[error("script failed for input {0}")]
    ScriptFailed(usize),
    #[error("input and output values differ")]
    ValueMismatch,
    #[error("lock time not reached")]
    LockTimeNotReached,
}

impl ValidationError {
    /// Stable short name used in traces.
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationError::Malformed => "Malformed",
            ValidationError::UnknownInput => "UnknownInput",
            ValidationError::AlreadySpent => "AlreadySpent",
            ValidationError::MalformedWitness => "MalformedWitness",
            ValidationError::ScriptFailed(_) => "ScriptFailed",
            ValidationError::ValueMismatch => "ValueMismatch",
            ValidationError::LockTimeNotReached => "LockTimeNotReached",
        }
    }
}

/// Stateless spend check. Each class of failure is checked over all inputs
/// before the next class, so the reported error is the first failing class.
pub fn validate(tx: &Transaction, utxo: &impl UtxoView, current_round: u64) -> Result<(), ValidationError> {
    if tx.inputs.is_empty() || tx.outputs.is_empty() {
        return Err(ValidationError::Malformed);
    }

    let states: Vec<CoinState<'_>> = tx.inputs.iter().map(|i| utxo.coin(&i.prevout)).collect();
    if states.iter().any(|s| matches!(s, CoinState::Unknown)) {
        return Err(ValidationError::UnknownInput);
    }
    let mut seen = BTreeSet::new();
    let duplicate = tx.inputs.iter().any(|i| !seen.insert(i.prevout));
    if duplicate || states.iter().any(|s| matches!(s, CoinState::Spent)) {
        return Err(ValidationError::AlreadySpent);
    }
    let coins: Vec<&TxOut> = states
        .into_iter()
        .map(|s| match s {
            CoinState::Unspent(out) => out,
            _ => unreachable!(),
        })
        .collect();

    for (input, coin) in tx.inputs.iter().zip(&coins) {
        let items = input.witness.iter().filter(|w| !w.is_pad()).count();
        if items != coin.script.arity() {
            return Err(ValidationError::MalformedWitness);
        }
    }

    let body = body_digest(tx);
    for (i, (input, coin)) in tx.inputs.iter().zip(&coins).enumerate() {
        match eval_script(&coin.script, &input.witness, &body) {
            Ok(true) => {}
            Ok(false) => return Err(ValidationError::ScriptFailed(i)),
            Err(_) => return Err(ValidationError::MalformedWitness),
        }
    }

    let value_in = coins.iter().try_fold(0u64, |acc, c| acc.checked_add(c.value));
    match (value_in, tx.output_value()) {
        (Some(a), Some(b)) if a == b => {}
        _ => return Err(ValidationError::ValueMismatch),
    }

    if tx.lock_time > current_round {
        return Err(ValidationError::LockTimeNotReached);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{hash, keygen, sign, KeyPair};
    use crate::txmodel::{malleate, Script, TxIn, WitnessItem};

    fn setup() -> (KeyPair, MemoryUtxo, Outpoint) {
        let k = keygen(21, "v");
        let mut utxo = MemoryUtxo::default();
        let op = Outpoint::new(hash(b"funding"), 0);
        utxo.insert(op, TxOut { value: 10, script: Script::p2pk(k.public) });
        (k, utxo, op)
    }

    fn spend(k: &KeyPair, op: Outpoint, value: u64, lock: u64) -> Transaction {
        let tx = Transaction::unsigned(&[op], vec![TxOut { value, script: Script::p2pk(k.public) }], lock);
        let sig = sign(&k.private, &tx.body_digest());
        tx.with_witness(0, vec![WitnessItem::Sig(sig)])
    }

    #[test]
    fn accepts_correct_spend() {
        let (k, utxo, op) = setup();
        assert_eq!(validate(&spend(&k, op, 10, 0), &utxo, 0), Ok(()));
    }

    #[test]
    fn unknown_and_spent_inputs() {
        let (k, mut utxo, op) = setup();
        let other = Outpoint::new(hash(b"nope"), 0);
        assert_eq!(validate(&spend(&k, other, 10, 0), &utxo, 0), Err(ValidationError::UnknownInput));
        utxo.spend(&op);
        assert_eq!(validate(&spend(&k, op, 10, 0), &utxo, 0), Err(ValidationError::AlreadySpent));
    }

    #[test]
    fn duplicate_input_is_double_spend() {
        let (k, utxo, op) = setup();
        let tx = Transaction {
            inputs: vec![TxIn { prevout: op, witness: vec![] }, TxIn { prevout: op, witness: vec![] }],
            outputs: vec![TxOut { value: 20, script: Script::p2pk(k.public) }],
            lock_time: 0,
        };
        assert_eq!(validate(&tx, &utxo, 0), Err(ValidationError::AlreadySpent));
    }

    #[test]
    fn witness_arity_and_script() {
        let (k, utxo, op) = setup();
        let tx = spend(&k, op, 10, 0);
        let mut extra = tx.clone();
        extra.inputs[0].witness.push(WitnessItem::Omitted);
        assert_eq!(validate(&extra, &utxo, 0), Err(ValidationError::MalformedWitness));
        let empty = tx.clone().with_witness(0, vec![]);
        assert_eq!(validate(&empty, &utxo, 0), Err(ValidationError::MalformedWitness));
        let wrong = tx.clone().with_witness(0, vec![WitnessItem::Secret(vec![1])]);
        assert_eq!(validate(&wrong, &utxo, 0), Err(ValidationError::ScriptFailed(0)));
    }

    #[test]
    fn value_and_lock_time() {
        let (k, utxo, op) = setup();
        assert_eq!(validate(&spend(&k, op, 9, 0), &utxo, 0), Err(ValidationError::ValueMismatch));
        let locked = spend(&k, op, 10, 5);
        assert_eq!(validate(&locked, &utxo, 4), Err(ValidationError::LockTimeNotReached));
        assert_eq!(validate(&locked, &utxo, 5), Ok(()));
    }

    #[test]
    fn check_order_reports_first_class() {
        let (k, utxo, op) = setup();
        // wrong value and unmet lock time: value is reported first
        let tx = spend(&k, op, 3, 100);
        assert_eq!(validate(&tx, &utxo, 0), Err(ValidationError::ValueMismatch));
    }

    #[test]
    fn malleated_spend_has_same_verdict() {
        let (k, utxo, op) = setup();
        for tx in [spend(&k, op, 10, 0), spend(&k, op, 9, 0), spend(&k, op, 10, 3)] {
            let m = malleate(&tx, b"pad").unwrap();
            assert_eq!(validate(&tx, &utxo, 1), validate(&m, &utxo, 1));
        }
    }

    #[test]
    fn empty_lists_are_malformed() {
        let (_, utxo, op) = setup();
        let tx = Transaction::unsigned(&[op], vec![], 0);
        assert_eq!(validate(&tx, &utxo, 0), Err(ValidationError::Malformed));
    }
}
