//! Transactions and the two-digest identity scheme.
//!
//! A transaction is referenced by its [`txid`], the hash of the full
//! encoding including every witness. Signatures cover only the
//! [`body_digest`], the hash of the encoding with witnesses emptied. Anyone
//! relaying a transaction can therefore append padding to a witness
//! ([`malleate`]) and produce a functionally identical transaction with a
//! different txid.

mod encode;
mod script;
mod validate;

pub use encode::{decode, encode, DecodeError};
pub use script::{eval_script, Script, ScriptError, ScriptNode};
pub use validate::{validate, CoinState, MemoryUtxo, UtxoView, ValidationError};

use std::fmt;

use thiserror::Error;

use crate::crypto::{self, Digest, Signature};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outpoint {
    pub txid: Digest,
    pub index: u32,
}

impl Outpoint {
    pub fn new(txid: Digest, index: u32) -> Outpoint {
        Outpoint { txid, index }
    }
}

impl fmt::Debug for Outpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", &self.txid.to_hex()[..12], self.index)
    }
}

impl fmt::Display for Outpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum WitnessItem {
    Sig(Signature),
    Secret(Vec<u8>),
    /// An argument the spending path does not use.
    Omitted,
    /// A push/pop no-op. Never read by scripts, always part of the txid.
    Pad(Vec<u8>),
}

impl WitnessItem {
    pub fn is_pad(&self) -> bool {
        matches!(self, WitnessItem::Pad(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TxIn {
    pub prevout: Outpoint,
    pub witness: Vec<WitnessItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TxOut {
    pub value: u64,
    pub script: Script,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    /// Earliest round of inclusion; 0 means no lock.
    pub lock_time: u64,
}

impl Transaction {
    /// An unsigned transaction: every input starts with an empty witness.
    pub fn unsigned(prevouts: &[Outpoint], outputs: Vec<TxOut>, lock_time: u64) -> Transaction {
        Transaction {
            inputs: prevouts.iter().map(|&prevout| TxIn { prevout, witness: Vec::new() }).collect(),
            outputs,
            lock_time,
        }
    }

    pub fn txid(&self) -> Digest {
        txid(self)
    }

    pub fn body_digest(&self) -> Digest {
        body_digest(self)
    }

    pub fn output_value(&self) -> Option<u64> {
        self.outputs.iter().try_fold(0u64, |acc, o| acc.checked_add(o.value))
    }

    pub fn with_witness(mut self, input: usize, witness: Vec<WitnessItem>) -> Transaction {
        self.inputs[input].witness = witness;
        self
    }
}

pub fn txid(tx: &Transaction) -> Digest {
    crypto::hash(&encode(tx, true))
}

pub fn body_digest(tx: &Transaction) -> Digest {
    crypto::hash(&encode(tx, false))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalleateError {
    #[error("malleation padding must be non-empty")]
    EmptyPadding,
    #[error("transaction has no inputs")]
    NoInputs,
}

/// Appends `Pad(padding)` to the witness of input 0.
pub fn malleate(tx: &Transaction, padding: &[u8]) -> Result<Transaction, MalleateError> {
    if padding.is_empty() {
        return Err(MalleateError::EmptyPadding);
    }
    let mut out = tx.clone();
    let first = out.inputs.first_mut().ok_or(MalleateError::NoInputs)?;
    first.witness.push(WitnessItem::Pad(padding.to_vec()));
    Ok(out)
}
