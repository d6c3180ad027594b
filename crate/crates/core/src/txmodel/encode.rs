//! Canonical byte encoding.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! tx      := list(input) list(output) lock_time:u64
//! input   := txid:[32] index:u32 list(witness)
//! witness := 0x00 signer:[8] bytes(sig) | 0x01 bytes(secret) | 0x02 | 0x03 bytes(pad)
//! output  := value:u64 arity:u32 node
//! node    := 0x00 key:[32] slot:u32 | 0x01 digest:[32] slot:u32
//!          | 0x02 list(node) | 0x03 list(node)
//! list(x) := count:u32 x*
//! bytes   := len:u32 octet*
//! ```
//!
//! With witnesses excluded every input carries an empty witness list.

use thiserror::Error;

use crate::crypto::{Digest, KeyId, PublicKey, Signature};

use super::{Outpoint, Script, ScriptNode, Transaction, TxIn, TxOut, WitnessItem};

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("length exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len());
    out.extend_from_slice(b);
}

fn put_node(out: &mut Vec<u8>, node: &ScriptNode) {
    match node {
        ScriptNode::CheckSig { key, slot } => {
            out.push(0x00);
            out.extend_from_slice(key.0.as_bytes());
            put_u32(out, *slot);
        }
        ScriptNode::CheckHash { expected, slot } => {
            out.push(0x01);
            out.extend_from_slice(expected.as_bytes());
            put_u32(out, *slot);
        }
        ScriptNode::And(children) | ScriptNode::Or(children) => {
            out.push(if matches!(node, ScriptNode::And(_)) { 0x02 } else { 0x03 });
            put_u32(out, children.len());
            for c in children {
                put_node(out, c);
            }
        }
    }
}

fn put_witness(out: &mut Vec<u8>, item: &WitnessItem) {
    match item {
        WitnessItem::Sig(sig) => {
            out.push(0x00);
            out.extend_from_slice(&sig.signer.0);
            put_bytes(out, &sig.bytes);
        }
        WitnessItem::Secret(x) => {
            out.push(0x01);
            put_bytes(out, x);
        }
        WitnessItem::Omitted => out.push(0x02),
        WitnessItem::Pad(p) => {
            out.push(0x03);
            put_bytes(out, p);
        }
    }
}

pub fn encode(tx: &Transaction, include_witnesses: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    put_u32(&mut out, tx.inputs.len());
    for input in &tx.inputs {
        out.extend_from_slice(input.prevout.txid.as_bytes());
        out.extend_from_slice(&input.prevout.index.to_le_bytes());
        if include_witnesses {
            put_u32(&mut out, input.witness.len());
            for item in &input.witness {
                put_witness(&mut out, item);
            }
        } else {
            put_u32(&mut out, 0);
        }
    }
    put_u32(&mut out, tx.outputs.len());
    for output in &tx.outputs {
        out.extend_from_slice(&output.value.to_le_bytes());
        put_u32(&mut out, output.script.arity());
        put_node(&mut out, output.script.root());
    }
    out.extend_from_slice(&tx.lock_time.to_le_bytes());
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("unknown tag {tag:#04x} at offset {offset}")]
    BadTag { tag: u8, offset: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid script: {0}")]
    Script(#[from] super::ScriptError),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(DecodeError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn node(&mut self) -> Result<ScriptNode, DecodeError> {
        let offset = self.pos;
        match self.u8()? {
            0x00 => Ok(ScriptNode::CheckSig { key: PublicKey(self.digest()?), slot: self.u32()? as usize }),
            0x01 => Ok(ScriptNode::CheckHash { expected: self.digest()?, slot: self.u32()? as usize }),
            tag @ (0x02 | 0x03) => {
                let n = self.u32()?;
                let children = (0..n).map(|_| self.node()).collect::<Result<Vec<_>, _>>()?;
                Ok(if tag == 0x02 { ScriptNode::And(children) } else { ScriptNode::Or(children) })
            }
            tag => Err(DecodeError::BadTag { tag, offset }),
        }
    }

    fn witness(&mut self) -> Result<WitnessItem, DecodeError> {
        let offset = self.pos;
        match self.u8()? {
            0x00 => {
                let signer = KeyId(self.take(8)?.try_into().unwrap());
                Ok(WitnessItem::Sig(Signature { signer, bytes: self.bytes()? }))
            }
            0x01 => Ok(WitnessItem::Secret(self.bytes()?)),
            0x02 => Ok(WitnessItem::Omitted),
            0x03 => Ok(WitnessItem::Pad(self.bytes()?)),
            tag => Err(DecodeError::BadTag { tag, offset }),
        }
    }
}

/// Inverse of `encode(tx, true)`.
pub fn decode(buf: &[u8]) -> Result<Transaction, DecodeError> {
    let mut r = Reader { buf, pos: 0 };
    let n_in = r.u32()?;
    let mut inputs = Vec::new();
    for _ in 0..n_in {
        let txid = r.digest()?;
        let index = r.u32()?;
        let n_w = r.u32()?;
        let witness = (0..n_w).map(|_| r.witness()).collect::<Result<Vec<_>, _>>()?;
        inputs.push(TxIn { prevout: Outpoint { txid, index }, witness });
    }
    let n_out = r.u32()?;
    let mut outputs = Vec::new();
    for _ in 0..n_out {
        let value = r.u64()?;
        let arity = r.u32()? as usize;
        let root = r.node()?;
        outputs.push(TxOut { value, script: Script::new(root, arity)? });
    }
    let lock_time = r.u64()?;
    if r.pos != buf.len() {
        return Err(DecodeError::Trailing(buf.len() - r.pos));
    }
    Ok(Transaction { inputs, outputs, lock_time })
}
