//! Boolean output scripts over signature and hash-preimage checks.

use thiserror::Error;

use crate::crypto::{self, Digest, PublicKey};

use super::WitnessItem;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ScriptNode {
    /// `witness[slot]` is a valid signature by `key` over the body digest.
    CheckSig {
        key: PublicKey,
        slot: usize,
    },
    /// `witness[slot]` is a secret whose hash equals `expected`.
    CheckHash {
        expected: Digest,
        slot: usize,
    },
    And(Vec<ScriptNode>),
    Or(Vec<ScriptNode>),
}

impl ScriptNode {
    pub fn sig(key: PublicKey, slot: usize) -> ScriptNode {
        ScriptNode::CheckSig { key, slot }
    }

    pub fn hashlock(expected: Digest, slot: usize) -> ScriptNode {
        ScriptNode::CheckHash { expected, slot }
    }

    pub fn and(a: ScriptNode, b: ScriptNode) -> ScriptNode {
        ScriptNode::And(vec![a, b])
    }

    pub fn or(a: ScriptNode, b: ScriptNode) -> ScriptNode {
        ScriptNode::Or(vec![a, b])
    }

    fn max_slot(&self) -> usize {
        match self {
            ScriptNode::CheckSig { slot, .. } | ScriptNode::CheckHash { slot, .. } => *slot,
            ScriptNode::And(c) | ScriptNode::Or(c) => c.iter().map(Self::max_slot).max().unwrap_or(0),
        }
    }

    fn check(&self, arity: usize) -> Result<(), ScriptError> {
        match self {
            ScriptNode::CheckSig { slot, .. } | ScriptNode::CheckHash { slot, .. } => {
                if *slot >= arity {
                    return Err(ScriptError::SlotNotDeclared { slot: *slot, arity });
                }
                Ok(())
            }
            ScriptNode::And(c) | ScriptNode::Or(c) => {
                if c.len() < 2 {
                    return Err(ScriptError::TooFewChildren(c.len()));
                }
                c.iter().try_for_each(|n| n.check(arity))
            }
        }
    }

    fn eval(&self, items: &[&WitnessItem], body: &Digest) -> bool {
        match self {
            ScriptNode::CheckSig { key, slot } => match items[*slot] {
                WitnessItem::Sig(sig) => crypto::verify(key, body, sig),
                _ => false,
            },
            ScriptNode::CheckHash { expected, slot } => match items[*slot] {
                WitnessItem::Secret(x) => crypto::hash(x) == *expected,
                _ => false,
            },
            ScriptNode::And(c) => c.iter().all(|n| n.eval(items, body)),
            ScriptNode::Or(c) => c.iter().any(|n| n.eval(items, body)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Script {
    root: ScriptNode,
    arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("slot {slot} not declared (arity {arity})")]
    SlotNotDeclared { slot: usize, arity: usize },
    #[error("combinator needs at least two children, got {0}")]
    TooFewChildren(usize),
    #[error("witness has {have} non-padding items, script reads slot {slot}")]
    SlotOutOfRange { slot: usize, have: usize },
}

impl Script {
    pub fn new(root: ScriptNode, arity: usize) -> Result<Script, ScriptError> {
        root.check(arity)?;
        Ok(Script { root, arity })
    }

    /// Smallest arity that declares every slot the tree references.
    pub fn with_minimal_arity(root: ScriptNode) -> Result<Script, ScriptError> {
        let arity = root.max_slot() + 1;
        Script::new(root, arity)
    }

    /// Pay-to-key: a single signature check in slot 0.
    pub fn p2pk(key: PublicKey) -> Script {
        Script { root: ScriptNode::sig(key, 0), arity: 1 }
    }

    pub fn root(&self) -> &ScriptNode {
        &self.root
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// The key of a pay-to-key script. Composite scripts have no owner.
    pub fn owner(&self) -> Option<&PublicKey> {
        match (&self.root, self.arity) {
            (ScriptNode::CheckSig { key, .. }, 1) => Some(key),
            _ => None,
        }
    }
}

/// Evaluates `script` against `witness`; every `Pad` item is dropped first.
pub fn eval_script(script: &Script, witness: &[WitnessItem], body: &Digest) -> Result<bool, ScriptError> {
    let items: Vec<&WitnessItem> = witness.iter().filter(|w| !w.is_pad()).collect();
    if items.len() < script.arity {
        return Err(ScriptError::SlotOutOfRange { slot: script.arity - 1, have: items.len() });
    }
    Ok(script.root.eval(&items, body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{hash, keygen, sign};

    fn cs_commit_script(c: PublicKey, r: PublicKey, h: Digest) -> Script {
        Script::new(
            ScriptNode::or(
                ScriptNode::and(ScriptNode::sig(c, 0), ScriptNode::hashlock(h, 2)),
                ScriptNode::and(ScriptNode::sig(c, 0), ScriptNode::sig(r, 1)),
            ),
            3,
        )
        .unwrap()
    }

    #[test]
    fn cs_commit_branches() {
        let c = keygen(3, "C");
        let r = keygen(3, "R");
        let s = b"committed secret".to_vec();
        let script = cs_commit_script(c.public, r.public, hash(&s));
        let body = hash(b"open body");

        let open = [WitnessItem::Sig(sign(&c.private, &body)), WitnessItem::Omitted, WitnessItem::Secret(s.clone())];
        assert_eq!(eval_script(&script, &open, &body), Ok(true));

        let fuse = [
            WitnessItem::Sig(sign(&c.private, &body)),
            WitnessItem::Sig(sign(&r.private, &body)),
            WitnessItem::Omitted,
        ];
        assert_eq!(eval_script(&script, &fuse, &body), Ok(true));

        let nothing = [WitnessItem::Omitted, WitnessItem::Omitted, WitnessItem::Secret(b"wrong".to_vec())];
        assert_eq!(eval_script(&script, &nothing, &body), Ok(false));

        // signature over a different body
        let other = hash(b"other");
        assert_eq!(eval_script(&script, &open, &other), Ok(false));
    }

    #[test]
    fn pads_are_ignored_wherever_they_sit() {
        let c = keygen(3, "C");
        let body = hash(b"b");
        let script = Script::p2pk(c.public);
        let w = [WitnessItem::Pad(vec![1, 2]), WitnessItem::Sig(sign(&c.private, &body)), WitnessItem::Pad(vec![3])];
        assert_eq!(eval_script(&script, &w, &body), Ok(true));
    }

    #[test]
    fn short_witness_is_structural_error() {
        let c = keygen(3, "C");
        let script = Script::p2pk(c.public);
        let err = eval_script(&script, &[WitnessItem::Pad(vec![0])], &hash(b"")).unwrap_err();
        assert_eq!(err, ScriptError::SlotOutOfRange { slot: 0, have: 0 });
    }

    #[test]
    fn construction_checks() {
        let c = keygen(3, "C");
        assert!(matches!(
            Script::new(ScriptNode::sig(c.public, 1), 1),
            Err(ScriptError::SlotNotDeclared { slot: 1, arity: 1 })
        ));
        assert!(matches!(
            Script::new(ScriptNode::And(vec![ScriptNode::sig(c.public, 0)]), 1),
            Err(ScriptError::TooFewChildren(1))
        ));
        let s = Script::with_minimal_arity(ScriptNode::and(
            ScriptNode::sig(c.public, 0),
            ScriptNode::hashlock(hash(b""), 3),
        ))
        .unwrap();
        assert_eq!(s.arity(), 4);
        assert_eq!(Script::p2pk(c.public).owner(), Some(&c.public));
        assert_eq!(s.owner(), None);
    }
}
