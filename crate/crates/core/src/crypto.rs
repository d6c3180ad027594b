//! Hashing and an idealized deterministic signature scheme.
//!
//! Signatures commit to a [`Digest`] only. Callers sign the witness-stripped
//! body digest of a transaction, so nothing placed in a witness is ever
//! covered by a signature. That is the whole malleability gap this crate
//! models.
//!
//! The scheme is `sig = H(tag || private || digest)`. Verification looks the
//! private part up in a process-wide registry that [`keygen`] populates.
//! Registration is idempotent because key generation is deterministic, so
//! concurrent simulations may share the registry freely.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use sha2::{Digest as _, Sha256};

const KEY_TAG: &[u8] = b"fusesim/key";
const PUB_TAG: &[u8] = b"fusesim/pub";
const SIG_TAG: &[u8] = b"fusesim/sig";

/// Length of every digest, signature and key handle in bytes.
pub const DIGEST_LEN: usize = 32;

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Lowercase hex, 64 characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Short identifier of a key pair, the first 8 bytes of its public part.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub [u8; 8]);

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Verification handle. Scripts reference keys by this value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub Digest);

impl PublicKey {
    pub fn id(&self) -> KeyId {
        let mut id = [0u8; 8];
        id.copy_from_slice(&self.0 .0[..8]);
        KeyId(id)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.id())
    }
}

/// Signing handle. Deliberately not `Debug`-printable in full.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey(Digest);

impl PrivateKey {
    pub fn public(&self) -> PublicKey {
        PublicKey(hash_parts(&[PUB_TAG, self.0.as_bytes()]))
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub id: KeyId,
    pub public: PublicKey,
    pub private: PrivateKey,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub signer: KeyId,
    pub bytes: Vec<u8>,
}

impl Signature {
    /// A signature that verifies against nothing.
    pub fn garbage(signer: KeyId) -> Signature {
        Signature { signer, bytes: vec![0xde, 0xad, 0xbe, 0xef] }
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}:{})", self.signer, hex::encode(&self.bytes[..self.bytes.len().min(6)]))
    }
}

fn registry() -> &'static RwLock<HashMap<PublicKey, PrivateKey>> {
    static REGISTRY: OnceLock<RwLock<HashMap<PublicKey, PrivateKey>>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Derives a key pair from `(seed, label)` and registers it for verification.
pub fn keygen(seed: u64, label: &str) -> KeyPair {
    let private = PrivateKey(hash_parts(&[KEY_TAG, &seed.to_le_bytes(), label.as_bytes()]));
    let public = private.public();
    registry().write().expect("key registry poisoned").entry(public).or_insert_with(|| private.clone());
    KeyPair { id: public.id(), public, private }
}

pub fn sign(private: &PrivateKey, digest: &Digest) -> Signature {
    let bytes = hash_parts(&[SIG_TAG, private.0.as_bytes(), digest.as_bytes()]);
    Signature { signer: private.public().id(), bytes: bytes.0.to_vec() }
}

/// Malformed or unknown-key signatures verify as `false`.
pub fn verify(public: &PublicKey, digest: &Digest, sig: &Signature) -> bool {
    if sig.signer != public.id() || sig.bytes.len() != DIGEST_LEN {
        return false;
    }
    let registry = registry().read().expect("key registry poisoned");
    match registry.get(public) {
        Some(private) => sign(private, digest).bytes == sig.bytes,
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keygen_is_deterministic() {
        assert_eq!(keygen(7, "A"), keygen(7, "A"));
    }

    #[test]
    fn distinct_labels_give_distinct_ids() {
        assert_ne!(keygen(7, "A").id, keygen(7, "B").id);
    }

    #[test]
    fn distinct_seeds_give_distinct_ids() {
        // Independent oracle: the raw seed||label preimages differ, so their
        // SHA-256 outputs differ, and so must the derived ids.
        let pre7 = [&7u64.to_le_bytes()[..], b"A"].concat();
        let pre8 = [&8u64.to_le_bytes()[..], b"A"].concat();
        assert_ne!(hash(&pre7), hash(&pre8));
        assert_ne!(keygen(7, "A").id, keygen(8, "A").id);
    }

    #[test]
    fn hash_vectors() {
        // FIPS 180-2 test vectors.
        assert_eq!(hash(b"").to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(hash(b"abc").to_hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(hash(b"").as_bytes().len(), 32);
        assert_eq!(hash(b"x"), hash(b"x"));
        assert_eq!(hash_parts(&[b"a", b"bc"]), hash(b"abc"));
    }

    #[test]
    fn sign_verify_binding() {
        let k = keygen(1, "k");
        let k2 = keygen(1, "k2");
        let d = hash(b"d");
        let d2 = hash(b"d2");
        let sig = sign(&k.private, &d);
        assert!(verify(&k.public, &d, &sig));
        assert!(!verify(&k2.public, &d, &sig));
        assert!(!verify(&k.public, &d2, &sig));
        assert_eq!(sig, sign(&k.private, &d));
    }

    #[test]
    fn malformed_signatures_are_rejected() {
        let k = keygen(1, "k");
        let d = hash(b"d");
        let empty = Signature { signer: k.id, bytes: vec![] };
        assert!(!verify(&k.public, &d, &empty));
        assert!(!verify(&k.public, &d, &Signature::garbage(k.id)));
        let mut flipped = sign(&k.private, &d);
        flipped.bytes[0] ^= 1;
        assert!(!verify(&k.public, &d, &flipped));
    }

    #[test]
    fn exhaustive_binding_over_sampled_keys() {
        let keys: Vec<_> = (0..4).map(|i| keygen(99, &format!("k{i}"))).collect();
        let digests: Vec<_> = (0..4u8).map(|i| hash(&[i])).collect();
        for (ki, k) in keys.iter().enumerate() {
            for (di, d) in digests.iter().enumerate() {
                let sig = sign(&k.private, d);
                for (kj, k2) in keys.iter().enumerate() {
                    for (dj, d2) in digests.iter().enumerate() {
                        assert_eq!(verify(&k2.public, d2, &sig), ki == kj && di == dj);
                    }
                }
            }
        }
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = hash(b"round");
        assert_eq!(d.to_hex().len(), 64);
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("zz"), None);
    }
}
