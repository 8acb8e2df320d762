//! Keys and the VRF-style sign/verify contract.
//!
//! Two backends share one interface:
//!
//! * [`Scheme::Ed25519Vrf`]: the proof is a deterministic Ed25519 signature
//!   over the input and the output hash is the digest of that proof. Ed25519
//!   signatures are deterministic, so `vrf_sign` is a pure function of
//!   `(x, sk)`, and only the secret-key holder can produce a proof that
//!   verifies under `pk`.
//! * [`Scheme::KeyedDigest`]: a fast test scheme where hash and proof are
//!   digests keyed by the public key. It satisfies the verify contract
//!   against wrong-key forgeries but offers no unforgeability against a
//!   party that knows `pk`.
//!
//! A [`PublicKeyRef`] carries its scheme, so records signed under either
//! backend verify side by side.

use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::hash::{digest_parts, Hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Ed25519Vrf,
    KeyedDigest,
}

impl Scheme {
    pub fn tag(self) -> u8 {
        match self {
            Scheme::Ed25519Vrf => 1,
            Scheme::KeyedDigest => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Scheme> {
        match tag {
            1 => Some(Scheme::Ed25519Vrf),
            2 => Some(Scheme::KeyedDigest),
            _ => None,
        }
    }
}

/// Public half of a key, tagged with the scheme that produced it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKeyRef {
    pub scheme: Scheme,
    pub key: [u8; 32],
}

impl PublicKeyRef {
    pub fn to_hex(&self) -> String {
        let mut out = hex::encode([self.scheme.tag()]);
        out.push_str(&hex::encode(self.key));
        out
    }

    pub fn from_hex(s: &str) -> Option<PublicKeyRef> {
        let bytes = hex::decode(s).ok()?;
        if bytes.len() != 33 {
            return None;
        }
        let scheme = Scheme::from_tag(bytes[0])?;
        let key: [u8; 32] = bytes[1..].try_into().ok()?;
        Some(PublicKeyRef { scheme, key })
    }
}

impl fmt::Debug for PublicKeyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pk({})", hex::encode(&self.key[..6]))
    }
}

impl fmt::Display for PublicKeyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for PublicKeyRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKeyRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKeyRef::from_hex(&s).ok_or_else(|| serde::de::Error::custom("malformed public key"))
    }
}

/// Secret key material. Never serialized into any on-chain structure.
#[derive(Clone)]
pub struct SecretKey {
    scheme: Scheme,
    seed: [u8; 32],
}

impl SecretKey {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn public(&self) -> PublicKeyRef {
        let key = match self.scheme {
            Scheme::Ed25519Vrf => SigningKey::from_bytes(&self.seed).verifying_key().to_bytes(),
            Scheme::KeyedDigest => digest_parts("ior/kd/pk", &[&self.seed]).0,
        };
        PublicKeyRef { scheme: self.scheme, key }
    }

    /// Hex of the seed, for key fixture files only.
    pub fn seed_hex(&self) -> String {
        hex::encode(self.seed)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub sk: SecretKey,
    pub pk: PublicKeyRef,
}

impl KeyPair {
    pub fn sign(&self, msg: &[u8]) -> SignatureRecord {
        SignatureRecord {
            signer: self.pk,
            output: vrf_sign(msg, &self.sk),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct VrfOutput {
    pub hash: Hash,
    #[serde(with = "hex_bytes")]
    pub proof: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub signer: PublicKeyRef,
    pub output: VrfOutput,
}

impl SignatureRecord {
    pub fn verify(&self, msg: &[u8]) -> bool {
        vrf_verify(&self.signer, msg, &self.output)
    }
}

/// Deterministic keypair from a 32-byte seed, using the default scheme.
pub fn keygen(seed: &[u8; 32]) -> KeyPair {
    keygen_with(Scheme::default(), seed)
}

/// Seed for a named key, derived from a scenario-wide master seed.
pub fn seed_from_label(master: u64, label: &str) -> [u8; 32] {
    digest_parts("ior/seed", &[&master.to_le_bytes(), label.as_bytes()]).0
}

pub fn keygen_with(scheme: Scheme, seed: &[u8; 32]) -> KeyPair {
    let sk = SecretKey { scheme, seed: *seed };
    let pk = sk.public();
    KeyPair { sk, pk }
}

pub fn vrf_sign(x: &[u8], sk: &SecretKey) -> VrfOutput {
    match sk.scheme {
        Scheme::Ed25519Vrf => {
            let signing = SigningKey::from_bytes(&sk.seed);
            let proof = signing.sign(x).to_bytes().to_vec();
            let hash = digest_parts("ior/vrf/ed25519", &[&proof]);
            VrfOutput { hash, proof }
        }
        Scheme::KeyedDigest => {
            let pk = sk.public();
            let hash = digest_parts("ior/kd/hash", &[&pk.key, x]);
            let proof = digest_parts("ior/kd/proof", &[&pk.key, x, &hash.0]).0.to_vec();
            VrfOutput { hash, proof }
        }
    }
}

pub fn vrf_verify(pk: &PublicKeyRef, x: &[u8], out: &VrfOutput) -> bool {
    match pk.scheme {
        Scheme::Ed25519Vrf => {
            let Ok(proof) = <[u8; 64]>::try_from(out.proof.as_slice()) else {
                return false;
            };
            if digest_parts("ior/vrf/ed25519", &[&proof]) != out.hash {
                return false;
            }
            let Ok(vk) = VerifyingKey::from_bytes(&pk.key) else {
                return false;
            };
            vk.verify_strict(x, &Signature::from_bytes(&proof)).is_ok()
        }
        Scheme::KeyedDigest => {
            let hash = digest_parts("ior/kd/hash", &[&pk.key, x]);
            let proof = digest_parts("ior/kd/proof", &[&pk.key, x, &hash.0]);
            hash == out.hash && out.proof.as_slice() == proof.0.as_slice()
        }
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seed(b: u8) -> [u8; 32] {
        [b; 32]
    }

    #[test]
    fn keygen_is_deterministic() {
        assert_eq!(keygen(&seed(1)).pk, keygen(&seed(1)).pk);
        assert_ne!(keygen(&seed(1)).pk, keygen(&seed(2)).pk);
        let zero = keygen(&[0u8; 32]);
        let out = vrf_sign(b"x", &zero.sk);
        assert!(vrf_verify(&zero.pk, b"x", &out));
    }

    #[test]
    fn sign_is_deterministic_and_key_separated() {
        for scheme in [Scheme::Ed25519Vrf, Scheme::KeyedDigest] {
            let k1 = keygen_with(scheme, &seed(7));
            let k2 = keygen_with(scheme, &seed(8));
            let a = vrf_sign(b"message", &k1.sk);
            assert_eq!(a, vrf_sign(b"message", &k1.sk));
            assert_ne!(a.hash, vrf_sign(b"message", &k2.sk).hash);
            assert!(vrf_verify(&k1.pk, b"message", &a));
            assert!(!vrf_verify(&k2.pk, b"message", &a));
        }
    }

    #[test]
    fn tampered_input_and_cross_message_proofs_fail() {
        for scheme in [Scheme::Ed25519Vrf, Scheme::KeyedDigest] {
            let k = keygen_with(scheme, &seed(3));
            let out = vrf_sign(b"hello", &k.sk);
            assert!(!vrf_verify(&k.pk, b"hellp", &out));

            let other = vrf_sign(b"other", &k.sk);
            let spliced = VrfOutput { hash: out.hash, proof: other.proof.clone() };
            assert!(!vrf_verify(&k.pk, b"hello", &spliced));
            assert!(!vrf_verify(&k.pk, b"hello", &other));
        }
    }

    #[test]
    fn malformed_proofs_are_rejected() {
        let k = keygen(&seed(4));
        let mut out = vrf_sign(b"m", &k.sk);
        out.proof.truncate(10);
        assert!(!vrf_verify(&k.pk, b"m", &out));
        let bogus = PublicKeyRef { scheme: Scheme::Ed25519Vrf, key: [0xff; 32] };
        assert!(!vrf_verify(&bogus, b"m", &vrf_sign(b"m", &k.sk)));
    }

    #[test]
    fn pk_hex_roundtrip() {
        let k = keygen_with(Scheme::KeyedDigest, &seed(9));
        assert_eq!(PublicKeyRef::from_hex(&k.pk.to_hex()), Some(k.pk));
        assert_eq!(PublicKeyRef::from_hex("09"), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn completeness(seed in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..128), kd in any::<bool>()) {
            let scheme = if kd { Scheme::KeyedDigest } else { Scheme::Ed25519Vrf };
            let k = keygen_with(scheme, &seed);
            prop_assert!(vrf_verify(&k.pk, &msg, &vrf_sign(&msg, &k.sk)));
        }
    }
}
