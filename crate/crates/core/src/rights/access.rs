//! Access logging: entries stay off chain, their fingerprints are chained,
//! and an audit recomputes each fingerprint and looks it up on chain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::records::UserId;
use crate::codec::Writer;
use crate::crypto::{KeyPair, PublicKeyRef, SignatureRecord};
use crate::hash::{digest_parts, Hash};
use crate::ledger::ChainState;
use crate::model::{fingerprint_tx, read_fingerprint, ColorTag, EntityId, Transaction};

pub const ACCESS_TAG: &str = "ior/access/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessLogEntry {
    pub who: UserId,
    pub actor: PublicKeyRef,
    /// Logical time.
    pub when: u64,
    /// Action descriptor, e.g. "read".
    pub how: String,
    pub data: EntityId,
    pub signature: Option<SignatureRecord>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccessError {
    #[error("access entry is unsigned or its signature does not verify")]
    BadSignature,
}

impl AccessLogEntry {
    pub fn new(who: UserId, actor: &KeyPair, when: u64, how: impl Into<String>, data: EntityId) -> Self {
        let mut e = AccessLogEntry { who, actor: actor.pk, when, how: how.into(), data, signature: None };
        e.signature = Some(actor.sign(&e.message()));
        e
    }

    fn message(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ACCESS_TAG.as_bytes())
            .str(&self.who.0)
            .pk(&self.actor)
            .u64(self.when)
            .str(&self.how)
            .str(&self.data.0);
        w.into_bytes()
    }

    pub fn signature_valid(&self) -> bool {
        self.signature
            .as_ref()
            .is_some_and(|s| s.signer == self.actor && s.verify(&self.message()))
    }

    /// Digest of the whole entry, signature included.
    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.raw(&self.message()).opt_sig(&self.signature);
        digest_parts(ACCESS_TAG, &[&w.into_bytes()])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditRow {
    pub who: String,
    pub when: u64,
    pub how: String,
    pub fingerprint: String,
    pub verified: bool,
}

/// Off-chain log plus the hashes of the transactions anchoring each entry.
#[derive(Clone, Debug, Default)]
pub struct AccessLog {
    entries: Vec<(AccessLogEntry, Hash)>,
}

impl AccessLog {
    /// Validates `entry`, returns the anchoring transaction (committed by
    /// `committer`, to be submitted by the caller) and keeps the payload.
    pub fn record_access(&mut self, entry: AccessLogEntry, committer: &KeyPair) -> Result<Transaction, AccessError> {
        if !entry.signature_valid() {
            return Err(AccessError::BadSignature);
        }
        let tx = fingerprint_tx(ColorTag(0), ACCESS_TAG, &entry.fingerprint(), committer);
        self.entries.push((entry, tx.hash()));
        Ok(tx)
    }

    pub fn entries(&self) -> impl Iterator<Item = &AccessLogEntry> {
        self.entries.iter().map(|(e, _)| e)
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut AccessLogEntry> {
        self.entries.iter_mut().map(|(e, _)| e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One row per entry; `verified` when the recomputed fingerprint
    /// matches the one chained on the canonical branch.
    pub fn audit(&self, chain: &ChainState) -> Vec<AuditRow> {
        self.entries
            .iter()
            .map(|(e, tx_hash)| {
                let fp = e.fingerprint();
                let chained = chain.canonical_tx(tx_hash).and_then(|tx| read_fingerprint(tx, ACCESS_TAG));
                AuditRow {
                    who: e.who.0.clone(),
                    when: e.when,
                    how: e.how.clone(),
                    fingerprint: fp.to_hex(),
                    verified: chained == Some(fp),
                }
            })
            .collect()
    }
}

pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["who", "when", "how", "fingerprint", "verified"]).expect("in-memory write");
    for r in rows {
        w.serialize((&r.who, r.when, &r.how, &r.fingerprint, r.verified)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
