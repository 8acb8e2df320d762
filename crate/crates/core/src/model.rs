//! Transactions, blocks and UTXOs shared by every other module.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Writer};
use crate::crypto::{KeyPair, PublicKeyRef, SignatureRecord};
use crate::hash::{digest, digest_parts, Hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub u32);

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Scene/domain tag of the dyeing model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColorTag(pub u16);

impl ColorTag {
    /// Cross-chain recycle and mint transactions.
    pub const BRIDGE: ColorTag = ColorTag(0xfff0);
    /// Rollup proofs committed on a parent chain.
    pub const ROLLUP: ColorTag = ColorTag(0xfff1);

    pub fn is_reserved(self) -> bool {
        self.0 >= 0xfff0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Self {
        EntityId(s.into())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtxoKind {
    Ownership,
    Usage,
    Process,
}

impl UtxoKind {
    pub fn tag(self) -> u8 {
        match self {
            UtxoKind::Ownership => 0,
            UtxoKind::Usage => 1,
            UtxoKind::Process => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(UtxoKind::Ownership),
            1 => Some(UtxoKind::Usage),
            2 => Some(UtxoKind::Process),
            _ => None,
        }
    }
}

/// An unspent output. `value` counts authorizations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utxo {
    pub id: Hash,
    pub owner: PublicKeyRef,
    pub value: u64,
    pub kind: UtxoKind,
    pub entity: EntityId,
    pub color: ColorTag,
    pub origin_chain: ChainId,
}

/// Output template as carried inside a transaction. The resulting
/// [`Utxo`] id is `digest(tx_hash || index)` and so is not stored here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutput {
    pub owner: PublicKeyRef,
    pub value: u64,
    pub kind: UtxoKind,
    pub entity: EntityId,
    pub color: ColorTag,
    pub origin_chain: ChainId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxInput {
    pub prev_utxo: Hash,
    pub owner_signature: Option<SignatureRecord>,
}

impl TxInput {
    pub fn unsigned(prev_utxo: Hash) -> Self {
        TxInput { prev_utxo, owner_signature: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooperationStep {
    pub participant: PublicKeyRef,
    pub utxo_ref: Hash,
    pub prev_step_hash: Hash,
    pub signature: SignatureRecord,
}

impl CooperationStep {
    pub fn digest(&self) -> Hash {
        let mut w = Writer::new();
        w.step(self);
        digest_parts("ior/step", &[&w.into_bytes()])
    }

    /// Message a participant signs for a step.
    pub fn message(core_digest: &Hash, utxo_ref: &Hash, prev_step_hash: &Hash) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"ior/cosign").hash(core_digest).hash(utxo_ref).hash(prev_step_hash);
        w.into_bytes()
    }
}

/// The hash the first cooperation step chains to.
pub fn cooperation_anchor(reference: Option<&Hash>) -> Hash {
    match reference {
        Some(r) => digest_parts("ior/ref", &[&r.0]),
        None => digest_parts("ior/ref", &[]),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockData {
    pub block_number: u64,
    pub tx_index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub vins: Vec<TxInput>,
    pub vouts: Vec<TxOutput>,
    pub color: ColorTag,
    pub reference: Option<Hash>,
    pub cooperation: Vec<CooperationStep>,
    pub tx_data: Vec<u8>,
    pub tx_signature: Option<SignatureRecord>,
    pub block_data: Option<BlockData>,
}

impl Transaction {
    pub fn new(color: ColorTag) -> Self {
        Transaction {
            vins: Vec::new(),
            vouts: Vec::new(),
            color,
            reference: None,
            cooperation: Vec::new(),
            tx_data: Vec::new(),
            tx_signature: None,
            block_data: None,
        }
    }

    /// Payload signed by input owners and cooperation participants: input
    /// ids, outputs, color, reference and tx_data.
    pub fn core_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"ior/core");
        w.u32(self.vins.len() as u32);
        for vin in &self.vins {
            w.hash(&vin.prev_utxo);
        }
        w.u32(self.vouts.len() as u32);
        for o in &self.vouts {
            w.output(o);
        }
        w.u16(self.color.0);
        match &self.reference {
            None => w.u8(0),
            Some(h) => w.u8(1).hash(h),
        };
        w.bytes(&self.tx_data);
        w.into_bytes()
    }

    pub fn core_digest(&self) -> Hash {
        digest(&self.core_payload())
    }

    /// Payload signed by the committer: every field before tx_signature.
    pub fn commit_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"ior/commit");
        codec::write_body(&mut w, self);
        w.into_bytes()
    }

    /// Digest of the canonical encoding with block_data cleared.
    pub fn hash(&self) -> Hash {
        tx_hash(self)
    }

    pub fn output_id(&self, index: u32) -> Hash {
        output_id(&self.hash(), index)
    }

    /// Materialize the outputs as UTXOs with their derived ids.
    pub fn outputs(&self) -> Vec<Utxo> {
        let h = self.hash();
        self.vouts
            .iter()
            .enumerate()
            .map(|(i, o)| Utxo {
                id: output_id(&h, i as u32),
                owner: o.owner,
                value: o.value,
                kind: o.kind,
                entity: o.entity.clone(),
                color: o.color,
                origin_chain: o.origin_chain,
            })
            .collect()
    }

    /// Signs every input with the key in `keys` matching the owner the
    /// resolver reports. Inputs whose owner has no key stay unsigned.
    pub fn sign_inputs(&mut self, resolver: &impl UtxoLookup, keys: &[&KeyPair]) {
        let msg = self.core_payload();
        for vin in &mut self.vins {
            let Some(u) = resolver.lookup_utxo(&vin.prev_utxo) else { continue };
            if let Some(k) = keys.iter().find(|k| k.pk == u.owner) {
                vin.owner_signature = Some(k.sign(&msg));
            }
        }
    }

    pub fn commit(&mut self, committer: &KeyPair) {
        self.tx_signature = Some(committer.sign(&self.commit_payload()));
    }

    pub fn committer_signature_valid(&self) -> bool {
        self.tx_signature.as_ref().is_some_and(|s| s.verify(&self.commit_payload()))
    }

    pub fn output_value(&self) -> u64 {
        self.vouts.iter().map(|o| o.value).sum()
    }
}

/// A transaction that only anchors an off-chain record: no inputs or
/// outputs, `tx_data = tag || fingerprint`.
pub fn fingerprint_tx(color: ColorTag, tag: &str, fingerprint: &Hash, committer: &KeyPair) -> Transaction {
    let mut tx = Transaction::new(color);
    tx.tx_data = [tag.as_bytes(), &fingerprint.0].concat();
    tx.commit(committer);
    tx
}

/// The fingerprint anchored by `tx` under `tag`, if it is such a transaction.
pub fn read_fingerprint(tx: &Transaction, tag: &str) -> Option<Hash> {
    let rest = tx.tx_data.strip_prefix(tag.as_bytes())?;
    Some(Hash(rest.try_into().ok()?))
}

pub fn output_id(tx_hash: &Hash, index: u32) -> Hash {
    digest_parts("ior/utxo", &[&tx_hash.0, &index.to_le_bytes()])
}

pub fn tx_hash(tx: &Transaction) -> Hash {
    let mut w = Writer::new();
    codec::write_body(&mut w, tx);
    w.opt_sig(&tx.tx_signature);
    digest_parts("ior/tx", &[&w.into_bytes()])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub parent: Hash,
    pub transactions: Vec<Transaction>,
    pub consensus_signature: SignatureRecord,
    pub id: Hash,
}

impl Block {
    pub fn body_root(transactions: &[Transaction]) -> Hash {
        let mut w = Writer::new();
        w.u32(transactions.len() as u32);
        for tx in transactions {
            w.hash(&digest(&codec::canonical_serialize(tx)));
        }
        digest_parts("ior/body", &[&w.into_bytes()])
    }

    pub fn header_message(number: u64, parent: &Hash, body_root: &Hash) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"ior/header").u64(number).hash(parent).hash(body_root);
        w.into_bytes()
    }

    pub fn compute_id(number: u64, parent: &Hash, txs: &[Transaction], sig: &SignatureRecord) -> Hash {
        let root = Self::body_root(txs);
        let mut w = Writer::new();
        w.u64(number).hash(parent).hash(&root).sig(sig);
        digest_parts("ior/block", &[&w.into_bytes()])
    }

    /// Fills in block_data for every transaction and signs the header.
    pub fn seal(number: u64, parent: Hash, mut transactions: Vec<Transaction>, producer: &KeyPair) -> Block {
        for (i, tx) in transactions.iter_mut().enumerate() {
            tx.block_data = Some(BlockData { block_number: number, tx_index: i as u32 });
        }
        let root = Self::body_root(&transactions);
        let consensus_signature = producer.sign(&Self::header_message(number, &parent, &root));
        let id = Self::compute_id(number, &parent, &transactions, &consensus_signature);
        Block { number, parent, transactions, consensus_signature, id }
    }

    pub fn signature_valid(&self) -> bool {
        let root = Self::body_root(&self.transactions);
        self.consensus_signature.verify(&Self::header_message(self.number, &self.parent, &root))
    }

    pub fn id_valid(&self) -> bool {
        Self::compute_id(self.number, &self.parent, &self.transactions, &self.consensus_signature) == self.id
    }
}

/// Read access to UTXOs by id.
pub trait UtxoLookup {
    fn lookup_utxo(&self, id: &Hash) -> Option<Utxo>;
}

impl UtxoLookup for BTreeMap<Hash, Utxo> {
    fn lookup_utxo(&self, id: &Hash) -> Option<Utxo> {
        self.get(id).cloned()
    }
}

impl UtxoLookup for HashMap<Hash, Utxo> {
    fn lookup_utxo(&self, id: &Hash) -> Option<Utxo> {
        self.get(id).cloned()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationFailure {
    MissingInput(Hash),
    DuplicateInput(Hash),
    ValueMismatch { inputs: u64, outputs: u64 },
    BadSignature { input: usize },
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::MissingInput(h) => write!(f, "missing input {}", h.short()),
            ValidationFailure::DuplicateInput(h) => write!(f, "input {} listed twice", h.short()),
            ValidationFailure::ValueMismatch { inputs, outputs } => {
                write!(f, "value mismatch: inputs {inputs} != outputs {outputs}")
            }
            ValidationFailure::BadSignature { input } => write!(f, "bad owner signature on input {input}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
    pub input_value: u64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn only_value_mismatch(&self) -> bool {
        !self.failures.is_empty()
            && self.failures.iter().all(|f| matches!(f, ValidationFailure::ValueMismatch { .. }))
    }
}

/// Checks input resolution, owner signatures and value conservation.
pub fn validate_structure(tx: &Transaction, resolver: &impl UtxoLookup) -> ValidationReport {
    let mut report = ValidationReport::default();
    let msg = tx.core_payload();
    let mut seen = BTreeSet::new();
    let mut complete = true;
    for (i, vin) in tx.vins.iter().enumerate() {
        if !seen.insert(vin.prev_utxo) {
            report.failures.push(ValidationFailure::DuplicateInput(vin.prev_utxo));
            complete = false;
            continue;
        }
        let Some(u) = resolver.lookup_utxo(&vin.prev_utxo) else {
            report.failures.push(ValidationFailure::MissingInput(vin.prev_utxo));
            complete = false;
            continue;
        };
        report.input_value += u.value;
        let ok = vin
            .owner_signature
            .as_ref()
            .is_some_and(|s| s.signer == u.owner && s.verify(&msg));
        if !ok {
            report.failures.push(ValidationFailure::BadSignature { input: i });
        }
    }
    let outputs = tx.output_value();
    if complete && report.input_value != outputs {
        report
            .failures
            .push(ValidationFailure::ValueMismatch { inputs: report.input_value, outputs });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{canonical_serialize, parse_transaction};
    use crate::crypto::keygen;

    fn out(owner: &KeyPair, value: u64) -> TxOutput {
        TxOutput {
            owner: owner.pk,
            value,
            kind: UtxoKind::Ownership,
            entity: EntityId::new("E"),
            color: ColorTag(1),
            origin_chain: ChainId(1),
        }
    }

    fn funding(owner: &KeyPair, values: &[u64]) -> (Transaction, BTreeMap<Hash, Utxo>) {
        let mut tx = Transaction::new(ColorTag(1));
        tx.vouts = values.iter().map(|v| out(owner, *v)).collect();
        tx.commit(owner);
        let set = tx.outputs().into_iter().map(|u| (u.id, u)).collect();
        (tx, set)
    }

    fn spend(inputs: &[Hash], outputs: &[u64], set: &BTreeMap<Hash, Utxo>, key: &KeyPair) -> Transaction {
        let mut tx = Transaction::new(ColorTag(1));
        tx.vins = inputs.iter().map(|h| TxInput::unsigned(*h)).collect();
        tx.vouts = outputs.iter().map(|v| out(key, *v)).collect();
        tx.sign_inputs(set, &[key]);
        tx.commit(key);
        tx
    }

    #[test]
    fn conservation_checks() {
        let a = keygen(&[1; 32]);
        let (fund, set) = funding(&a, &[7, 3]);
        let ids: Vec<Hash> = fund.outputs().iter().map(|u| u.id).collect();

        let ok = spend(&ids, &[6, 4], &set, &a);
        assert!(validate_structure(&ok, &set).passed());

        let (fund10, set10) = funding(&a, &[10]);
        let bad = spend(&[fund10.output_id(0)], &[6, 5], &set10, &a);
        assert_eq!(
            validate_structure(&bad, &set10).failures,
            vec![ValidationFailure::ValueMismatch { inputs: 10, outputs: 11 }]
        );
    }

    #[test]
    fn unknown_input_and_bad_signature() {
        let a = keygen(&[1; 32]);
        let b = keygen(&[2; 32]);
        let (fund, set) = funding(&a, &[5]);
        let ghost = spend(&[Hash([9; 32])], &[5], &set, &a);
        assert!(validate_structure(&ghost, &set)
            .failures
            .contains(&ValidationFailure::MissingInput(Hash([9; 32]))));

        // b signs a's input
        let mut stolen = spend(&[fund.output_id(0)], &[5], &set, &a);
        stolen.vins[0].owner_signature = Some(b.sign(&stolen.core_payload()));
        assert_eq!(
            validate_structure(&stolen, &set).failures,
            vec![ValidationFailure::BadSignature { input: 0 }]
        );

        let dup = spend(&[fund.output_id(0), fund.output_id(0)], &[10], &set, &a);
        assert!(validate_structure(&dup, &set)
            .failures
            .contains(&ValidationFailure::DuplicateInput(fund.output_id(0))));
    }

    #[test]
    fn serialization_is_deterministic_and_color_sensitive() {
        let empty = Transaction::new(ColorTag(1));
        assert_eq!(canonical_serialize(&empty), canonical_serialize(&empty));
        let mut other = empty.clone();
        other.color = ColorTag(2);
        assert_ne!(canonical_serialize(&empty), canonical_serialize(&other));
    }

    #[test]
    fn roundtrip_two_in_two_out() {
        let a = keygen(&[1; 32]);
        let (fund, set) = funding(&a, &[7, 3]);
        let ids: Vec<Hash> = fund.outputs().iter().map(|u| u.id).collect();
        let mut tx = spend(&ids, &[6, 4], &set, &a);
        tx.reference = Some(Hash([4; 32]));
        tx.tx_data = b"payload".to_vec();
        tx.commit(&a);
        tx.block_data = Some(BlockData { block_number: 3, tx_index: 1 });
        let bytes = canonical_serialize(&tx);
        assert_eq!(parse_transaction(&bytes).unwrap(), tx);
    }

    #[test]
    fn hashing() {
        let a = keygen(&[1; 32]);
        let (tx, _) = funding(&a, &[1, 2]);
        assert_eq!(tx.hash(), tx.hash());
        let mut flipped = tx.clone();
        flipped.tx_data = vec![1];
        assert_ne!(tx.hash(), flipped.hash());

        let h = tx.hash();
        let id0 = tx.output_id(0);
        let id1 = tx.output_id(1);
        assert_ne!(id0, id1);
        let mut buf = h.0.to_vec();
        buf.extend_from_slice(&0u32.to_le_bytes());
        assert_eq!(id0, digest_parts("ior/utxo", &[&buf]));

        // block_data does not affect the hash
        let mut placed = tx.clone();
        placed.block_data = Some(BlockData { block_number: 1, tx_index: 0 });
        assert_eq!(placed.hash(), tx.hash());
    }

    #[test]
    fn block_seal_verifies() {
        let p = keygen(&[5; 32]);
        let a = keygen(&[1; 32]);
        let (tx, _) = funding(&a, &[1]);
        let b = Block::seal(1, Hash([1; 32]), vec![tx], &p);
        assert!(b.signature_valid());
        assert!(b.id_valid());
        assert_eq!(b.transactions[0].block_data, Some(BlockData { block_number: 1, tx_index: 0 }));
        let mut t = b.clone();
        t.transactions[0].tx_data.push(0);
        assert!(!t.signature_valid());
        assert!(!t.id_valid());
    }
}
