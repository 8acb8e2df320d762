//! Rollup proofs: a child chain's leaders commit to a range of its
//! canonical blocks on the parent chain, so forging a child transaction
//! afterwards also requires forging the parent.

use serde::Serialize;
use thiserror::Error;

use crate::codec::{canonical_serialize, CodecError, Reader, Writer};
use crate::crypto::{KeyPair, SignatureRecord};
use crate::hash::{digest_parts, Hash};
use crate::ledger::{ChainState, TxError};
use crate::model::{ChainId, ColorTag, Transaction};

pub const ROLLUP_TAG: &[u8] = b"ior/rollup/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RollupProof {
    pub child_chain: ChainId,
    pub from: u64,
    pub to: u64,
    /// Id of the child's block at height `to` when the proof was made.
    pub anchor: Hash,
    pub commitment: Hash,
    pub leader_signatures: Vec<SignatureRecord>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RollupError {
    #[error("block range {from}..={to} is not available on the child's canonical branch")]
    RangeUnavailable { from: u64, to: u64 },
    #[error("no leader keys given")]
    NoLeaders,
    #[error("chain {0} has no parent chain")]
    NoParent(ChainId),
    #[error("chain {0} is not part of this network")]
    UnknownChain(ChainId),
    #[error(transparent)]
    Ledger(#[from] TxError),
}

impl RollupProof {
    fn signed_message(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ROLLUP_TAG)
            .u32(self.child_chain.0)
            .u64(self.from)
            .u64(self.to)
            .hash(&self.anchor)
            .hash(&self.commitment);
        w.into_bytes()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.signed_message()).u32(self.leader_signatures.len() as u32);
        for s in &self.leader_signatures {
            w.sig(s);
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<RollupProof, CodecError> {
        let rest = bytes.strip_prefix(ROLLUP_TAG).ok_or(CodecError::Truncated(0))?;
        let mut r = Reader::new(rest);
        let child_chain = ChainId(r.u32()?);
        let from = r.u64()?;
        let to = r.u64()?;
        let anchor = r.hash()?;
        let commitment = r.hash()?;
        let n = r.count(33 + 32 + 4)?;
        let mut leader_signatures = Vec::with_capacity(n);
        for _ in 0..n {
            leader_signatures.push(r.sig()?);
        }
        r.finish()?;
        Ok(RollupProof { child_chain, from, to, anchor, commitment, leader_signatures })
    }

    /// The proof carried by a parent-chain transaction, if any.
    pub fn from_tx(tx: &Transaction) -> Option<RollupProof> {
        if tx.color != ColorTag::ROLLUP {
            return None;
        }
        RollupProof::decode(&tx.tx_data).ok()
    }

    /// Leader signatures are present, come from the child's validators
    /// and verify.
    pub fn signatures_valid(&self, child: &ChainState) -> bool {
        let msg = self.signed_message();
        !self.leader_signatures.is_empty()
            && self
                .leader_signatures
                .iter()
                .all(|s| child.config().validators.contains(&s.signer) && s.verify(&msg))
    }

    pub fn covers(&self, chain: ChainId, block_number: u64) -> bool {
        self.child_chain == chain && self.from <= block_number && block_number <= self.to
    }
}

/// Commitment over blocks `from..=to` on the branch ending at `anchor`:
/// each block's number and the hashes of its transactions, in order.
/// `None` when `anchor` is unknown or the branch is too short.
pub fn commitment_on_branch(child: &ChainState, anchor: &Hash, from: u64, to: u64) -> Option<Hash> {
    let tree = child.tree();
    if from > to || tree.get(anchor)?.number != to {
        return None;
    }
    let path = tree.path_from_root(anchor);
    let mut w = Writer::new();
    w.u32(child.chain_id().0).u64(from).u64(to);
    for id in &path[from as usize..=to as usize] {
        let b = tree.get(id)?;
        w.u64(b.number).u32(b.transactions.len() as u32);
        for tx in &b.transactions {
            w.hash(&tx.hash());
        }
    }
    Some(digest_parts("ior/rollup/commitment", &[&w.into_bytes()]))
}

/// Builds a proof over the child's canonical blocks `from..=to`, signed by
/// every key in `leaders`, and submits it to the parent's mempool. Returns
/// the proof and the hash of the carrying transaction.
pub fn rollup_submit(
    child: &ChainState,
    parent: &mut ChainState,
    from: u64,
    to: u64,
    leaders: &[&KeyPair],
) -> Result<(RollupProof, Hash), RollupError> {
    let committer = leaders.first().ok_or(RollupError::NoLeaders)?;
    let unavailable = RollupError::RangeUnavailable { from, to };
    if from > to || to > child.height() {
        return Err(unavailable);
    }
    let anchor = child.canonical_block(to).ok_or(unavailable.clone())?.id;
    let commitment = commitment_on_branch(child, &anchor, from, to).ok_or(unavailable)?;
    let mut proof = RollupProof { child_chain: child.chain_id(), from, to, anchor, commitment, leader_signatures: vec![] };
    let msg = proof.signed_message();
    proof.leader_signatures = leaders.iter().map(|k| k.sign(&msg)).collect();

    let mut tx = Transaction::new(ColorTag::ROLLUP);
    tx.tx_data = proof.encode();
    tx.commit(committer);
    let hash = parent.submit_tx(tx)?;
    Ok((proof, hash))
}

/// True iff `tx` sits at its claimed position on the child's canonical
/// branch and some proof on the parent's canonical branch covers that
/// block, is anchored on the child's canonical branch, recomputes, and
/// carries valid leader signatures.
pub fn rollup_check(parent: &ChainState, child: &ChainState, tx: &Transaction) -> bool {
    let Some(at) = tx.block_data else { return false };
    let included = child
        .canonical_block(at.block_number)
        .and_then(|b| b.transactions.get(at.tx_index as usize))
        .is_some_and(|stored| canonical_serialize(stored) == canonical_serialize(tx));
    if !included {
        return false;
    }
    parent_proofs(parent).any(|(carrier, proof)| {
        proof.covers(child.chain_id(), at.block_number)
            && carrier.committer_signature_valid()
            && child.is_canonical(&proof.anchor)
            && commitment_on_branch(child, &proof.anchor, proof.from, proof.to) == Some(proof.commitment)
            && proof.signatures_valid(child)
    })
}

/// Rollup proofs recorded on the parent's canonical branch.
pub fn parent_proofs(parent: &ChainState) -> impl Iterator<Item = (&Transaction, RollupProof)> {
    parent
        .canonical_blocks()
        .flat_map(|b| b.transactions.iter())
        .filter_map(|tx| RollupProof::from_tx(tx).map(|p| (tx, p)))
}
