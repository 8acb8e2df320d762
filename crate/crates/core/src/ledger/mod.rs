//! Single-chain state: admission, block production, block tree and GHOST
//! fork choice.
//!
//! The UTXO set always reflects the canonical branch. Every stored block
//! keeps an undo record (outputs it spent and created), so switching
//! branches is a rollback to the fork point followed by a roll-forward.

mod journal;
mod tree;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use journal::{Journal, JournalError, JournalLine, Replay};
pub use tree::{fork_choice, BlockTree};

use crate::codec::{canonical_serialize, Writer};
use crate::crypto::{KeyPair, PublicKeyRef};
use crate::hash::{digest_parts, Hash};
use crate::model::{
    validate_structure, Block, BlockData, ChainId, ColorTag, Transaction, TxOutput, Utxo,
    UtxoLookup, ValidationFailure,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chain_id: ChainId,
    /// Trusted block producers, in round-robin order.
    pub validators: Vec<PublicKeyRef>,
    /// Key that signs issuance and bridge transactions.
    pub system_key: PublicKeyRef,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("double spend of {}", .0.short())]
    DoubleSpend(Hash),
    #[error("validation failed: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<ValidationFailure>),
    #[error("missing or invalid committer signature")]
    BadCommitter,
    #[error("transaction {} already recorded", .0.short())]
    DuplicateTx(Hash),
    #[error("output names origin chain {found}, expected {expected}")]
    WrongOrigin { expected: ChainId, found: ChainId },
    #[error("bridge rule violated: {0}")]
    BridgeRule(&'static str),
    #[error("block_data does not match the transaction's position")]
    BlockDataMismatch,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("unknown parent block {}", .0.short())]
    UnknownParent(Hash),
    #[error("transaction {index} invalid: {reason}")]
    InvalidTx { index: usize, reason: TxError },
    #[error("invalid block: {0}")]
    InvalidBlock(&'static str),
    #[error("block producer is not a trusted validator")]
    UntrustedProducer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Block id already known; nothing changed.
    Duplicate,
    /// The block became the new tip on top of the old one.
    Extended,
    /// Stored on a side branch; the tip did not move.
    SideBranch,
    /// Fork choice switched branches; `depth` blocks were rolled back.
    Reorg { depth: usize },
}

/// Value accounting for the canonical branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Supply {
    pub issued: u64,
    pub minted: u64,
    pub recycled: u64,
    pub live: u64,
}

#[derive(Clone, Debug, Default)]
struct BlockUndo {
    spent: Vec<Utxo>,
    created: Vec<Utxo>,
    tx_hashes: Vec<Hash>,
    minted: u64,
    recycled: u64,
}

/// UTXO view layered over a base set without copying it.
struct Overlay<'a> {
    base: &'a BTreeMap<Hash, Utxo>,
    changes: HashMap<Hash, Option<Utxo>>,
}

impl<'a> Overlay<'a> {
    fn new(base: &'a BTreeMap<Hash, Utxo>) -> Self {
        Overlay { base, changes: HashMap::new() }
    }

    fn remove(&mut self, id: Hash) {
        self.changes.insert(id, None);
    }

    fn add(&mut self, u: Utxo) {
        self.changes.insert(u.id, Some(u));
    }

    fn materialize(&self) -> BTreeMap<Hash, Utxo> {
        let mut out = self.base.clone();
        for (id, v) in &self.changes {
            match v {
                Some(u) => out.insert(*id, u.clone()),
                None => out.remove(id),
            };
        }
        out
    }
}

impl UtxoLookup for Overlay<'_> {
    fn lookup_utxo(&self, id: &Hash) -> Option<Utxo> {
        match self.changes.get(id) {
            Some(v) => v.clone(),
            None => self.base.get(id).cloned(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainState {
    config: ChainConfig,
    tree: BlockTree,
    tip: Hash,
    canonical: Vec<Hash>,
    utxo_set: BTreeMap<Hash, Utxo>,
    mempool: Vec<Transaction>,
    pending_spent: BTreeSet<Hash>,
    undo: HashMap<Hash, BlockUndo>,
    canonical_txs: HashMap<Hash, BlockData>,
    outputs: HashMap<Hash, Utxo>,
    output_origin: HashMap<Hash, Hash>,
    supply: Supply,
}

impl ChainState {
    /// Creates a chain whose genesis block issues `issuance`, signed by the
    /// system key and produced by `producer`.
    pub fn genesis(
        config: ChainConfig,
        issuance: Vec<TxOutput>,
        system: &KeyPair,
        producer: &KeyPair,
    ) -> Result<Self, LedgerError> {
        let mut txs = Vec::new();
        if !issuance.is_empty() {
            let mut tx = Transaction::new(ColorTag(0));
            tx.vouts = issuance;
            tx.tx_data = format!("genesis/{}", config.chain_id).into_bytes();
            tx.commit(system);
            txs.push(tx);
        }
        let block = Block::seal(0, Hash::ZERO, txs, producer);
        Self::from_genesis_block(config, block)
    }

    pub fn from_genesis_block(config: ChainConfig, block: Block) -> Result<Self, LedgerError> {
        if block.number != 0 || block.parent != Hash::ZERO {
            return Err(LedgerError::InvalidBlock("genesis must be number 0 with a null parent"));
        }
        if !block.id_valid() || !block.signature_valid() {
            return Err(LedgerError::InvalidBlock("genesis id or signature"));
        }
        if !config.validators.contains(&block.consensus_signature.signer) {
            return Err(LedgerError::UntrustedProducer);
        }
        let mut undo = BlockUndo::default();
        for (i, tx) in block.transactions.iter().enumerate() {
            let fail = |reason| LedgerError::InvalidTx { index: i, reason };
            if tx.block_data != Some(BlockData { block_number: 0, tx_index: i as u32 }) {
                return Err(fail(TxError::BlockDataMismatch));
            }
            if !tx.vins.is_empty() {
                return Err(fail(TxError::BridgeRule("genesis transactions cannot spend")));
            }
            let system_signed = tx
                .tx_signature
                .as_ref()
                .is_some_and(|s| s.signer == config.system_key);
            if !system_signed || !tx.committer_signature_valid() {
                return Err(fail(TxError::BadCommitter));
            }
            if let Some(o) = tx.vouts.iter().find(|o| o.origin_chain != config.chain_id) {
                return Err(fail(TxError::WrongOrigin { expected: config.chain_id, found: o.origin_chain }));
            }
            undo.created.extend(tx.outputs());
            undo.tx_hashes.push(tx.hash());
        }
        let issued = undo.created.iter().map(|u| u.value).sum();
        let id = block.id;
        let mut state = ChainState {
            config,
            tree: BlockTree::new(block),
            tip: id,
            canonical: vec![id],
            utxo_set: BTreeMap::new(),
            mempool: Vec::new(),
            pending_spent: BTreeSet::new(),
            undo: HashMap::new(),
            canonical_txs: HashMap::new(),
            outputs: HashMap::new(),
            output_origin: HashMap::new(),
            supply: Supply { issued, ..Supply::default() },
        };
        let genesis = state.tree.get(&id).cloned().expect("genesis stored");
        state.index_block(&genesis);
        state.roll_forward(&id, &undo);
        state.undo.insert(id, undo);
        Ok(state)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn chain_id(&self) -> ChainId {
        self.config.chain_id
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn tip(&self) -> Hash {
        self.tip
    }

    pub fn tip_block(&self) -> &Block {
        self.tree.get(&self.tip).expect("tip is always stored")
    }

    pub fn height(&self) -> u64 {
        self.tip_block().number
    }

    pub fn utxo_set(&self) -> &BTreeMap<Hash, Utxo> {
        &self.utxo_set
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn supply(&self) -> Supply {
        self.supply
    }

    pub fn is_unspent(&self, utxo_id: &Hash) -> bool {
        self.utxo_set.contains_key(utxo_id)
    }

    pub fn utxo(&self, utxo_id: &Hash) -> Option<&Utxo> {
        self.utxo_set.get(utxo_id)
    }

    /// Any output ever created in a stored block, spent or not, on any branch.
    pub fn known_output(&self, utxo_id: &Hash) -> Option<&Utxo> {
        self.outputs.get(utxo_id)
    }

    pub fn canonical_block(&self, number: u64) -> Option<&Block> {
        self.canonical.get(number as usize).and_then(|id| self.tree.get(id))
    }

    pub fn canonical_blocks(&self) -> impl Iterator<Item = &Block> {
        self.canonical.iter().map(|id| self.tree.get(id).expect("canonical block stored"))
    }

    pub fn is_canonical(&self, block_id: &Hash) -> bool {
        self.tree
            .get(block_id)
            .is_some_and(|b| self.canonical.get(b.number as usize) == Some(block_id))
    }

    /// Position of a transaction on the canonical branch.
    pub fn locate_tx(&self, tx_hash: &Hash) -> Option<BlockData> {
        self.canonical_txs.get(tx_hash).copied()
    }

    pub fn canonical_tx(&self, tx_hash: &Hash) -> Option<&Transaction> {
        let at = self.locate_tx(tx_hash)?;
        self.canonical_block(at.block_number)?.transactions.get(at.tx_index as usize)
    }

    /// The canonical transaction that created `utxo_id`.
    pub fn creating_tx(&self, utxo_id: &Hash) -> Option<&Transaction> {
        self.canonical_tx(self.output_origin.get(utxo_id)?)
    }

    pub fn scheduled_producer(&self, number: u64) -> PublicKeyRef {
        let v = &self.config.validators;
        v[(number % v.len() as u64) as usize]
    }

    /// Digest of the observable state: canonical UTXO set, mempool, tip and
    /// the set of stored blocks.
    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.hash(&self.tip).u64(self.tree.len() as u64);
        w.hash(&self.utxo_digest());
        w.u32(self.mempool.len() as u32);
        for tx in &self.mempool {
            w.hash(&tx.hash());
        }
        for id in &self.pending_spent {
            w.hash(id);
        }
        digest_parts("ior/chain-state", &[&w.into_bytes()])
    }

    pub fn utxo_digest(&self) -> Hash {
        utxo_set_digest(&self.utxo_set)
    }

    /// Admits `tx` to the mempool.
    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Hash, TxError> {
        let hash = tx.hash();
        if self.mempool.iter().any(|m| m.hash() == hash) {
            return Err(TxError::DuplicateTx(hash));
        }
        if let Some(spent) = tx.vins.iter().find(|v| self.pending_spent.contains(&v.prev_utxo)) {
            return Err(TxError::DoubleSpend(spent.prev_utxo));
        }
        let view = Overlay::new(&self.utxo_set);
        let canonical = &self.canonical_txs;
        self.check_tx(&tx, &view, &|h| canonical.contains_key(h))?;
        self.pending_spent.extend(tx.vins.iter().map(|v| v.prev_utxo));
        self.mempool.push(tx);
        Ok(hash)
    }

    /// Removes a pending transaction and releases its inputs.
    pub fn withdraw_tx(&mut self, tx_hash: &Hash) -> Option<Transaction> {
        let pos = self.mempool.iter().position(|t| t.hash() == *tx_hash)?;
        let tx = self.mempool.remove(pos);
        for v in &tx.vins {
            self.pending_spent.remove(&v.prev_utxo);
        }
        Some(tx)
    }

    /// Seals the mempool into a block on the current tip and applies it.
    /// Returns `Ok(None)` when the mempool is empty and `allow_empty` is off.
    pub fn build_block(&mut self, producer: &KeyPair, allow_empty: bool) -> Result<Option<Block>, LedgerError> {
        if !self.config.validators.contains(&producer.pk) {
            return Err(LedgerError::UntrustedProducer);
        }
        if self.mempool.is_empty() && !allow_empty {
            return Ok(None);
        }
        let pending = std::mem::take(&mut self.mempool);
        self.pending_spent.clear();
        let mut view = Overlay::new(&self.utxo_set);
        let mut included = Vec::new();
        let mut seen = HashSet::new();
        for tx in pending {
            let canonical = &self.canonical_txs;
            let ok = self
                .check_tx(&tx, &view, &|h| canonical.contains_key(h) || seen.contains(h))
                .is_ok();
            if ok {
                for v in &tx.vins {
                    view.remove(v.prev_utxo);
                }
                for u in tx.outputs() {
                    view.add(u);
                }
                seen.insert(tx.hash());
                included.push(tx);
            }
        }
        let block = Block::seal(self.height() + 1, self.tip, included, producer);
        self.apply_block(block.clone())?;
        Ok(Some(block))
    }

    pub fn apply_block(&mut self, block: Block) -> Result<ApplyOutcome, LedgerError> {
        if self.tree.contains(&block.id) {
            return Ok(ApplyOutcome::Duplicate);
        }
        let parent = self
            .tree
            .get(&block.parent)
            .ok_or(LedgerError::UnknownParent(block.parent))?;
        if block.number != parent.number + 1 {
            return Err(LedgerError::InvalidBlock("number must be parent number + 1"));
        }
        if !block.id_valid() {
            return Err(LedgerError::InvalidBlock("id does not match contents"));
        }
        if !self.config.validators.contains(&block.consensus_signature.signer) {
            return Err(LedgerError::UntrustedProducer);
        }
        if !block.signature_valid() {
            return Err(LedgerError::InvalidBlock("bad consensus signature"));
        }

        let undo = self.validate_on_branch(&block)?;
        let id = block.id;
        let extends_tip = block.parent == self.tip;
        self.index_block(&block);
        self.undo.insert(id, undo);
        self.tree.insert(block);

        let new_tip = fork_choice(&self.tree);
        if new_tip == self.tip {
            return Ok(ApplyOutcome::SideBranch);
        }
        let depth = self.switch_to(new_tip);
        self.clean_mempool();
        if extends_tip && depth == 0 {
            Ok(ApplyOutcome::Extended)
        } else {
            Ok(ApplyOutcome::Reorg { depth })
        }
    }

    /// UTXO set as of `block_id` (any stored block).
    pub fn utxo_set_at(&self, block_id: &Hash) -> Option<BTreeMap<Hash, Utxo>> {
        if !self.tree.contains(block_id) {
            return None;
        }
        let (view, _) = self.branch_view(block_id);
        Some(view.materialize())
    }

    /// Builds a view of the UTXO set at `block_id` plus the set of tx hashes
    /// on that branch above the fork point with the canonical branch, and the
    /// fork-point height.
    fn branch_view(&self, block_id: &Hash) -> (Overlay<'_>, (HashSet<Hash>, u64)) {
        let mut view = Overlay::new(&self.utxo_set);
        let path = self.tree.path_from_root(block_id);
        let fork = path
            .iter()
            .rposition(|id| self.is_canonical(id))
            .expect("genesis is canonical");
        let fork_height = fork as u64;
        for id in self.canonical[fork + 1..].iter().rev() {
            let u = &self.undo[id];
            for c in &u.created {
                view.remove(c.id);
            }
            for s in &u.spent {
                view.add(s.clone());
            }
        }
        let mut side_txs = HashSet::new();
        for id in &path[fork + 1..] {
            let u = &self.undo[id];
            for s in &u.spent {
                view.remove(s.id);
            }
            for c in &u.created {
                view.add(c.clone());
            }
            side_txs.extend(u.tx_hashes.iter().copied());
        }
        (view, (side_txs, fork_height))
    }

    fn validate_on_branch(&self, block: &Block) -> Result<BlockUndo, LedgerError> {
        let (mut view, (mut branch_txs, fork_height)) = self.branch_view(&block.parent);
        let mut undo = BlockUndo::default();
        for (i, tx) in block.transactions.iter().enumerate() {
            let fail = |reason| LedgerError::InvalidTx { index: i, reason };
            if tx.block_data != Some(BlockData { block_number: block.number, tx_index: i as u32 }) {
                return Err(fail(TxError::BlockDataMismatch));
            }
            let canonical = &self.canonical_txs;
            let on_branch = |h: &Hash| {
                branch_txs.contains(h) || canonical.get(h).is_some_and(|bd| bd.block_number <= fork_height)
            };
            let effect = self.check_tx(tx, &view, &on_branch).map_err(fail)?;
            for s in &effect.spent {
                view.remove(s.id);
            }
            for c in &effect.created {
                view.add(c.clone());
            }
            branch_txs.insert(tx.hash());
            undo.tx_hashes.push(tx.hash());
            undo.spent.extend(effect.spent);
            undo.created.extend(effect.created);
            undo.minted += effect.minted;
            undo.recycled += effect.recycled;
        }
        Ok(undo)
    }

    fn check_tx(
        &self,
        tx: &Transaction,
        view: &impl UtxoLookup,
        on_branch: &dyn Fn(&Hash) -> bool,
    ) -> Result<BlockUndo, TxError> {
        let hash = tx.hash();
        if on_branch(&hash) {
            return Err(TxError::DuplicateTx(hash));
        }
        let chain = self.config.chain_id;
        if let Some(o) = tx.vouts.iter().find(|o| o.origin_chain != chain) {
            return Err(TxError::WrongOrigin { expected: chain, found: o.origin_chain });
        }
        if !tx.committer_signature_valid() {
            return Err(TxError::BadCommitter);
        }
        for vin in &tx.vins {
            if view.lookup_utxo(&vin.prev_utxo).is_none() {
                let spent_here = self
                    .output_origin
                    .get(&vin.prev_utxo)
                    .is_some_and(|origin| on_branch(origin));
                if spent_here {
                    return Err(TxError::DoubleSpend(vin.prev_utxo));
                }
            }
        }
        let report = validate_structure(tx, view);
        let bridge = tx.color == ColorTag::BRIDGE;
        if !report.passed() && !(bridge && report.only_value_mismatch()) {
            return Err(TxError::ValidationFailed(report.failures));
        }
        let mut effect = BlockUndo {
            spent: tx.vins.iter().filter_map(|v| view.lookup_utxo(&v.prev_utxo)).collect(),
            created: tx.outputs(),
            ..BlockUndo::default()
        };
        if bridge {
            let system = tx.tx_signature.as_ref().is_some_and(|s| s.signer == self.config.system_key);
            if !system {
                return Err(TxError::BridgeRule("bridge transactions must be committed by the system key"));
            }
            match (tx.vins.is_empty(), tx.vouts.is_empty()) {
                (false, true) => effect.recycled = report.input_value,
                (true, false) => effect.minted = tx.output_value(),
                (true, true) => return Err(TxError::BridgeRule("empty bridge transaction")),
                (false, false) => {
                    if !report.passed() {
                        return Err(TxError::BridgeRule("bridge transaction must either recycle or mint"));
                    }
                }
            }
        }
        Ok(effect)
    }

    /// Records every output of `block` with the tx that created it.
    fn index_block(&mut self, block: &Block) {
        for tx in &block.transactions {
            let h = tx.hash();
            for u in tx.outputs() {
                self.output_origin.insert(u.id, h);
                self.outputs.insert(u.id, u);
            }
        }
    }

    fn roll_forward(&mut self, block_id: &Hash, undo: &BlockUndo) {
        for s in &undo.spent {
            self.utxo_set.remove(&s.id);
        }
        for c in &undo.created {
            self.utxo_set.insert(c.id, c.clone());
        }
        let number = self.tree.get(block_id).expect("stored").number;
        for (i, h) in undo.tx_hashes.iter().enumerate() {
            self.canonical_txs.insert(*h, BlockData { block_number: number, tx_index: i as u32 });
        }
        self.supply.minted += undo.minted;
        self.supply.recycled += undo.recycled;
        self.supply.live = self.supply.live + value_of(&undo.created) - value_of(&undo.spent);
    }

    fn roll_back(&mut self, block_id: &Hash) {
        let undo = self.undo.remove(block_id).expect("undo stored");
        for c in &undo.created {
            self.utxo_set.remove(&c.id);
        }
        for s in &undo.spent {
            self.utxo_set.insert(s.id, s.clone());
        }
        for h in &undo.tx_hashes {
            self.canonical_txs.remove(h);
        }
        self.supply.minted -= undo.minted;
        self.supply.recycled -= undo.recycled;
        self.supply.live = self.supply.live + value_of(&undo.spent) - value_of(&undo.created);
        self.undo.insert(*block_id, undo);
    }

    /// Moves the canonical branch to end at `new_tip`; returns the number of
    /// blocks rolled back.
    fn switch_to(&mut self, new_tip: Hash) -> usize {
        let path = self.tree.path_from_root(&new_tip);
        let fork = path
            .iter()
            .zip(self.canonical.iter())
            .take_while(|(a, b)| a == b)
            .count();
        let rolled: Vec<Hash> = self.canonical[fork..].iter().rev().copied().collect();
        for id in &rolled {
            self.roll_back(id);
        }
        self.canonical.truncate(fork);
        for id in &path[fork..] {
            let undo = self.undo.remove(id).expect("undo stored");
            self.roll_forward(id, &undo);
            self.undo.insert(*id, undo);
            self.canonical.push(*id);
        }
        self.tip = new_tip;
        rolled.len()
    }

    /// Drops mempool entries that are now on chain or conflict with it.
    fn clean_mempool(&mut self) {
        let pending = std::mem::take(&mut self.mempool);
        self.pending_spent.clear();
        for tx in pending {
            let _ = self.submit_tx(tx);
        }
    }
}

impl UtxoLookup for ChainState {
    fn lookup_utxo(&self, id: &Hash) -> Option<Utxo> {
        self.utxo_set.get(id).cloned()
    }
}

fn value_of(utxos: &[Utxo]) -> u64 {
    utxos.iter().map(|u| u.value).sum()
}

/// Order-stable digest of a UTXO set.
pub fn utxo_set_digest(set: &BTreeMap<Hash, Utxo>) -> Hash {
    let mut w = Writer::new();
    w.u64(set.len() as u64);
    for u in set.values() {
        w.hash(&u.id);
        w.output(&TxOutput {
            owner: u.owner,
            value: u.value,
            kind: u.kind,
            entity: u.entity.clone(),
            color: u.color,
            origin_chain: u.origin_chain,
        });
    }
    digest_parts("ior/utxo-set", &[&w.into_bytes()])
}

/// Canonical bytes of a block's transactions, used by tamper checks.
pub fn block_tx_bytes(block: &Block) -> Vec<Vec<u8>> {
    block.transactions.iter().map(canonical_serialize).collect()
}

#[cfg(test)]
mod tests;
