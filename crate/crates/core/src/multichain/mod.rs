//! Storage consensus across chains: addressing, routing verification of
//! foreign data to its source chain, atomic cross-chain transfers and
//! rollup proofs.

pub mod channel;
pub mod registry;
pub mod rollup;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

pub use channel::{ChannelError, Envelope, Inbox};
pub use registry::{ChainKind, ChainLocator, ChainRegistry, RegistryEntry, RegistryError, RegistryEvent};
pub use rollup::{commitment_on_branch, parent_proofs, rollup_check, rollup_submit, RollupError, RollupProof};

use crate::codec::{canonical_serialize, parse_transaction, Writer};
use crate::crypto::{KeyPair, SignatureRecord};
use crate::hash::{digest_parts, Hash};
use crate::ledger::{ChainState, Journal, LedgerError, TxError};
use crate::model::{Block, ChainId, ColorTag, Transaction, TxInput, TxOutput};
use crate::rights::{authenticate_current, authenticate_historical, AuthResult, OutputSelector};

pub const RECYCLE_TAG: &[u8] = b"ior/recycle";
pub const MINT_TAG: &[u8] = b"ior/mint";
pub const TRANSFER_TAG: &[u8] = b"ior/transfer";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Current,
    Historical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verified {
    pub origin: ChainLocator,
    pub mode: VerifyMode,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForeignError {
    #[error("chain {0} is not registered")]
    UnknownChain(ChainId),
    #[error("chain {0} is unavailable")]
    ChainUnavailable(ChainId),
    #[error("data carries no origin chain")]
    NoOrigin,
    #[error("source chain {origin} rejected the data: {reason}")]
    SourceRejected { origin: ChainId, reason: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrossChainTransfer {
    pub inputs: Vec<(ChainId, Hash)>,
    pub destination: ChainId,
    pub outputs: Vec<TxOutput>,
    pub system_signature: Option<SignatureRecord>,
}

impl CrossChainTransfer {
    pub fn new(inputs: Vec<(ChainId, Hash)>, destination: ChainId, outputs: Vec<TxOutput>) -> Self {
        CrossChainTransfer { inputs, destination, outputs, system_signature: None }
    }

    pub fn id(&self) -> Hash {
        let mut w = Writer::new();
        w.u32(self.inputs.len() as u32);
        for (c, u) in &self.inputs {
            w.u32(c.0).hash(u);
        }
        w.u32(self.destination.0).u32(self.outputs.len() as u32);
        for o in &self.outputs {
            w.output(o);
        }
        digest_parts("ior/xfer", &[&w.into_bytes()])
    }

    pub fn signature_valid(&self, system: &crate::crypto::PublicKeyRef) -> bool {
        self.system_signature
            .as_ref()
            .is_some_and(|s| s.signer == *system && s.verify(&self.id().0))
    }

    fn source_chains(&self) -> BTreeSet<ChainId> {
        self.inputs.iter().map(|(c, _)| *c).collect()
    }

    /// Ordinary transaction on the destination: every input already lives
    /// there.
    pub fn is_single_chain(&self) -> bool {
        self.inputs.iter().all(|(c, _)| *c == self.destination)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransferError {
    #[error("transfer has no inputs or no outputs")]
    Empty,
    #[error("chain {0} is not part of this network")]
    UnknownChain(ChainId),
    #[error("chain {0} is unavailable")]
    ChainUnavailable(ChainId),
    #[error("input {} on chain {chain} is spent or unknown", .utxo.short())]
    InputSpent { chain: ChainId, utxo: Hash },
    #[error("inputs carry {inputs} but outputs {outputs}")]
    ValueMismatch { inputs: u64, outputs: u64 },
    #[error("every output must originate on the destination chain")]
    WrongDestination,
    #[error("coordinator stopped after {prepared} prepares; transfer rolled back")]
    CoordinatorCrash { prepared: usize },
    #[error("chain {chain} refused a transfer transaction: {reason}")]
    Ledger { chain: ChainId, reason: TxError },
    #[error("chain {chain} could not seal a block: {reason}")]
    Block { chain: ChainId, reason: LedgerError },
}

/// Injected failure for a transfer run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Coordinator stops once `k` source chains have prepared.
    CrashAfterPrepares(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommitReport {
    pub transfer_id: Hash,
    pub value: u64,
    pub single_chain: bool,
    /// Recycle (or, for a single-chain transfer, the ordinary) transaction
    /// per source chain.
    pub recycles: Vec<(ChainId, Hash)>,
    pub mint: Option<(ChainId, Hash)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Preparing,
    Committing,
    Minting,
    Done,
    Aborted,
}

/// A transfer in flight. Drive it with [`MultiChain::step_transfer`].
#[derive(Clone, Debug)]
pub struct TransferSession {
    xfer: CrossChainTransfer,
    id: Hash,
    value: u64,
    /// Source chain and its signed recycle transaction, by chain id.
    plan: Vec<(ChainId, Transaction)>,
    prepared: Vec<(ChainId, Hash)>,
    committed: usize,
    mint: Option<(ChainId, Hash)>,
    phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Prepared(ChainId),
    Decided,
    SourceCommitted(ChainId),
    Minted(ChainId),
}

impl TransferSession {
    pub fn id(&self) -> Hash {
        self.id
    }

    pub fn prepared(&self) -> usize {
        self.prepared.len()
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn chains(&self) -> BTreeSet<ChainId> {
        let mut c = self.xfer.source_chains();
        c.insert(self.xfer.destination);
        c
    }

    pub fn report(&self) -> CommitReport {
        CommitReport {
            transfer_id: self.id,
            value: self.value,
            single_chain: self.xfer.is_single_chain(),
            recycles: self.prepared.clone(),
            mint: self.mint,
        }
    }
}

struct Node {
    state: ChainState,
    leaders: Vec<KeyPair>,
    inbox: Inbox,
    /// Prepared transfer transactions awaiting the commit decision; kept
    /// out of blocks until then.
    held: BTreeSet<Hash>,
}

pub struct MultiChain {
    registry: ChainRegistry,
    nodes: BTreeMap<ChainId, Node>,
    system: KeyPair,
    unavailable: BTreeSet<ChainId>,
    seq: u64,
    transfers: Vec<CrossChainTransfer>,
}

impl MultiChain {
    pub fn new(registry: ChainRegistry, system: KeyPair) -> Self {
        MultiChain {
            registry,
            nodes: BTreeMap::new(),
            system,
            unavailable: BTreeSet::new(),
            seq: 0,
            transfers: Vec::new(),
        }
    }

    /// Adds a chain with its leader group. Leaders should be among the
    /// chain's validators.
    pub fn add_chain(&mut self, state: ChainState, leaders: Vec<KeyPair>) {
        let node = Node { state, leaders, inbox: Inbox::default(), held: BTreeSet::new() };
        self.nodes.insert(node.state.chain_id(), node);
    }

    pub fn registry(&self) -> &ChainRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut ChainRegistry {
        &mut self.registry
    }

    pub fn system_key(&self) -> &KeyPair {
        &self.system
    }

    pub fn chain(&self, id: ChainId) -> Option<&ChainState> {
        self.nodes.get(&id).map(|n| &n.state)
    }

    /// Direct access to a chain. Blocks built through this handle bypass
    /// the hold on prepared transfer transactions; use [`MultiChain::seal`].
    pub fn chain_mut(&mut self, id: ChainId) -> Option<&mut ChainState> {
        self.nodes.get_mut(&id).map(|n| &mut n.state)
    }

    pub fn chains(&self) -> impl Iterator<Item = &ChainState> {
        self.nodes.values().map(|n| &n.state)
    }

    pub fn chain_ids(&self) -> Vec<ChainId> {
        self.nodes.keys().copied().collect()
    }

    pub fn leaders(&self, id: ChainId) -> &[KeyPair] {
        self.nodes.get(&id).map(|n| n.leaders.as_slice()).unwrap_or(&[])
    }

    pub fn transfers(&self) -> &[CrossChainTransfer] {
        &self.transfers
    }

    pub fn set_available(&mut self, id: ChainId, available: bool) {
        if available {
            self.unavailable.remove(&id);
        } else {
            self.unavailable.insert(id);
        }
    }

    pub fn is_available(&self, id: ChainId) -> bool {
        self.nodes.contains_key(&id) && !self.unavailable.contains(&id)
    }

    /// Sum of live value over every chain's canonical UTXO set.
    pub fn total_value(&self) -> u64 {
        self.nodes.values().map(|n| n.state.supply().live).sum()
    }

    pub fn journal(&self) -> Journal {
        let mut j = Journal::default();
        for n in self.nodes.values() {
            j.extend_from_chain(&n.state);
        }
        j
    }

    /// Seals the chain's mempool (minus held transfer transactions) with
    /// the scheduled leader, or the first leader when the schedule names a
    /// validator outside the group.
    pub fn seal(&mut self, id: ChainId, allow_empty: bool) -> Result<Option<Block>, LedgerError> {
        let node = self.nodes.get_mut(&id).expect("seal on a known chain");
        let next = node.state.height() + 1;
        let scheduled = node.state.scheduled_producer(next);
        let producer = node
            .leaders
            .iter()
            .find(|k| k.pk == scheduled)
            .or(node.leaders.first())
            .ok_or(LedgerError::UntrustedProducer)?
            .clone();
        let held: Vec<Transaction> = node.held.iter().filter_map(|h| node.state.withdraw_tx(h)).collect();
        let result = node.state.build_block(&producer, allow_empty);
        for tx in held {
            node.state
                .submit_tx(tx)
                .expect("held transactions stay valid: their inputs are reserved");
        }
        result
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Routes `tx` to the chain named by its first output's origin over
    /// the authenticated channel and returns that chain's verdict.
    pub fn verify_foreign(
        &mut self,
        from: ChainId,
        tx: &Transaction,
        mode: VerifyMode,
    ) -> Result<Verified, ForeignError> {
        let origin = tx.vouts.first().map(|o| o.origin_chain).ok_or(ForeignError::NoOrigin)?;
        let locator = self.registry.resolve(origin).map_err(|_| ForeignError::UnknownChain(origin))?;
        if !self.nodes.contains_key(&origin) {
            return Err(ForeignError::UnknownChain(origin));
        }
        if !self.nodes.contains_key(&from) {
            return Err(ForeignError::UnknownChain(from));
        }
        if self.unavailable.contains(&origin) {
            return Err(ForeignError::ChainUnavailable(origin));
        }

        let mut request = vec![match mode {
            VerifyMode::Current => 0u8,
            VerifyMode::Historical => 1,
        }];
        request.extend(canonical_serialize(tx));
        let seq = self.next_seq();
        let req = Envelope::seal(from, origin, seq, request, &self.nodes[&from].leaders[0]);

        let requester_leaders: Vec<_> = self.nodes[&from].leaders.iter().map(|k| k.pk).collect();
        let resp_seq = self.next_seq();
        let origin_node = self.nodes.get_mut(&origin).expect("checked above");
        let payload = origin_node.inbox.open(origin, &req, &requester_leaders)?.to_vec();
        let verdict = answer(&origin_node.state, &payload);
        let mut response = Vec::new();
        match &verdict {
            Ok(()) => response.push(0),
            Err(reason) => {
                response.push(1);
                response.extend(reason.as_bytes());
            }
        }
        let resp = Envelope::seal(origin, from, resp_seq, response, &origin_node.leaders[0]);
        let origin_leaders: Vec<_> = origin_node.leaders.iter().map(|k| k.pk).collect();

        let from_node = self.nodes.get_mut(&from).expect("checked above");
        let body = from_node.inbox.open(from, &resp, &origin_leaders)?;
        match body.split_first() {
            Some((0, _)) => Ok(Verified { origin: locator, mode }),
            Some((_, reason)) => Err(ForeignError::SourceRejected {
                origin,
                reason: String::from_utf8_lossy(reason).into_owned(),
            }),
            None => Err(ForeignError::SourceRejected { origin, reason: "empty response".into() }),
        }
    }

    /// Validates a transfer and prepares its per-chain transactions.
    /// `owners` sign the inputs; the system key commits.
    pub fn begin_transfer(
        &self,
        mut xfer: CrossChainTransfer,
        owners: &[&KeyPair],
    ) -> Result<TransferSession, TransferError> {
        if xfer.inputs.is_empty() || xfer.outputs.is_empty() {
            return Err(TransferError::Empty);
        }
        if xfer.outputs.iter().any(|o| o.origin_chain != xfer.destination) {
            return Err(TransferError::WrongDestination);
        }
        for c in xfer.source_chains().into_iter().chain([xfer.destination]) {
            if !self.nodes.contains_key(&c) || self.registry.resolve(c).is_err() {
                return Err(TransferError::UnknownChain(c));
            }
        }
        let mut inputs = 0u64;
        for (c, u) in &xfer.inputs {
            let utxo = self.nodes[c].state.utxo(u).ok_or(TransferError::InputSpent { chain: *c, utxo: *u })?;
            inputs += utxo.value;
        }
        let outputs: u64 = xfer.outputs.iter().map(|o| o.value).sum();
        if inputs != outputs {
            return Err(TransferError::ValueMismatch { inputs, outputs });
        }
        let id = xfer.id();
        xfer.system_signature = Some(self.system.sign(&id.0));

        let mut plan = Vec::new();
        if xfer.is_single_chain() {
            let chain = &self.nodes[&xfer.destination].state;
            let mut tx = Transaction::new(xfer.outputs[0].color);
            tx.vins = xfer.inputs.iter().map(|(_, u)| TxInput::unsigned(*u)).collect();
            tx.vouts = xfer.outputs.clone();
            tx.reference = Some(id);
            tx.tx_data = TRANSFER_TAG.to_vec();
            tx.sign_inputs(chain, owners);
            tx.commit(&self.system);
            plan.push((xfer.destination, tx));
        } else {
            for c in xfer.source_chains() {
                let chain = &self.nodes[&c].state;
                let mut tx = Transaction::new(ColorTag::BRIDGE);
                tx.vins = xfer
                    .inputs
                    .iter()
                    .filter(|(ic, _)| *ic == c)
                    .map(|(_, u)| TxInput::unsigned(*u))
                    .collect();
                tx.reference = Some(id);
                tx.tx_data = RECYCLE_TAG.to_vec();
                tx.sign_inputs(chain, owners);
                tx.commit(&self.system);
                plan.push((c, tx));
            }
        }
        Ok(TransferSession {
            xfer,
            id,
            value: inputs,
            plan,
            prepared: Vec::new(),
            committed: 0,
            mint: None,
            phase: Phase::Preparing,
        })
    }

    /// Runs one protocol step. On error every prepared transaction has
    /// already been withdrawn and the session is aborted.
    pub fn step_transfer(&mut self, s: &mut TransferSession) -> Result<StepOutcome, TransferError> {
        let result = self.step_inner(s);
        if result.is_err() && matches!(s.phase, Phase::Preparing) {
            self.abort_transfer(s);
        }
        result
    }

    fn step_inner(&mut self, s: &mut TransferSession) -> Result<StepOutcome, TransferError> {
        match s.phase {
            Phase::Preparing if s.prepared.len() < s.plan.len() => {
                let (chain, tx) = s.plan[s.prepared.len()].clone();
                if self.unavailable.contains(&chain) {
                    return Err(TransferError::ChainUnavailable(chain));
                }
                let node = self.nodes.get_mut(&chain).expect("validated");
                if let Some(v) = tx.vins.iter().find(|v| !node.state.is_unspent(&v.prev_utxo)) {
                    return Err(TransferError::InputSpent { chain, utxo: v.prev_utxo });
                }
                let hash = node.state.submit_tx(tx).map_err(|reason| match reason {
                    TxError::DoubleSpend(utxo) => TransferError::InputSpent { chain, utxo },
                    reason => TransferError::Ledger { chain, reason },
                })?;
                node.held.insert(hash);
                s.prepared.push((chain, hash));
                Ok(StepOutcome::Prepared(chain))
            }
            Phase::Preparing => {
                // commit decision: every chain still involved must be reachable
                for c in s.chains() {
                    if self.unavailable.contains(&c) {
                        return Err(TransferError::ChainUnavailable(c));
                    }
                }
                s.phase = Phase::Committing;
                self.transfers.push(s.xfer.clone());
                Ok(StepOutcome::Decided)
            }
            Phase::Committing => {
                let (chain, hash) = s.prepared[s.committed];
                self.nodes.get_mut(&chain).expect("validated").held.remove(&hash);
                self.seal(chain, false).map_err(|reason| TransferError::Block { chain, reason })?;
                s.committed += 1;
                if s.committed == s.prepared.len() {
                    s.phase = if s.xfer.is_single_chain() { Phase::Done } else { Phase::Minting };
                }
                Ok(StepOutcome::SourceCommitted(chain))
            }
            Phase::Minting => {
                let dest = s.xfer.destination;
                let mut mint = Transaction::new(ColorTag::BRIDGE);
                mint.vouts = s.xfer.outputs.clone();
                mint.reference = Some(s.id);
                let mut data = MINT_TAG.to_vec();
                for (_, h) in &s.prepared {
                    data.extend(h.0);
                }
                mint.tx_data = data;
                mint.commit(&self.system);
                let node = self.nodes.get_mut(&dest).expect("validated");
                let hash = node
                    .state
                    .submit_tx(mint)
                    .map_err(|reason| TransferError::Ledger { chain: dest, reason })?;
                self.seal(dest, false).map_err(|reason| TransferError::Block { chain: dest, reason })?;
                s.mint = Some((dest, hash));
                s.phase = Phase::Done;
                Ok(StepOutcome::Minted(dest))
            }
            Phase::Done | Phase::Aborted => Ok(StepOutcome::Decided),
        }
    }

    /// Withdraws every prepared transaction. Only valid before the commit
    /// decision.
    pub fn abort_transfer(&mut self, s: &mut TransferSession) {
        assert!(matches!(s.phase, Phase::Preparing | Phase::Aborted), "cannot abort after the commit decision");
        for (chain, hash) in s.prepared.drain(..).rev() {
            let node = self.nodes.get_mut(&chain).expect("validated");
            node.held.remove(&hash);
            node.state.withdraw_tx(&hash);
        }
        s.phase = Phase::Aborted;
    }

    /// Runs a transfer to completion, or rolls it back.
    pub fn cross_chain_transfer(
        &mut self,
        xfer: CrossChainTransfer,
        owners: &[&KeyPair],
        fault: Fault,
    ) -> Result<CommitReport, TransferError> {
        let mut s = self.begin_transfer(xfer, owners)?;
        while !s.is_done() {
            if let Fault::CrashAfterPrepares(k) = fault {
                if s.phase == Phase::Preparing && s.prepared.len() == k {
                    self.abort_transfer(&mut s);
                    return Err(TransferError::CoordinatorCrash { prepared: k });
                }
            }
            self.step_transfer(&mut s)?;
        }
        Ok(s.report())
    }

    /// Commits blocks `from..=to` of `child` to its registered parent and
    /// seals the parent.
    pub fn rollup_submit(&mut self, child: ChainId, from: u64, to: u64) -> Result<(RollupProof, Hash), RollupError> {
        let parent = self
            .registry
            .get(child)
            .ok_or(RollupError::UnknownChain(child))?
            .parent
            .ok_or(RollupError::NoParent(child))?;
        if !self.nodes.contains_key(&child) {
            return Err(RollupError::UnknownChain(child));
        }
        let mut parent_node = self.nodes.remove(&parent).ok_or(RollupError::UnknownChain(parent))?;
        let child_node = &self.nodes[&child];
        let leaders: Vec<&KeyPair> = child_node.leaders.iter().collect();
        let result = rollup_submit(&child_node.state, &mut parent_node.state, from, to, &leaders);
        self.nodes.insert(parent, parent_node);
        let out = result?;
        self.seal(parent, false).expect("parent leaders can seal");
        Ok(out)
    }

    pub fn rollup_check(&self, child: ChainId, tx: &Transaction) -> bool {
        let Some(parent) = self.registry.get(child).and_then(|e| e.parent) else { return false };
        match (self.chain(parent), self.chain(child)) {
            (Some(p), Some(c)) => rollup_check(p, c, tx),
            _ => false,
        }
    }
}

fn answer(chain: &ChainState, request: &[u8]) -> Result<(), String> {
    let (mode, bytes) = request.split_first().ok_or("empty request")?;
    let tx = parse_transaction(bytes).map_err(|e| format!("undecodable transaction: {e}"))?;
    let result = match mode {
        0 => authenticate_current(chain, &tx.hash(), OutputSelector::Any),
        _ => authenticate_historical(chain, &tx),
    };
    match result {
        Ok(AuthResult::Valid) => Ok(()),
        Ok(other) => Err(format!("{other:?}")),
        Err(e) => Err(e.to_string()),
    }
}
