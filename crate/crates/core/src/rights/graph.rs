//! Directed graph of rights flow reconstructed from a chain's canonical
//! transactions: an edge runs from each consumed UTXO to each UTXO the
//! consuming transaction created.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::PublicKeyRef;
use crate::hash::Hash;
use crate::ledger::ChainState;
use crate::model::{Transaction, Utxo, UtxoKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Ownership split into a usage grant.
    Grant,
    /// Ownership carried over as the remainder of a grant.
    Remainder,
    /// Usage rights combined into ownership of a new entity.
    Derive,
    Transfer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrantEdge {
    pub from: Hash,
    pub to: Hash,
    pub tx_hash: Hash,
    pub kind: EdgeKind,
    /// Keys whose signatures the authorizing transaction carries: input
    /// owners and cooperation participants.
    pub authorizers: Vec<PublicKeyRef>,
}

#[derive(Clone, Debug, Default)]
pub struct AuthorizationGraph {
    nodes: BTreeMap<Hash, Utxo>,
    edges: Vec<GrantEdge>,
    incoming: BTreeMap<Hash, Vec<usize>>,
    outgoing: BTreeMap<Hash, Vec<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("utxo {} is not in the authorization graph", .0.short())]
    UnknownUtxo(Hash),
}

/// Root-to-node path of grants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProvenancePath {
    pub root: Hash,
    pub edges: Vec<GrantEdge>,
}

impl ProvenancePath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Every key that authorized some edge of the path.
    pub fn authorizers(&self) -> BTreeSet<PublicKeyRef> {
        self.edges.iter().flat_map(|e| e.authorizers.iter().copied()).collect()
    }
}

fn is_right(kind: UtxoKind) -> bool {
    matches!(kind, UtxoKind::Ownership | UtxoKind::Usage)
}

fn authorizers(tx: &Transaction) -> Vec<PublicKeyRef> {
    let mut out: Vec<PublicKeyRef> = Vec::new();
    let signers = tx
        .vins
        .iter()
        .filter_map(|v| v.owner_signature.as_ref().map(|s| s.signer))
        .chain(tx.cooperation.iter().map(|s| s.participant));
    for k in signers {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

fn edge_kind(from: &Utxo, to: &Utxo) -> EdgeKind {
    match (from.kind, to.kind) {
        (UtxoKind::Ownership, UtxoKind::Usage) => EdgeKind::Grant,
        (UtxoKind::Ownership, UtxoKind::Ownership) if from.entity == to.entity => EdgeKind::Remainder,
        (UtxoKind::Usage, UtxoKind::Ownership) if from.entity != to.entity => EdgeKind::Derive,
        _ => EdgeKind::Transfer,
    }
}

impl AuthorizationGraph {
    /// Builds the graph from the canonical branch of `chain`.
    pub fn from_chain(chain: &ChainState) -> Self {
        let mut g = AuthorizationGraph::default();
        for block in chain.canonical_blocks() {
            for tx in &block.transactions {
                g.add_tx(chain, tx);
            }
        }
        g
    }

    fn add_tx(&mut self, chain: &ChainState, tx: &Transaction) {
        let created: Vec<Utxo> = tx.outputs().into_iter().filter(|u| is_right(u.kind)).collect();
        for u in &created {
            self.nodes.insert(u.id, u.clone());
        }
        let tx_hash = tx.hash();
        let signers = authorizers(tx);
        for vin in &tx.vins {
            let Some(from) = chain.known_output(&vin.prev_utxo) else { continue };
            if !is_right(from.kind) {
                continue;
            }
            self.nodes.entry(from.id).or_insert_with(|| from.clone());
            for to in &created {
                let idx = self.edges.len();
                self.edges.push(GrantEdge {
                    from: from.id,
                    to: to.id,
                    tx_hash,
                    kind: edge_kind(from, to),
                    authorizers: signers.clone(),
                });
                self.incoming.entry(to.id).or_default().push(idx);
                self.outgoing.entry(from.id).or_default().push(idx);
            }
        }
    }

    pub fn node(&self, id: &Hash) -> Option<&Utxo> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Utxo> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[GrantEdge] {
        &self.edges
    }

    pub fn incoming(&self, id: &Hash) -> impl Iterator<Item = &GrantEdge> {
        self.incoming.get(id).into_iter().flatten().map(|i| &self.edges[*i])
    }

    /// Kahn's algorithm; true when every node gets ordered.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<&Hash, usize> = self.nodes.keys().map(|k| (k, 0)).collect();
        for e in &self.edges {
            *indeg.entry(&e.to).or_default() += 1;
        }
        let mut queue: VecDeque<&Hash> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut seen = 0;
        while let Some(n) = queue.pop_front() {
            seen += 1;
            for i in self.outgoing.get(n).into_iter().flatten() {
                let d = indeg.get_mut(&self.edges[*i].to).expect("edge target indexed");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(&self.edges[*i].to);
                }
            }
        }
        seen == indeg.len()
    }

    /// All edges into `id` come from one transaction, since a UTXO is
    /// created exactly once.
    pub fn producing_tx(&self, id: &Hash) -> Option<Hash> {
        let mut txs = self.incoming(id).map(|e| e.tx_hash);
        let first = txs.next()?;
        txs.all(|t| t == first).then_some(first)
    }

    /// Follows the first input of each producing transaction back to a
    /// root. The path is unique because each UTXO is created once.
    pub fn trace_authorization(&self, id: &Hash) -> Result<ProvenancePath, TraceError> {
        if !self.nodes.contains_key(id) {
            return Err(TraceError::UnknownUtxo(*id));
        }
        let mut edges = Vec::new();
        let mut cur = *id;
        while let Some(e) = self.incoming(&cur).next() {
            edges.push(e.clone());
            cur = e.from;
        }
        edges.reverse();
        Ok(ProvenancePath { root: cur, edges })
    }

    /// Every UTXO from which rights flowed into `id`.
    pub fn ancestry(&self, id: &Hash) -> Result<BTreeSet<Hash>, TraceError> {
        if !self.nodes.contains_key(id) {
            return Err(TraceError::UnknownUtxo(*id));
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![*id];
        while let Some(n) = stack.pop() {
            for e in self.incoming(&n) {
                if out.insert(e.from) {
                    stack.push(e.from);
                }
            }
        }
        Ok(out)
    }
}
