//! Self-contained run of the A/B/C authorization walkthrough: A grants B
//! usage of part of entity E, B derives entity F from it under a process
//! with P, then B grants C usage of F.

use serde::Serialize;
use thiserror::Error;

use super::authz::{commit_cosigned, define_process, derive_entity, grant_usage, AuthzError};
use super::graph::{AuthorizationGraph, EdgeKind, TraceError};
use crate::crypto::{keygen_with, seed_from_label, KeyPair, PublicKeyRef, Scheme};
use crate::hash::Hash;
use crate::ledger::{ChainConfig, ChainState, LedgerError};
use crate::model::{output_id, ChainId, ColorTag, EntityId, TxOutput, UtxoKind};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Authz(#[from] AuthzError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoUtxo {
    pub name: String,
    pub id: Hash,
    pub owner: String,
    pub kind: UtxoKind,
    pub entity: String,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    pub authorizers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Walkthrough {
    pub seed: u64,
    pub utxos: Vec<DemoUtxo>,
    /// Provenance of C's usage right, root first.
    pub path: Vec<DemoEdge>,
}

impl Walkthrough {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("walkthrough serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for u in &self.utxos {
            out.push_str(&format!(
                "{:<8} {}  owner {}  {:?} {} x{}\n",
                u.name,
                u.id.short(),
                u.owner,
                u.kind,
                u.entity,
                u.value
            ));
        }
        out.push_str(&format!("provenance of C_usage ({} edges):\n", self.path.len()));
        for e in &self.path {
            out.push_str(&format!(
                "  {} -> {}  {:?}  signed by {}\n",
                e.from,
                e.to,
                e.kind,
                e.authorizers.join("+")
            ));
        }
        out
    }
}

pub fn abc_walkthrough(seed: u64) -> Result<Walkthrough, DemoError> {
    let names = ["A", "B", "C", "P", "system", "validator"];
    let keys: Vec<KeyPair> =
        names.iter().map(|n| keygen_with(Scheme::Ed25519Vrf, &seed_from_label(seed, n))).collect();
    let [a, b, c, p, sys, v] = [0, 1, 2, 3, 4, 5].map(|i| &keys[i]);
    let who = |pk: &PublicKeyRef| {
        names.iter().zip(&keys).find(|(_, k)| k.pk == *pk).map_or_else(|| pk.to_hex(), |(n, _)| n.to_string())
    };

    let cfg = ChainConfig { chain_id: ChainId(1), validators: vec![v.pk], system_key: sys.pk };
    let issue = TxOutput {
        owner: a.pk,
        value: 10,
        kind: UtxoKind::Ownership,
        entity: EntityId::new("E"),
        color: ColorTag(1),
        origin_chain: ChainId(1),
    };
    let mut chain = ChainState::genesis(cfg, vec![issue], sys, v)?;
    let u1 = *chain.utxo_set().keys().next().expect("issued");

    let proc_tx = define_process(&chain, "derive-F", &[p.pk, b.pk, b.pk], p);
    let process = proc_tx.output_id(0);
    chain.submit_tx(proc_tx).map_err(AuthzError::from)?;
    chain.build_block(v, false)?;

    let grant = grant_usage(&chain, &u1, b.pk, 3, a)?;
    let (u2, u3) = (grant.output_id(0), grant.output_id(1));
    chain.submit_tx(grant).map_err(AuthzError::from)?;
    chain.build_block(v, false)?;

    let derive = derive_entity(&chain, &[u2], EntityId::new("F"), b.pk, process, &[p, b])?;
    let f = output_id(&commit_cosigned(&mut chain, derive, b)?, 0);
    chain.build_block(v, false)?;

    let to_c = grant_usage(&chain, &f, c.pk, 2, b)?;
    let (c_usage, f_rest) = (to_c.output_id(0), to_c.output_id(1));
    chain.submit_tx(to_c).map_err(AuthzError::from)?;
    chain.build_block(v, false)?;

    let named = [("U1", u1), ("U2", u2), ("U3", u3), ("F", f), ("C_usage", c_usage), ("F_rest", f_rest)];
    let label = |id: &Hash| named.iter().find(|(_, h)| h == id).map_or_else(|| id.short(), |(n, _)| n.to_string());
    let utxos = named
        .iter()
        .map(|(name, id)| {
            let u = chain.known_output(id).expect("recorded");
            DemoUtxo {
                name: name.to_string(),
                id: *id,
                owner: who(&u.owner),
                kind: u.kind,
                entity: u.entity.0.clone(),
                value: u.value,
            }
        })
        .collect();
    let trace = AuthorizationGraph::from_chain(&chain).trace_authorization(&c_usage)?;
    let path = trace
        .edges
        .iter()
        .map(|e| DemoEdge {
            from: label(&e.from),
            to: label(&e.to),
            kind: e.kind,
            authorizers: e.authorizers.iter().map(&who).collect(),
        })
        .collect();
    Ok(Walkthrough { seed, utxos, path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_and_split() {
        let w = abc_walkthrough(7).unwrap();
        let hops: Vec<(&str, &str)> = w.path.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
        assert_eq!(hops, [("U1", "U2"), ("U2", "F"), ("F", "C_usage")]);
        assert_eq!(w.path[0].authorizers, ["A"]);
        assert!(w.path[1..].iter().all(|e| !e.authorizers.contains(&"A".to_string())));
        let values: Vec<u64> = w.utxos.iter().map(|u| u.value).collect();
        assert_eq!(values, [10, 3, 7, 3, 2, 1]);
        assert_eq!(w, abc_walkthrough(7).unwrap());
        assert!(w.to_text().contains("U2 -> F  Derive"));
    }
}
