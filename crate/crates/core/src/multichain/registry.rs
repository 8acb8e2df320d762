//! Chain addressing: which chains exist, how they nest, and where to reach
//! them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ChainId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Role,
    Permission,
    Service,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub chain_id: ChainId,
    pub kind: ChainKind,
    #[serde(default)]
    pub parent: Option<ChainId>,
    pub endpoint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainLocator {
    pub chain_id: ChainId,
    pub endpoint: String,
}

/// One registry write, kept for audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegistryEvent {
    pub seq: u64,
    pub entry: RegistryEntry,
    pub replaced: Option<RegistryEntry>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("chain {0} is not registered")]
    NotFound(ChainId),
    #[error("registry is empty")]
    Empty,
    #[error("expected exactly one root chain, found {0:?}")]
    Roots(Vec<ChainId>),
    #[error("chain {chain} names unregistered parent {parent}")]
    UnknownParent { chain: ChainId, parent: ChainId },
    #[error("parent links of chain {0} form a cycle")]
    Cycle(ChainId),
    #[error("service chain {0} has no {1:?} chain in its subtree")]
    MissingKind(ChainId, ChainKind),
    #[error("registry file: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, Default)]
pub struct ChainRegistry {
    entries: BTreeMap<ChainId, RegistryEntry>,
    audit: Vec<RegistryEvent>,
}

impl ChainRegistry {
    pub fn from_entries(entries: impl IntoIterator<Item = RegistryEntry>) -> Self {
        let mut reg = ChainRegistry::default();
        for e in entries {
            reg.register(e);
        }
        reg
    }

    /// Parses the JSON list form `[{chain_id, kind, parent, endpoint}, ...]`.
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let entries: Vec<RegistryEntry> =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Ok(Self::from_entries(entries))
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&RegistryEntry> = self.entries.values().collect();
        serde_json::to_string_pretty(&list).expect("registry serializes")
    }

    /// Inserts or replaces an entry; the last write wins.
    pub fn register(&mut self, entry: RegistryEntry) {
        let replaced = self.entries.insert(entry.chain_id, entry.clone());
        self.audit.push(RegistryEvent { seq: self.audit.len() as u64, entry, replaced });
    }

    pub fn resolve(&self, id: ChainId) -> Result<ChainLocator, RegistryError> {
        let e = self.entries.get(&id).ok_or(RegistryError::NotFound(id))?;
        Ok(ChainLocator { chain_id: id, endpoint: e.endpoint.clone() })
    }

    pub fn get(&self, id: ChainId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn audit(&self) -> &[RegistryEvent] {
        &self.audit
    }

    pub fn children(&self, id: ChainId) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values().filter(move |e| e.parent == Some(id))
    }

    pub fn root(&self) -> Option<ChainId> {
        let mut roots = self.entries.values().filter(|e| e.parent.is_none());
        let r = roots.next()?;
        roots.next().is_none().then_some(r.chain_id)
    }

    fn subtree_kinds(&self, id: ChainId) -> BTreeSet<ChainKind> {
        let mut kinds = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            kinds.insert(self.entries[&n].kind);
            stack.extend(self.children(n).map(|e| e.chain_id));
        }
        kinds
    }

    /// Checks the tree shape and that every service chain's subtree holds
    /// at least one role chain and one permission chain.
    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.entries.is_empty() {
            return Err(RegistryError::Empty);
        }
        for e in self.entries.values() {
            if let Some(p) = e.parent {
                if !self.entries.contains_key(&p) {
                    return Err(RegistryError::UnknownParent { chain: e.chain_id, parent: p });
                }
            }
            let mut seen = BTreeSet::new();
            let mut cur = Some(e.chain_id);
            while let Some(c) = cur {
                if !seen.insert(c) {
                    return Err(RegistryError::Cycle(e.chain_id));
                }
                cur = self.entries[&c].parent;
            }
        }
        let roots: Vec<ChainId> = self.entries.values().filter(|e| e.parent.is_none()).map(|e| e.chain_id).collect();
        if roots.len() != 1 {
            return Err(RegistryError::Roots(roots));
        }
        for e in self.entries.values().filter(|e| e.kind == ChainKind::Service) {
            let kinds = self.subtree_kinds(e.chain_id);
            for need in [ChainKind::Role, ChainKind::Permission] {
                if !kinds.contains(&need) {
                    return Err(RegistryError::MissingKind(e.chain_id, need));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u32, kind: ChainKind, parent: Option<u32>) -> RegistryEntry {
        RegistryEntry { chain_id: ChainId(id), kind, parent: parent.map(ChainId), endpoint: format!("mem://{id}") }
    }

    fn sample() -> ChainRegistry {
        ChainRegistry::from_entries([
            entry(1, ChainKind::Service, None),
            entry(2, ChainKind::Role, Some(1)),
            entry(3, ChainKind::Permission, Some(1)),
        ])
    }

    #[test]
    fn resolve_and_reregister() {
        let mut reg = sample();
        assert_eq!(reg.resolve(ChainId(2)).unwrap().endpoint, "mem://2");
        assert_eq!(reg.resolve(ChainId(9)), Err(RegistryError::NotFound(ChainId(9))));
        let mut moved = entry(2, ChainKind::Role, Some(1));
        moved.endpoint = "mem://2b".into();
        reg.register(moved);
        assert_eq!(reg.resolve(ChainId(2)).unwrap().endpoint, "mem://2b");
        assert_eq!(reg.audit().len(), 4);
        assert_eq!(reg.audit()[3].replaced.as_ref().unwrap().endpoint, "mem://2");
    }

    #[test]
    fn validation_rules() {
        assert_eq!(sample().validate(), Ok(()));
        let mut reg = sample();
        reg.register(entry(4, ChainKind::Service, Some(1)));
        assert_eq!(reg.validate(), Err(RegistryError::MissingKind(ChainId(4), ChainKind::Role)));
        reg.register(entry(5, ChainKind::Role, Some(4)));
        reg.register(entry(6, ChainKind::Permission, Some(4)));
        assert_eq!(reg.validate(), Ok(()));

        let mut two_roots = sample();
        two_roots.register(entry(7, ChainKind::Role, None));
        assert!(matches!(two_roots.validate(), Err(RegistryError::Roots(_))));

        let mut cyclic = sample();
        cyclic.register(entry(1, ChainKind::Service, Some(3)));
        assert!(matches!(cyclic.validate(), Err(RegistryError::Cycle(_))));
    }

    #[test]
    fn json_roundtrip() {
        let reg = sample();
        let back = ChainRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back.entries().cloned().collect::<Vec<_>>(), reg.entries().cloned().collect::<Vec<_>>());
        assert!(ChainRegistry::from_json(r#"[{"chain_id":1,"kind":"service","endpoint":"x","extra":1}]"#).is_err());
    }
}
