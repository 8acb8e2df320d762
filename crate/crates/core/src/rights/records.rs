//! Role and permission payloads. The records themselves stay off chain in
//! a [`RightsStore`]; the role and permission chains only carry their
//! fingerprints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::{KeyPair, PublicKeyRef, SignatureRecord};
use crate::hash::{digest_parts, Hash};
use crate::model::{fingerprint_tx, ColorTag, EntityId, Transaction};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(UserId);
string_id!(RoleId);
string_id!(PermissionId);

pub const ROLE_TAG: &str = "ior/role/v1";
pub const ROLE_PERMISSION_TAG: &str = "ior/role-permission/v1";
pub const DATA_PERMISSION_TAG: &str = "ior/data-permission/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRecord {
    pub user: UserId,
    pub roles: Vec<RoleId>,
    pub issuer: PublicKeyRef,
    pub signature: SignatureRecord,
}

impl RoleRecord {
    fn message(user: &UserId, roles: &[RoleId]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ROLE_TAG.as_bytes()).str(&user.0).u32(roles.len() as u32);
        for r in roles {
            w.str(&r.0);
        }
        w.into_bytes()
    }

    pub fn signature_valid(&self) -> bool {
        self.signature.signer == self.issuer && self.signature.verify(&Self::message(&self.user, &self.roles))
    }

    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.raw(&Self::message(&self.user, &self.roles)).pk(&self.issuer).sig(&self.signature);
        digest_parts(ROLE_TAG, &[&w.into_bytes()])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePermissionRecord {
    pub role: RoleId,
    pub permissions: Vec<PermissionId>,
    pub issuer: PublicKeyRef,
    pub signature: SignatureRecord,
}

impl RolePermissionRecord {
    fn message(role: &RoleId, permissions: &[PermissionId]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ROLE_PERMISSION_TAG.as_bytes()).str(&role.0).u32(permissions.len() as u32);
        for p in permissions {
            w.str(&p.0);
        }
        w.into_bytes()
    }

    pub fn sign(role: RoleId, permissions: Vec<PermissionId>, issuer: &KeyPair) -> Self {
        let signature = issuer.sign(&Self::message(&role, &permissions));
        RolePermissionRecord { role, permissions, issuer: issuer.pk, signature }
    }

    pub fn signature_valid(&self) -> bool {
        self.signature.signer == self.issuer
            && self.signature.verify(&Self::message(&self.role, &self.permissions))
    }

    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.raw(&Self::message(&self.role, &self.permissions)).pk(&self.issuer).sig(&self.signature);
        digest_parts(ROLE_PERMISSION_TAG, &[&w.into_bytes()])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionNode {
    pub id: PermissionId,
    #[serde(default)]
    pub parent: Option<PermissionId>,
    /// Category dimension, e.g. "medical/records".
    #[serde(default)]
    pub category: String,
    /// Usage mode, e.g. "read".
    #[serde(default)]
    pub usage: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPermissionRecord {
    pub data_id: EntityId,
    pub grants: Vec<PermissionId>,
}

impl DataPermissionRecord {
    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.str(&self.data_id.0).u32(self.grants.len() as u32);
        for g in &self.grants {
            w.str(&g.0);
        }
        digest_parts(DATA_PERMISSION_TAG, &[&w.into_bytes()])
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("role {0} is not defined")]
    UnknownRole(RoleId),
    #[error("issuer is not authorized to write role records")]
    BadIssuer,
    #[error("permission {0} is not defined")]
    UnknownPermission(PermissionId),
    #[error("permission {0} defined twice")]
    DuplicatePermission(PermissionId),
    #[error("permission tree has a cycle through {0}")]
    PermissionCycle(PermissionId),
    #[error("record lists {0} twice")]
    DuplicateEntry(String),
}

/// Why access was refused; names the first link of the chain
/// user → role → permission → data that failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    NoRole,
    UnknownPermission,
    /// No role of the user maps to the action or one of its ancestors.
    RoleLacksPermission,
    /// The data entity's record does not list the action.
    DataNotGranted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

/// Off-chain record store shared by the role and permission chains.
#[derive(Clone, Debug, Default)]
pub struct RightsStore {
    defined_roles: BTreeSet<RoleId>,
    issuers: Vec<PublicKeyRef>,
    permissions: BTreeMap<PermissionId, PermissionNode>,
    role_history: BTreeMap<UserId, Vec<RoleRecord>>,
    role_permissions: Vec<RolePermissionRecord>,
    data_permissions: BTreeMap<EntityId, DataPermissionRecord>,
}

impl RightsStore {
    pub fn new(issuers: Vec<PublicKeyRef>) -> Self {
        RightsStore { issuers, ..Default::default() }
    }

    pub fn define_role(&mut self, role: RoleId) {
        self.defined_roles.insert(role);
    }

    pub fn roles_defined(&self) -> impl Iterator<Item = &RoleId> {
        self.defined_roles.iter()
    }

    /// Adds permission nodes, checking that parents exist and the tree has
    /// no cycles. Nothing is added when a check fails.
    pub fn define_permissions(&mut self, nodes: Vec<PermissionNode>) -> Result<(), RecordError> {
        let mut next = self.permissions.clone();
        for n in nodes {
            if next.contains_key(&n.id) {
                return Err(RecordError::DuplicatePermission(n.id));
            }
            next.insert(n.id.clone(), n);
        }
        for n in next.values() {
            if let Some(p) = &n.parent {
                if !next.contains_key(p) {
                    return Err(RecordError::UnknownPermission(p.clone()));
                }
            }
            let mut seen = BTreeSet::new();
            let mut cur = Some(&n.id);
            while let Some(id) = cur {
                if !seen.insert(id) {
                    return Err(RecordError::PermissionCycle(n.id.clone()));
                }
                cur = next[id].parent.as_ref();
            }
        }
        self.permissions = next;
        Ok(())
    }

    pub fn permission(&self, id: &PermissionId) -> Option<&PermissionNode> {
        self.permissions.get(id)
    }

    pub fn permissions(&self) -> impl Iterator<Item = &PermissionNode> {
        self.permissions.values()
    }

    /// True when `ancestor` equals `id` or lies on its path to the root.
    pub fn implies(&self, ancestor: &PermissionId, id: &PermissionId) -> bool {
        let mut cur = self.permissions.get(id);
        while let Some(n) = cur {
            if &n.id == ancestor {
                return true;
            }
            cur = n.parent.as_ref().and_then(|p| self.permissions.get(p));
        }
        false
    }

    /// Builds and stores a signed role record and returns the role-chain
    /// transaction carrying its fingerprint. The caller submits it.
    pub fn assign_role(
        &mut self,
        user: UserId,
        roles: Vec<RoleId>,
        issuer: &KeyPair,
    ) -> Result<Transaction, RecordError> {
        if !self.issuers.contains(&issuer.pk) {
            return Err(RecordError::BadIssuer);
        }
        let mut seen = BTreeSet::new();
        for r in &roles {
            if !self.defined_roles.contains(r) {
                return Err(RecordError::UnknownRole(r.clone()));
            }
            if !seen.insert(r) {
                return Err(RecordError::DuplicateEntry(r.0.clone()));
            }
        }
        let signature = issuer.sign(&RoleRecord::message(&user, &roles));
        let record = RoleRecord { user: user.clone(), roles, issuer: issuer.pk, signature };
        let tx = fingerprint_tx(ColorTag(0), ROLE_TAG, &record.fingerprint(), issuer);
        self.role_history.entry(user).or_default().push(record);
        Ok(tx)
    }

    /// Current roles of `user`: the latest record wins.
    pub fn roles_of(&self, user: &UserId) -> &[RoleId] {
        self.latest_role_record(user).map(|r| r.roles.as_slice()).unwrap_or(&[])
    }

    pub fn latest_role_record(&self, user: &UserId) -> Option<&RoleRecord> {
        self.role_history.get(user).and_then(|h| h.last())
    }

    pub fn role_history(&self, user: &UserId) -> &[RoleRecord] {
        self.role_history.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.role_history.keys()
    }

    /// Stores a role → permissions record; returns the permission-chain
    /// fingerprint transaction.
    pub fn map_role(
        &mut self,
        role: RoleId,
        permissions: Vec<PermissionId>,
        issuer: &KeyPair,
    ) -> Result<Transaction, RecordError> {
        if !self.issuers.contains(&issuer.pk) {
            return Err(RecordError::BadIssuer);
        }
        if !self.defined_roles.contains(&role) {
            return Err(RecordError::UnknownRole(role));
        }
        if let Some(p) = permissions.iter().find(|p| !self.permissions.contains_key(p)) {
            return Err(RecordError::UnknownPermission(p.clone()));
        }
        let record = RolePermissionRecord::sign(role, permissions, issuer);
        let tx = fingerprint_tx(ColorTag(0), ROLE_PERMISSION_TAG, &record.fingerprint(), issuer);
        self.role_permissions.push(record);
        Ok(tx)
    }

    /// A role's permissions are the union over all of its records.
    pub fn permissions_of_role(&self, role: &RoleId) -> BTreeSet<&PermissionId> {
        self.role_permissions
            .iter()
            .filter(|r| &r.role == role)
            .flat_map(|r| r.permissions.iter())
            .collect()
    }

    pub fn set_data_permissions(
        &mut self,
        record: DataPermissionRecord,
        issuer: &KeyPair,
    ) -> Result<Transaction, RecordError> {
        if !self.issuers.contains(&issuer.pk) {
            return Err(RecordError::BadIssuer);
        }
        if let Some(p) = record.grants.iter().find(|p| !self.permissions.contains_key(p)) {
            return Err(RecordError::UnknownPermission(p.clone()));
        }
        let tx = fingerprint_tx(ColorTag(0), DATA_PERMISSION_TAG, &record.fingerprint(), issuer);
        self.data_permissions.insert(record.data_id.clone(), record);
        Ok(tx)
    }

    pub fn data_permissions(&self, data: &EntityId) -> Option<&DataPermissionRecord> {
        self.data_permissions.get(data)
    }

    pub fn check_access(&self, user: &UserId, data: &EntityId, action: &PermissionId) -> Decision {
        let roles = self.roles_of(user);
        if roles.is_empty() {
            return Decision::Deny(DenyReason::NoRole);
        }
        if !self.permissions.contains_key(action) {
            return Decision::Deny(DenyReason::UnknownPermission);
        }
        let covered = roles
            .iter()
            .any(|r| self.permissions_of_role(r).iter().any(|p| self.implies(p, action)));
        if !covered {
            return Decision::Deny(DenyReason::RoleLacksPermission);
        }
        let granted = self
            .data_permissions
            .get(data)
            .is_some_and(|d| d.grants.contains(action));
        if !granted {
            return Decision::Deny(DenyReason::DataNotGranted);
        }
        Decision::Allow
    }
}

/// JSON fixture for a rights store, also loadable from the three files
/// `roles.json`, `permissions.json` and `data_permissions.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RightsFixture {
    #[serde(default)]
    pub roles: Vec<RoleId>,
    #[serde(default)]
    pub permissions: Vec<PermissionNode>,
    #[serde(default)]
    pub role_permissions: Vec<RoleMapping>,
    #[serde(default)]
    pub data_permissions: Vec<DataPermissionRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleMapping {
    pub role: RoleId,
    pub permissions: Vec<PermissionId>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PermissionsFile {
    nodes: Vec<PermissionNode>,
    #[serde(default)]
    role_permissions: Vec<RoleMapping>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl RightsFixture {
    pub fn load_dir(dir: &Path) -> Result<RightsFixture, FixtureError> {
        fn read<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T, FixtureError> {
            let path = p.display().to_string();
            let text = std::fs::read_to_string(p).map_err(|source| FixtureError::Io { path: path.clone(), source })?;
            serde_json::from_str(&text).map_err(|source| FixtureError::Json { path, source })
        }
        let roles: Vec<RoleId> = read(&dir.join("roles.json"))?;
        let perms: PermissionsFile = read(&dir.join("permissions.json"))?;
        let data_permissions: Vec<DataPermissionRecord> = read(&dir.join("data_permissions.json"))?;
        Ok(RightsFixture {
            roles,
            permissions: perms.nodes,
            role_permissions: perms.role_permissions,
            data_permissions,
        })
    }

    /// Loads the fixture into a store; returns the fingerprint transactions
    /// for the permission chain in fixture order.
    pub fn install(&self, store: &mut RightsStore, issuer: &KeyPair) -> Result<Vec<Transaction>, RecordError> {
        for r in &self.roles {
            store.define_role(r.clone());
        }
        store.define_permissions(self.permissions.clone())?;
        let mut txs = Vec::new();
        for m in &self.role_permissions {
            txs.push(store.map_role(m.role.clone(), m.permissions.clone(), issuer)?);
        }
        for d in &self.data_permissions {
            txs.push(store.set_data_permissions(d.clone(), issuer)?);
        }
        Ok(txs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::key;

    fn node(id: &str, parent: Option<&str>) -> PermissionNode {
        PermissionNode {
            id: PermissionId::new(id),
            parent: parent.map(PermissionId::new),
            category: "records".into(),
            usage: "read".into(),
        }
    }

    fn p(s: &str) -> PermissionId {
        PermissionId::new(s)
    }

    fn store() -> (RightsStore, KeyPair) {
        let admin = key("admin");
        let mut s = RightsStore::new(vec![admin.pk]);
        s.define_role(RoleId::new("analyst"));
        s.define_role(RoleId::new("auditor"));
        s.define_permissions(vec![node("all", None), node("read", Some("all")), node("read.meta", Some("read"))])
            .unwrap();
        (s, admin)
    }

    #[test]
    fn latest_role_record_wins() {
        let (mut s, admin) = store();
        let u1 = UserId::new("u1");
        let t1 = s.assign_role(u1.clone(), vec![RoleId::new("analyst")], &admin).unwrap();
        assert_eq!(s.roles_of(&u1), &[RoleId::new("analyst")]);
        let t2 = s.assign_role(u1.clone(), vec![RoleId::new("auditor")], &admin).unwrap();
        assert_ne!(t1.hash(), t2.hash());
        assert_eq!(s.roles_of(&u1), &[RoleId::new("auditor")]);
        assert_eq!(s.role_history(&u1).len(), 2);
        let rec = s.latest_role_record(&u1).unwrap();
        assert!(rec.signature_valid());
        assert_eq!(crate::model::read_fingerprint(&t2, ROLE_TAG), Some(rec.fingerprint()));
    }

    #[test]
    fn assign_errors() {
        let (mut s, admin) = store();
        assert_eq!(
            s.assign_role(UserId::new("u"), vec![RoleId::new("ghost")], &admin),
            Err(RecordError::UnknownRole(RoleId::new("ghost")))
        );
        assert_eq!(
            s.assign_role(UserId::new("u"), vec![RoleId::new("analyst")], &key("mallory")),
            Err(RecordError::BadIssuer)
        );
    }

    #[test]
    fn permission_tree_rejects_cycles_and_unknown_parents() {
        let (mut s, _) = store();
        assert!(matches!(
            s.define_permissions(vec![node("x", Some("y")), node("y", Some("x"))]),
            Err(RecordError::PermissionCycle(_))
        ));
        assert_eq!(
            s.define_permissions(vec![node("z", Some("nope"))]),
            Err(RecordError::UnknownPermission(p("nope")))
        );
        assert!(s.permission(&p("x")).is_none());
    }

    #[test]
    fn access_decisions() {
        let (mut s, admin) = store();
        let data = EntityId::new("D");
        s.map_role(RoleId::new("analyst"), vec![p("read")], &admin).unwrap();
        s.set_data_permissions(DataPermissionRecord { data_id: data.clone(), grants: vec![p("read"), p("read.meta")] }, &admin)
            .unwrap();
        let u1 = UserId::new("u1");
        assert_eq!(s.check_access(&u1, &data, &p("read")), Decision::Deny(DenyReason::NoRole));
        s.assign_role(u1.clone(), vec![RoleId::new("analyst")], &admin).unwrap();
        assert_eq!(s.check_access(&u1, &data, &p("read")), Decision::Allow);
        assert_eq!(s.check_access(&u1, &data, &p("read.meta")), Decision::Allow);
        assert_eq!(s.check_access(&u1, &data, &p("all")), Decision::Deny(DenyReason::RoleLacksPermission));
        assert_eq!(
            s.check_access(&u1, &EntityId::new("other"), &p("read")),
            Decision::Deny(DenyReason::DataNotGranted)
        );
        assert_eq!(s.check_access(&u1, &data, &p("nope")), Decision::Deny(DenyReason::UnknownPermission));
    }
}
