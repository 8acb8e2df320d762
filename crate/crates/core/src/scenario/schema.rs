//! Scenario file format. Unknown fields are rejected everywhere.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{ChainId, UtxoKind};
use crate::multichain::ChainKind;
use crate::propagation::GossipMode;
use crate::rights::{PermissionId, RightsFixture, RoleId, UserId};
use crate::trust::TrustFixture;

use super::ScenarioError;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Master seed for named keys and every random draw.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub keys: Vec<KeySpec>,
    /// Key that commits genesis issuance, bridge and fork transactions.
    #[serde(default = "default_system")]
    pub system_key: String,
    #[serde(default)]
    pub chains: Vec<ChainSpec>,
    #[serde(default)]
    pub rights: Option<RightsSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

fn default_system() -> String {
    "system".into()
}

/// A named key. Without `seed` the key is derived from the scenario seed
/// and the name; `pk`, when present, must match.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySpec {
    pub name: String,
    #[serde(default)]
    pub seed: Option<String>,
    #[serde(default)]
    pub pk: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub chain_id: ChainId,
    pub kind: ChainKind,
    #[serde(default)]
    pub parent: Option<ChainId>,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub leaders: Vec<String>,
    #[serde(default)]
    pub issuance: Vec<IssueSpec>,
}

/// A genesis output, bound to `name`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueSpec {
    pub name: String,
    pub owner: String,
    pub value: u64,
    #[serde(default = "default_kind")]
    pub kind: UtxoKind,
    pub entity: String,
    #[serde(default = "default_color")]
    pub color: u16,
}

impl IssueSpec {
    pub fn output(&self) -> OutputSpec {
        OutputSpec {
            owner: self.owner.clone(),
            value: self.value,
            kind: self.kind,
            entity: self.entity.clone(),
            color: self.color,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub owner: String,
    pub value: u64,
    #[serde(default = "default_kind")]
    pub kind: UtxoKind,
    pub entity: String,
    #[serde(default = "default_color")]
    pub color: u16,
}

fn default_kind() -> UtxoKind {
    UtxoKind::Ownership
}

fn default_color() -> u16 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RightsSpec {
    pub issuer: String,
    pub role_chain: ChainId,
    pub permission_chain: ChainId,
    #[serde(default)]
    pub fixture: Option<RightsFixture>,
    /// Directory holding roles.json, permissions.json and
    /// data_permissions.json, relative to the scenario file.
    #[serde(default)]
    pub fixture_dir: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    #[default]
    Ok,
    Rejected,
}

/// Unknown fields are caught by `Action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(flatten)]
    pub action: Action,
    #[serde(default)]
    pub expect: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    AssignRole {
        user: UserId,
        roles: Vec<RoleId>,
    },
    DefineProcess {
        chain: ChainId,
        name: String,
        participants: Vec<String>,
        party: String,
        bind: String,
    },
    GrantUsage {
        chain: ChainId,
        from: String,
        grantee: String,
        n: u64,
        owner: String,
        #[serde(default)]
        bind: Vec<String>,
    },
    DeriveEntity {
        chain: ChainId,
        inputs: Vec<String>,
        entity: String,
        owner: String,
        process: String,
        signers: Vec<String>,
        committer: String,
        #[serde(default)]
        bind: Vec<String>,
    },
    /// A plain transaction: spend `inputs`, create `outputs`.
    Spend {
        chain: ChainId,
        inputs: Vec<String>,
        outputs: Vec<OutputSpec>,
        signers: Vec<String>,
        committer: String,
        /// Seal a block right after submission.
        #[serde(default = "yes")]
        seal: bool,
        #[serde(default)]
        bind: Vec<String>,
    },
    Transfer {
        inputs: Vec<(ChainId, String)>,
        destination: ChainId,
        outputs: Vec<OutputSpec>,
        owners: Vec<String>,
        /// Coordinator stops after this many prepares.
        #[serde(default)]
        crash_after_prepares: Option<usize>,
        /// Chains marked unavailable for the duration of the step.
        #[serde(default)]
        unavailable: Vec<ChainId>,
        #[serde(default)]
        bind: Vec<String>,
    },
    Rollup {
        child: ChainId,
        from: u64,
        to: u64,
    },
    /// Seals one empty-ish block, then grows a heavier side branch from
    /// its parent so the chain reorganizes.
    Fork {
        chain: ChainId,
        #[serde(default = "two")]
        length: usize,
    },
    RecordAccess {
        chain: ChainId,
        user: UserId,
        actor: String,
        how: String,
        data: String,
    },
    PublishReputation {
        chain: ChainId,
        entity: String,
        score: f64,
        scope: u16,
    },
    Propagation {
        n: usize,
        lambda: u32,
        i0: f64,
        p: f64,
        trials: usize,
        #[serde(default)]
        mode: GossipMode,
    },
    Trust {
        #[serde(default)]
        fixture: Option<TrustFixture>,
        /// Path relative to the scenario file.
        #[serde(default)]
        fixture_file: Option<String>,
    },
}

fn yes() -> bool {
    true
}

fn two() -> usize {
    2
}

impl Action {
    pub fn op(&self) -> &'static str {
        match self {
            Action::AssignRole { .. } => "assign_role",
            Action::DefineProcess { .. } => "define_process",
            Action::GrantUsage { .. } => "grant_usage",
            Action::DeriveEntity { .. } => "derive_entity",
            Action::Spend { .. } => "spend",
            Action::Transfer { .. } => "transfer",
            Action::Rollup { .. } => "rollup",
            Action::Fork { .. } => "fork",
            Action::RecordAccess { .. } => "record_access",
            Action::PublishReputation { .. } => "publish_reputation",
            Action::Propagation { .. } => "propagation",
            Action::Trust { .. } => "trust",
        }
    }
}

/// Checks evaluated after every step has run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    TotalValue { equals: u64 },
    ChainValue { chain: ChainId, equals: u64 },
    Value { utxo: String, equals: u64 },
    Unspent { utxo: String, equals: bool },
    Owner { utxo: String, key: String },
    PathLength { utxo: String, equals: usize },
    /// `key` authorizes the first edge of the provenance path and no other.
    SignerOnlyAtRoot { utxo: String, key: String },
    Access { user: UserId, data: String, action: PermissionId, allow: bool },
    Reputation { entity: String, scope: u16, equals: f64 },
    AuditVerified { equals: bool },
    /// Authentication of the transaction that created `utxo`.
    Authenticate { utxo: String, mode: AuthMode, equals: AuthExpect },
    TrustInvariants,
    JournalVerifies { equals: bool },
    Height { chain: ChainId, at_least: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    Current,
    Historical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthExpect {
    Valid,
    Spent,
    Invalid,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if s.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(s.version));
        }
        s.check_references()?;
        Ok(s)
    }

    /// Every key, chain and UTXO name a step uses must be declared before
    /// that step.
    pub fn check_references(&self) -> Result<(), ScenarioError> {
        let keys: BTreeSet<&str> = self.keys.iter().map(|k| k.name.as_str()).collect();
        let chains: BTreeSet<ChainId> = self.chains.iter().map(|c| c.chain_id).collect();
        let mut utxos: BTreeSet<&str> = BTreeSet::new();

        let key = |step: Option<usize>, k: &str| {
            if keys.contains(k) {
                Ok(())
            } else {
                Err(ScenarioError::Reference { step, name: k.to_string() })
            }
        };
        let chain = |step: Option<usize>, c: ChainId| {
            if chains.contains(&c) {
                Ok(())
            } else {
                Err(ScenarioError::Reference { step, name: format!("chain {c}") })
            }
        };
        if !self.chains.is_empty() {
            key(None, &self.system_key)?;
        }
        for c in &self.chains {
            if let Some(p) = c.parent {
                chain(None, p)?;
            }
            for l in &c.leaders {
                key(None, l)?;
            }
            for i in &c.issuance {
                key(None, &i.owner)?;
                if !utxos.insert(&i.name) {
                    return Err(ScenarioError::Duplicate(i.name.clone()));
                }
            }
        }
        if let Some(r) = &self.rights {
            key(None, &r.issuer)?;
            chain(None, r.role_chain)?;
            chain(None, r.permission_chain)?;
        }

        for (i, step) in self.steps.iter().enumerate() {
            let s = Some(i);
            let utxo = |utxos: &BTreeSet<&str>, u: &str| {
                if utxos.contains(u) {
                    Ok(())
                } else {
                    Err(ScenarioError::Reference { step: s, name: u.to_string() })
                }
            };
            let mut binds: Vec<&String> = Vec::new();
            match &step.action {
                Action::AssignRole { .. } => {
                    if self.rights.is_none() {
                        return Err(ScenarioError::Reference { step: s, name: "rights".into() });
                    }
                }
                Action::DefineProcess { chain: c, participants, party, bind, .. } => {
                    chain(s, *c)?;
                    for p in participants.iter().chain([party]) {
                        key(s, p)?;
                    }
                    binds.push(bind);
                }
                Action::GrantUsage { chain: c, from, grantee, owner, bind, .. } => {
                    chain(s, *c)?;
                    utxo(&utxos, from)?;
                    key(s, grantee)?;
                    key(s, owner)?;
                    binds.extend(bind);
                }
                Action::DeriveEntity { chain: c, inputs, owner, process, signers, committer, bind, .. } => {
                    chain(s, *c)?;
                    for u in inputs.iter().chain([process]) {
                        utxo(&utxos, u)?;
                    }
                    for k in signers.iter().chain([owner, committer]) {
                        key(s, k)?;
                    }
                    binds.extend(bind);
                }
                Action::Spend { chain: c, inputs, outputs, signers, committer, bind, .. } => {
                    chain(s, *c)?;
                    for u in inputs {
                        utxo(&utxos, u)?;
                    }
                    for k in signers.iter().chain([committer]).chain(outputs.iter().map(|o| &o.owner)) {
                        key(s, k)?;
                    }
                    binds.extend(bind);
                }
                Action::Transfer { inputs, destination, outputs, owners, unavailable, bind, .. } => {
                    chain(s, *destination)?;
                    for (c, u) in inputs {
                        chain(s, *c)?;
                        utxo(&utxos, u)?;
                    }
                    for c in unavailable {
                        chain(s, *c)?;
                    }
                    for k in owners.iter().chain(outputs.iter().map(|o| &o.owner)) {
                        key(s, k)?;
                    }
                    binds.extend(bind);
                }
                Action::Rollup { child, .. } => chain(s, *child)?,
                Action::Fork { chain: c, .. } => chain(s, *c)?,
                Action::RecordAccess { chain: c, actor, .. } => {
                    chain(s, *c)?;
                    key(s, actor)?;
                }
                Action::PublishReputation { chain: c, .. } => chain(s, *c)?,
                Action::Propagation { .. } => {}
                Action::Trust { fixture, fixture_file } => {
                    if fixture.is_some() == fixture_file.is_some() {
                        return Err(ScenarioError::Parse(format!(
                            "step {i}: trust needs exactly one of fixture and fixture_file"
                        )));
                    }
                }
            }
            for b in binds {
                if !utxos.insert(b) {
                    return Err(ScenarioError::Duplicate(b.clone()));
                }
            }
        }

        for e in &self.expectations {
            let name = match e {
                Expectation::Value { utxo, .. }
                | Expectation::Unspent { utxo, .. }
                | Expectation::PathLength { utxo, .. }
                | Expectation::Authenticate { utxo, .. } => Some(utxo),
                Expectation::Owner { utxo, key: k } | Expectation::SignerOnlyAtRoot { utxo, key: k } => {
                    key(None, k)?;
                    Some(utxo)
                }
                _ => None,
            };
            if let Some(u) = name.filter(|u| !utxos.contains(u.as_str())) {
                return Err(ScenarioError::Reference { step: None, name: u.clone() });
            }
        }
        Ok(())
    }
}
