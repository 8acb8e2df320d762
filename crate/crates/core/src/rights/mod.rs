//! Rights management on top of the ledger: role and permission records,
//! usage grants and derivations, cooperative signing, authentication and
//! access logs.

pub mod access;
pub mod auth;
pub mod authz;
pub mod demo;
pub mod graph;
pub mod records;

pub use access::{audit_csv, AccessError, AccessLog, AccessLogEntry, AuditRow};
pub use auth::{
    authenticate_current, authenticate_historical, verify_signatures, AuthError, AuthResult, OutputSelector,
    SignatureFault,
};
pub use authz::{
    commit_cosigned, cosign_step, define_process, derive_entity, grant_usage, process_participants,
    verify_cooperation, verify_cooperation_chain, AuthzError, CosignError,
};
pub use graph::{AuthorizationGraph, EdgeKind, GrantEdge, ProvenancePath, TraceError};
pub use records::{
    DataPermissionRecord, Decision, DenyReason, PermissionId, PermissionNode, RecordError, RightsFixture,
    RightsStore, RoleId, RoleMapping, RoleRecord, RolePermissionRecord, UserId,
};
