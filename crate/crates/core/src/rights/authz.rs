//! Ownership → usage grants, collaboration processes with ordered
//! cooperative signatures, and derivation of new entities.

use thiserror::Error;

use crate::codec::{Reader, Writer};
use crate::crypto::{KeyPair, PublicKeyRef};
use crate::hash::Hash;
use crate::ledger::{ChainState, TxError};
use crate::model::{
    cooperation_anchor, ColorTag, CooperationStep, EntityId, Transaction, TxInput, TxOutput, Utxo, UtxoKind,
};

pub const PROCESS_TAG: &[u8] = b"ior/process/v1";
pub const GRANT_TAG: &[u8] = b"ior/grant";
pub const DERIVE_TAG: &[u8] = b"ior/derive";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthzError {
    #[error("utxo {} is unknown", .0.short())]
    UnknownUtxo(Hash),
    #[error("utxo {} is already spent", .0.short())]
    AlreadySpent(Hash),
    #[error("grant of {requested} exceeds available value {available}")]
    InsufficientValue { requested: u64, available: u64 },
    #[error("grant amount must be positive")]
    ZeroGrant,
    #[error("key does not own utxo {}", .0.short())]
    NotOwner(Hash),
    #[error("utxo {} is not an ownership utxo", .0.short())]
    NotOwnership(Hash),
    #[error("utxo {} is not a usage utxo", .0.short())]
    InputNotUsage(Hash),
    #[error("no inputs given")]
    NoInputs,
    #[error("cosigner {0:?} did not sign")]
    MissingCosigner(PublicKeyRef),
    #[error("reference {} is not a collaboration process", .0.short())]
    NotAProcess(Hash),
    #[error("process participants do not match the derivation: {0}")]
    ProcessMismatch(&'static str),
    #[error(transparent)]
    Cosign(#[from] CosignError),
    #[error(transparent)]
    Ledger(#[from] TxError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CosignError {
    #[error("transaction has no process reference")]
    NoReference,
    #[error("reference {} is not a collaboration process", .0.short())]
    NotAProcess(Hash),
    #[error("{0:?} is not a participant of the process")]
    NotParticipant(PublicKeyRef),
    #[error("out of order: step {step} belongs to {expected:?}, not {got:?}")]
    OutOfOrder { step: usize, expected: PublicKeyRef, got: PublicKeyRef },
    #[error("cooperation already complete")]
    AlreadyComplete,
    #[error("utxo_ref must be the process utxo or one of the inputs")]
    BadUtxoRef,
    #[error("cooperation chain incomplete: {have} of {need} steps")]
    IncompleteCooperation { have: usize, need: usize },
    #[error("cooperation step {0} has a bad signature")]
    BadSignature(usize),
    #[error("cooperation step {0} does not chain to its predecessor")]
    BrokenChain(usize),
}

fn live_utxo(chain: &ChainState, id: &Hash) -> Result<Utxo, AuthzError> {
    if let Some(u) = chain.utxo(id) {
        return Ok(u.clone());
    }
    if chain.known_output(id).is_some() {
        Err(AuthzError::AlreadySpent(*id))
    } else {
        Err(AuthzError::UnknownUtxo(*id))
    }
}

/// Splits `n` usage authorizations off an ownership UTXO: output 0 is the
/// usage UTXO for `grantee`, output 1 (omitted when empty) the ownership
/// remainder. The transaction is signed and committed by `owner`.
pub fn grant_usage(
    chain: &ChainState,
    owner_utxo: &Hash,
    grantee: PublicKeyRef,
    n: u64,
    owner: &KeyPair,
) -> Result<Transaction, AuthzError> {
    let u1 = live_utxo(chain, owner_utxo)?;
    if u1.kind != UtxoKind::Ownership {
        return Err(AuthzError::NotOwnership(u1.id));
    }
    if u1.owner != owner.pk {
        return Err(AuthzError::NotOwner(u1.id));
    }
    if n == 0 {
        return Err(AuthzError::ZeroGrant);
    }
    if n > u1.value {
        return Err(AuthzError::InsufficientValue { requested: n, available: u1.value });
    }
    let mut tx = Transaction::new(u1.color);
    tx.vins.push(TxInput::unsigned(u1.id));
    let out = |owner, value, kind| TxOutput {
        owner,
        value,
        kind,
        entity: u1.entity.clone(),
        color: u1.color,
        origin_chain: u1.origin_chain,
    };
    tx.vouts.push(out(grantee, n, UtxoKind::Usage));
    if u1.value > n {
        tx.vouts.push(out(u1.owner, u1.value - n, UtxoKind::Ownership));
    }
    tx.tx_data = GRANT_TAG.to_vec();
    tx.sign_inputs(chain, &[owner]);
    tx.commit(owner);
    Ok(tx)
}

/// Creates a collaboration process: a value-0 Process UTXO owned by
/// `process_party`, whose creating transaction lists the ordered
/// participants.
pub fn define_process(
    chain: &ChainState,
    name: &str,
    participants: &[PublicKeyRef],
    process_party: &KeyPair,
) -> Transaction {
    let mut tx = Transaction::new(ColorTag(0));
    tx.vouts.push(TxOutput {
        owner: process_party.pk,
        value: 0,
        kind: UtxoKind::Process,
        entity: EntityId::new(name),
        color: ColorTag(0),
        origin_chain: chain.chain_id(),
    });
    let mut w = Writer::new();
    w.raw(PROCESS_TAG).u32(participants.len() as u32);
    for p in participants {
        w.pk(p);
    }
    tx.tx_data = w.into_bytes();
    tx.commit(process_party);
    tx
}

/// Ordered participant list from a process transaction's `tx_data`.
pub fn parse_participants(tx_data: &[u8]) -> Option<Vec<PublicKeyRef>> {
    let rest = tx_data.strip_prefix(PROCESS_TAG)?;
    let mut r = Reader::new(rest);
    let n = r.count(33).ok()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.pk().ok()?);
    }
    r.finish().ok()?;
    Some(out)
}

/// Participants of the process UTXO `process`, which must have been
/// created on this chain's canonical branch.
pub fn process_participants(chain: &ChainState, process: &Hash) -> Option<Vec<PublicKeyRef>> {
    let out = chain.known_output(process)?;
    if out.kind != UtxoKind::Process {
        return None;
    }
    parse_participants(&chain.creating_tx(process)?.tx_data)
}

/// Appends the next cooperation step, signed by `participant`.
pub fn cosign_step(
    chain: &ChainState,
    draft: &mut Transaction,
    participant: &KeyPair,
    utxo_ref: Hash,
) -> Result<(), CosignError> {
    let process = draft.reference.ok_or(CosignError::NoReference)?;
    let order = process_participants(chain, &process).ok_or(CosignError::NotAProcess(process))?;
    push_step(draft, &order, participant, utxo_ref)
}

fn push_step(
    draft: &mut Transaction,
    order: &[PublicKeyRef],
    participant: &KeyPair,
    utxo_ref: Hash,
) -> Result<(), CosignError> {
    if !order.contains(&participant.pk) {
        return Err(CosignError::NotParticipant(participant.pk));
    }
    let step = draft.cooperation.len();
    let Some(expected) = order.get(step) else {
        return Err(CosignError::AlreadyComplete);
    };
    if *expected != participant.pk {
        return Err(CosignError::OutOfOrder { step, expected: *expected, got: participant.pk });
    }
    let valid_ref = draft.reference == Some(utxo_ref) || draft.vins.iter().any(|v| v.prev_utxo == utxo_ref);
    if !valid_ref {
        return Err(CosignError::BadUtxoRef);
    }
    let prev_step_hash = match draft.cooperation.last() {
        Some(s) => s.digest(),
        None => cooperation_anchor(draft.reference.as_ref()),
    };
    let msg = CooperationStep::message(&draft.core_digest(), &utxo_ref, &prev_step_hash);
    draft.cooperation.push(CooperationStep {
        participant: participant.pk,
        utxo_ref,
        prev_step_hash,
        signature: participant.sign(&msg),
    });
    Ok(())
}

/// Checks the hash links and signatures of the cooperation chain, without
/// reference to any participant list.
pub fn verify_cooperation_chain(tx: &Transaction) -> Result<(), CosignError> {
    let core = tx.core_digest();
    let mut prev = cooperation_anchor(tx.reference.as_ref());
    for (i, step) in tx.cooperation.iter().enumerate() {
        if step.prev_step_hash != prev {
            return Err(CosignError::BrokenChain(i));
        }
        if step.signature.signer != step.participant
            || !step.signature.verify(&CooperationStep::message(&core, &step.utxo_ref, &step.prev_step_hash))
        {
            return Err(CosignError::BadSignature(i));
        }
        prev = step.digest();
    }
    Ok(())
}

/// Full check against the ordered participant list: every step present,
/// in order, chained and correctly signed.
pub fn verify_cooperation(tx: &Transaction, order: &[PublicKeyRef]) -> Result<(), CosignError> {
    verify_cooperation_chain(tx)?;
    for (i, step) in tx.cooperation.iter().enumerate() {
        match order.get(i) {
            None => return Err(CosignError::NotParticipant(step.participant)),
            Some(p) if *p != step.participant => {
                return Err(CosignError::OutOfOrder { step: i, expected: *p, got: step.participant })
            }
            _ => {}
        }
    }
    if tx.cooperation.len() < order.len() {
        return Err(CosignError::IncompleteCooperation { have: tx.cooperation.len(), need: order.len() });
    }
    Ok(())
}

/// Signs the finished draft as committer and submits it.
pub fn commit_cosigned(
    chain: &mut ChainState,
    mut draft: Transaction,
    committer: &KeyPair,
) -> Result<Hash, AuthzError> {
    if let Some(process) = draft.reference {
        let order = process_participants(chain, &process).ok_or(AuthzError::NotAProcess(process))?;
        verify_cooperation(&draft, &order)?;
    } else {
        verify_cooperation_chain(&draft)?;
    }
    draft.commit(committer);
    Ok(chain.submit_tx(draft)?)
}

/// Builds a derivation draft: all `usage_inputs` (Usage UTXOs held by
/// `new_owner`) become one Ownership UTXO of `new_entity` worth their sum.
/// Inputs are signed and the cooperation chain of `process` is run with
/// the keys in `signers`, in process order. The draft still needs
/// [`commit_cosigned`].
pub fn derive_entity(
    chain: &ChainState,
    usage_inputs: &[Hash],
    new_entity: EntityId,
    new_owner: PublicKeyRef,
    process: Hash,
    signers: &[&KeyPair],
) -> Result<Transaction, AuthzError> {
    if usage_inputs.is_empty() {
        return Err(AuthzError::NoInputs);
    }
    let mut inputs = Vec::with_capacity(usage_inputs.len());
    for id in usage_inputs {
        let u = live_utxo(chain, id)?;
        if u.kind != UtxoKind::Usage {
            return Err(AuthzError::InputNotUsage(u.id));
        }
        if u.owner != new_owner {
            return Err(AuthzError::NotOwner(u.id));
        }
        inputs.push(u);
    }
    let order = process_participants(chain, &process).ok_or(AuthzError::NotAProcess(process))?;
    if !order.contains(&new_owner) {
        return Err(AuthzError::ProcessMismatch("new owner must take part in the process"));
    }
    if let Some(missing) = order.iter().find(|p| !signers.iter().any(|k| k.pk == **p)) {
        return Err(AuthzError::MissingCosigner(*missing));
    }

    let color = inputs[0].color;
    let mut tx = Transaction::new(color);
    tx.vins = inputs.iter().map(|u| TxInput::unsigned(u.id)).collect();
    tx.vouts.push(TxOutput {
        owner: new_owner,
        value: inputs.iter().map(|u| u.value).sum(),
        kind: UtxoKind::Ownership,
        entity: new_entity,
        color,
        origin_chain: chain.chain_id(),
    });
    tx.reference = Some(process);
    tx.tx_data = DERIVE_TAG.to_vec();
    tx.sign_inputs(chain, signers);

    for p in &order {
        let key = signers.iter().find(|k| k.pk == *p).expect("checked above");
        // holders point at an input they hold; everyone else at the process
        let utxo_ref = inputs.iter().find(|u| u.owner == *p).map(|u| u.id).unwrap_or(process);
        push_step(&mut tx, &order, key, utxo_ref)?;
    }
    Ok(tx)
}
