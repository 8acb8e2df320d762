//! Current and historical authentication of committed transactions.
//!
//! Historical validity asks whether a transaction was legitimately included
//! in the canonical branch. Current validity additionally asks whether the
//! rights it created are still live.

use serde::Serialize;
use thiserror::Error;

use super::authz::verify_cooperation_chain;
use crate::codec::canonical_serialize;
use crate::crypto::PublicKeyRef;
use crate::hash::Hash;
use crate::ledger::ChainState;
use crate::model::Transaction;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureFault {
    MissingCommitter,
    Committer,
    MissingInput(usize),
    Input(usize),
    /// Input owner unknown to this chain, so its signature cannot be checked.
    UnknownInput(usize),
    Cooperation(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "detail")]
pub enum AuthResult {
    Valid,
    /// Signatures verify but the rights in question were spent.
    Spent,
    Invalid(SignatureFault),
}

impl AuthResult {
    pub fn is_valid(&self) -> bool {
        *self == AuthResult::Valid
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("transaction not found on the canonical branch")]
    NotFound,
    #[error("transaction has no output {0}")]
    NoSuchOutput(u32),
    #[error("transaction carries no block_data")]
    MissingBlockData,
    #[error("no canonical block {0}")]
    BlockNotFound(u64),
    #[error("transaction not included at its claimed position")]
    NotIncluded,
}

/// Which output's liveness decides current validity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputSelector {
    /// Live if any output is unspent; transactions without outputs are
    /// live whenever their signatures verify.
    Any,
    Output(u32),
}

/// Checks the committer signature, each input owner's signature and the
/// cooperation chain. `owner_of` resolves a spent UTXO id to its owner.
pub fn verify_signatures(
    tx: &Transaction,
    owner_of: impl Fn(&Hash) -> Option<PublicKeyRef>,
) -> Result<(), SignatureFault> {
    if tx.tx_signature.is_none() {
        return Err(SignatureFault::MissingCommitter);
    }
    if !tx.committer_signature_valid() {
        return Err(SignatureFault::Committer);
    }
    let core = tx.core_payload();
    for (i, vin) in tx.vins.iter().enumerate() {
        let sig = vin.owner_signature.as_ref().ok_or(SignatureFault::MissingInput(i))?;
        let owner = owner_of(&vin.prev_utxo).ok_or(SignatureFault::UnknownInput(i))?;
        if sig.signer != owner || !sig.verify(&core) {
            return Err(SignatureFault::Input(i));
        }
    }
    verify_cooperation_chain(tx).map_err(|e| match e {
        super::authz::CosignError::BrokenChain(i) | super::authz::CosignError::BadSignature(i) => {
            SignatureFault::Cooperation(i)
        }
        _ => SignatureFault::Cooperation(0),
    })
}

fn chain_signatures(chain: &ChainState, tx: &Transaction) -> Result<(), SignatureFault> {
    verify_signatures(tx, |id| chain.known_output(id).map(|u| u.owner))
}

pub fn authenticate_current(
    chain: &ChainState,
    tx_hash: &Hash,
    selector: OutputSelector,
) -> Result<AuthResult, AuthError> {
    let tx = chain.canonical_tx(tx_hash).ok_or(AuthError::NotFound)?;
    if let Err(f) = chain_signatures(chain, tx) {
        return Ok(AuthResult::Invalid(f));
    }
    let live = match selector {
        OutputSelector::Any => {
            tx.vouts.is_empty() || (0..tx.vouts.len() as u32).any(|i| chain.is_unspent(&tx.output_id(i)))
        }
        OutputSelector::Output(i) => {
            if i as usize >= tx.vouts.len() {
                return Err(AuthError::NoSuchOutput(i));
            }
            chain.is_unspent(&tx.output_id(i))
        }
    };
    Ok(if live { AuthResult::Valid } else { AuthResult::Spent })
}

pub fn authenticate_historical(chain: &ChainState, tx: &Transaction) -> Result<AuthResult, AuthError> {
    let at = tx.block_data.ok_or(AuthError::MissingBlockData)?;
    let block = chain.canonical_block(at.block_number).ok_or(AuthError::BlockNotFound(at.block_number))?;
    let stored = block.transactions.get(at.tx_index as usize).ok_or(AuthError::NotIncluded)?;
    if canonical_serialize(stored) != canonical_serialize(tx) {
        return Err(AuthError::NotIncluded);
    }
    Ok(match chain_signatures(chain, tx) {
        Ok(()) => AuthResult::Valid,
        Err(f) => AuthResult::Invalid(f),
    })
}
