//! Multi-chain rights ledger.
//!
//! An extended-UTXO ledger where ownership and usage rights over data
//! entities are countable outputs, split across role, permission and
//! service chains, with cross-chain storage consensus, traceable
//! authorization, ordered multi-party signatures, and the propagation and
//! trust models used to evaluate chains.

pub mod codec;
pub mod crypto;
pub mod hash;
pub mod ledger;
pub mod model;
pub mod multichain;
pub mod propagation;
pub mod rights;
pub mod scenario;
pub mod trust;

#[cfg(test)]
pub(crate) mod testutil;

pub use hash::Hash;
