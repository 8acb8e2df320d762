use crate::crypto::{keygen_with, seed_from_label, KeyPair, Scheme};
use crate::ledger::{ChainConfig, ChainState};
use crate::model::{ChainId, ColorTag, EntityId, TxOutput, UtxoKind};

pub fn key(name: &str) -> KeyPair {
    keygen_with(Scheme::Ed25519Vrf, &seed_from_label(1, name))
}

pub fn output(owner: &KeyPair, value: u64, kind: UtxoKind, entity: &str, chain: u32) -> TxOutput {
    TxOutput {
        owner: owner.pk,
        value,
        kind,
        entity: EntityId::new(entity),
        color: ColorTag(1),
        origin_chain: ChainId(chain),
    }
}

/// Chain 1 with validator "v1", system key "sys" and the given issuance.
pub fn chain_with(issuance: Vec<TxOutput>) -> ChainState {
    let cfg = ChainConfig {
        chain_id: ChainId(1),
        validators: vec![key("v1").pk, key("v2").pk],
        system_key: key("sys").pk,
    };
    ChainState::genesis(cfg, issuance, &key("sys"), &key("v1")).unwrap()
}
