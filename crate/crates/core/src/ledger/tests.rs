use super::*;
use crate::model::{TxInput, UtxoKind};
use crate::testutil::{chain_with, key, output};

fn spend(chain: &ChainState, inputs: &[Hash], outs: Vec<TxOutput>, owner: &KeyPair, salt: &[u8]) -> Transaction {
    let mut tx = Transaction::new(ColorTag(1));
    tx.vins = inputs.iter().map(|h| TxInput::unsigned(*h)).collect();
    tx.vouts = outs;
    tx.tx_data = salt.to_vec();
    tx.sign_inputs(chain, &[owner]);
    tx.commit(owner);
    tx
}

fn funded() -> (ChainState, Hash) {
    let a = key("alice");
    let chain = chain_with(vec![output(&a, 10, UtxoKind::Ownership, "E", 1)]);
    let u1 = *chain.utxo_set().keys().next().unwrap();
    (chain, u1)
}

#[test]
fn genesis_issues_supply() {
    let (chain, u1) = funded();
    assert_eq!(chain.height(), 0);
    assert!(chain.is_unspent(&u1));
    assert_eq!(chain.supply(), Supply { issued: 10, minted: 0, recycled: 0, live: 10 });
}

#[test]
fn second_spend_is_rejected() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let b = key("bob");
    let tx = spend(&chain, &[u1], vec![output(&b, 10, UtxoKind::Usage, "E", 1)], &a, b"1");
    chain.submit_tx(tx).unwrap();
    chain.build_block(&key("v1"), false).unwrap().unwrap();
    assert!(!chain.is_unspent(&u1));

    let again = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"2");
    assert_eq!(chain.submit_tx(again), Err(TxError::DoubleSpend(u1)));
}

#[test]
fn conflicting_mempool_tx_is_rejected() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let first = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"x");
    let second = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"y");
    chain.submit_tx(first.clone()).unwrap();
    assert_eq!(chain.submit_tx(second), Err(TxError::DoubleSpend(u1)));
    assert_eq!(chain.submit_tx(first.clone()), Err(TxError::DuplicateTx(first.hash())));
}

#[test]
fn validation_failures_surface() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let b = key("bob");
    let inflated = spend(&chain, &[u1], vec![output(&a, 11, UtxoKind::Ownership, "E", 1)], &a, b"");
    assert!(matches!(chain.submit_tx(inflated), Err(TxError::ValidationFailed(_))));

    let stolen = spend(&chain, &[u1], vec![output(&b, 10, UtxoKind::Ownership, "E", 1)], &b, b"");
    assert!(matches!(chain.submit_tx(stolen), Err(TxError::ValidationFailed(_))));

    let mut unsigned = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"");
    unsigned.tx_signature = None;
    assert_eq!(chain.submit_tx(unsigned), Err(TxError::BadCommitter));

    let foreign = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 2)], &a, b"");
    assert!(matches!(chain.submit_tx(foreign), Err(TxError::WrongOrigin { .. })));
}

#[test]
fn build_block_indices_and_numbers() {
    let a = key("alice");
    let mut chain = chain_with(vec![
        output(&a, 1, UtxoKind::Ownership, "E1", 1),
        output(&a, 2, UtxoKind::Ownership, "E2", 1),
        output(&a, 3, UtxoKind::Ownership, "E3", 1),
    ]);
    let ids: Vec<Hash> = chain.utxo_set().keys().copied().collect();
    for id in &ids {
        let v = chain.utxo(id).unwrap().value;
        let tx = spend(&chain, &[*id], vec![output(&a, v, UtxoKind::Usage, "E", 1)], &a, b"");
        chain.submit_tx(tx).unwrap();
    }
    let b1 = chain.build_block(&key("v2"), false).unwrap().unwrap();
    assert_eq!(b1.number, 1);
    assert_eq!(b1.transactions.len(), 3);
    for (i, tx) in b1.transactions.iter().enumerate() {
        assert_eq!(tx.block_data, Some(BlockData { block_number: 1, tx_index: i as u32 }));
    }
    assert_eq!(chain.build_block(&key("v1"), false).unwrap(), None);
    let b2 = chain.build_block(&key("v1"), true).unwrap().unwrap();
    assert_eq!(b2.number, 2);
    assert_eq!(chain.tip(), b2.id);
    assert_eq!(chain.build_block(&key("alice"), true), Err(LedgerError::UntrustedProducer));
}

#[test]
fn apply_block_paths() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let genesis = chain.tip_block().clone();

    let tx = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"c");
    let b1 = Block::seal(1, genesis.id, vec![tx], &key("v1"));
    assert_eq!(chain.apply_block(b1.clone()), Ok(ApplyOutcome::Extended));
    assert_eq!(chain.apply_block(b1.clone()), Ok(ApplyOutcome::Duplicate));

    let orphan = Block::seal(5, Hash([7; 32]), vec![], &key("v1"));
    assert_eq!(chain.apply_block(orphan), Err(LedgerError::UnknownParent(Hash([7; 32]))));

    // a block on top of b1 that re-spends u1 is rejected wholesale
    let before = chain.fingerprint();
    let replay = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"d");
    let bad = Block::seal(2, b1.id, vec![replay], &key("v2"));
    assert!(matches!(
        chain.apply_block(bad),
        Err(LedgerError::InvalidTx { index: 0, reason: TxError::DoubleSpend(_) })
    ));
    assert_eq!(chain.fingerprint(), before);

    // wrong block_data is rejected
    let mut moved = Block::seal(2, b1.id, vec![], &key("v2"));
    let t = spend(&chain, &[], vec![], &a, b"empty");
    moved.transactions.push(t);
    moved = Block::seal(2, b1.id, moved.transactions, &key("v2"));
    moved.transactions[0].block_data = Some(BlockData { block_number: 9, tx_index: 0 });
    moved.id = Block::compute_id(2, &b1.id, &moved.transactions, &moved.consensus_signature);
    assert!(chain.apply_block(moved).is_err());
}

#[test]
fn reorg_follows_heaviest_subtree_and_restores_utxos() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let b = key("bob");
    let genesis_id = chain.tip();
    let genesis_set = chain.utxo_set().clone();

    // canonical: genesis -> x1 (spends u1 to bob)
    let to_bob = spend(&chain, &[u1], vec![output(&b, 10, UtxoKind::Usage, "E", 1)], &a, b"bob");
    let x1 = Block::seal(1, genesis_id, vec![to_bob.clone()], &key("v1"));
    chain.apply_block(x1.clone()).unwrap();
    let after_x1 = chain.utxo_set().clone();
    assert_eq!(chain.utxo_set_at(&genesis_id).unwrap(), genesis_set);

    // competing branch: y1 spends u1 differently, then y2 on top => heavier
    let mut alt = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"alt");
    alt.sign_inputs(&genesis_set, &[&a]);
    alt.commit(&a);
    let y1 = Block::seal(1, genesis_id, vec![alt.clone()], &key("v2"));
    let outcome = chain.apply_block(y1.clone()).unwrap();
    let expected = if y1.id < x1.id { ApplyOutcome::Reorg { depth: 1 } } else { ApplyOutcome::SideBranch };
    assert_eq!(outcome, expected);

    let y2 = Block::seal(2, y1.id, vec![], &key("v1"));
    chain.apply_block(y2.clone()).unwrap();
    assert_eq!(chain.tip(), y2.id);
    assert!(chain.locate_tx(&to_bob.hash()).is_none());
    assert!(chain.locate_tx(&alt.hash()).is_some());
    assert_eq!(chain.supply().live, 10);

    // x branch grows back: x2, x3 => switch back, utxo set matches earlier
    let x2 = Block::seal(2, x1.id, vec![], &key("v2"));
    let x3 = Block::seal(3, x2.id, vec![], &key("v1"));
    chain.apply_block(x2).unwrap();
    assert!(matches!(chain.apply_block(x3.clone()).unwrap(), ApplyOutcome::Reorg { depth: 2 }));
    assert_eq!(chain.tip(), x3.id);
    assert_eq!(utxo_set_digest(chain.utxo_set()), utxo_set_digest(&after_x1));
    assert_eq!(chain.utxo_set_at(&y2.id).unwrap().len(), 1);
}

#[test]
fn side_branch_blocks_validate_against_their_own_branch() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let genesis_id = chain.tip();
    let genesis_set = chain.utxo_set().clone();
    let t1 = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"1");
    chain.submit_tx(t1).unwrap();
    chain.build_block(&key("v1"), false).unwrap();
    chain.build_block(&key("v2"), true).unwrap();

    // u1 is spent on the canonical branch but unspent on a fresh fork from genesis
    let mut t2 = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Ownership, "E", 1)], &a, b"2");
    t2.sign_inputs(&genesis_set, &[&a]);
    t2.commit(&a);
    let side = Block::seal(1, genesis_id, vec![t2], &key("v2"));
    assert_eq!(chain.apply_block(side), Ok(ApplyOutcome::SideBranch));
}

#[test]
fn is_unspent_cases() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let tx = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"");
    let fresh = tx.output_id(0);
    chain.submit_tx(tx).unwrap();
    chain.build_block(&key("v1"), false).unwrap();
    assert!(chain.is_unspent(&fresh));
    assert!(!chain.is_unspent(&u1));
    assert!(!chain.is_unspent(&Hash([3; 32])));
}

#[test]
fn withdraw_releases_inputs() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let before = chain.fingerprint();
    let tx = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"");
    let h = chain.submit_tx(tx).unwrap();
    assert_ne!(chain.fingerprint(), before);
    assert!(chain.withdraw_tx(&h).is_some());
    assert_eq!(chain.fingerprint(), before);
}

#[test]
fn bridge_rules() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let sys = key("sys");

    // recycle signed by alice only: not system key
    let mut recycle = Transaction::new(ColorTag::BRIDGE);
    recycle.vins = vec![TxInput::unsigned(u1)];
    recycle.sign_inputs(&chain, &[&a]);
    recycle.commit(&a);
    assert!(matches!(chain.submit_tx(recycle.clone()), Err(TxError::BridgeRule(_))));

    recycle.commit(&sys);
    chain.submit_tx(recycle).unwrap();
    chain.build_block(&key("v1"), false).unwrap();
    assert_eq!(chain.supply(), Supply { issued: 10, minted: 0, recycled: 10, live: 0 });

    let mut mint = Transaction::new(ColorTag::BRIDGE);
    mint.vouts = vec![output(&a, 4, UtxoKind::Ownership, "E", 1)];
    mint.commit(&sys);
    chain.submit_tx(mint).unwrap();
    chain.build_block(&key("v2"), false).unwrap();
    let s = chain.supply();
    assert_eq!(s.live, s.issued + s.minted - s.recycled);
    assert_eq!(s.live, 4);

    // ordinary tx cannot mint
    let mut fake = Transaction::new(ColorTag(1));
    fake.vouts = vec![output(&a, 4, UtxoKind::Ownership, "E", 1)];
    fake.commit(&a);
    assert!(matches!(chain.submit_tx(fake), Err(TxError::ValidationFailed(_))));
}

#[test]
fn journal_replays_identically() {
    let (mut chain, u1) = funded();
    let a = key("alice");
    let tx = spend(&chain, &[u1], vec![output(&a, 10, UtxoKind::Usage, "E", 1)], &a, b"");
    chain.submit_tx(tx).unwrap();
    chain.build_block(&key("v1"), false).unwrap();
    let side = Block::seal(1, chain.tree().root(), vec![], &key("v2"));
    chain.apply_block(side).unwrap();

    let mut j = Journal::default();
    j.extend_from_chain(&chain);
    let text = j.to_jsonl();
    let parsed = Journal::parse(&text).unwrap();
    assert_eq!(parsed, j);
    let replay = parsed.replay().unwrap();
    assert!(replay.problems.is_empty(), "{:?}", replay.problems);
    let again = replay.chain(ChainId(1)).unwrap();
    assert_eq!(again.tip(), chain.tip());
    assert_eq!(again.fingerprint(), chain.fingerprint());
}
