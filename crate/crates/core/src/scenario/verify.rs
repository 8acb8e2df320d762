//! Offline re-verification of a journal: replays every block and checks
//! every signature, cooperation chain and rollup commitment.

use serde::Serialize;

use super::ScenarioError;
use crate::ledger::{Journal, JournalError, Replay};
use crate::model::ColorTag;
use crate::multichain::{commitment_on_branch, RollupProof};
use crate::rights::{process_participants, verify_cooperation, verify_signatures};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct JournalVerdict {
    pub chains: usize,
    pub blocks: usize,
    pub transactions: usize,
    pub rollups: usize,
    pub problems: Vec<String>,
}

impl JournalVerdict {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// True iff the journal replays and everything in it verifies.
pub fn verify_journal(text: &str) -> Result<bool, ScenarioError> {
    Ok(verify_journal_detailed(text)?.ok())
}

pub fn verify_journal_detailed(text: &str) -> Result<JournalVerdict, ScenarioError> {
    let corrupt = |e: JournalError| ScenarioError::CorruptJournal(e.to_string());
    let journal = Journal::parse(text).map_err(corrupt)?;
    let replay = journal.replay().map_err(corrupt)?;
    let mut v = JournalVerdict { problems: replay.problems.clone(), chains: replay.chains.len(), ..Default::default() };
    for chain in &replay.chains {
        let c = chain.chain_id();
        for block in chain.tree().blocks() {
            v.blocks += 1;
            if !block.signature_valid() || !block.id_valid() {
                v.problems.push(format!("chain {c} block {}: bad id or signature", block.id.short()));
            }
            for (i, tx) in block.transactions.iter().enumerate() {
                v.transactions += 1;
                let at = format!("chain {c} block {} tx {i}", block.number);
                if let Err(f) = verify_signatures(tx, |id| chain.known_output(id).map(|u| u.owner)) {
                    v.problems.push(format!("{at}: signature fault {f:?}"));
                }
                if let (Some(process), false) = (tx.reference, tx.cooperation.is_empty()) {
                    match process_participants(chain, &process) {
                        Some(order) => {
                            if let Err(e) = verify_cooperation(tx, &order) {
                                v.problems.push(format!("{at}: {e}"));
                            }
                        }
                        None => v.problems.push(format!("{at}: cooperation steps without a process")),
                    }
                }
                if tx.color == ColorTag::ROLLUP {
                    v.rollups += 1;
                    check_rollup(&replay, tx, &at, &mut v.problems);
                }
            }
        }
    }
    Ok(v)
}

fn check_rollup(replay: &Replay, tx: &crate::model::Transaction, at: &str, problems: &mut Vec<String>) {
    let Some(proof) = RollupProof::from_tx(tx) else {
        problems.push(format!("{at}: undecodable rollup proof"));
        return;
    };
    let Some(child) = replay.chain(proof.child_chain) else {
        problems.push(format!("{at}: rollup for unknown chain {}", proof.child_chain));
        return;
    };
    if commitment_on_branch(child, &proof.anchor, proof.from, proof.to) != Some(proof.commitment) {
        problems.push(format!("{at}: rollup commitment does not recompute"));
    }
    if !proof.signatures_valid(child) {
        problems.push(format!("{at}: rollup leader signatures invalid"));
    }
}
