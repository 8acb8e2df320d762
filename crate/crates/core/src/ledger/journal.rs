//! Line-delimited JSON journal of blocks. Each chain contributes one
//! `chain` header line followed by its blocks in the order they were
//! applied (side branches included), so replaying the lines reproduces the
//! same block tree and fork choice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChainConfig, ChainState};
use crate::codec::{self, canonical_serialize};
use crate::crypto::PublicKeyRef;
use crate::hash::Hash;
use crate::model::{Block, ChainId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JournalLine {
    Chain {
        chain_id: ChainId,
        validators: Vec<PublicKeyRef>,
        system_key: PublicKeyRef,
    },
    Block {
        chain_id: ChainId,
        number: u64,
        parent: Hash,
        id: Hash,
        /// Canonical encoding of the consensus signature, hex.
        signature: String,
        /// Canonical encoding of each transaction, hex.
        txs: Vec<String>,
    },
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("line {line}: block for chain {chain} before its header")]
    MissingHeader { line: usize, chain: ChainId },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Journal {
    pub lines: Vec<JournalLine>,
}

impl JournalLine {
    pub fn from_block(chain_id: ChainId, b: &Block) -> Self {
        JournalLine::Block {
            chain_id,
            number: b.number,
            parent: b.parent,
            id: b.id,
            signature: hex::encode(codec::encode_signature(&b.consensus_signature)),
            txs: b.transactions.iter().map(|t| hex::encode(canonical_serialize(t))).collect(),
        }
    }

    /// Decodes a block line. The stored id is returned alongside so callers
    /// can compare it with the recomputed one.
    pub fn to_block(&self) -> Result<(ChainId, Block), String> {
        let JournalLine::Block { chain_id, number, parent, id, signature, txs } = self else {
            return Err("not a block line".into());
        };
        let sig_bytes = hex::decode(signature).map_err(|e| e.to_string())?;
        let consensus_signature = codec::decode_signature(&sig_bytes).map_err(|e| e.to_string())?;
        let mut transactions = Vec::with_capacity(txs.len());
        for t in txs {
            let bytes = hex::decode(t).map_err(|e| e.to_string())?;
            transactions.push(codec::parse_transaction(&bytes).map_err(|e| e.to_string())?);
        }
        Ok((
            *chain_id,
            Block { number: *number, parent: *parent, transactions, consensus_signature, id: *id },
        ))
    }
}

impl Journal {
    pub fn parse(text: &str) -> Result<Journal, JournalError> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line = serde_json::from_str(raw)
                .map_err(|e| JournalError::Corrupt { line: i + 1, message: e.to_string() })?;
            lines.push(line);
        }
        Ok(Journal { lines })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&serde_json::to_string(l).expect("journal lines serialize"));
            out.push('\n');
        }
        out
    }

    pub fn extend_from_chain(&mut self, chain: &ChainState) {
        let cfg = chain.config();
        self.lines.push(JournalLine::Chain {
            chain_id: cfg.chain_id,
            validators: cfg.validators.clone(),
            system_key: cfg.system_key,
        });
        for b in chain.tree().blocks() {
            self.lines.push(JournalLine::from_block(cfg.chain_id, b));
        }
    }

    /// Rebuilds every chain in the journal. Blocks that fail to decode or
    /// apply are reported per line; replay continues with the rest.
    pub fn replay(&self) -> Result<Replay, JournalError> {
        let mut out = Replay::default();
        for (i, line) in self.lines.iter().enumerate() {
            let lineno = i + 1;
            match line {
                JournalLine::Chain { chain_id, validators, system_key } => {
                    out.configs.push(ChainConfig {
                        chain_id: *chain_id,
                        validators: validators.clone(),
                        system_key: *system_key,
                    });
                }
                JournalLine::Block { chain_id, .. } => {
                    let Some(cfg) = out.configs.iter().find(|c| c.chain_id == *chain_id).cloned() else {
                        return Err(JournalError::MissingHeader { line: lineno, chain: *chain_id });
                    };
                    let (_, block) = match line.to_block() {
                        Ok(b) => b,
                        Err(e) => {
                            out.problems.push(format!("line {lineno}: undecodable block: {e}"));
                            continue;
                        }
                    };
                    if !block.id_valid() {
                        out.problems.push(format!("line {lineno}: block id does not match its contents"));
                        continue;
                    }
                    let existing = out.chains.iter().position(|c| c.chain_id() == *chain_id);
                    let result = match existing {
                        None => ChainState::from_genesis_block(cfg, block).map(|c| out.chains.push(c)),
                        Some(pos) => out.chains[pos].apply_block(block).map(|_| ()),
                    };
                    if let Err(e) = result {
                        out.problems.push(format!("line {lineno}: {e}"));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Default)]
pub struct Replay {
    pub configs: Vec<ChainConfig>,
    pub chains: Vec<ChainState>,
    pub problems: Vec<String>,
}

impl Replay {
    pub fn chain(&self, id: ChainId) -> Option<&ChainState> {
        self.chains.iter().find(|c| c.chain_id() == id)
    }
}
