//! Trust evaluation between chains: credibility from feedback, network
//! reliability, message intimacy, their product as a trust matrix, and
//! on-chain reputation records.

mod dpr;

pub use dpr::{NetEdge, ReliabilityNetwork, BRUTEFORCE_LIMIT};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::KeyPair;
use crate::hash::{digest_parts, Hash};
use crate::ledger::ChainState;
use crate::model::{fingerprint_tx, read_fingerprint, ColorTag, EntityId, Transaction};

pub const REPUTATION_TAG: &str = "ior/reputation/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("network has {0} nodes plus edges, too many to enumerate")]
    TooLarge(usize),
    #[error("malformed reliability network: {0}")]
    BadNetwork(&'static str),
    #[error("inputs sized for {expected} entities, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("current time {t_cur} precedes previous update {t_pre}")]
    TimeOrder { t_cur: u64, t_pre: u64 },
    #[error("feedback weight must be non-negative")]
    NegativeWeight,
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("entity index {0} out of range")]
    UnknownEntity(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackEvent {
    pub index: u32,
    /// Number of weighting calculations.
    pub weight: f64,
    pub adjustment: f64,
}

/// `nc_init + (t_cur - t_pre + 1)·Σ weight·adjustment`, clamped to [0, 1].
pub fn credibility(nc_init: f64, events: &[FeedbackEvent], t_cur: u64, t_pre: u64) -> Result<f64, TrustError> {
    if t_cur < t_pre {
        return Err(TrustError::TimeOrder { t_cur, t_pre });
    }
    if events.iter().any(|e| e.weight < 0.0) {
        return Err(TrustError::NegativeWeight);
    }
    let sum: f64 = events.iter().map(|e| e.weight * e.adjustment).sum();
    Ok((nc_init + (t_cur - t_pre + 1) as f64 * sum).clamp(0.0, 1.0))
}

/// Message counts between entities; row and column totals are always
/// recomputed from the counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageLog {
    counts: BTreeMap<(usize, usize), u64>,
}

impl MessageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, from: usize, to: usize, count: u64) {
        *self.counts.entry((from, to)).or_default() += count;
    }

    pub fn q(&self, i: usize, j: usize) -> u64 {
        self.counts.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn out_total(&self, i: usize) -> u64 {
        self.counts.iter().filter(|((a, _), _)| *a == i).map(|(_, c)| c).sum()
    }

    pub fn in_total(&self, j: usize) -> u64 {
        self.counts.iter().filter(|((_, b), _)| *b == j).map(|(_, c)| c).sum()
    }

    /// `q_ij / sqrt(q_i^out · q_j^in)`, or 0 when no message went i → j.
    pub fn intimacy(&self, i: usize, j: usize) -> f64 {
        let q = self.q(i, j);
        if q == 0 {
            return 0.0;
        }
        q as f64 / ((self.out_total(i) as f64) * (self.in_total(j) as f64)).sqrt()
    }

    pub fn max_entity(&self) -> Option<usize> {
        self.counts.keys().map(|(a, b)| *a.max(b)).max()
    }
}

/// Row = trusted entity i, column = trusting entity j.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustMatrix {
    pub values: Vec<Vec<f64>>,
}

impl TrustMatrix {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Header `chain,1..n`, then one row per chain, six decimals.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("chain");
        for j in 1..=n {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn asymmetric_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut pairs = vec![];
        for i in 0..n {
            for j in i + 1..n {
                if self.values[i][j] != self.values[j][i] {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

/// `Cred_ij = NC_i · DPR_i · I*_ij` off the diagonal, 1 on it.
pub fn trust_matrix(nc: &[f64], dpr: &[f64], log: &MessageLog) -> Result<TrustMatrix, TrustError> {
    let n = nc.len();
    if dpr.len() != n {
        return Err(TrustError::SizeMismatch { expected: n, got: dpr.len() });
    }
    if let Some(m) = log.max_entity().filter(|m| *m >= n) {
        return Err(TrustError::UnknownEntity(m));
    }
    let values = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { nc[i] * dpr[i] * log.intimacy(i, j) })
                .collect()
        })
        .collect();
    Ok(TrustMatrix { values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredibilityInput {
    pub nc_init: f64,
    pub t_cur: u64,
    pub t_pre: u64,
    #[serde(default)]
    pub events: Vec<FeedbackEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageCount {
    pub from: usize,
    pub to: usize,
    pub count: u64,
}

/// Per-entity inputs for a trust evaluation, as stored in fixture files.
/// Entities are referred to by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustFixture {
    pub entities: Vec<String>,
    pub credibility: Vec<CredibilityInput>,
    pub networks: Vec<ReliabilityNetwork>,
    pub messages: Vec<MessageCount>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing trust fixture: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trust(#[from] TrustError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustEvaluation {
    pub entities: Vec<String>,
    pub nc: Vec<f64>,
    pub dpr: Vec<f64>,
    pub matrix: TrustMatrix,
}

impl TrustFixture {
    pub fn from_json(s: &str) -> Result<Self, FixtureError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let s = std::fs::read_to_string(path)
            .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&s)
    }

    pub fn log(&self) -> MessageLog {
        let mut log = MessageLog::new();
        for m in &self.messages {
            log.add(m.from, m.to, m.count);
        }
        log
    }

    pub fn evaluate(&self) -> Result<TrustEvaluation, TrustError> {
        let n = self.entities.len();
        for got in [self.credibility.len(), self.networks.len()] {
            if got != n {
                return Err(TrustError::SizeMismatch { expected: n, got });
            }
        }
        let nc = self
            .credibility
            .iter()
            .map(|c| credibility(c.nc_init, &c.events, c.t_cur, c.t_pre))
            .collect::<Result<Vec<_>, _>>()?;
        let dpr = self.networks.iter().map(|g| g.dpr_factoring()).collect::<Result<Vec<_>, _>>()?;
        let matrix = trust_matrix(&nc, &dpr, &self.log())?;
        Ok(TrustEvaluation { entities: self.entities.clone(), nc, dpr, matrix })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReputationRecord {
    pub entity: EntityId,
    pub score: f64,
    pub scope: ColorTag,
    pub seq: u64,
}

impl ReputationRecord {
    pub fn fingerprint(&self) -> Hash {
        let mut w = Writer::new();
        w.str(&self.entity.0).u64(self.score.to_bits()).u16(self.scope.0).u64(self.seq);
        digest_parts(REPUTATION_TAG, &[&w.into_bytes()])
    }
}

/// Published reputation scores; each record is anchored by a fingerprint
/// transaction colored with its scope.
#[derive(Clone, Debug, Default)]
pub struct ReputationBook {
    records: Vec<(ReputationRecord, Hash)>,
}

impl ReputationBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `score` and returns the anchoring transaction, to be
    /// submitted to the scoped chain by the caller.
    pub fn publish_reputation(
        &mut self,
        entity: EntityId,
        score: f64,
        scope: ColorTag,
        committer: &KeyPair,
    ) -> Result<Transaction, TrustError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(TrustError::OutOfRange(score));
        }
        let record = ReputationRecord { entity, score, scope, seq: self.records.len() as u64 };
        let tx = fingerprint_tx(scope, REPUTATION_TAG, &record.fingerprint(), committer);
        self.records.push((record, tx.hash()));
        Ok(tx)
    }

    /// Latest score for `(entity, scope)`.
    pub fn latest(&self, entity: &EntityId, scope: ColorTag) -> Option<f64> {
        self.history(entity, scope).last().map(|r| r.score)
    }

    pub fn history<'a>(&'a self, entity: &'a EntityId, scope: ColorTag) -> impl Iterator<Item = &'a ReputationRecord> + 'a {
        self.records
            .iter()
            .map(|(r, _)| r)
            .filter(move |r| &r.entity == entity && r.scope == scope)
            .collect::<Vec<_>>()
            .into_iter()
    }

    pub fn records(&self) -> impl Iterator<Item = &ReputationRecord> {
        self.records.iter().map(|(r, _)| r)
    }

    /// Whether each record's fingerprint sits on `chain`'s canonical branch.
    pub fn anchored(&self, chain: &ChainState) -> Vec<bool> {
        self.records
            .iter()
            .map(|(r, h)| {
                chain.canonical_tx(h).and_then(|tx| read_fingerprint(tx, REPUTATION_TAG)) == Some(r.fingerprint())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{chain_with, key};
    use proptest::prelude::*;

    fn ev(weight: f64, adjustment: f64) -> FeedbackEvent {
        FeedbackEvent { index: 0, weight, adjustment }
    }

    #[test]
    fn credibility_cases() {
        assert_eq!(credibility(0.4, &[], 9, 3).unwrap(), 0.4);
        assert!((credibility(0.5, &[ev(1.0, 0.1)], 5, 5).unwrap() - 0.6).abs() < 1e-15);
        // two elapsed steps triple the adjustment
        assert!((credibility(0.5, &[ev(1.0, 0.1)], 7, 5).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(credibility(0.5, &[ev(10.0, 1.0)], 1, 0).unwrap(), 1.0);
        assert_eq!(credibility(0.5, &[ev(10.0, -1.0)], 1, 0).unwrap(), 0.0);
        assert_eq!(credibility(0.5, &[], 1, 2), Err(TrustError::TimeOrder { t_cur: 1, t_pre: 2 }));
        assert_eq!(credibility(0.5, &[ev(-1.0, 0.1)], 1, 1), Err(TrustError::NegativeWeight));
    }

    #[test]
    fn intimacy_cases() {
        let mut log = MessageLog::new();
        assert_eq!(log.intimacy(0, 1), 0.0);
        log.add(0, 1, 4);
        log.add(0, 2, 12);
        log.add(2, 1, 5);
        // 4 / sqrt(16 · 9)
        assert!((log.intimacy(0, 1) - 4.0 / 12.0).abs() < 1e-15);
        assert_eq!(log.intimacy(1, 0), 0.0);
        log.add(0, 1, 1);
        assert_eq!(log.q(0, 1), 5);
        assert_eq!(log.out_total(0), 17);
        assert_eq!(log.in_total(1), 10);
    }

    #[test]
    fn matrix_shape() {
        let mut log = MessageLog::new();
        log.add(0, 1, 1);
        log.add(1, 0, 1);
        let m = trust_matrix(&[1.0, 1.0], &[1.0, 1.0], &log).unwrap();
        assert_eq!(m.values, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        log.add(0, 0, 2);
        let m = trust_matrix(&[1.0, 0.5], &[1.0, 0.5], &log).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert!((m.get(0, 1) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.get(1, 0), 0.25 / 3f64.sqrt());
        assert_eq!(m.asymmetric_pairs(), vec![(0, 1)]);
        assert!(m.to_csv().starts_with("chain,1,2\n1,1.000000,0.577350\n"));
        assert_eq!(trust_matrix(&[1.0], &[], &log), Err(TrustError::SizeMismatch { expected: 1, got: 0 }));
        assert_eq!(trust_matrix(&[1.0], &[1.0], &log), Err(TrustError::UnknownEntity(1)));
    }

    #[test]
    fn reputation_latest_wins_and_is_anchored() {
        let sys = key("sys");
        let mut chain = chain_with(vec![]);
        let mut book = ReputationBook::new();
        let e = EntityId::new("chain-3");
        let scope = ColorTag(3);
        assert_eq!(book.publish_reputation(e.clone(), 1.2, scope, &sys).unwrap_err(), TrustError::OutOfRange(1.2));
        for score in [0.4, 0.7] {
            let tx = book.publish_reputation(e.clone(), score, scope, &sys).unwrap();
            assert_eq!(tx.color, scope);
            chain.submit_tx(tx).unwrap();
        }
        assert_eq!(book.latest(&e, scope), Some(0.7));
        assert_eq!(book.latest(&e, ColorTag(4)), None);
        assert_eq!(book.history(&e, scope).count(), 2);
        assert_eq!(book.anchored(&chain), vec![false, false]);
        chain.build_block(&key("v2"), false).unwrap();
        assert_eq!(book.anchored(&chain), vec![true, true]);
    }

    proptest! {
        #[test]
        fn intimacy_is_bounded(counts in prop::collection::vec((0usize..5, 0usize..5, 0u64..50), 0..30)) {
            let mut log = MessageLog::new();
            for (a, b, c) in counts {
                log.add(a, b, c);
            }
            for i in 0..5 {
                for j in 0..5 {
                    let v = log.intimacy(i, j);
                    prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
                }
            }
        }

        #[test]
        fn credibility_follows_adjustment_sign(nc in 0.0f64..=1.0, w in 0.0f64..5.0, adj in -1.0f64..1.0, dt in 0u64..5) {
            let base = credibility(nc, &[], dt, 0).unwrap();
            let with = credibility(nc, &[ev(w, adj)], dt, 0).unwrap();
            if adj >= 0.0 { prop_assert!(with >= base) } else { prop_assert!(with <= base) }
        }
    }
}
